"""Exception types shared across the package."""

import numpy as np


class CbfCloneError(Exception):
    """Base class for all package errors."""


class IntegrationDiverged(CbfCloneError):
    """A non-finite state appeared during closed-loop integration."""

    def __init__(self, last_state, time):
        self.last_state = np.asarray(last_state, dtype=float)
        self.time = float(time)
        super().__init__(f"integration diverged after t={self.time:.6g} (last finite state {self.last_state})")


class SingularGeometry(CbfCloneError):
    """State sits where the track geometry (normals, distances) is undefined."""


class DegenerateSampling(CbfCloneError):
    """Requested sampling spacing cannot resolve the set."""


class InfeasibleFilter(CbfCloneError):
    """A safety filter has an empty feasible set at the queried state."""

    def __init__(self, message, state=None, constraint=None):
        self.state = None if state is None else np.asarray(state, dtype=float)
        self.constraint = constraint
        super().__init__(message)


class TrainingDiverged(CbfCloneError):
    """Training loss became non-finite."""

    def __init__(self, epoch):
        self.epoch = int(epoch)
        super().__init__(f"training loss became non-finite at epoch {self.epoch}")


class ConfigError(CbfCloneError):
    """Invalid run configuration."""
