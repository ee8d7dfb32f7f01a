"""Exception types shared across the package."""

from __future__ import annotations


class PiezotbError(Exception):
    """Base class for all package errors."""


class GapClosedError(PiezotbError):
    """The spectral gap at the Fermi energy (or the local gap |h|) vanished."""

    def __init__(self, message, k=None, q=None, t=None):
        super().__init__(message)
        self.k = k
        self.q = q
        self.t = t


class SymbolProjectionError(PiezotbError):
    """A hopping model does not decompose on span{I, Sigma_j}."""


class DegenerateEmbeddingError(PiezotbError):
    """A torus embedding hit a vertex where the azimuthal field vanishes."""


class ResolutionError(PiezotbError):
    """A discretized computation is inconsistent at the current resolution."""


class NotConnectableError(PiezotbError):
    """Two projections are too far apart for the intertwining unitary."""


class StepSizeError(PiezotbError):
    """The time integrator lost the projector property; reduce the step."""


class MethodDisagreementError(PiezotbError):
    """Two independent computations of the same quantity disagree."""


class ConfigError(PiezotbError):
    """A run configuration failed validation."""
