"""Exception hierarchy shared by every sitplan module."""

from __future__ import annotations

import hashlib

import numpy as np


class SitError(Exception):
    """Base class for all sitplan errors."""


class InvalidInputError(SitError, ValueError):
    """Argument violates a documented precondition on values or shapes."""


class StructuralError(SitError):
    """Matrix or network structure is unsuitable (e.g. reducible)."""


class PreconditionError(SitError):
    """A theorem hypothesis required by the operation does not hold."""


class CertificateError(SitError):
    """The Lyapunov basin certificate cannot be built for this model."""


class DomainError(SitError):
    """Evaluation point lies outside the differentiability domain."""


class NumericError(SitError):
    """A numerical routine failed or produced an unverifiable result."""

    def __init__(self, message: str, matrix=None, **details):
        self.fingerprint = matrix_fingerprint(matrix) if matrix is not None else None
        self.details = details
        if self.fingerprint is not None:
            message = f"{message} [matrix {self.fingerprint}]"
        super().__init__(message)


class ConvergenceError(NumericError):
    """Iterative procedure did not reach its tolerance."""


class IntegrationError(NumericError):
    """ODE integration failed (typically step-size collapse)."""


class ScenarioError(SitError):
    """Scenario file is malformed or inconsistent."""

    def __init__(self, message: str, path=None, field=None):
        self.path = path
        self.field = field
        where = ":".join(str(p) for p in (path, field) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)


def matrix_fingerprint(matrix) -> str:
    """Short stable hash of a matrix, used to identify failing inputs."""
    arr = np.ascontiguousarray(np.asarray(matrix, dtype=float))
    digest = hashlib.sha1(arr.tobytes() + str(arr.shape).encode()).hexdigest()
    return f"{arr.shape[0]}x{arr.shape[-1]}:{digest[:12]}"
