"""Coupled wild/sterile model under constant releases and the spectral
elimination criterion ``h`` with its analytic gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InvalidInputError, StructuralError
from .metzler import group_inverse, is_irreducible, perron_vectors, stability_modulus
from .sterile import (
    ExtendedVector,
    ReleaseBounds,
    SterileParams,
    as_release,
    sterile_equilibrium,
    sterile_inverse,
    supremal_equilibrium,
)
from .wild import NetworkModel, elimination_matrix, growth_rhs

GRAD_A_EPS = 1e-9


@dataclass(frozen=True)
class ControlConfig:
    """Control setting: trapping, sterile competitiveness, release bounds, prices
    and the required stability margin ``alpha``."""

    rho: np.ndarray
    rho_s: np.ndarray
    gamma: float
    bounds: ReleaseBounds
    pi: np.ndarray
    alpha: float = 1e-4

    def __post_init__(self):
        n = self.bounds.n
        rho = np.broadcast_to(np.asarray(self.rho, dtype=float), (n,)).copy()
        rho_s = np.broadcast_to(np.asarray(self.rho_s, dtype=float), (n,)).copy()
        pi = np.broadcast_to(np.asarray(self.pi, dtype=float), (n,)).copy()
        if np.any(rho < 0) or np.any(rho_s < 0):
            raise InvalidInputError("trapping rates must be non-negative")
        if not self.gamma > 0:
            raise InvalidInputError("competitiveness gamma must be positive")
        if not self.alpha > 0:
            raise InvalidInputError("margin alpha must be positive")
        if any(pi[i] <= 0 for i in self.bounds.cs):
            raise InvalidInputError("prices must be positive on release patches")
        for arr in (rho, rho_s, pi):
            arr.setflags(write=False)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "rho_s", rho_s)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def simple(cls, n: int, release_patches, *, gamma=0.6, alpha=1e-4, rho=0.0, rho_s=None,
               bound=float("inf"), pi=1.0) -> "ControlConfig":
        bounds = ReleaseBounds.on_subset(n, release_patches, bound)
        return cls(rho, rho if rho_s is None else rho_s, gamma, bounds, pi, alpha)


def sterile_params(model: NetworkModel, cfg: ControlConfig) -> SterileParams:
    return SterileParams(model.mus, cfg.rho_s, model.Ds)


def coupled_rhs(model: NetworkModel, cfg: ControlConfig, state, lam) -> np.ndarray:
    """Right-hand side of the 2n-dimensional wild/sterile system."""
    state = np.asarray(state, dtype=float)
    n = model.n
    if state.shape != (2 * n,):
        raise InvalidInputError(f"state has shape {state.shape}, expected {(2 * n,)}")
    if np.any(state < 0):
        raise InvalidInputError("state must be non-negative")
    lam = as_release(lam)
    x, xs = state[:n], state[n:]
    wild = growth_rhs(x, model.b, model.mu1 + cfg.rho, model.mu2, model.a + cfg.gamma * xs, model.D)
    sterile = lam - (model.mus + cfg.rho_s) * xs + model.Ds @ xs
    return np.concatenate([wild, sterile])


def _effective(model, cfg, lam):
    xs = sterile_equilibrium(sterile_params(model, cfg), lam)
    return model.mu1 + cfg.rho, model.a + cfg.gamma * xs, xs


def criterion_matrix(model: NetworkModel, cfg: ControlConfig, lam) -> np.ndarray:
    mu1_eff, a_eff, _ = _effective(model, cfg, lam)
    return elimination_matrix(mu1_eff, a_eff, model)


def h(model: NetworkModel, cfg: ControlConfig, lam) -> float:
    """Stability modulus of the elimination matrix at the sterile equilibrium."""
    return stability_modulus(criterion_matrix(model, cfg, lam))


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    value: float
    supremal: ExtendedVector

    def __bool__(self) -> bool:
        return self.feasible


def infimum_criterion(model: NetworkModel, cfg: ControlConfig) -> tuple[float, ExtendedVector]:
    """Infimum of ``h`` over admissible releases and the supremal sterile state."""
    sup = supremal_equilibrium(sterile_params(model, cfg), cfg.bounds)
    a_eff = model.a + cfg.gamma * sup.to_float()
    value = stability_modulus(elimination_matrix(model.mu1 + cfg.rho, a_eff, model))
    return value, sup


def feasible(model: NetworkModel, cfg: ControlConfig) -> FeasibilityResult:
    value, sup = infimum_criterion(model, cfg)
    return FeasibilityResult(value < 0, value, sup)


def grad_h(model: NetworkModel, cfg: ControlConfig, lam) -> np.ndarray:
    """Gradient of ``h`` with respect to the release vector.

    The derivative of the stability modulus is the Perron projector diagonal
    ``u_p v_p / (v^T u)`` (equivalently ``(I - Q Q^#)_pp``), chained with the
    derivative of ``((sqrt(b) - sqrt(mu2 z))^+)^2`` at ``z = a + gamma x_s``
    and the sterile sensitivity ``-(J^s)^{-1}``.
    """
    if not is_irreducible(model.D):
        raise StructuralError("gradient requires an irreducible dispersal matrix")
    lam = as_release(lam)
    mu1_eff, a_eff, xs = _effective(model, cfg, lam)
    zero = a_eff <= 0
    if np.any(zero):
        if np.all(model.a == 0) and np.all(lam[list(cfg.bounds.cs)] > 0):
            a_eff = np.where(zero, GRAD_A_EPS, a_eff)
        else:
            raise DomainError("h is not differentiable where a + gamma x_s = 0")
    A = elimination_matrix(mu1_eff, a_eff, model)
    spec = perron_vectors(A, require_irreducible=True, normalize="biorthonormal")
    proj = perron_projector_diagonal(A, spec)
    slope = model.mu2 * np.maximum(np.sqrt(model.b / (model.mu2 * a_eff)) - 1.0, 0.0)
    Jinv = sterile_inverse(sterile_params(model, cfg))
    return cfg.gamma * (slope * proj) @ Jinv


def perron_projector_diagonal(A: np.ndarray, spec=None) -> np.ndarray:
    """Diagonal of ``I - Q Q^#`` with ``Q = s(A) I - A``, evaluated through the
    group inverse and cross-checked against ``u v^T / (v^T u)``."""
    if spec is None:
        spec = perron_vectors(A, require_irreducible=True, normalize="biorthonormal")
    n = A.shape[0]
    Q = spec.modulus * np.eye(n) - A
    X = group_inverse(Q, null_vectors=(spec.right, spec.left))
    return np.diag(np.eye(n) - Q @ X).copy()

