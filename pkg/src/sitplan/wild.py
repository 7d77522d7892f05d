"""Uncontrolled n-patch wild population: growth law, linearisation, equilibria
and a Lyapunov estimate of the extinction basin."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _ode
from .errors import CertificateError, ConvergenceError, InvalidInputError, StructuralError
from .metzler import as_square, is_irreducible, perron_vectors, stability_modulus

EQ_RESIDUAL_TOL = 1e-9
EQ_MAX_DAYS = 2e5


@dataclass(frozen=True)
class PatchBiology:
    """Local demographic parameters of one patch.

    Attributes:
        b: birth rate, day^-1.
        mu1: density-independent death rate, day^-1.
        mu2: density-dependent death rate, individual^-1 day^-1.
        a: Allee (mate-finding) parameter, individuals; 0 means guaranteed mating.
    """

    b: float
    mu1: float
    mu2: float
    a: float = 0.0

    def __post_init__(self):
        if not (self.b > 0 and self.mu1 > 0 and self.mu2 > 0):
            raise InvalidInputError(f"b, mu1, mu2 must be positive: {self}")
        if not self.a >= 0:
            raise InvalidInputError(f"Allee parameter must be non-negative: {self}")


@dataclass(frozen=True)
class NetworkModel:
    """Patches linked by linear dispersal.

    ``D`` and ``Ds`` are connectivity matrices (see
    :func:`sitplan.metzler.build_connectivity`) for wild and sterile insects.
    ``mus`` holds the per-patch sterile death rates.
    """

    patches: tuple[PatchBiology, ...]
    D: np.ndarray
    Ds: np.ndarray
    mus: np.ndarray
    b: np.ndarray = field(init=False, repr=False)
    mu1: np.ndarray = field(init=False, repr=False)
    mu2: np.ndarray = field(init=False, repr=False)
    a: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        patches = tuple(self.patches)
        n = len(patches)
        if n < 1:
            raise InvalidInputError("model needs at least one patch")
        D = as_square(self.D)
        Ds = as_square(self.Ds)
        mus = np.broadcast_to(np.asarray(self.mus, dtype=float), (n,)).copy()
        for name, M in (("D", D), ("Ds", Ds)):
            if M.shape != (n, n):
                raise InvalidInputError(f"{name} has shape {M.shape}, expected {(n, n)}")
            off = M[~np.eye(n, dtype=bool)]
            if np.any(off < 0):
                raise InvalidInputError(f"{name} has negative off-diagonal entries")
            if np.max(np.abs(M.sum(axis=0))) > 1e-12 * max(1.0, np.max(np.abs(M))):
                raise InvalidInputError(f"{name} columns must sum to zero")
        if np.any(mus <= 0):
            raise InvalidInputError("sterile death rates must be positive")
        for arr in (D, Ds, mus):
            arr.setflags(write=False)
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "Ds", Ds)
        object.__setattr__(self, "mus", mus)
        for name in ("b", "mu1", "mu2", "a"):
            vec = np.array([getattr(p, name) for p in patches], dtype=float)
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)

    @property
    def n(self) -> int:
        return len(self.patches)

    def with_allee(self, a) -> "NetworkModel":
        a = np.broadcast_to(np.asarray(a, dtype=float), (self.n,))
        return replace(self, patches=tuple(replace(p, a=float(ai)) for p, ai in zip(self.patches, a)))


def mating_probability(x, a_eff):
    """Probability of a fertile mating, ``x / (x + a_eff)``, and 1 when ``a_eff == 0``."""
    x = np.asarray(x, dtype=float)
    a_eff = np.asarray(a_eff, dtype=float)
    if np.any(x < 0) or np.any(a_eff < 0):
        raise InvalidInputError("mating_probability needs x >= 0 and a_eff >= 0")
    return _mating(x, a_eff)


def _mating(x, a_eff):
    x, a_eff = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(a_eff, dtype=float))
    out = np.ones(x.shape)
    pos = a_eff > 0
    np.divide(x, x + a_eff, out=out, where=pos)
    if out.ndim == 0:
        return float(out)
    return out


def growth_rhs(x, b, mu1_eff, mu2, a_eff, D):
    """Right-hand side of the patch model with arbitrary effective mortality
    and mating parameter (no input validation, negative noise clipped)."""
    x = np.maximum(x, 0.0)
    pos = a_eff > 0
    p = np.where(pos, x / (x + np.where(pos, a_eff, 1.0)), 1.0)
    return x * (p * b - mu1_eff - mu2 * x) + D @ x


def rhs_uncontrolled(model: NetworkModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise InvalidInputError(f"state has shape {x.shape}, expected {(model.n,)}")
    if np.any(x < 0):
        raise InvalidInputError("state must be non-negative")
    return growth_rhs(x, model.b, model.mu1, model.mu2, model.a, model.D)


def jacobian_origin(model: NetworkModel) -> np.ndarray:
    """Jacobian of the uncontrolled model at the origin."""
    return np.diag(np.where(model.a == 0, model.b, 0.0) - model.mu1) + model.D


def max_growth(b, mu2, a_eff):
    """``((sqrt(b) - sqrt(a_eff * mu2))^+)^2``: the largest specific growth
    rate gain over x >= 0; infinite ``a_eff`` gives 0."""
    a_eff = np.asarray(a_eff, dtype=float)
    with np.errstate(invalid="ignore"):
        root = np.sqrt(b) - np.sqrt(a_eff * mu2)
    return np.where(np.isinf(a_eff), 0.0, np.maximum(root, 0.0) ** 2)


def elimination_matrix(mu1_eff, a_eff, model: NetworkModel) -> np.ndarray:
    """Matrix whose Hurwitz property certifies global extinction.

    Diagonal entry ``i`` is ``max_{x>=0}`` of the specific growth rate of
    patch ``i`` with death rate ``mu1_eff[i]`` and mating parameter
    ``a_eff[i]`` (which may be ``inf``); off-diagonals come from ``D``.
    """
    n = model.n
    mu1_eff = np.broadcast_to(np.asarray(mu1_eff, dtype=float), (n,))
    a_eff = np.broadcast_to(np.asarray(a_eff, dtype=float), (n,))
    if np.any(mu1_eff <= 0):
        raise InvalidInputError("effective death rates must be positive")
    if np.any(a_eff < 0):
        raise InvalidInputError("effective Allee parameters must be non-negative")
    return np.diag(-mu1_eff + max_growth(model.b, model.mu2, a_eff)) + model.D


@dataclass(frozen=True)
class ScalarEquilibria:
    """Equilibria of the isolated one-patch model.

    ``roots`` lists ``(value, label)`` pairs in increasing order, label being
    ``"stable"`` or ``"unstable"``. ``a_crit`` is None when N <= 1.
    """

    N: float
    Q: float
    a_crit: float | None
    roots: tuple[tuple[float, str], ...]
    origin_stable: bool
    origin_gas: bool

    def basin_of_origin(self) -> tuple[float, float]:
        """Interval ``[0, upper)`` attracted to 0 (upper may be inf or 0)."""
        if self.origin_gas:
            return (0.0, math.inf)
        if not self.origin_stable:
            return (0.0, 0.0)
        return (0.0, self.roots[0][0])


def scalar_equilibria(p: PatchBiology, rel_tol: float = 1e-12) -> ScalarEquilibria:
    N = p.b / p.mu1
    Q = p.mu1 / p.mu2
    a = p.a
    if N <= 1:
        return ScalarEquilibria(N, Q, None, (), True, True)
    a_crit = Q * (math.sqrt(N) - 1) ** 2
    if a == 0:
        return ScalarEquilibria(N, Q, a_crit, ((Q * (N - 1), "stable"),), False, False)
    if abs(a - a_crit) <= rel_tol * a_crit:
        return ScalarEquilibria(N, Q, a_crit, ((Q * (math.sqrt(N) - 1), "unstable"),), True, False)
    if a > a_crit:
        return ScalarEquilibria(N, Q, a_crit, (), True, True)
    m = N - 1 - a / Q
    disc = math.sqrt(1 - 4 * a / (Q * m * m))
    # Small root via Vieta (product of roots = a*Q) to avoid cancellation.
    hi = 0.5 * Q * m * (1 + disc)
    lo = a * Q / hi
    return ScalarEquilibria(N, Q, a_crit, ((lo, "unstable"), (hi, "stable")), True, False)


def growth_jacobian(x, b, mu1_eff, mu2, a_eff, D):
    """Jacobian of :func:`growth_rhs` at ``x >= 0``."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    a_eff = np.asarray(a_eff, dtype=float)
    denom = np.where(a_eff > 0, (x + a_eff) ** 2, 1.0)
    birth = np.where(a_eff > 0, b * (x * x + 2 * a_eff * x) / denom, b)
    return np.diag(birth - mu1_eff - 2 * mu2 * x) + D


def _newton_polish(fun, jac, x, tol, iters=30):
    for _ in range(iters):
        r = fun(0.0, x)
        if np.max(np.abs(r)) < tol * max(1.0, np.max(np.abs(x))):
            return x
        try:
            step = np.linalg.solve(jac(x), r)
        except np.linalg.LinAlgError:
            return None
        x = np.maximum(x - step, 0.0)
    return None


def _relax_to_equilibrium(fun, jac, x0, max_days=EQ_MAX_DAYS, tol=EQ_RESIDUAL_TOL):
    # Integration brings the state close; Newton removes the integrator's
    # rtol-level error, which alone cannot reach the residual tolerance.
    x = np.asarray(x0, dtype=float)
    elapsed = 0.0
    chunk = 50.0
    while True:
        scale = max(1.0, np.max(np.abs(x)))
        res = np.max(np.abs(fun(0.0, x)))
        if res < tol * scale:
            return x
        if res < 1e-4 * scale:
            y = _newton_polish(fun, jac, x, tol)
            if y is not None and np.max(np.abs(y - x)) <= 1e-4 * scale:
                return y
        if elapsed >= max_days:
            raise ConvergenceError(
                f"equilibrium not reached within {max_days:g} days (residual {res:.3e})",
                residual=float(res), state=x.copy())
        step = min(chunk, max_days - elapsed)
        sol = _ode.integrate(fun, (0.0, step), x)
        x = np.maximum(sol.y[:, -1], 0.0)
        elapsed += step
        chunk *= 2


def persistence_equilibrium(model: NetworkModel, rho=0.0, a_eff=None) -> np.ndarray:
    """Maximal equilibrium of the uncontrolled (or constantly forced) model.

    First relaxes the guaranteed-mating system from above the uncoupled
    logistic equilibria, then, if any Allee parameter is positive, relaxes the
    actual system from that point; the trajectory decreases monotonically to
    the maximal equilibrium. ``rho`` adds trapping mortality and ``a_eff``
    overrides the mating parameter (e.g. ``a + gamma * x_s``).
    """
    n = model.n
    mu1_eff = model.mu1 + np.broadcast_to(np.asarray(rho, dtype=float), (n,))
    a_eff = model.a if a_eff is None else np.broadcast_to(np.asarray(a_eff, dtype=float), (n,))
    K = np.max((model.b - mu1_eff) / model.mu2)
    x0 = np.full(n, 1.2 * max(K, 1.0))
    zero = np.zeros(n)

    def system(a):
        def f(t, x):
            return growth_rhs(x, model.b, mu1_eff, model.mu2, a, model.D)

        def jac(x):
            return growth_jacobian(x, model.b, mu1_eff, model.mu2, a, model.D)
        return f, jac

    x = _relax_to_equilibrium(*system(zero), x0)
    if np.any(a_eff > 0):
        x = _relax_to_equilibrium(*system(a_eff), x)
    return x


@dataclass(frozen=True)
class BasinCertificate:
    """Linear Lyapunov certificate for the extinction basin.

    Any state ``x >= 0`` with ``psi(c @ x) < threshold`` lies in the basin of
    attraction of the origin of the uncontrolled model.
    """

    c: np.ndarray
    threshold: float
    psi_breakpoints: np.ndarray
    b: np.ndarray = field(repr=False)
    mu2: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)

    def psi(self, z: float) -> float:
        return _psi(self.b, self.mu2, self.a, z)

    def contains(self, x) -> bool:
        return self.psi(float(self.c @ np.asarray(x, dtype=float))) < self.threshold


def basin_certificate(model: NetworkModel) -> BasinCertificate:
    if not (np.all(model.a >= 0) and np.any(model.a > 0)):
        raise CertificateError("basin certificate needs at least one positive Allee parameter")
    if not is_irreducible(model.D):
        raise StructuralError("basin certificate needs an irreducible dispersal matrix")
    J = jacobian_origin(model)
    s = stability_modulus(J)
    if s >= 0:
        raise CertificateError(f"origin is not locally stable: s(J_a) = {s:.6g} >= 0")
    spec = perron_vectors(J, require_irreducible=True, normalize="min")
    with np.errstate(invalid="ignore"):
        breaks = np.where(model.a > 0, -model.a + np.sqrt(model.a * model.b / model.mu2), np.nan)
    return BasinCertificate(c=spec.left, threshold=-s, psi_breakpoints=breaks,
                            b=model.b, mu2=model.mu2, a=model.a)


def _psi(b, mu2, a, z):
    if z < 0:
        raise InvalidInputError("psi is defined for z >= 0")
    mask = a > 0
    if not np.any(mask):
        raise CertificateError("psi needs at least one patch with a > 0")
    b, mu2, a = b[mask], mu2[mask], a[mask]
    brk = -a + np.sqrt(a * b / mu2)
    rising = b * z / (z + a) - mu2 * z
    plateau = np.maximum(np.sqrt(b) - np.sqrt(a * mu2), 0.0) ** 2
    return float(np.max(np.where(z <= brk, rising, plateau)))


def psi(model: NetworkModel, cert: BasinCertificate, z: float) -> float:
    """Bound on the specific growth gain used by the basin certificate."""
    return _psi(model.b, model.mu2, model.a, z)


def homogeneous_model(n: int, flows, *, b=6.60, mu1=0.01238, mu2=0.001, a=0.0,
                      mus=0.0241, sterile_flows=None) -> NetworkModel:
    """Model with per-patch parameters broadcast from scalars or sequences."""
    from .metzler import build_connectivity

    def vec(v):
        return np.broadcast_to(np.asarray(v, dtype=float), (n,))

    bs, m1, m2, aa = vec(b), vec(mu1), vec(mu2), vec(a)
    patches = tuple(PatchBiology(float(bs[i]), float(m1[i]), float(m2[i]), float(aa[i]))
                    for i in range(n))
    D = build_connectivity(flows)
    Ds = D if sterile_flows is None else build_connectivity(sterile_flows)
    return NetworkModel(patches, D, Ds, vec(mus))
