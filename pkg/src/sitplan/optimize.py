"""Minimum-cost constant releases by a logarithmic-barrier interior-point
method, and enumeration of release-patch subsets."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .control import ControlConfig, grad_h, h, infimum_criterion
from .errors import ConvergenceError, InvalidInputError
from .sterile import ReleaseBounds, ReleaseRate
from .wild import NetworkModel

OPTIMAL_ACTIVE = "optimal-active"
OPTIMAL_ZERO = "optimal-zero"
INFEASIBLE = "infeasible"

SEARCH_CAP = 1e6
GAP_TOL = 1e-8
ACTIVE_TOL = 1e-6


@dataclass(frozen=True)
class OptimizationResult:
    lambda_star: ReleaseRate
    objective: float
    h_value: float
    status: str
    iterations: int
    kkt_residual: float
    multiplier: float = math.nan
    notes: tuple[str, ...] = ()

    def ceiled(self) -> np.ndarray:
        """Per-patch release rates rounded up to whole individuals per day.

        Entries below ``1e-6`` of the total are barrier residue of a zero
        optimal release and report as 0.
        """
        lam = self.lambda_star.lam
        lam = np.where(lam <= 1e-6 * max(1.0, float(lam.sum())), 0.0, lam)
        return np.ceil(lam) + 0.0

    @property
    def ok(self) -> bool:
        return self.status != INFEASIBLE


class _Barrier:
    """Barrier function on the release coordinates ``idx``."""

    def __init__(self, model, cfg, idx):
        self.model, self.cfg, self.idx = model, cfg, idx
        self.n = model.n
        lb = cfg.bounds.lambda_bar
        self.ub = np.array([lb[i] for i in idx])
        self.finite_ub = np.isfinite(self.ub)
        self.price = cfg.pi[idx]
        self.pi = self.price
        self.alpha = cfg.alpha
        self.m = 1 + len(idx) + int(self.finite_ub.sum())
        self.evals = 0

    def full(self, y):
        lam = np.zeros(self.n)
        lam[self.idx] = y
        return lam

    def h(self, y):
        self.evals += 1
        return h(self.model, self.cfg, self.full(y))

    def grad_h(self, y):
        return grad_h(self.model, self.cfg, self.full(y))[self.idx]

    def inside(self, y):
        return bool(np.all(y > 0) and np.all(~self.finite_ub | (y < self.ub)))

    def value(self, t, y):
        """Barrier value and ``h(y)``; ``inf`` outside the domain."""
        if not self.inside(y):
            return math.inf, math.nan
        hv = self.h(y)
        s = -self.alpha - hv
        if s <= 0:
            return math.inf, hv
        val = t * (self.pi @ y) - math.log(s) - np.sum(np.log(y))
        if np.any(self.finite_ub):
            val -= np.sum(np.log(self.ub[self.finite_ub] - y[self.finite_ub]))
        return val, hv

    def box_terms(self, y):
        g = -1.0 / y
        H = 1.0 / y ** 2
        if np.any(self.finite_ub):
            gap = np.where(self.finite_ub, self.ub - y, np.inf)
            g = g + np.where(self.finite_ub, 1.0 / gap, 0.0)
            H = H + np.where(self.finite_ub, 1.0 / gap ** 2, 0.0)
        return g, H


def _strict_start(bar: _Barrier, h_lim: float):
    """Uniform release on the release coordinates with ``h`` comfortably below ``-alpha``."""
    cap = np.where(bar.finite_ub, 0.999 * bar.ub, SEARCH_CAP)
    target = -bar.alpha - 0.1 * (bar.alpha + abs(h_lim))

    def point(mval):
        return np.minimum(mval, cap)

    h_cap = bar.h(cap)
    if h_cap > target:
        # Uniform path cannot reach the preferred margin; aim halfway.
        target = 0.5 * (-bar.alpha + h_cap)
        if not h_cap < -bar.alpha:
            return None
    lo, hi = 0.0, 1.0
    while bar.h(point(hi)) > target:
        lo, hi = hi, 2 * hi
        if hi >= np.max(cap):
            hi = float(np.max(cap))
            break
    for _ in range(40):
        if hi - lo <= 1e-3 * hi:
            break
        mid = 0.5 * (lo + hi)
        if bar.h(point(mid)) <= target:
            hi = mid
        else:
            lo = mid
    return point(hi)


def _fd_hessian(bar: _Barrier, y, g):
    """Hessian of ``h`` by forward differences of the analytic gradient,
    symmetrised and projected onto the PSD cone (``h`` is convex)."""
    k = y.size
    B = np.zeros((k, k))
    for j in range(k):
        step = 1e-6 * (1.0 + y[j])
        yp = y.copy()
        yp[j] += step
        if not bar.inside(yp):
            yp[j] = y[j] - step
            step = -step
        B[:, j] = (bar.grad_h(yp) - g) / step
    B = 0.5 * (B + B.T)
    w, V = np.linalg.eigh(B)
    return (V * np.maximum(w, 0.0)) @ V.T


def _centre(bar: _Barrier, t, y, hv, max_iter=200):
    """Damped Newton minimisation of the barrier at parameter ``t``."""
    val = bar.value(t, y)[0]
    g_h = bar.grad_h(y)
    iters = 0
    for iters in range(1, max_iter + 1):
        s = -bar.alpha - hv
        gb, Hb = bar.box_terms(y)
        grad = t * bar.pi + g_h / s + gb
        H = np.outer(g_h, g_h) / s ** 2 + _fd_hessian(bar, y, g_h) / s + np.diag(Hb)
        try:
            step = -np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = -grad / np.diag(H)
        dec2 = -grad @ step
        if dec2 < 0:
            step = -grad / np.diag(H)
            dec2 = -grad @ step
        if dec2 / 2 <= 1e-12:
            break
        step_len = 1.0
        while True:
            y_new = y + step_len * step
            new_val, new_h = bar.value(t, y_new)
            if new_val <= val - 1e-4 * step_len * dec2:
                break
            step_len *= 0.5
            if step_len < 1e-14:
                return y, hv, iters, False
        moved = np.max(np.abs(y_new - y)) / max(1.0, float(np.max(y)))
        y, hv, val, g_h = y_new, new_h, new_val, bar.grad_h(y_new)
        if moved <= 1e-13:
            # Progress is at round-off level in h.
            break
    return y, hv, iters, True


def _kkt(bar: _Barrier, y, hv):
    """Stationarity residual with least-squares multipliers.

    Coordinates at a bound (relative 1e-6) take a non-negative bound
    multiplier; the constraint multiplier is fitted on the rest.
    """
    g = bar.grad_h(y)
    pi = bar.price
    scale = max(1.0, float(np.max(y)))
    at_lower = y <= 1e-6 * scale
    at_upper = bar.finite_ub & (bar.ub - y <= 1e-6 * scale)
    free = ~(at_lower | at_upper)
    if np.any(free) and g[free] @ g[free] > 0:
        nu = max(0.0, -float(pi[free] @ g[free]) / float(g[free] @ g[free]))
    else:
        nu = 0.0
    r = pi + nu * g
    res = np.where(free, np.abs(r), 0.0)
    res = np.where(at_lower, np.maximum(-r, 0.0), res)
    res = np.where(at_upper, np.maximum(r, 0.0), res)
    return float(np.max(res) / np.max(pi)), nu


def optimize(model: NetworkModel, cfg: ControlConfig, *, gap_tol: float = GAP_TOL) -> OptimizationResult:
    """Minimise ``pi @ lam`` over admissible releases with ``h(lam) <= -alpha``."""
    n = model.n
    zero = ReleaseRate(np.zeros(n))
    h0 = h(model, cfg, zero.lam)
    if h0 <= -cfg.alpha:
        return OptimizationResult(zero, 0.0, h0, OPTIMAL_ZERO, 0, 0.0, 0.0)
    h_lim, _ = infimum_criterion(model, cfg)
    if not h_lim < -cfg.alpha:
        return OptimizationResult(zero, math.inf, h_lim, INFEASIBLE, 0, math.nan,
                                  notes=(f"infimum of h is {h_lim:.6g} >= -alpha",))
    idx = sorted(cfg.bounds.cs)
    bar = _Barrier(model, cfg, idx)
    y = _strict_start(bar, h_lim)
    if y is None:
        return OptimizationResult(zero, math.inf, h_lim, INFEASIBLE, 0, math.nan,
                                  notes=("no strictly feasible release found",))
    hv = bar.h(y)
    # Prices are normalised by the starting cost so the duality gap m/t is relative.
    bar.pi = bar.price / float(bar.price @ y)
    t = 1.0
    total = 0
    while True:
        y, hv, it, _ = _centre(bar, t, y, hv)
        total += it
        if bar.m / t <= gap_tol:
            break
        t *= 10.0
    kkt, nu = _kkt(bar, y, hv)
    lam = ReleaseRate(bar.full(y))
    notes = []
    if np.any(~bar.finite_ub & (y >= 0.5 * SEARCH_CAP)):
        notes.append("release reaches the search cap")
    if abs(hv + cfg.alpha) > ACTIVE_TOL:
        raise ConvergenceError(f"barrier iterate not active: h + alpha = {hv + cfg.alpha:.3e}",
                               iterate=y.tolist(), t=t)
    small = [i for i, v in zip(idx, y) if v < 1e-6 * max(1.0, y.max())]
    if small:
        notes.append(f"zero optimal release on patches {[i + 1 for i in small]}")
    return OptimizationResult(lam, float(cfg.pi @ lam.lam), hv, OPTIMAL_ACTIVE, total, kkt, nu,
                              tuple(notes))


NO_TRAPPING = "none"
TRAP_REMAINING = "remaining-patches"


@dataclass(frozen=True)
class StrategyReport:
    subset: tuple[int, ...]
    lambda_star: np.ndarray
    total: float
    trapping_config: tuple[int, ...]
    result: OptimizationResult = field(repr=False)
    tied_with_best: bool = False

    def ceiled(self) -> np.ndarray:
        return self.result.ceiled()


def _trapping_config(model, cfg, subset, rule, trap_rho, trap_rho_s):
    n = model.n
    if rule == NO_TRAPPING or rule is None:
        traps: tuple[int, ...] = ()
    elif rule == TRAP_REMAINING:
        traps = tuple(i for i in range(n) if i not in subset)
    else:
        traps = tuple(sorted(int(i) for i in rule))
    rho = np.array(cfg.rho, dtype=float)
    rho_s = np.array(cfg.rho_s, dtype=float)
    for i in traps:
        rho[i] = trap_rho
        rho_s[i] = trap_rho_s
    bounds = ReleaseBounds.on_subset(n, subset)
    return replace(cfg, rho=rho, rho_s=rho_s, bounds=bounds), traps


def enumerate_strategies(model: NetworkModel, cfg: ControlConfig, subset_size: int,
                         allowed: Iterable[int] | None = None, trapping_rule=NO_TRAPPING,
                         trap_rho: float = 0.05, trap_rho_s: float | None = None,
                         tie_band: float = 1e-3) -> list[StrategyReport]:
    """Optimise every ``subset_size``-subset of ``allowed`` and rank by cost.

    ``trapping_rule`` is ``"none"``, ``"remaining-patches"`` (trap every patch
    outside the subset) or an explicit collection of 0-based patch indices.
    Infeasible subsets are dropped; an empty list means none was feasible.
    Reports within ``tie_band`` (relative) of the best cost are flagged as tied.
    """
    allowed = tuple(sorted(range(model.n) if allowed is None else set(allowed)))
    if not 1 <= subset_size <= len(allowed):
        raise InvalidInputError(f"subset size {subset_size} not in [1, {len(allowed)}]")
    trap_rho_s = trap_rho if trap_rho_s is None else trap_rho_s
    reports = []
    for subset in itertools.combinations(allowed, subset_size):
        sub_cfg, traps = _trapping_config(model, cfg, subset, trapping_rule, trap_rho, trap_rho_s)
        res = optimize(model, sub_cfg)
        if res.status == INFEASIBLE:
            continue
        reports.append(StrategyReport(subset, res.lambda_star.lam, res.objective, traps, res))
    # Symmetric subsets tie up to round-off; the subset breaks such ties.
    reports.sort(key=lambda r: (float(f"{r.total:.9g}"), r.subset))
    if reports:
        best = reports[0].total
        reports = [replace(r, tied_with_best=r.total <= best * (1 + tie_band)) for r in reports]
    return reports
