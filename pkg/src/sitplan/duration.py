"""Controlled trajectories, basin-entry times and Allee-parameter sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _ode
from .control import ControlConfig, sterile_params
from .errors import CertificateError, InvalidInputError
from .optimize import OPTIMAL_ACTIVE, OPTIMAL_ZERO, optimize
from .sterile import SterileForcing, as_release
from .wild import BasinCertificate, NetworkModel, basin_certificate, growth_rhs, persistence_equilibrium

log = logging.getLogger(__name__)

EPS_EXTINCT = 1e-3
TEST_HORIZON = 5000.0
TOL_T = 0.1
HORIZON = 2e4
NEG_TOL = 1e-10


@dataclass(frozen=True)
class Trajectory:
    """Wild states (and the sterile forcing) along a controlled solution."""

    times: np.ndarray
    states: np.ndarray
    sterile: np.ndarray
    dense: Callable[[float], np.ndarray] = field(repr=False)
    forcing: Callable[[float], np.ndarray] = field(repr=False)
    events: tuple[np.ndarray, ...] = ()

    def at(self, t: float) -> np.ndarray:
        if not self.times[0] <= t <= self.times[-1]:
            raise InvalidInputError(f"t = {t} outside [{self.times[0]}, {self.times[-1]}]")
        return _clip(self.dense(t))

    def sterile_at(self, t: float) -> np.ndarray:
        return self.forcing(t)


def _clip(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < -NEG_TOL):
        log.warning("integrator undershoot %.3e clipped to zero", float(x.min()))
    return np.maximum(x, 0.0)


def _check_state(x, n, name):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,) or np.any(x < 0) or not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} must be a finite non-negative {n}-vector")
    return x


def integrate_controlled(model: NetworkModel, cfg: ControlConfig, lam, x0, xs0,
                         horizon: float, output_times=None, events=None, *,
                         rtol: float = _ode.RTOL, atol: float = _ode.ATOL) -> Trajectory:
    """Integrate the wild block driven by the closed-form sterile solution."""
    n = model.n
    lam = as_release(lam)
    x0 = _check_state(x0, n, "x0")
    xs0 = _check_state(xs0, n, "xs0")
    forcing = SterileForcing(sterile_params(model, cfg), lam, xs0)
    mu1_eff = model.mu1 + cfg.rho
    gamma = cfg.gamma

    def f(t, x):
        return growth_rhs(x, model.b, mu1_eff, model.mu2, model.a + gamma * forcing(t), model.D)

    t_eval = None if output_times is None else np.asarray(output_times, dtype=float)
    sol = _ode.integrate(f, (0.0, float(horizon)), x0, t_eval=t_eval, events=events,
                         dense_output=True, rtol=rtol, atol=atol)
    states = sol.y.T
    if np.any(states < -NEG_TOL):
        log.warning("integrator undershoot %.3e clipped to zero", float(states.min()))
    states = np.maximum(states, 0.0)
    sterile = np.array([forcing(t) for t in sol.t])
    ev = tuple(sol.t_events) if sol.t_events is not None else ()
    return Trajectory(sol.t, states, sterile, sol.sol, forcing, ev)


def uncontrolled_rhs(model: NetworkModel):
    def f(t, x):
        return growth_rhs(x, model.b, model.mu1, model.mu2, model.a, model.D)
    return f


def _certificate_or_none(model):
    try:
        return basin_certificate(model)
    except Exception:
        return None


def in_basin_exact(model: NetworkModel, x, test_horizon: float = TEST_HORIZON,
                   eps_extinct: float = EPS_EXTINCT, *, cert: BasinCertificate | None = None,
                   early_exit: bool = True, chunk: float = 250.0) -> bool:
    """True iff the uncontrolled solution from ``x`` satisfies
    ``||x(test_horizon)||_inf < eps_extinct``.

    With ``early_exit`` the integration stops as soon as the answer is
    decided: it fails once ``f(x) >= 0`` with ``||x|| >= eps`` (the cooperative
    flow is then non-decreasing), and passes once the certificate's linear
    Lyapunov function bounds ``||x(test_horizon)||`` below ``eps``.
    """
    x = _check_state(x, model.n, "x")
    f = uncontrolled_rhs(model)
    if cert is None and early_exit:
        cert = _certificate_or_none(model)
    t = 0.0
    while True:
        if early_exit:
            decided = _decided(model, cert, f, x, test_horizon - t, eps_extinct)
            if decided is not None:
                return decided
        if t >= test_horizon:
            return bool(np.max(x) < eps_extinct)
        step = min(chunk, test_horizon - t)
        sol = _ode.integrate(f, (0.0, step), x)
        x = np.maximum(sol.y[:, -1], 0.0)
        t += step


def _decided(model, cert, f, x, remaining, eps):
    norm = float(np.max(x))
    if norm >= eps and np.all(f(0.0, x) >= 0):
        return False
    if cert is not None:
        v = float(cert.c @ x)
        kappa = cert.threshold - cert.psi(v)
        # c >= 1 entrywise, so ||x(T)||_inf <= c^T x(T) <= v exp(-kappa (T - t)).
        if kappa > 0 and v * math.exp(-kappa * remaining) < eps:
            return True
    return None


@dataclass(frozen=True)
class DurationResult:
    """Basin entry times (days) under constant releases ``lam``.

    ``None`` marks a time not found within the horizon.
    """

    tau_exact: float | None
    tau_estimate: float | None
    total_released_exact: float | None
    total_released_estimate: float | None
    p: float
    verified: bool = True
    diagnostics: tuple[str, ...] = ()

    @property
    def overestimate_percent(self) -> float | None:
        if self.tau_exact is None or self.tau_estimate is None or self.tau_exact <= 0:
            return None
        return 100.0 * (self.tau_estimate - self.tau_exact) / self.tau_exact


def _estimate_event(cert: BasinCertificate):
    def event(t, x):
        return cert.psi(float(cert.c @ np.maximum(x, 0.0))) - cert.threshold
    event.terminal = False
    event.direction = -1
    return event


def entry_time_estimate(model: NetworkModel, cfg: ControlConfig, lam, x0, xs0,
                        horizon: float = HORIZON, tol_t: float = TOL_T,
                        trajectory: Trajectory | None = None) -> float | None:
    """First time the controlled state enters the certified basin estimate."""
    try:
        cert = basin_certificate(model)
    except CertificateError:
        raise
    if cert.contains(x0):
        return 0.0
    if trajectory is None:
        trajectory = integrate_controlled(model, cfg, lam, x0, xs0, horizon,
                                          events=[_estimate_event(cert)])
        hits = trajectory.events[0]
    else:
        hits = _scan_crossings(trajectory, cert, tol_t)
    if len(hits) == 0:
        return None
    return float(_refine_estimate(trajectory, cert, float(hits[0]), tol_t))


def _scan_crossings(traj, cert, tol_t):
    inside = np.array([cert.contains(x) for x in traj.states])
    idx = np.flatnonzero(inside)
    return traj.times[idx[:1]]


def _refine_estimate(traj, cert, t_hit, tol_t):
    # Root location from the event finder is already accurate; bisect only to
    # guarantee the returned time is inside the certified set.
    lo = max(0.0, t_hit - tol_t)
    hi = min(t_hit + tol_t, traj.times[-1])
    if cert.contains(traj.at(lo)) or not cert.contains(traj.at(hi)):
        return t_hit
    while hi - lo > 1e-3 * tol_t:
        mid = 0.5 * (lo + hi)
        if cert.contains(traj.at(mid)):
            hi = mid
        else:
            lo = mid
    return hi


def entry_time_exact(model: NetworkModel, cfg: ControlConfig, lam, x0, xs0,
                     horizon: float = HORIZON, tol_t: float = TOL_T, *,
                     test_horizon: float = TEST_HORIZON, eps_extinct: float = EPS_EXTINCT,
                     trajectory: Trajectory | None = None, upper_hint: float | None = None):
    """Smallest time (to ``tol_t``) at which the controlled state passes
    :func:`in_basin_exact`, by bracketing and bisection along the trajectory.

    Returns ``(tau, verified, diagnostics)``; ``tau`` is None if no passing
    time exists up to ``horizon``.
    """
    cert = _certificate_or_none(model)

    def passes(x):
        return in_basin_exact(model, x, test_horizon, eps_extinct, cert=cert)

    x0 = _check_state(x0, model.n, "x0")
    if passes(x0):
        return 0.0, True, ()
    if trajectory is None:
        trajectory = integrate_controlled(model, cfg, lam, x0, xs0, horizon)
    t_end = float(trajectory.times[-1])
    lo = 0.0
    if upper_hint is not None and 0 < upper_hint <= t_end:
        hi = float(upper_hint)
    else:
        hi = min(16.0, t_end)
    while not passes(trajectory.at(hi)):
        if hi >= t_end:
            return None, False, (f"no basin entry up to {t_end:g} days",)
        lo, hi = hi, min(2 * hi, t_end)
    while hi - lo > tol_t:
        mid = 0.5 * (lo + hi)
        if passes(trajectory.at(mid)):
            hi = mid
        else:
            lo = mid
    diag = []
    verified = True
    if hi - tol_t >= 0 and passes(trajectory.at(hi - tol_t)):
        verified = False
        diag.append("membership passes already at tau - tol_t (not monotone in t)")
    return hi, verified, tuple(diag)


def entry_times(model: NetworkModel, cfg: ControlConfig, lam, x0, xs0, *, p: float = 1.0,
                horizon: float = HORIZON, tol_t: float = TOL_T, estimate_only: bool = False,
                test_horizon: float = TEST_HORIZON, eps_extinct: float = EPS_EXTINCT) -> DurationResult:
    """Exact and certified entry times sharing one controlled trajectory."""
    lam = as_release(lam)
    cert = basin_certificate(model)
    traj = integrate_controlled(model, cfg, lam, x0, xs0, horizon, events=[_estimate_event(cert)])
    if cert.contains(x0):
        est = 0.0
    elif len(traj.events[0]):
        est = _refine_estimate(traj, cert, float(traj.events[0][0]), tol_t)
    else:
        est = None
    rate = float(lam.sum())
    if estimate_only:
        return DurationResult(None, est, None, None if est is None else est * rate, p)
    tau, verified, diag = entry_time_exact(model, cfg, lam, x0, xs0, horizon, tol_t,
                                           test_horizon=test_horizon, eps_extinct=eps_extinct,
                                           trajectory=traj, upper_hint=est)
    return DurationResult(tau, est, None if tau is None else tau * rate,
                          None if est is None else est * rate, p, verified, diag)


@dataclass(frozen=True)
class SweepRow:
    a_value: float
    p: float
    tau_exact: float | None
    tau_estimate: float | None
    total_released: float | None
    total_released_estimate: float | None


SWEEP_COLUMNS = ("a_value", "p", "tau_exact_days", "tau_estimate_days", "total_released",
                 "total_released_estimate")


def sweep_allee(model: NetworkModel, cfg: ControlConfig, base_lambda, p_list: Sequence[float],
                a_grid: Sequence, x0=None, xs0=None, *, estimate_only: bool = False,
                horizon: float = HORIZON, tol_t: float = TOL_T) -> list[SweepRow]:
    """Entry times for releases ``p * base_lambda`` across Allee parameters.

    Each ``a`` in ``a_grid`` is a scalar (applied to every patch) or an
    n-vector. The wild start defaults to the maximal equilibrium of the
    model with that ``a`` and the sterile start to zero.
    """
    base = as_release(base_lambda)
    rows = []
    for a in a_grid:
        a_vec = np.broadcast_to(np.asarray(a, dtype=float), (model.n,))
        m_a = model.with_allee(a_vec)
        start = persistence_equilibrium(m_a) if x0 is None else np.asarray(x0, dtype=float)
        s0 = np.zeros(model.n) if xs0 is None else np.asarray(xs0, dtype=float)
        a_label = float(a_vec[0]) if np.all(a_vec == a_vec[0]) else float(a_vec.max())
        for p in p_list:
            res = entry_times(m_a, cfg, p * base, start, s0, p=p, horizon=horizon, tol_t=tol_t,
                              estimate_only=estimate_only)
            rows.append(SweepRow(a_label, float(p), res.tau_exact, res.tau_estimate,
                                 res.total_released_exact, res.total_released_estimate))
    return rows


@dataclass(frozen=True)
class AlleeRegression:
    a_values: np.ndarray
    releases: np.ndarray
    totals: np.ndarray
    slope: float
    intercept: float


def allee_cost_regression(model: NetworkModel, cfg: ControlConfig, a_grid: Sequence[float]) -> AlleeRegression:
    """Optimal cost as a function of a uniform Allee parameter, with a
    least-squares line through the totals."""
    a_vals = np.asarray(list(a_grid), dtype=float)
    releases, totals = [], []
    for a in a_vals:
        res = optimize(model.with_allee(a), cfg)
        if res.status not in (OPTIMAL_ACTIVE, OPTIMAL_ZERO):
            raise InvalidInputError(f"optimisation infeasible at a = {a:g}")
        releases.append(res.lambda_star.lam)
        totals.append(res.objective)
    totals = np.asarray(totals)
    slope, intercept = np.polyfit(a_vals, totals, 1)
    return AlleeRegression(a_vals, np.asarray(releases), totals, float(slope), float(intercept))
