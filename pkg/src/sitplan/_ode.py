"""Thin wrapper around the embedded Runge-Kutta 5(4) integrator."""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError

RTOL = 1e-8
ATOL = 1e-10


def integrate(fun, t_span, y0, *, t_eval=None, events=None, dense_output=False,
              rtol=RTOL, atol=ATOL):
    """Run :func:`scipy.integrate.solve_ivp` with the package tolerances.

    Raises IntegrationError when the solver reports failure.
    """
    sol = solve_ivp(fun, t_span, np.asarray(y0, dtype=float), method="RK45",
                    t_eval=t_eval, events=events, dense_output=dense_output,
                    rtol=rtol, atol=atol)
    if sol.status == -1:
        raise IntegrationError(f"integration failed: {sol.message}",
                               t_reached=float(sol.t[-1]) if sol.t.size else None)
    return sol
