"""Thin linear-programming layer used by the polytope kernel.

Every LP in the package goes through :func:`solve`, which wraps HiGHS (via
``scipy.optimize.linprog``) and maps its status codes onto three outcomes:
optimal, infeasible and unbounded.  Anything else is a numerical failure and
raises :class:`LPError` so callers never confuse it with emptiness.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

FEAS_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LPError(RuntimeError):
    """The solver failed for numerical reasons (not infeasibility)."""


@dataclass(frozen=True)
class LPResult:
    status: str
    x: np.ndarray | None = None
    value: float | None = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None, tol=None) -> LPResult:
    """Minimize ``c @ x`` subject to ``A_ub x <= b_ub`` and ``A_eq x == b_eq``.

    Variables are free unless ``bounds`` is given (scipy's default of x >= 0
    is deliberately overridden).  ``tol`` defaults to the module-level
    ``FEAS_TOL``, which the CLI may adjust.
    """
    tol = FEAS_TOL if tol is None else tol
    c = np.asarray(c, dtype=float)
    n = c.size
    if bounds is None:
        bounds = [(None, None)] * n
    if A_ub is not None and np.asarray(A_ub).shape[0] == 0:
        A_ub = b_ub = None
    if A_eq is not None and np.asarray(A_eq).shape[0] == 0:
        A_eq = b_eq = None
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": tol, "dual_feasibility_tolerance": tol},
    )
    if res.status == 0:
        return LPResult(OPTIMAL, np.asarray(res.x, dtype=float), float(res.fun))
    if res.status == 2:
        return LPResult(INFEASIBLE)
    if res.status == 3:
        return LPResult(UNBOUNDED)
    raise LPError(f"LP solver failed (status {res.status}): {res.message}")
