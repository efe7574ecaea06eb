"""Dense two-phase revised simplex for ``min c.x  s.t.  A x = b, x >= 0``.

The constraint counts met here are small (at most a few dozen rows), so the
basis is refactorized with a dense LU at every iteration; the per-iteration
cost is dominated by pricing the ``n`` columns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class LPStandardForm:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    row_labels: list = field(default_factory=list)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        m, n = self.A.shape
        if self.c.shape != (n,) or self.b.shape != (m,):
            raise ValueError(f"inconsistent LP shapes: A {self.A.shape}, b {self.b.shape}, c {self.c.shape}")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b)) and np.all(np.isfinite(self.c))):
            raise ValueError("LP data must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LPSolution:
    status: str
    x: np.ndarray
    objective: float
    basis: np.ndarray
    iterations: int
    duals: np.ndarray
    residual: float

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.x > 0)


class _Stall:
    def __init__(self, limit):
        self.limit = limit
        self.count = 0

    @property
    def bland(self):
        return self.count >= self.limit

    def step(self, degenerate):
        self.count = self.count + 1 if degenerate else 0


def _iterate(A, b, c, basis, allowed, opt_tol, pivot_tol, max_iter, stall_limit):
    """Primal simplex from a feasible ``basis``; returns status, basis, xB, y, iterations."""
    m = A.shape[0]
    stall = _Stall(stall_limit)
    it = 0
    while True:
        lu = lu_factor(A[:, basis], check_finite=False)
        xb = lu_solve(lu, b, check_finite=False)
        xb[np.abs(xb) < 1e-14] = 0.0
        y = lu_solve(lu, c[basis], trans=1, check_finite=False)
        if it >= max_iter:
            return ITERATION_LIMIT, basis, xb, y, it
        d = c - A.T @ y
        d[basis] = 0.0
        d[~allowed] = 0.0
        if stall.bland:
            neg = np.flatnonzero(d < -opt_tol)
            if neg.size == 0:
                return OPTIMAL, basis, xb, y, it
            q = int(neg[0])
        else:
            q = int(np.argmin(d))
            if d[q] >= -opt_tol:
                return OPTIMAL, basis, xb, y, it
        u = lu_solve(lu, A[:, q], check_finite=False)
        rows = np.flatnonzero(u > pivot_tol)
        if rows.size == 0:
            return UNBOUNDED, basis, xb, y, it
        ratios = np.maximum(xb[rows], 0.0) / u[rows]
        step = ratios.min()
        ties = rows[ratios <= step + 1e-12 * max(1.0, step)]
        if stall.bland:
            r = int(ties[np.argmin(basis[ties])])
        else:
            r = int(ties[np.argmax(u[ties])])
        stall.step(step <= 1e-12)
        basis = basis.copy()
        basis[r] = q
        it += 1
        if it and it % 1000 == 0:
            log.debug("simplex: %d iterations, m=%d", it, m)


def simplex_solve(
    lp: LPStandardForm,
    basis=None,
    feas_tol: float = 1e-9,
    opt_tol: float = 1e-11,
    pivot_tol: float = 1e-10,
    max_iter: int = 50_000,
    stall_factor: int = 5,
) -> LPSolution:
    """Solve ``lp`` by phase-1 (artificial variables) then phase-2 revised simplex.

    ``basis`` may supply ``m`` column indices of a known primal-feasible basis
    (e.g. the optimum of a smaller column set); phase 1 is then skipped.
    Bland's rule takes over after ``stall_factor * m`` consecutive degenerate
    pivots.  ``duals`` holds the simplex multipliers of the final phase (phase 1
    for an infeasible problem).
    """
    m, n = lp.shape
    sign = np.where(lp.b < 0, -1.0, 1.0)
    A = np.hstack([lp.A * sign[:, None], np.eye(m)])
    b = lp.b * sign
    art = np.arange(n, n + m)
    allowed = np.ones(n + m, dtype=bool)
    stall_limit = stall_factor * max(m, 1)
    iters = 0

    start = None
    if basis is not None:
        start = np.asarray(basis, dtype=int)
        ok = start.shape == (m,) and len(set(start.tolist())) == m and start.max(initial=-1) < n
        if ok:
            B = A[:, start]
            ok = np.linalg.cond(B) < 1e12
            ok = ok and np.linalg.solve(B, b).min(initial=0.0) >= -feas_tol
        if not ok:
            start = None

    if start is None:
        c1 = np.r_[np.zeros(n), np.ones(m)]
        status, start, xb, y, it = _iterate(A, b, c1, art.copy(), allowed, opt_tol,
                                            pivot_tol, max_iter, stall_limit)
        iters += it
        phase1 = float(c1[start] @ xb)
        if status != OPTIMAL or phase1 > feas_tol * max(1.0, np.abs(b).max(initial=0.0)):
            x = _full(start, xb, n)
            return LPSolution(INFEASIBLE if status == OPTIMAL else status, x, float("nan"),
                              start, iters, y * sign, _residual(lp, x))
        start = _drive_out(A, start, art, n, pivot_tol)

    allowed[art] = False
    c2 = np.r_[lp.c, np.zeros(m)]
    status, basis, xb, y, it = _iterate(A, b, c2, start, allowed, opt_tol, pivot_tol,
                                        max_iter - iters, stall_limit)
    iters += it
    x = _full(basis, xb, n)
    return LPSolution(status, x, float(lp.c @ x), basis, iters, y * sign, _residual(lp, x))


def _drive_out(A, basis, art, n, pivot_tol):
    """Pivot zero-level artificials out of the basis where a real column allows it."""
    basis = basis.copy()
    for r in np.flatnonzero(basis >= n):
        lu = lu_factor(A[:, basis], check_finite=False)
        e = np.zeros(len(basis))
        e[r] = 1.0
        row = lu_solve(lu, e, trans=1, check_finite=False) @ A[:, :n]
        row[basis[basis < n]] = 0.0
        q = int(np.argmax(np.abs(row)))
        if abs(row[q]) > pivot_tol:
            basis[r] = q
        # otherwise the row is redundant and the artificial stays basic at zero
    return basis


def _full(basis, xb, n):
    x = np.zeros(n)
    real = basis < n
    x[basis[real]] = np.maximum(xb[real], 0.0)
    return x


def _residual(lp, x):
    return float(np.abs(lp.A @ x - lp.b).max(initial=0.0))
