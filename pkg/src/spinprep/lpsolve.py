"""P-representability by linear programming over delta-peak P-functions.

A trial P-function ``sum_i w_i delta(a - a_i)`` on a fixed set of sphere
points turns the moment conditions ``\\int P Y*_KQ = P_KQ`` into linear
equality constraints on ``w >= 0``.  Decide mode adds ``sum w = 1`` and asks
for feasibility; boundary mode drops it and minimizes ``sum w``, whose optimum
is ``1 / kappa_e`` for the ray ``rho0 + kappa rho_hat``.

A finite grid can only under-approximate the coherent-state cone, so a grid
LP certifies membership (or bounds ``kappa_e`` from below) but never refutes it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from math import pi, sqrt

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.optimize import least_squares, minimize

from .angular import (
    angles,
    angular_momentum_ops,
    coherent_kets,
    dim,
    real_spherical_harmonics,
    twice,
    unit_vectors,
)
from .density import (
    DeltaMixture,
    MultipoleCoeffs,
    PCoeffs,
    ScaledFamily,
    check_hermitian,
    p_coeffs,
    p_coeffs_from_rho,
    rho_from_mixture,
)
from .simplex import OPTIMAL, UNBOUNDED, LPStandardForm, simplex_solve

log = logging.getLogger(__name__)

GOLDEN_ANGLE = pi * (3 - sqrt(5))
DEFAULT_SCHEDULE = (250, 500, 1000, 2000)


@dataclass
class SphereGrid:
    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))

    def __len__(self):
        return len(self.theta)

    @property
    def vectors(self) -> np.ndarray:
        return unit_vectors(self.theta, self.phi)

    def union(self, other: "SphereGrid", tol: float = 1e-12) -> "SphereGrid":
        """Points of ``self`` followed by the points of ``other`` not already present."""
        if len(self) == 0:
            return other
        mine = self.vectors
        new = [i for i, v in enumerate(other.vectors)
               if np.min(np.linalg.norm(mine - v, axis=1)) > tol]
        return SphereGrid(np.r_[self.theta, other.theta[new]], np.r_[self.phi, other.phi[new]])

    def mirrored(self) -> "SphereGrid":
        """Closure under ``phi -> -phi`` (the image of complex conjugation)."""
        return self.union(SphereGrid(self.theta, np.mod(-self.phi, 2 * pi)))


def fibonacci_grid(n: int) -> SphereGrid:
    """Golden-angle spiral of ``n`` points running from the north to the south pole."""
    if n < 1:
        raise ValueError("grid size must be at least 1")
    i = np.arange(n)
    z = np.ones(1) if n == 1 else 1 - 2 * i / (n - 1)
    return SphereGrid(np.arccos(np.clip(z, -1, 1)), np.mod(i * GOLDEN_ANGLE, 2 * pi))


def nested_grids(schedule, mirror: bool = False) -> list[SphereGrid]:
    """Cumulative unions of Fibonacci grids, so each level contains the previous one."""
    grids, acc = [], SphereGrid([], [])
    for n in schedule:
        g = fibonacci_grid(int(n))
        acc = acc.union(g.mirrored() if mirror else g)
        grids.append(acc)
    return grids


def harmonic_columns(j, theta, phi) -> np.ndarray:
    """Real harmonics ``S_KQ`` with ``1 <= K <= 2j`` at the given points, shape ``(M, n)``."""
    return real_spherical_harmonics(twice(j), theta, phi)[1:]


def build_constraints(target, grid: SphereGrid, mode: str = "decide") -> LPStandardForm:
    """Assemble the delta-peak LP for ``target`` (``PCoeffs`` or ``MultipoleCoeffs``).

    Rows are the real-harmonic recombinations of ``sum_i Y*_KQ(a_i) w_i = P_KQ``
    for ``0 < K <= 2j``; decide mode appends ``sum w = 1`` with a zero objective,
    boundary mode minimizes ``sum w``.
    """
    if isinstance(target, MultipoleCoeffs):
        target = p_coeffs_from_rho(target)
    if not isinstance(target, PCoeffs):
        raise TypeError("target must be PCoeffs or MultipoleCoeffs")
    tj = twice(target.j)
    if len(target.values) != (tj + 1) ** 2:
        raise ValueError("coefficients beyond K = 2j cannot be matched by a spin-j state")
    A = harmonic_columns(target.j, grid.theta, grid.phi)
    b = target.real()[1:]
    labels = [(K, Q) for K in range(1, tj + 1) for Q in range(-K, K + 1)]
    n = len(grid)
    if mode == "boundary":
        return LPStandardForm(np.ones(n), A, b, labels)
    if mode == "decide":
        return LPStandardForm(np.zeros(n), np.vstack([A, np.ones(n)]), np.r_[b, 1.0],
                              labels + ["norm"])
    raise ValueError(f"unknown mode {mode!r}")


def maximize_on_sphere(fn, n_grid: int = 2000, n_starts: int = 3, dims: int = 1):
    """Approximate global maximum of ``fn`` over ``dims`` unit vectors.

    ``fn`` receives an array of shape ``(n, dims, 3)``.  A Fibonacci grid (a
    product of grids when ``dims == 2``) seeds L-BFGS-B polishes, in polar
    angles, of the best few points.  Returns ``(value, vectors)`` pairs sorted
    best first.
    """
    base = fibonacci_grid(n_grid if dims == 1 else int(sqrt(n_grid)) + 1).vectors
    if dims == 1:
        cand = base[:, None, :]
    else:
        ia, ib = np.meshgrid(np.arange(len(base)), np.arange(len(base)), indexing="ij")
        cand = np.stack([base[ia.ravel()], base[ib.ravel()]], axis=1)
    vals = fn(cand)
    order = np.argsort(vals)[::-1][:n_starts]

    def neg(x):
        return -float(fn(unit_vectors(x[0::2], x[1::2])[None])[0])

    out = []
    for i in order:
        th, ph = angles(cand[i])
        x0 = np.column_stack([th, ph]).ravel()
        res = minimize(neg, x0, method="L-BFGS-B", options={"ftol": 1e-15, "gtol": 1e-10})
        if -res.fun >= vals[i]:
            v = unit_vectors(res.x[0::2], res.x[1::2])
            out.append((-float(res.fun), v))
        else:
            out.append((float(vals[i]), cand[i]))
    out.sort(key=lambda t: -t[0])
    return out


class ColumnLP:
    """Equality-constrained LP over a growing set of point columns.

    Columns are only ever appended, so the optimal basis of one solve is a
    primal-feasible starting basis for the next.
    """

    def __init__(self, b, cost: float = 1.0, elastic: bool = False):
        self.b = np.asarray(b, dtype=float)
        self.cost = cost
        self.elastic = elastic
        m = len(self.b)
        self.A = np.zeros((m, 0))
        self.points: list = []
        if elastic:
            # slack pairs s+ - s-; the matching slack gives a feasible start
            self._slack = np.hstack([np.eye(m), -np.eye(m)])
            self.basis = np.where(self.b >= 0, np.arange(m), m + np.arange(m))
        else:
            self._slack = np.zeros((m, 0))
            self.basis = None
        self.solution = None

    @property
    def n_points(self) -> int:
        return self.A.shape[1]

    def add(self, cols, points):
        cols = np.asarray(cols, dtype=float).reshape(len(self.b), -1)
        shift = cols.shape[1]
        if self.basis is not None and self.elastic:
            # slack indices sit after the point columns
            self.basis = np.where(self.basis >= self.n_points, self.basis + shift, self.basis)
        self.A = np.hstack([self.A, cols])
        self.points.extend(points)

    def solve(self):
        n, m = self.n_points, len(self.b)
        if self.elastic:
            A = np.hstack([self.A, self._slack])
            c = np.r_[np.zeros(n), np.ones(2 * m)]
        else:
            A, c = self.A, np.full(n, self.cost)
        sol = simplex_solve(LPStandardForm(c, A, self.b), basis=self.basis)
        if sol.status == OPTIMAL:
            self.basis = sol.basis
        self.solution = sol
        return sol

    @property
    def weights(self) -> np.ndarray:
        return self.solution.x[: self.n_points]


def _stack(mats) -> np.ndarray:
    """Real residual vector of complex matrices: real parts then imaginary parts."""
    mats = np.asarray(mats)
    flat = mats.reshape(mats.shape[0], -1) if mats.ndim == 3 else mats.reshape(1, -1)
    return np.hstack([flat.real, flat.imag])


def projectors_with_derivatives(j, theta, phi):
    """Coherent projectors ``P`` and their angle derivatives, each shape ``(n, d, d)``.

    A point moves by rotation, so ``dP/dtheta = -i [J.e_theta, P]`` and
    ``dP/dphi = -i [J_z, P]`` with ``e_theta = (-sin phi, cos phi, 0)``; this is
    independent of the phase convention of the kets.
    """
    jx, jy, jz = angular_momentum_ops(j)
    kets = coherent_kets(j, theta, phi)
    P = np.einsum("ni,nj->nij", kets, kets.conj())
    phi = np.asarray(phi, dtype=float).reshape(-1)[:, None, None]
    ja = -np.sin(phi) * jx + np.cos(phi) * jy
    return P, -1j * (ja @ P - P @ ja), -1j * (jz @ P - P @ jz)


def least_squares_weights(residual, jacobian, x0, max_nfev: int = 5000) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    # Levenberg-Marquardt copes better with near-singular Jacobians but needs
    # at least as many residuals as unknowns
    method = "lm" if residual(x0).size >= x0.size else "trf"
    return least_squares(residual, x0, jac=jacobian, method=method, xtol=1e-15, ftol=1e-15,
                         gtol=1e-15, max_nfev=max_nfev).x


def polish_mixture(rho, mixture: DeltaMixture, j=None, max_nfev: int = 5000) -> DeltaMixture:
    """Move the points and weights of ``mixture`` to reduce ``|sum w |a><a| - rho|``.

    Nonlinear least squares in ``(sqrt(w), theta, phi)`` with an exact
    Jacobian; squaring keeps the weights non-negative.
    """
    rho = np.asarray(rho, dtype=complex)
    j = (rho.shape[0] - 1) / 2 if j is None else j
    k = len(mixture)
    target = _stack(rho)[0]

    def residual(x):
        s, th, ph = x[:k], x[k:2 * k], x[2 * k:]
        P = projectors_with_derivatives(j, th, ph)[0]
        return _stack(np.einsum("n,nij->ij", s * s, P))[0] - target

    def jacobian(x):
        s, th, ph = x[:k], x[k:2 * k], x[2 * k:]
        P, d_th, d_ph = projectors_with_derivatives(j, th, ph)
        w = (s * s)[:, None, None]
        blocks = [2 * s[:, None, None] * P, w * d_th, w * d_ph]
        return np.vstack([_stack(b) for b in blocks]).T

    x0 = np.r_[np.sqrt(mixture.weights), mixture.theta, mixture.phi]
    x = least_squares_weights(residual, jacobian, x0, max_nfev)
    return DeltaMixture(x[:k] ** 2, x[k:2 * k], x[2 * k:]).pruned()


def merge_clusters(weights, blocks, limit: int) -> list[tuple[np.ndarray, list]]:
    """Merge nearby support points into ``k = 1, 2, ...`` weighted clusters.

    ``blocks`` holds one ``(n, 3)`` array of unit vectors per sphere (two for
    product points); clustering uses their concatenation.  Returns, per ``k``,
    the cluster weights and the normalized weighted mean direction of each block.
    """
    weights = np.asarray(weights, dtype=float)
    n = len(weights)
    if n < 2:
        return []
    v = np.hstack(blocks)
    tree = linkage(v, method="average")
    out = []
    for k in range(1, min(n - 1, limit) + 1):
        labels = fcluster(tree, k, criterion="maxclust")
        ws, means = [], [[] for _ in blocks]
        for lab in np.unique(labels):
            sel = labels == lab
            ws.append(weights[sel].sum())
            for blk, acc in zip(blocks, means):
                mean = weights[sel] @ blk[sel]
                norm = np.linalg.norm(mean)
                acc.append(mean / norm if norm > 1e-12 else blk[sel][0])
        out.append((np.array(ws), [np.array(m) for m in means]))
    return out


def clustered_starts(mixture: DeltaMixture, limit: int) -> list[DeltaMixture]:
    """Merged versions of ``mixture`` with ``k = 1 .. limit`` points.

    LP supports crowd several grid points around each true point, which makes
    the least-squares polish ill-conditioned; a merged start has about as many
    points as the certificate needs.
    """
    return [DeltaMixture.from_vectors(w, vs[0])
            for w, vs in merge_clusters(mixture.weights, [mixture.vectors], limit)]


@dataclass
class Decision:
    """Outcome of the decide-mode LP.

    ``prep`` is ``True`` with a certificate, or ``False`` meaning only that no
    certificate was found (the grid LP cannot refute membership).
    """

    prep: bool
    mixture: DeltaMixture | None
    lp_residual: float
    reconstruction_error: float
    n_columns: int
    rounds: int
    polished: bool = False

    def to_dict(self) -> dict:
        return {
            "prep": self.prep,
            "lp_residual": self.lp_residual,
            "reconstruction_error": self.reconstruction_error,
            "n_columns": self.n_columns,
            "column_generation_rounds": self.rounds,
            "polished": self.polished,
            "certificate": None if self.mixture is None else self.mixture.to_dict(),
        }


def _support_mixture(col):
    w = col.weights
    keep = w > 0
    if not keep.any():
        return None
    pts = np.array(col.points)[keep]
    return DeltaMixture(w[keep], pts[:, 0], pts[:, 1])


def decide_prep(rho, grid: SphereGrid | int = 500, j=None, refine: int = 5,
                tol: float = 1e-9, polish_rounds: int = 12) -> Decision:
    """Search for a non-negative delta-peak P-function reproducing ``rho``.

    Solves the elastic form of the decide-mode LP (minimize the L1 constraint
    violation).  When the grid alone leaves a violation, up to ``refine``
    column-generation rounds add the sphere points with the most favourable
    reduced cost, found by maximizing the dual pricing function on the sphere.
    A state whose certificate needs points off the grid (a coherent state, say)
    is then finished by :func:`polish_mixture`, started from the LP support and,
    if that stalls, from up to ``polish_rounds`` merged versions of it (see
    :func:`clustered_starts`).
    ``prep`` is ``True`` iff the certificate reconstructs ``rho`` to ``tol``
    (max-abs entry error).
    """
    rho = check_hermitian(rho)
    j = (rho.shape[0] - 1) / 2 if j is None else j
    if dim(j) != rho.shape[0]:
        raise ValueError(f"matrix dimension {rho.shape[0]} does not match spin {j}")
    if isinstance(grid, int):
        grid = fibonacci_grid(grid)
    lp0 = build_constraints(p_coeffs(rho, j), grid, "decide")
    col = ColumnLP(lp0.b, elastic=True)
    col.add(lp0.A, list(zip(grid.theta, grid.phi)))

    def columns(theta, phi):
        return np.vstack([harmonic_columns(j, theta, phi), np.ones(np.size(theta))])

    rounds = 0
    sol = col.solve()
    first = _support_mixture(col)
    while sol.objective > tol and rounds < refine:
        y = sol.duals

        def price(v):
            th, ph = angles(v[:, 0, :])
            return y @ columns(th, ph)

        found = [v for val, v in maximize_on_sphere(price, n_grid=1000) if val > 1e-12]
        if not found:
            break
        th, ph = angles(np.vstack([v[0] for v in found]))
        col.add(columns(th, ph), list(zip(th, ph)))
        sol = col.solve()
        rounds += 1

    mixture = _support_mixture(col)
    if mixture is None:
        return Decision(False, None, float(sol.objective), float("nan"), col.n_points, rounds)
    err = float(np.abs(rho_from_mixture(mixture, j) - rho).max())
    polished = False
    if err > tol:
        polished = True
        starts = [mixture] + clustered_starts(mixture, polish_rounds)
        # column generation can blur the cluster structure; the grid-only
        # support is an independent source of starts
        if first is not None and rounds:
            starts += clustered_starts(first, polish_rounds)
        tried = []
        for start in starts:
            cand = polish_mixture(rho, start, j, max_nfev=300 * (len(start) + 5))
            cand_err = float(np.abs(rho_from_mixture(cand, j) - rho).max())
            tried.append((cand_err, len(tried), cand))
            if cand_err < err:
                mixture, err = cand, cand_err
            if err <= tol:
                break
        # slow convergence near a degenerate optimum: continue the best few
        for _, _, cand in sorted(tried, key=lambda t: t[:2])[:3] if err > tol else []:
            cand = polish_mixture(rho, cand, j, max_nfev=5000)
            cand_err = float(np.abs(rho_from_mixture(cand, j) - rho).max())
            if cand_err < err:
                mixture, err = cand, cand_err
            if err <= tol:
                break
    prep = err <= tol
    return Decision(prep, mixture if prep else None, float(sol.objective), err,
                    col.n_points, rounds, polished)


@dataclass
class BoundaryResult:
    """``kappa_e`` estimate along a ray, with the grid-refinement history.

    ``history`` holds ``1/kappa`` per grid level; these are upper bounds on the
    exact ``1/kappa_e``, non-increasing because each grid contains the previous
    one.  ``mixture`` represents the boundary state ``rho0 + kappa_e rho_hat``
    (weights sum to one).  ``kappa_upper`` is the dual bound obtained by
    maximizing the final pricing function on the sphere; it brackets the exact
    value from above up to the accuracy of that maximization.
    """

    kappa_e: float
    mixture: object
    grid_sizes: list = field(default_factory=list)
    history: list = field(default_factory=list)
    converged: bool = False
    kappa_upper: float = float("nan")
    residual: float = 0.0
    iterations: int = 0
    norm: str = "trace"

    @property
    def support_size(self) -> int:
        return 0 if self.mixture is None else len(self.mixture)

    def to_dict(self) -> dict:
        return {
            "kappa_e": self.kappa_e,
            "kappa_upper": self.kappa_upper,
            "history": self.history,
            "grid_sizes": self.grid_sizes,
            "converged": self.converged,
            "residual": self.residual,
            "support_size": self.support_size,
            "norm": self.norm,
            "mixture": None if self.mixture is None else self.mixture.to_dict(),
        }


def run_boundary_lp(b, levels, make_mixture, pricing=None, tol: float = 1e-4,
                    polish: int = 0, norm: str = "trace") -> BoundaryResult:
    """Shared nested-grid driver for single-spin and bipartite boundary LPs.

    ``levels`` yields ``(new_columns, new_points)`` per refinement level;
    ``pricing(y)`` returns ``(value, column, point)`` candidates maximizing
    ``y . column`` over the continuous point set.
    """
    b = np.asarray(b, dtype=float)
    if np.abs(b).max(initial=0.0) < 1e-14:
        return BoundaryResult(float("inf"), None, converged=True, norm=norm)
    col = ColumnLP(b)
    history, sizes = [], []
    converged = False
    sol = None
    for cols, points in levels:
        col.add(cols, points)
        sol = col.solve()
        sizes.append(col.n_points)
        if sol.status == UNBOUNDED:
            raise RuntimeError("boundary LP reported unbounded although its objective is bounded below")
        if sol.status != OPTIMAL:
            history.append(float("nan"))
            continue
        history.append(sol.objective)
        if len(history) >= 2 and np.isfinite(history[-2]):
            if abs(history[-2] - history[-1]) < tol * history[-1]:
                converged = True
                break
    if sol is None or sol.status != OPTIMAL:
        raise RuntimeError("boundary LP infeasible at every grid size; the grid is too coarse")

    # column generation: the dual bound brackets kappa_e from above, so rounds
    # stop as soon as the bracket is tighter than tol
    kappa_upper = float("nan")
    for r in range(polish + 1 if pricing is not None else 0):
        cands = pricing(sol.duals)
        best = max(c[0] for c in cands)
        lower = float(sol.duals @ b) / best if best > 0 else 0.0
        kappa_upper = 1.0 / lower if lower > 0 else float("inf")
        if kappa_upper * sol.objective - 1 < tol:
            converged = True
            break
        new = [c for c in cands if c[0] > 1 + 1e-10]
        if r == polish or not new:
            break
        col.add(np.column_stack([c[1] for c in new]), [c[2] for c in new])
        sol = col.solve()
        history.append(sol.objective)
        sizes.append(col.n_points)

    inv = sol.objective
    w = col.weights
    keep = np.flatnonzero(w > 0)
    mixture = make_mixture(w[keep] / inv, [col.points[i] for i in keep])
    return BoundaryResult(1.0 / inv, mixture, sizes, history, converged, kappa_upper,
                          sol.residual, sol.iterations, norm)


def boundary_kappa(family: ScaledFamily, schedule=DEFAULT_SCHEDULE, tol: float = 1e-4,
                   polish: int = 0, mirror: bool = False) -> BoundaryResult:
    """Lower bound on ``kappa_e`` from nested-grid delta-peak LPs.

    With ``polish > 0`` up to that many column-generation rounds follow the
    last grid; they stop once ``kappa_upper / kappa_e - 1 < tol``.
    """
    if len(family.dims) != 1:
        raise ValueError("boundary_kappa handles single spins; use bipartite_boundary_kappa")
    j = (family.d - 1) / 2
    b = p_coeffs(family.rho_hat, j).real()[1:]

    def levels():
        prev = SphereGrid([], [])
        for g in nested_grids(schedule, mirror):
            th, ph = g.theta[len(prev):], g.phi[len(prev):]
            prev = g
            yield harmonic_columns(j, th, ph), list(zip(th, ph))

    def pricing(y):
        def f(v):
            th, ph = angles(v[:, 0, :])
            return y @ harmonic_columns(j, th, ph)

        out = []
        for val, v in maximize_on_sphere(f):
            th, ph = angles(v[0])
            out.append((val, harmonic_columns(j, th, ph)[:, 0], (th[0], ph[0])))
        return out

    def make_mixture(w, pts):
        pts = np.array(pts).reshape(-1, 2)
        return DeltaMixture(w, pts[:, 0], pts[:, 1])

    return run_boundary_lp(b, levels(), make_mixture, pricing, tol, polish, family.norm)


def inverse_kappa(x, dims, method: str = "lp", **kwargs) -> float:
    """Gauge ``1/kappa_e`` of an unnormalized traceless direction ``x``.

    Positively homogeneous: ``inverse_kappa(s x) = s inverse_kappa(x)`` for ``s >= 0``.
    """
    fam = ScaledFamily.from_direction(x, dims, kwargs.pop("norm", "trace"))
    if fam.scale == 0:
        return 0.0
    if method == "analytic":
        from .analytic import spin1_kappa_e

        k = spin1_kappa_e(fam)
    elif method == "lp":
        k = boundary_kappa(fam, **kwargs).kappa_e
    else:
        raise ValueError(f"unknown method {method!r}")
    return fam.scale / k


def concavity_check(family_1: ScaledFamily, family_2: ScaledFamily, c: float = 0.5,
                    method: str = "lp", **kwargs) -> float:
    """Slack ``c g(X1) + (1-c) g(X2) - g(c X1 + (1-c) X2)`` with ``g = 1/kappa_e``.

    ``X1``, ``X2`` are the (normalized) directions of the two families; the
    slack is non-negative up to numerical error.
    """
    if family_1.dims != family_2.dims:
        raise ValueError("families must describe the same system")
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    dims = family_1.dims
    x1, x2 = family_1.rho_hat, family_2.rho_hat
    g = lambda x: inverse_kappa(x, dims, method, norm=family_1.norm, **kwargs)  # noqa: E731
    return c * g(x1) + (1 - c) * g(x2) - g(c * x1 + (1 - c) * x2)
