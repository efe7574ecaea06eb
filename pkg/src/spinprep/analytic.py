"""Closed-form classicality tests for spin-1/2 and spin-1, and moment witnesses."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .angular import angular_momentum_ops, angles, dim, twice
from .density import (
    DeltaMixture,
    NotAStateError,
    ScaledFamily,
    check_hermitian,
    maximally_mixed,
    positivity_kappa,
)

PREP_TOL = 1e-10
PURE_TOL = 1e-9


class NotPRepresentableError(ValueError):
    """The state provably admits no non-negative P-function."""


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def bloch_vector(rho) -> np.ndarray:
    rho = check_hermitian(rho)
    if rho.shape != (2, 2):
        raise ValueError("Bloch vector needs a 2x2 matrix")
    jx, jy, jz = angular_momentum_ops(0.5)
    return 2 * np.array([np.vdot(op, rho).real for op in (jx, jy, jz)])


def qubit_decompose(rho) -> DeltaMixture:
    """Two antipodal coherent states ``+-u/|u|`` with weights ``(1 +- |u|)/2``."""
    u = bloch_vector(rho)
    r = float(np.linalg.norm(u))
    if r > 1 + 1e-10:
        raise NotAStateError(f"Bloch vector length {r:.6g} > 1: not a state")
    if r >= 1 - 1e-12:
        return DeltaMixture.from_vectors([1.0], [u])
    axis = u / r if r > 1e-15 else np.array([0.0, 0.0, 1.0])
    return DeltaMixture.from_vectors([(1 + r) / 2, (1 - r) / 2], [axis, -axis])


@dataclass(frozen=True)
class SpinOneFrame:
    """First moments ``u``, symmetrized second moments ``W`` and ``Z = W - u u^T``."""

    u: np.ndarray
    W: np.ndarray

    @property
    def Z(self) -> np.ndarray:
        return self.W - np.outer(self.u, self.u)


def _moments(rho, j):
    ops = angular_momentum_ops(j)
    u = np.array([np.vdot(op, rho).real for op in ops])
    s = np.empty((3, 3))
    for a, b in itertools.product(range(3), repeat=2):
        s[a, b] = np.vdot(ops[a] @ ops[b] + ops[b] @ ops[a], rho).real / 2
    return u, s


def spin1_frame(rho) -> SpinOneFrame:
    rho = check_hermitian(rho)
    if rho.shape != (3, 3):
        raise ValueError(f"spin-1 frame needs a 3x3 matrix, got {rho.shape}")
    u, s = _moments(rho, 1)
    return SpinOneFrame(u, 2 * s - np.eye(3))


def spin1_is_prep(rho, tol: float = PREP_TOL) -> tuple[bool, float]:
    """Spin-1 criterion: P-representable iff ``Z`` is positive semidefinite."""
    lam = float(np.linalg.eigvalsh(spin1_frame(rho).Z)[0])
    return lam >= -tol, lam


SIGN_VECTORS = np.array(list(itertools.product((1.0, -1.0), repeat=3)))


def spin1_decompose(rho, tol: float = PREP_TOL) -> DeltaMixture:
    """Explicit eight-point coherent-state decomposition of a P-rep spin-1 state.

    With ``Z = A A^T`` and sign vectors ``t``:
    ``tau = -b + sqrt(1 + b^2)``, ``b = u^T A t / (1 - |u|^2)``,
    ``n = u + tau A t``, ``lambda = 1 / (4 (1 + tau^2))``.
    The points only lie on the unit sphere when ``A^T A`` is diagonal, so ``A``
    is taken as ``V sqrt(D)`` from the eigendecomposition ``Z = V D V^T``.
    """
    frame = spin1_frame(rho)
    u = frame.u
    evals, evecs = np.linalg.eigh(frame.Z)
    if evals[0] < -tol:
        raise NotPRepresentableError(f"Z has negative eigenvalue {evals[0]:.3g}")
    gap = 1 - u @ u
    if gap < PURE_TOL:
        return DeltaMixture.from_vectors([1.0], [u])
    A = evecs * np.sqrt(np.clip(evals, 0, None))
    at = SIGN_VECTORS @ A.T  # rows: A t
    b = (at @ u) / gap
    tau = -b + np.sqrt(1 + b * b)
    points = u + tau[:, None] * at
    weights = 0.25 / (1 + tau * tau)
    theta, phi = angles(points)
    return DeltaMixture(weights, theta, phi)


def _zkappa(frame: SpinOneFrame, kappa: float) -> np.ndarray:
    return kappa * frame.W + (1 - kappa) / 3 * np.eye(3) - kappa**2 * np.outer(frame.u, frame.u)


def spin1_kappa_e(family: ScaledFamily) -> float:
    """Boundary of the spin-1 classical set along ``rho0 + kappa rho_hat``.

    Smallest positive root of ``det Z_kappa`` (a quartic in ``kappa``; cubic when
    ``u = 0``), polished by bisection on ``lambda_min(Z_kappa)``.  Returns
    ``inf`` for a vanishing direction.
    """
    if family.dims != (3,):
        raise ValueError("spin1_kappa_e needs a spin-1 family")
    if not np.any(family.rho_hat):
        return float("inf")
    frame = spin1_frame(maximally_mixed(3) + family.rho_hat)
    lmin = lambda k: np.linalg.eigvalsh(_zkappa(frame, k))[0]  # noqa: E731

    nodes = np.arange(5.0)
    coeffs = np.polyfit(nodes, [np.linalg.det(_zkappa(frame, k)) for k in nodes], 4)
    roots = np.roots(np.trim_zeros(coeffs, "f"))
    cands = sorted(r.real for r in roots if abs(r.imag) < 1e-7 * max(1, abs(r)) and r.real > 0)
    k_pos = positivity_kappa(family)
    for r in cands:
        lo, hi = r * (1 - 1e-6), r * (1 + 1e-6)
        if lmin(lo) > 0 and lmin(hi) <= 0:
            return _bisect(lmin, lo, hi)
    # fall back to a scan when the root polish brackets nothing
    upper = min(k_pos, 1e6) if np.isfinite(k_pos) else 1e6
    grid = np.linspace(0, upper * (1 + 1e-9), 4001)[1:]
    vals = [lmin(k) for k in grid]
    for k0, k1, v1 in zip(np.r_[0, grid[:-1]], grid, vals):
        if v1 <= 0:
            return _bisect(lmin, k0, k1)
    return float("inf")


def _bisect(f, lo: float, hi: float, tol: float = 1e-14) -> float:
    """Bisection for the sign change ``f(lo) > 0 >= f(hi)``."""
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class WitnessReport:
    """One witness evaluation: ``value`` below ``-tol`` certifies non-classicality."""

    t: np.ndarray
    value: float
    kind: str
    tol: float = PREP_TOL

    @property
    def violated(self) -> bool:
        return self.value < -self.tol

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "t": [float(x) for x in self.t],
            "value": float(self.value),
            "violated": bool(self.violated),
            "tol": self.tol,
        }


def _second_moment_form(rho, j):
    u, s = _moments(rho, j)
    two_j = twice(j)
    return two_j * s - (two_j - 1) * np.outer(u, u) - (two_j / 2) ** 2 * np.eye(3)


def witness_second_moment(rho, t, j=None) -> WitnessReport:
    """``2j <J_t^2> - (2j-1) <J_t>^2 - j^2``; negative values rule out a P-rep."""
    rho = check_hermitian(rho)
    j = (rho.shape[0] - 1) / 2 if j is None else j
    if dim(j) != rho.shape[0]:
        raise ValueError(f"matrix dimension {rho.shape[0]} does not match spin {j}")
    t = _unit(t)
    return WitnessReport(t, float(t @ _second_moment_form(rho, j) @ t), "second-moment")


def _jt_moments(rho, t, j):
    jt = sum(ti * op for ti, op in zip(t, angular_momentum_ops(j)))
    jt2 = jt @ jt
    return (np.vdot(jt, rho).real, np.vdot(jt2, rho).real, np.vdot(jt2 @ jt, rho).real)


def witness_third_moment_spin32(rho, t) -> WitnessReport:
    """Spin-3/2 condition ``2 |<J_t^3> - 7/4 <J_t>| <= |<J_t^2> - 3/4|``.

    The reported value is the slack (right side minus left side).
    """
    rho = check_hermitian(rho)
    if rho.shape != (4, 4):
        raise ValueError(f"third-moment witness needs a spin-3/2 (4x4) matrix, got {rho.shape}")
    t = _unit(t)
    m1, m2, m3 = _jt_moments(rho, t, 1.5)
    return WitnessReport(t, abs(m2 - 0.75) - 2 * abs(m3 - 1.75 * m1), "third-moment")


def _scan_sphere(fn, n_grid: int, n_starts: int = 4):
    """Minimize ``fn`` over unit vectors: Fibonacci grid, then Nelder-Mead polish."""
    from .lpsolve import fibonacci_grid

    grid = fibonacci_grid(n_grid).vectors
    vals = np.array([fn(v) for v in grid])
    best_t, best = grid[np.argmin(vals)], float(vals.min())
    for i in np.argsort(vals)[:n_starts]:
        res = minimize(lambda v: fn(_unit(v)), grid[i], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 2000})
        if res.fun < best:
            best_t, best = _unit(res.x), float(res.fun)
    return best_t, best


def witness_scan(rho, j=None, kind: str = "second-moment", n_grid: int = 500,
                 method: str = "auto") -> WitnessReport:
    """Worst witness value over all directions ``t``.

    The second-moment witness is a quadratic form in ``t`` for every ``j`` (for
    spin-1 it is exactly ``Z``), so with ``method="auto"`` its minimum is an
    eigenvalue problem.  ``method="grid"`` (and always for the third-moment
    witness) searches a Fibonacci grid and polishes with Nelder-Mead.
    """
    rho = check_hermitian(rho)
    j = (rho.shape[0] - 1) / 2 if j is None else j
    if kind == "second-moment":
        if method == "auto":
            evals, evecs = np.linalg.eigh(_second_moment_form(rho, j))
            return WitnessReport(evecs[:, 0], float(evals[0]), kind)
        t, _ = _scan_sphere(lambda v: witness_second_moment(rho, v, j).value, n_grid)
        return witness_second_moment(rho, t, j)
    if kind == "third-moment":
        t, _ = _scan_sphere(lambda v: witness_third_moment_spin32(rho, v).value, n_grid)
        return witness_third_moment_spin32(rho, t)
    raise ValueError(f"unknown witness kind {kind!r}")
