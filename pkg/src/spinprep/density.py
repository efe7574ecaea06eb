"""Density matrices, multipole coefficients and discrete P-functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import exp, lgamma, pi, sqrt

import numpy as np

from .angular import (
    Direction,
    angles,
    coherent_kets,
    dim,
    kq_index,
    kq_labels,
    multipole_operator,
    real_basis_matrix,
    real_multipole_operator,
    spherical_harmonics,
    twice,
    unit_vectors,
)

HERMITIAN_TOL = 1e-12


class NotAStateError(ValueError):
    """Input is not a valid (Hermitian, unit-trace) density matrix."""


def check_hermitian(rho, tol: float = 1e-10) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise NotAStateError(f"expected a square matrix, got shape {rho.shape}")
    if np.abs(rho - rho.conj().T).max(initial=0.0) > tol:
        raise NotAStateError("matrix is not Hermitian")
    return rho


def check_state(rho, tol: float = 1e-10) -> np.ndarray:
    """Validate Hermiticity and unit trace; positivity is *not* required."""
    rho = check_hermitian(rho, tol)
    if abs(np.trace(rho) - 1) > tol:
        raise NotAStateError(f"trace is {np.trace(rho).real:.6g}, expected 1")
    return rho


def maximally_mixed(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex) / d


def p_scale(j, K: int) -> float:
    """Factor ``c_K`` in ``rho_KQ = c_K P_KQ``.

    ``c_K = sqrt(4 pi) (2j)! / sqrt((2j-K)! (2j+K+1)!)``, defined for ``K <= 2j``.
    """
    tj = twice(j)
    if not 0 <= K <= tj:
        raise ValueError(f"K={K} outside 0..{tj}: coefficients with K > 2j do not map to rho")
    return sqrt(4 * pi) * exp(lgamma(tj + 1) - 0.5 * (lgamma(tj - K + 1) + lgamma(tj + K + 2)))


@dataclass(frozen=True)
class MultipoleCoeffs:
    """``rho_KQ = tr(rho T_KQ^dagger)`` stored flat in :func:`kq_index` order."""

    j: float
    values: np.ndarray

    def __getitem__(self, kq):
        return self.values[kq_index(*kq)]


@dataclass(frozen=True)
class PCoeffs:
    """Spherical-harmonic coefficients ``P_KQ`` of a P-function, ``K <= 2j`` only."""

    j: float
    values: np.ndarray

    def __getitem__(self, kq):
        return self.values[kq_index(*kq)]

    def real(self) -> np.ndarray:
        """Coefficients in the real harmonic basis, ``p_r = conj(U) P`` per ``K``."""
        tj = twice(self.j)
        out = np.empty((tj + 1) ** 2)
        for k in range(tj + 1):
            sl = slice(k * k, (k + 1) ** 2)
            out[sl] = (real_basis_matrix(k).conj() @ self.values[sl]).real
        return out


def to_multipole(rho, j) -> MultipoleCoeffs:
    rho = np.asarray(rho, dtype=complex)
    d = dim(j)
    if rho.shape != (d, d):
        raise ValueError(f"matrix shape {rho.shape} does not match spin {j} (dimension {d})")
    vals = np.array(
        [np.vdot(multipole_operator(j, K, Q), rho) for K, Q in kq_labels(d - 1)]
    )
    return MultipoleCoeffs(float(j), vals)


def from_multipole(coeffs: MultipoleCoeffs) -> np.ndarray:
    d = dim(coeffs.j)
    rho = np.zeros((d, d), dtype=complex)
    for (K, Q), v in zip(kq_labels(d - 1), coeffs.values):
        rho += v * multipole_operator(coeffs.j, K, Q)
    return rho


def _check_len(j, values):
    if len(values) != dim(j) ** 2:
        raise ValueError(
            f"expected {dim(j) ** 2} coefficients (K <= 2j) for spin {j}, got {len(values)}"
        )


def p_coeffs_from_rho(coeffs: MultipoleCoeffs) -> PCoeffs:
    _check_len(coeffs.j, coeffs.values)
    scale = np.array([p_scale(coeffs.j, K) for K, _ in kq_labels(twice(coeffs.j))])
    return PCoeffs(coeffs.j, coeffs.values / scale)


def rho_coeffs_from_p(p: PCoeffs) -> MultipoleCoeffs:
    _check_len(p.j, p.values)
    scale = np.array([p_scale(p.j, K) for K, _ in kq_labels(twice(p.j))])
    return MultipoleCoeffs(p.j, p.values * scale)


def p_coeffs(rho, j) -> PCoeffs:
    """Shortcut ``rho -> P_KQ`` (minimal, ``K <= 2j``)."""
    return p_coeffs_from_rho(to_multipole(rho, j))


def real_p_coeffs(x, j) -> np.ndarray:
    """Real-basis P coefficients computed directly from Hermitian-operator traces.

    Independent of :meth:`PCoeffs.real`: ``p_r[KQ] = tr(x R_KQ) / c_K``.
    """
    x = np.asarray(x, dtype=complex)
    return np.array(
        [np.vdot(real_multipole_operator(j, K, Q), x).real / p_scale(j, K)
         for K, Q in kq_labels(twice(j))]
    )


@dataclass
class DeltaMixture:
    """Finite non-negative P-function: weights at points on the sphere."""

    weights: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        self.phi = np.atleast_1d(np.asarray(self.phi, dtype=float))
        if not (self.weights.shape == self.theta.shape == self.phi.shape):
            raise ValueError("weights, theta and phi must have equal length")

    @classmethod
    def from_vectors(cls, weights, vectors) -> "DeltaMixture":
        theta, phi = angles(vectors)
        return cls(weights, theta, phi)

    @property
    def vectors(self) -> np.ndarray:
        return unit_vectors(self.theta, self.phi)

    @property
    def directions(self) -> list[Direction]:
        return [Direction(t, p) for t, p in zip(self.theta, self.phi)]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __len__(self):
        return len(self.weights)

    def pruned(self, tol: float = 0.0) -> "DeltaMixture":
        keep = self.weights > tol
        return DeltaMixture(self.weights[keep], self.theta[keep], self.phi[keep])

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "theta": self.theta.tolist(),
            "phi": self.phi.tolist(),
        }


def rho_from_mixture(mix: DeltaMixture, j) -> np.ndarray:
    """``sum_i w_i |a_i><a_i|``."""
    if np.any(mix.weights < 0):
        raise ValueError("mixture weights must be non-negative")
    kets = coherent_kets(j, mix.theta, mix.phi)
    return np.einsum("n,ni,nj->ij", mix.weights, kets, kets.conj())


def evaluate_truncated_p(p: PCoeffs, theta, phi) -> np.ndarray:
    """Value of ``sum_{K<=2j} P_KQ Y_KQ`` at the given angles (real part)."""
    y = spherical_harmonics(twice(p.j), theta, phi)
    return (p.values @ y).real


@dataclass(frozen=True)
class ScaledFamily:
    """Ray ``rho0 + kappa * rho_hat`` through the maximally mixed state.

    ``dims`` holds the factor dimensions (one entry for a single spin, two for
    a bipartite system).  ``norm`` records how ``rho_hat`` was normalized:
    ``"trace"`` (sum of singular values) or ``"hs"`` (Hilbert-Schmidt).
    """

    rho_hat: np.ndarray
    dims: tuple[int, ...]
    norm: str = "trace"
    scale: float = field(default=1.0, compare=False)

    @classmethod
    def from_direction(cls, x, dims, norm: str = "trace") -> "ScaledFamily":
        """Project ``x`` onto traceless Hermitian matrices and normalize it.

        Passing a state ``rho`` gives the ray from ``rho0`` towards ``rho``;
        ``scale`` keeps the norm that was divided out.
        """
        dims = (dims,) if np.isscalar(dims) else tuple(int(d) for d in dims)
        x = check_hermitian(x)
        d = int(np.prod(dims))
        if x.shape != (d, d):
            raise ValueError(f"matrix shape {x.shape} does not match dimensions {dims}")
        x = x - np.trace(x) / d * np.eye(d)
        nrm = matrix_norm(x, norm)
        if nrm == 0:
            return cls(np.zeros((d, d), dtype=complex), dims, norm, 0.0)
        return cls(x / nrm, dims, norm, nrm)

    @property
    def d(self) -> int:
        return int(np.prod(self.dims))

    @property
    def rho0(self) -> np.ndarray:
        return maximally_mixed(self.d)


def matrix_norm(x, norm: str = "trace") -> float:
    if norm == "trace":
        return float(np.linalg.svd(x, compute_uv=False).sum())
    if norm == "hs":
        return float(np.linalg.norm(x))
    raise ValueError(f"unknown norm {norm!r}; use 'trace' or 'hs'")


def scaled_state(family: ScaledFamily, kappa: float) -> np.ndarray:
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    return family.rho0 + kappa * family.rho_hat


def psd_check(rho, tol: float = 1e-12) -> tuple[float, bool]:
    """Smallest eigenvalue and whether it is ``>= -tol``."""
    rho = check_hermitian(rho)
    lam = float(np.linalg.eigvalsh(rho)[0])
    return lam, lam >= -tol


def positivity_kappa(family: ScaledFamily) -> float:
    """Largest ``kappa`` keeping ``rho0 + kappa rho_hat`` positive semidefinite.

    ``lambda_min`` is affine in ``kappa`` along the ray, so the crossing is
    ``1 / (d |lambda_min(rho_hat)|)``; ``inf`` if ``rho_hat`` has no negative
    eigenvalue.
    """
    lam = float(np.linalg.eigvalsh(family.rho_hat)[0])
    if lam >= 0:
        return float("inf")
    return 1.0 / (family.d * -lam)
