"""Spin-algebra primitives.

Angular-momentum matrices, coherent states, Clebsch-Gordan coefficients,
irreducible tensor (multipole) operators and spherical harmonics.

Conventions: the basis is ``|j m>`` with ``m`` descending from ``j`` (index 0)
to ``-j``; Condon-Shortley phases are used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, lgamma, pi, sqrt

import numpy as np


def twice(j) -> int:
    """Return ``2j`` as an int, checking that ``j`` is a non-negative half-integer."""
    tj = 2 * Fraction(j).limit_denominator(1000)
    if tj.denominator != 1 or tj < 0 or abs(float(tj) - 2 * float(j)) > 1e-9:
        raise ValueError(f"spin label must be a non-negative half-integer, got {j!r}")
    return int(tj)


def dim(j) -> int:
    """Hilbert-space dimension ``2j + 1``."""
    return twice(j) + 1


def m_values(j) -> np.ndarray:
    """Magnetic quantum numbers in basis order (``j, j-1, ..., -j``)."""
    tj = twice(j)
    return (tj - 2 * np.arange(tj + 1)) / 2.0


@dataclass(frozen=True)
class Direction:
    """A point on the unit sphere given by polar angle ``theta`` and azimuth ``phi``."""

    theta: float
    phi: float

    def __post_init__(self):
        theta = float(self.theta) % (2 * pi)
        phi = float(self.phi)
        if theta > pi:
            theta = 2 * pi - theta
            phi += pi
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi % (2 * pi))

    @classmethod
    def from_vector(cls, n) -> "Direction":
        x, y, z = np.asarray(n, dtype=float) / np.linalg.norm(n)
        return cls(float(np.arccos(np.clip(z, -1.0, 1.0))), float(np.arctan2(y, x)))

    @property
    def vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])


def unit_vectors(theta, phi) -> np.ndarray:
    """Stack of unit vectors, shape ``(n, 3)``, for arrays of angles."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def angles(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`unit_vectors` (vectors need not be normalized)."""
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    theta = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    phi = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * pi)
    return theta, phi


@lru_cache(maxsize=None)
def _spin_ops(tj: int):
    m = (tj - 2 * np.arange(tj + 1)) / 2.0
    j = tj / 2.0
    jz = np.diag(m).astype(complex)
    # <m+1| J+ |m> sits one row above the diagonal in descending order
    jp = np.diag(np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1)), k=1).astype(complex)
    jm = jp.conj().T
    jx = (jp + jm) / 2
    jy = (jp - jm) / 2j
    for op in (jx, jy, jz):
        op.setflags(write=False)
    return jx, jy, jz


def angular_momentum_ops(j) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(Jx, Jy, Jz)`` for spin ``j`` (read-only arrays)."""
    return _spin_ops(twice(j))


def coherent_kets(j, theta, phi) -> np.ndarray:
    """Coherent-state amplitudes for arrays of angles, shape ``(n, 2j+1)``.

    The amplitude on ``|j m>`` is
    ``sqrt(binom(2j, j+m)) sin(theta/2)^(j-m) cos(theta/2)^(j+m) exp(-i (j+m) phi)``.
    """
    tj = twice(j)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    k = tj - np.arange(tj + 1)  # j + m
    binom = np.sqrt([comb(tj, int(kk)) for kk in k])
    s = np.sin(theta / 2)[:, None]
    c = np.cos(theta / 2)[:, None]
    amp = binom * s ** (tj - k) * c**k
    return amp * np.exp(-1j * k * phi[:, None])


def coherent_ket(j, alpha) -> np.ndarray:
    """Coherent state ``|theta phi>``; ``alpha`` is a :class:`Direction` or ``(theta, phi)``."""
    theta, phi = (alpha.theta, alpha.phi) if isinstance(alpha, Direction) else alpha
    return coherent_kets(j, theta, phi)[0]


def coherent_projector(j, alpha) -> np.ndarray:
    ket = coherent_ket(j, alpha)
    return np.outer(ket, ket.conj())


def sphere_quadrature(order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre in ``cos(theta)`` times a uniform trapezoid rule in ``phi``.

    Returns ``(theta, phi, weights)`` flattened; the weights integrate ``d alpha``
    and sum to ``4 pi``.
    """
    x, wx = np.polynomial.legendre.leggauss(order)
    phi = 2 * pi * np.arange(order) / order
    theta = np.arccos(x)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    ww = np.outer(wx, np.full(order, 2 * pi / order))
    return tt.ravel(), pp.ravel(), ww.ravel()


def identity_resolution_check(j, order: int | None = None) -> float:
    """Frobenius norm of ``(2j+1)/(4 pi) \\int |a><a| da - 1`` under quadrature."""
    d = dim(j)
    if order is None:
        order = 2 * twice(j) + 4
    theta, phi, w = sphere_quadrature(order)
    kets = coherent_kets(j, theta, phi)
    integral = np.einsum("n,ni,nj->ij", w, kets, kets.conj())
    return float(np.linalg.norm(d / (4 * pi) * integral - np.eye(d)))


def _check_pair(j, m):
    tj, tm = twice(j), 2 * Fraction(m).limit_denominator(1000)
    if tm.denominator != 1 or abs(tm) > tj or (tj - int(tm)) % 2:
        raise ValueError(f"invalid magnetic label m={m!r} for j={j!r}")
    return tj, int(tm)


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """Clebsch-Gordan coefficient ``<j1 m1; j2 m2 | J M>`` (Condon-Shortley).

    Evaluated with the Racah single-sum formula, accumulating factorials as
    logarithms.
    """
    a1, b1 = _check_pair(j1, m1)
    a2, b2 = _check_pair(j2, m2)
    A, B = _check_pair(J, M)
    if B != b1 + b2 or not (abs(a1 - a2) <= A <= a1 + a2) or (a1 + a2 + A) % 2:
        return 0.0
    # integer arguments, all halved from the doubled labels
    j1p, j2p, Jp = (a1 + a2 - A) // 2, (A + a1 - a2) // 2, (A - a1 + a2) // 2
    lf = lambda n: lgamma(n + 1)  # noqa: E731
    pref = 0.5 * (
        np.log(A + 1) + lf(Jp) + lf(j2p) + lf(j1p) - lf((a1 + a2 + A) // 2 + 1)
        + lf((A + B) // 2) + lf((A - B) // 2)
        + lf((a1 - b1) // 2) + lf((a1 + b1) // 2)
        + lf((a2 - b2) // 2) + lf((a2 + b2) // 2)
    )
    total = 0.0
    for k in range(0, j1p + 1):
        args = (
            k,
            j1p - k,
            (a1 - b1) // 2 - k,
            (a2 + b2) // 2 - k,
            (A - a2 + b1) // 2 + k,
            (A - a1 - b2) // 2 + k,
        )
        if min(args) < 0:
            continue
        term = np.exp(pref - sum(lf(x) for x in args))
        total += -term if k % 2 else term
    return float(total)


@lru_cache(maxsize=None)
def _multipole(tj: int, K: int, Q: int) -> np.ndarray:
    j = Fraction(tj, 2)
    d = tj + 1
    t = np.zeros((d, d), dtype=complex)
    for a in range(d):
        m1 = j - a
        for b in range(d):
            m2 = j - b
            if m1 - m2 != Q:
                continue
            sign = -1 if int(j - m2) % 2 else 1
            t[a, b] = sign * clebsch_gordan(j, m1, j, -m2, K, Q)
    t.setflags(write=False)
    return t


def multipole_operator(j, K: int, Q: int) -> np.ndarray:
    """Irreducible tensor operator ``T_KQ = sum (-1)^(j-m2) <j m1; j -m2|K Q> |j m1><j m2|``.

    Orthonormal under ``tr(A^dagger B)`` and ``T_KQ^dagger = (-1)^Q T_K,-Q``.
    """
    tj = twice(j)
    if not (0 <= K <= tj) or abs(Q) > K:
        raise ValueError(f"multipole index out of range: K={K}, Q={Q}, 2j={tj}")
    return _multipole(tj, int(K), int(Q))


def kq_index(K: int, Q: int) -> int:
    """Flat index of ``(K, Q)`` in the ordering ``(0,0), (1,-1), (1,0), (1,1), (2,-2), ...``."""
    return K * K + K + Q


def kq_labels(kmax: int) -> list[tuple[int, int]]:
    return [(K, Q) for K in range(kmax + 1) for Q in range(-K, K + 1)]


def spherical_harmonics(kmax: int, theta, phi) -> np.ndarray:
    """Complex ``Y_KQ`` for all ``K <= kmax``, shape ``((kmax+1)**2, n)``.

    Normalized associated Legendre functions are built with the standard
    three-term recurrence in ``K`` at fixed ``Q``; rows follow :func:`kq_index`.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    x, s = np.cos(theta), np.sin(theta)
    # plm[K, Q] = N_KQ P_K^Q(x) including the Condon-Shortley phase, Q >= 0
    plm = np.zeros((kmax + 1, kmax + 1, theta.size))
    plm[0, 0] = 1.0 / sqrt(4 * pi)
    for q in range(1, kmax + 1):
        plm[q, q] = -sqrt((2 * q + 1) / (2.0 * q)) * s * plm[q - 1, q - 1]
    for q in range(0, kmax):
        plm[q + 1, q] = sqrt(2 * q + 3) * x * plm[q, q]
        for k in range(q + 2, kmax + 1):
            a = sqrt((4 * k * k - 1) / (k * k - q * q))
            b = sqrt(((k - 1) ** 2 - q * q) / (4 * (k - 1) ** 2 - 1))
            plm[k, q] = a * (x * plm[k - 1, q] - b * plm[k - 2, q])
    out = np.empty(((kmax + 1) ** 2, theta.size), dtype=complex)
    for k in range(kmax + 1):
        for q in range(0, k + 1):
            y = plm[k, q] * np.exp(1j * q * phi)
            out[kq_index(k, q)] = y
            if q:
                out[kq_index(k, -q)] = (-1) ** q * y.conj()
    return out


def spherical_harmonic(K: int, Q: int, alpha) -> complex:
    if abs(Q) > K:
        raise ValueError(f"|Q| > K for (K, Q) = ({K}, {Q})")
    theta, phi = (alpha.theta, alpha.phi) if isinstance(alpha, Direction) else alpha
    return complex(spherical_harmonics(K, theta, phi)[kq_index(K, Q), 0])


@lru_cache(maxsize=None)
def real_basis_matrix(K: int) -> np.ndarray:
    """Unitary ``U`` (rows/cols ``Q = -K..K``) with real harmonics ``S = U Y``.

    ``S_K0 = Y_K0``, ``S_KQ = sqrt2 (-1)^Q Re Y_KQ`` and
    ``S_K,-Q = sqrt2 (-1)^Q Im Y_KQ`` for ``Q > 0``.
    """
    u = np.zeros((2 * K + 1, 2 * K + 1), dtype=complex)
    u[K, K] = 1.0
    r = 1 / sqrt(2)
    for q in range(1, K + 1):
        sg = (-1) ** q
        # Y_{K,-q} = (-1)^q conj(Y_Kq)
        u[K + q, K + q] = sg * r
        u[K + q, K - q] = r
        u[K - q, K + q] = sg * r / 1j
        u[K - q, K - q] = -r / 1j
    u.setflags(write=False)
    return u


def real_spherical_harmonics(kmax: int, theta, phi) -> np.ndarray:
    """Real harmonics ``S_KQ`` for all ``K <= kmax``, shape ``((kmax+1)**2, n)``."""
    y = spherical_harmonics(kmax, theta, phi)
    out = np.empty(y.shape)
    for k in range(kmax + 1):
        sl = slice(k * k, (k + 1) ** 2)
        out[sl] = (real_basis_matrix(k) @ y[sl]).real
    return out


def real_spherical_harmonic(K: int, Q: int, alpha) -> float:
    if abs(Q) > K:
        raise ValueError(f"|Q| > K for (K, Q) = ({K}, {Q})")
    theta, phi = (alpha.theta, alpha.phi) if isinstance(alpha, Direction) else alpha
    return float(real_spherical_harmonics(K, theta, phi)[kq_index(K, Q), 0])


@lru_cache(maxsize=None)
def _real_multipole(tj: int, K: int, Q: int) -> np.ndarray:
    u = real_basis_matrix(K)
    r = sum(u[K + Q, K + q] * _multipole(tj, K, q) for q in range(-K, K + 1))
    r = (r + r.conj().T) / 2
    r.setflags(write=False)
    return r


def real_multipole_operator(j, K: int, Q: int) -> np.ndarray:
    """Hermitian multipole operator whose coherent-state symbol is ``c_K S_KQ``.

    Same unitary recombination of ``T_KQ`` as the one taking ``Y_KQ`` to ``S_KQ``.
    """
    tj = twice(j)
    if not (0 <= K <= tj) or abs(Q) > K:
        raise ValueError(f"multipole index out of range: K={K}, Q={Q}, 2j={tj}")
    return _real_multipole(tj, int(K), int(Q))
