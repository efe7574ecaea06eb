"""Two-spin systems: product coherent states, partial transpose, bipartite LP.

Basis ordering is A-major: index ``i_A * (2 j_B + 1) + i_B``.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import spin1_is_prep
from .angular import (
    angles,
    coherent_ket,
    dim,
    kq_labels,
    multipole_operator,
    real_basis_matrix,
    real_multipole_operator,
    real_spherical_harmonics,
    twice,
    unit_vectors,
)
from .density import (
    ScaledFamily,
    check_hermitian,
    matrix_norm,
    maximally_mixed,
    p_scale,
    positivity_kappa,
)
from .lpsolve import (
    BoundaryResult,
    ColumnLP,
    _stack,
    least_squares_weights,
    merge_clusters,
    maximize_on_sphere,
    nested_grids,
    projectors_with_derivatives,
    run_boundary_lp,
)

log = logging.getLogger(__name__)

SCAN_CSV_VERSION = 1
SCAN_COLUMNS = ("ray", "angle", "kappa_positivity", "kappa_ppt", "kappa_prep",
                "kappa_prep_upper", "grid_n", "support", "residual", "converged")
DEFAULT_PRODUCT_SCHEDULE = ((50, 60), (100, 120), (200, 240))


def _dims(jA, jB) -> tuple[int, int]:
    return dim(jA), dim(jB)


def kron(rho_a, rho_b) -> np.ndarray:
    return np.kron(np.asarray(rho_a, dtype=complex), np.asarray(rho_b, dtype=complex))


def product_coherent(jA, alpha_a, jB, alpha_b) -> np.ndarray:
    return np.kron(coherent_ket(jA, alpha_a), coherent_ket(jB, alpha_b))


def partial_transpose(rho, dims, subsystem: str = "A") -> np.ndarray:
    """``rho^{T_A}_{ij,kl} = rho_{kj,il}`` (or ``rho_{il,kj}`` for ``B``)."""
    da, db = dims
    r = np.asarray(rho).reshape(da, db, da, db)
    if subsystem == "A":
        r = r.transpose(2, 1, 0, 3)
    elif subsystem == "B":
        r = r.transpose(0, 3, 2, 1)
    else:
        raise ValueError("subsystem must be 'A' or 'B'")
    return r.reshape(da * db, da * db)


def partial_trace(rho, dims, keep: str = "B") -> np.ndarray:
    da, db = dims
    r = np.asarray(rho).reshape(da, db, da, db)
    if keep == "B":
        return np.einsum("ajak->jk", r)
    if keep == "A":
        return np.einsum("ijkj->ik", r)
    raise ValueError("keep must be 'A' or 'B'")


def ppt_check(rho, dims, tol: float = 1e-12) -> tuple[float, bool]:
    lam = float(np.linalg.eigvalsh(partial_transpose(rho, dims))[0])
    return lam, lam >= -tol


def ppt_kappa(family: ScaledFamily) -> float:
    """Largest ``kappa`` with ``(rho0 + kappa rho_hat)^{T_A}`` positive semidefinite.

    ``rho0`` is invariant under partial transposition, so the crossing is
    ``1 / (d |lambda_min(rho_hat^{T_A})|)``.
    """
    lam = float(np.linalg.eigvalsh(partial_transpose(family.rho_hat, family.dims))[0])
    return float("inf") if lam >= 0 else 1.0 / (family.d * -lam)


@dataclass(frozen=True)
class BipartiteMultipole:
    """``rho_{KA QA, KB QB} = tr(rho (T^A_{KA QA} (x) T^B_{KB QB})^dagger)``.

    ``values[a, b]`` with ``a``/``b`` flat ``(K, Q)`` indices of each factor.
    """

    jA: float
    jB: float
    values: np.ndarray


def bipartite_multipole(rho, jA, jB) -> BipartiteMultipole:
    rho = np.asarray(rho, dtype=complex)
    da, db = _dims(jA, jB)
    if rho.shape != (da * db, da * db):
        raise ValueError(f"matrix shape {rho.shape} does not match spins ({jA}, {jB})")
    ta = [multipole_operator(jA, K, Q) for K, Q in kq_labels(da - 1)]
    tb = [multipole_operator(jB, K, Q) for K, Q in kq_labels(db - 1)]
    r = rho.reshape(da, db, da, db)
    # tr(rho (Ta (x) Tb)^dagger) = sum conj(Ta[i,k]) conj(Tb[j,l]) rho[i,j,k,l]
    vals = np.einsum("aik,bjl,ijkl->ab", np.conj(ta), np.conj(tb), r)
    return BipartiteMultipole(float(jA), float(jB), vals)


def from_bipartite_multipole(coeffs: BipartiteMultipole) -> np.ndarray:
    da, db = _dims(coeffs.jA, coeffs.jB)
    ta = np.array([multipole_operator(coeffs.jA, K, Q) for K, Q in kq_labels(da - 1)])
    tb = np.array([multipole_operator(coeffs.jB, K, Q) for K, Q in kq_labels(db - 1)])
    r = np.einsum("ab,aik,bjl->ijkl", coeffs.values, ta, tb)
    return r.reshape(da * db, da * db)


def _scales(j) -> np.ndarray:
    return np.array([p_scale(j, K) for K, _ in kq_labels(twice(j))])


def bipartite_p_coeffs(coeffs: BipartiteMultipole) -> np.ndarray:
    """Complex ``P_{KA QA, KB QB}``: divide by ``c_KA c_KB`` (joint factor ``4 pi``)."""
    return coeffs.values / np.outer(_scales(coeffs.jA), _scales(coeffs.jB))


def bipartite_rho_coeffs(p, jA, jB) -> BipartiteMultipole:
    return BipartiteMultipole(float(jA), float(jB), p * np.outer(_scales(jA), _scales(jB)))


def _real_map(j) -> np.ndarray:
    tj = twice(j)
    out = np.zeros(((tj + 1) ** 2,) * 2, dtype=complex)
    for k in range(tj + 1):
        sl = slice(k * k, (k + 1) ** 2)
        out[sl, sl] = real_basis_matrix(k).conj()
    return out


def bipartite_real_p_coeffs(x, jA, jB) -> np.ndarray:
    """Real product-harmonic P coefficients of a Hermitian ``x``, shape ``(dA^2, dB^2)``."""
    p = bipartite_p_coeffs(bipartite_multipole(x, jA, jB))
    return (_real_map(jA) @ p @ _real_map(jB).T).real


def bipartite_real_p_coeffs_direct(x, jA, jB) -> np.ndarray:
    """Same as :func:`bipartite_real_p_coeffs` via Hermitian real multipoles."""
    x = np.asarray(x, dtype=complex)
    la, lb = kq_labels(twice(jA)), kq_labels(twice(jB))
    out = np.empty((len(la), len(lb)))
    for a, (ka, qa) in enumerate(la):
        ra = real_multipole_operator(jA, ka, qa)
        for b, (kb, qb) in enumerate(lb):
            op = np.kron(ra, real_multipole_operator(jB, kb, qb))
            out[a, b] = np.vdot(op, x).real / (p_scale(jA, ka) * p_scale(jB, kb))
    return out


def product_columns(jA, jB, theta_a, phi_a, theta_b, phi_b) -> np.ndarray:
    """Products ``S^A_{KA QA}(a_A) S^B_{KB QB}(a_B)`` without the ``(0,0;0,0)`` row."""
    sa = real_spherical_harmonics(twice(jA), theta_a, phi_a)
    sb = real_spherical_harmonics(twice(jB), theta_b, phi_b)
    cols = np.einsum("ap,bp->abp", sa, sb)
    return cols.reshape(sa.shape[0] * sb.shape[0], -1)[1:]


@dataclass
class ProductMixture:
    """Non-negative weights on pairs of sphere points ``(a_A, a_B)``."""

    weights: np.ndarray
    theta_a: np.ndarray
    phi_a: np.ndarray
    theta_b: np.ndarray
    phi_b: np.ndarray

    def __len__(self):
        return len(self.weights)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist()
                for k in ("weights", "theta_a", "phi_a", "theta_b", "phi_b")}


def rho_from_product_mixture(mix: ProductMixture, jA, jB) -> np.ndarray:
    rho = 0
    for w, ta, pa, tb, pb in zip(mix.weights, mix.theta_a, mix.phi_a, mix.theta_b, mix.phi_b):
        ket = product_coherent(jA, (ta, pa), jB, (tb, pb))
        rho = rho + w * np.outer(ket, ket.conj())
    return rho


def _make_product_mixture(w, pts):
    pts = np.array(pts, dtype=float).reshape(-1, 4)
    return ProductMixture(w, pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3])


def _product_levels(jA, jB, schedule, mirror):
    """Yield new columns for nested product grids, old columns first."""
    ga = nested_grids([s[0] for s in schedule], mirror)
    gb = nested_grids([s[1] for s in schedule], mirror)
    na = nb = 0
    for a, b in zip(ga, gb):
        pairs = [(i, k) for i in range(len(a)) for k in range(len(b)) if i >= na or k >= nb]
        ia = np.array([p[0] for p in pairs], dtype=int)
        ib = np.array([p[1] for p in pairs], dtype=int)
        cols = product_columns(jA, jB, a.theta[ia], a.phi[ia], b.theta[ib], b.phi[ib])
        pts = list(zip(a.theta[ia], a.phi[ia], b.theta[ib], b.phi[ib]))
        na, nb = len(a), len(b)
        yield cols, pts


def _product_pricing(jA, jB, n_grid=2500):
    def pricing(y):
        def f(v):
            tha, pha = angles(v[:, 0, :])
            thb, phb = angles(v[:, 1, :])
            return y @ product_columns(jA, jB, tha, pha, thb, phb)

        out = []
        for val, v in maximize_on_sphere(f, n_grid=n_grid, dims=2):
            tha, pha = angles(v[0])
            thb, phb = angles(v[1])
            col = product_columns(jA, jB, tha, pha, thb, phb)[:, 0]
            out.append((val, col, (tha[0], pha[0], thb[0], phb[0])))
        return out

    return pricing


def bipartite_boundary_kappa(family: ScaledFamily, schedule=DEFAULT_PRODUCT_SCHEDULE,
                             tol: float = 1e-4, polish: int = 0,
                             mirror: bool = False) -> BoundaryResult:
    """Nested product-grid LP for ``kappa_e`` of a two-spin family.

    ``schedule`` lists ``(n_A, n_B)`` Fibonacci sizes per level.  The result's
    mixture is a :class:`ProductMixture` for the boundary state.
    """
    if len(family.dims) != 2:
        raise ValueError("bipartite_boundary_kappa needs a two-spin family")
    jA, jB = (family.dims[0] - 1) / 2, (family.dims[1] - 1) / 2
    b = bipartite_real_p_coeffs(family.rho_hat, jA, jB).ravel()[1:]
    return run_boundary_lp(b, _product_levels(jA, jB, schedule, mirror), _make_product_mixture,
                           _product_pricing(jA, jB), tol, polish, family.norm)


def polish_product_mixture(rho, mix: ProductMixture, jA, jB,
                           max_nfev: int = 5000) -> ProductMixture:
    """Least-squares refinement of a product mixture; see :func:`polish_mixture`."""
    rho = np.asarray(rho, dtype=complex)
    k = len(mix)
    target = _stack(rho)[0]

    def unpack(x):
        return (x[i * k:(i + 1) * k] for i in range(5))

    def parts(x):
        s, ta, pa, tb, pb = unpack(x)
        return s, projectors_with_derivatives(jA, ta, pa), projectors_with_derivatives(jB, tb, pb)

    def residual(x):
        s, (pa, _, _), (pb, _, _) = parts(x)
        return _stack(np.einsum("n,nij,nkl->ikjl", s * s, pa, pb).reshape(rho.shape))[0] - target

    def jacobian(x):
        s, (pa, da_t, da_p), (pb, db_t, db_p) = parts(x)
        w = s * s

        def kr(a, b, scale):
            out = np.einsum("n,nij,nkl->nikjl", scale, a, b)
            return _stack(out.reshape(k, *rho.shape))

        blocks = [kr(pa, pb, 2 * s), kr(da_t, pb, w), kr(da_p, pb, w),
                  kr(pa, db_t, w), kr(pa, db_p, w)]
        return np.vstack(blocks).T

    x0 = np.r_[np.sqrt(mix.weights), mix.theta_a, mix.phi_a, mix.theta_b, mix.phi_b]
    s, ta, pa, tb, pb = unpack(least_squares_weights(residual, jacobian, x0, max_nfev))
    keep = s * s > 0
    return ProductMixture((s * s)[keep], ta[keep], pa[keep], tb[keep], pb[keep])


@dataclass
class BipartiteDecision:
    prep: bool
    mixture: ProductMixture | None
    lp_residual: float
    reconstruction_error: float
    n_columns: int
    polished: bool = False

    def to_dict(self) -> dict:
        return {
            "prep": self.prep,
            "lp_residual": self.lp_residual,
            "reconstruction_error": self.reconstruction_error,
            "n_columns": self.n_columns,
            "polished": self.polished,
            "certificate": None if self.mixture is None else self.mixture.to_dict(),
        }


def clustered_product_starts(mix: ProductMixture, limit: int) -> list[ProductMixture]:
    """Product analogue of :func:`spinprep.lpsolve.clustered_starts`."""
    out = []
    for w, (va, vb) in merge_clusters(mix.weights, list(product_points(mix)), limit):
        tha, pha = angles(va)
        thb, phb = angles(vb)
        out.append(ProductMixture(w, tha, pha, thb, phb))
    return out


def bipartite_decide_prep(rho, dims, schedule=((60, 72),), refine: int = 5,
                          tol: float = 1e-9, polish_rounds: int = 12) -> BipartiteDecision:
    """Decide-mode product-grid LP (elastic form), column generation, then polish.

    The polish starts from the LP support and, if that stalls, from up to
    ``polish_rounds`` merged versions of it.

    ``prep`` is ``True`` iff the separable certificate reconstructs ``rho`` to
    ``tol`` (max-abs entry error).
    """
    rho = check_hermitian(rho)
    jA, jB = (dims[0] - 1) / 2, (dims[1] - 1) / 2
    b = bipartite_real_p_coeffs(rho, jA, jB).ravel()
    # the (0,0;0,0) row fixes the trace: S_00^A S_00^B = 1/(4 pi)
    col = ColumnLP(np.r_[b[1:], np.trace(rho).real], elastic=True)

    def with_norm(cols):
        return np.vstack([cols, np.ones(cols.shape[1])])

    for cols, pts in _product_levels(jA, jB, schedule, False):
        col.add(with_norm(cols), pts)
    sol = col.solve()
    pricing = _product_pricing(jA, jB, n_grid=1600)
    for _ in range(refine):
        if sol.objective <= tol:
            break
        y = sol.duals
        found = [(c[1], c[2]) for c in pricing(np.r_[y[:-1]])
                 if y[:-1] @ c[1] + y[-1] > 1e-12]
        if not found:
            break
        col.add(with_norm(np.column_stack([f[0] for f in found])), [f[1] for f in found])
        sol = col.solve()
    w = col.weights
    keep = np.flatnonzero(w > 0)
    if keep.size == 0:
        return BipartiteDecision(False, None, float(sol.objective), float("nan"), col.n_points)
    mixture = _make_product_mixture(w[keep], [col.points[i] for i in keep])
    err = float(np.abs(rho_from_product_mixture(mixture, jA, jB) - rho).max())
    polished = False
    if err > tol:
        polished = True
        tried = []
        for start in [mixture] + clustered_product_starts(mixture, polish_rounds):
            cand = polish_product_mixture(rho, start, jA, jB, max_nfev=300 * (len(start) + 5))
            cand_err = float(np.abs(rho_from_product_mixture(cand, jA, jB) - rho).max())
            tried.append((cand_err, len(tried), cand))
            if cand_err < err:
                mixture, err = cand, cand_err
            if err <= tol:
                break
        for _, _, cand in sorted(tried, key=lambda t: t[:2])[:3] if err > tol else []:
            cand = polish_product_mixture(rho, cand, jA, jB)
            cand_err = float(np.abs(rho_from_product_mixture(cand, jA, jB) - rho).max())
            if cand_err < err:
                mixture, err = cand, cand_err
            if err <= tol:
                break
    prep = err <= tol
    return BipartiteDecision(prep, mixture if prep else None, float(sol.objective), err,
                             col.n_points, polished)


@dataclass
class PartialTraceWitness:
    rho_b: np.ndarray
    prep_b: bool | None
    lambda_min_z: float | None

    @property
    def rejects(self) -> bool:
        """``True`` when the conditional state certifies that ``rho`` is not P-rep."""
        return self.prep_b is False


def partial_trace_witness(rho, dims, v_a=None) -> PartialTraceWitness:
    """Conditional state ``Tr_A(rho V_A) / tr(rho V_A)`` and, for ``j_B = 1``, its verdict."""
    rho = check_hermitian(rho)
    da, db = dims
    v_a = np.eye(da) if v_a is None else check_hermitian(v_a)
    if np.linalg.eigvalsh(v_a)[0] < -1e-12:
        raise ValueError("V_A must be positive semidefinite")
    weighted = rho @ np.kron(v_a, np.eye(db))
    norm = np.trace(weighted).real
    if norm <= 1e-12:
        raise ValueError("tr(rho V_A) vanishes: the conditional state is undefined")
    rho_b = partial_trace(weighted, dims, keep="B") / norm
    rho_b = (rho_b + rho_b.conj().T) / 2
    if db == 3:
        ok, lam = spin1_is_prep(rho_b)
        return PartialTraceWitness(rho_b, ok, lam)
    return PartialTraceWitness(rho_b, None, None)


@dataclass
class ScanResult:
    dims: tuple[int, int]
    angles: np.ndarray
    kappa_positivity: np.ndarray
    kappa_ppt: np.ndarray
    kappa_prep: np.ndarray
    kappa_prep_upper: np.ndarray
    grid_n: np.ndarray
    support: np.ndarray
    residual: np.ndarray
    converged: np.ndarray
    norm: str = "trace"
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i in range(len(self.angles)):
            yield (i, self.angles[i], self.kappa_positivity[i], self.kappa_ppt[i],
                   self.kappa_prep[i], self.kappa_prep_upper[i], int(self.grid_n[i]),
                   int(self.support[i]), self.residual[i], int(self.converged[i]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# spinprep scan2d csv v{SCAN_CSV_VERSION} dims={self.dims[0]}x{self.dims[1]}"
                  f" norm={self.norm}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for row in self.rows():
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        return buf.getvalue()

    def curves(self) -> dict:
        """Polar boundary curves as ``(kappa_1, kappa_2)`` points per boundary type."""
        c, s = np.cos(self.angles), np.sin(self.angles)
        return {name: np.column_stack([r * c, r * s]) for name, r in (
            ("positivity", self.kappa_positivity), ("ppt", self.kappa_ppt),
            ("prep", self.kappa_prep))}


def _ray(args):
    direction, dims, schedule, polish, tol, norm = args
    fam = ScaledFamily.from_direction(direction, dims, norm)
    res = bipartite_boundary_kappa(fam, schedule=schedule, tol=tol, polish=polish)
    s = fam.scale
    return (positivity_kappa(fam) / s, ppt_kappa(fam) / s, res.kappa_e / s,
            res.kappa_upper / s, res.grid_sizes[-1], res.support_size, res.residual,
            res.converged)


def scan2d(rho_hat_1, rho_hat_2, dims, rays: int = 64, schedule=DEFAULT_PRODUCT_SCHEDULE,
           polish: int = 0, workers: int = 1, tol: float = 1e-4,
           norm: str = "trace") -> ScanResult:
    """Boundaries along rays ``rho0 + r (cos a rho_hat_1 + sin a rho_hat_2)``.

    The reported kappas are radii ``r`` in the ``(kappa_1, kappa_2)`` plane, so
    they do not depend on ``norm``, which only sets the per-ray stopping scale.
    Rays are independent; with ``workers > 1`` they run in separate processes
    and are merged by ray index.
    """
    dims = tuple(int(d) for d in dims)
    d = dims[0] * dims[1]
    x1 = check_hermitian(rho_hat_1)
    x2 = check_hermitian(rho_hat_2)
    x1 = x1 - np.trace(x1) / d * np.eye(d)
    x2 = x2 - np.trace(x2) / d * np.eye(d)
    gram = np.array([[np.vdot(a, b).real for b in (x1, x2)] for a in (x1, x2)])
    if np.linalg.eigvalsh(gram)[0] <= 1e-12 * np.trace(gram):
        raise ValueError("scan plane is degenerate: directions are linearly dependent")
    ang = 2 * np.pi * np.arange(rays) / rays
    tasks = [(np.cos(a) * x1 + np.sin(a) * x2, dims, schedule, polish, tol, norm) for a in ang]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_ray, tasks))
    else:
        out = [_ray(t) for t in tasks]
    cols = list(zip(*out))
    return ScanResult(dims, ang, *(np.array(c) for c in cols), norm=norm,
                      meta={"schedule": [list(s) for s in schedule], "polish": polish,
                            "tol": tol})


def werner_state(p: float) -> np.ndarray:
    """``p |psi-><psi-| + (1 - p) 1/4`` for two qubits."""
    psi = np.array([0, 1, -1, 0]) / np.sqrt(2)
    return p * np.outer(psi, psi).astype(complex) + (1 - p) * maximally_mixed(4)


def trace_norm(x) -> float:
    return matrix_norm(x, "trace")


def product_points(mix: ProductMixture) -> tuple[np.ndarray, np.ndarray]:
    return unit_vectors(mix.theta_a, mix.phi_a), unit_vectors(mix.theta_b, mix.phi_b)
