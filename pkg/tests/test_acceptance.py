"""Acceptance suite: one test per criterion, each with its runtime budget.

Every test records a PASS/FAIL line that the summary prints after the run.
"""

import time

import numpy as np
import pytest

from spinprep.analytic import (
    NotPRepresentableError,
    spin1_decompose,
    spin1_is_prep,
    spin1_kappa_e,
    witness_scan,
    witness_second_moment,
)
from spinprep.angular import coherent_projector, identity_resolution_check, kq_labels, multipole_operator
from spinprep.bipartite import (
    bipartite_boundary_kappa,
    partial_trace_witness,
    ppt_kappa,
    scan2d,
)
from spinprep.density import (
    DeltaMixture,
    ScaledFamily,
    evaluate_truncated_p,
    from_multipole,
    p_coeffs,
    p_coeffs_from_rho,
    positivity_kappa,
    rho_coeffs_from_p,
    rho_from_mixture,
    to_multipole,
)
from spinprep.lpsolve import boundary_kappa, concavity_check, fibonacci_grid

SPINS = (0.5, 1, 1.5, 2)


def random_state(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_direction(d, rng):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    x = x + x.conj().T
    return x - np.trace(x) / d * np.eye(d)


def random_mixture(n, rng):
    w = rng.random(n)
    return DeltaMixture(w / w.sum(), np.arccos(rng.uniform(-1, 1, n)), rng.uniform(0, 2 * np.pi, n))


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def check(acceptance, number, ok, detail, clock, limit):
    ok = bool(ok) and clock.elapsed < limit
    acceptance(number, ok, f"{detail}; {clock.elapsed:.2f} s (budget {limit:g} s)")
    assert ok, detail


def test_identity_resolution(acceptance):
    with Clock() as clock:
        res = {j: identity_resolution_check(j) for j in SPINS}
    worst = max(res.values())
    check(acceptance, 1, worst < 1e-10, f"identity resolution max residual {worst:.1e}", clock, 1)


def test_multipole_roundtrips(acceptance):
    rng = np.random.default_rng(2)
    worst = 0.0
    with Clock() as clock:
        for j in SPINS:
            d = int(2 * j + 1)
            ops = np.array([multipole_operator(j, K, Q) for K, Q in kq_labels(d - 1)])
            gram = np.einsum("aij,bij->ab", ops.conj(), ops)
            worst = max(worst, np.abs(gram - np.eye(d * d)).max())
            for _ in range(100):
                rho = random_state(d, rng)
                c = to_multipole(rho, j)
                worst = max(worst, np.abs(from_multipole(c) - rho).max())
                back = rho_coeffs_from_p(p_coeffs_from_rho(c))
                worst = max(worst, np.abs(back.values - c.values).max())
    check(acceptance, 2, worst < 1e-12, f"orthonormality and roundtrip max residual {worst:.1e}",
          clock, 5)


def test_spin1_criterion_matches_decomposition(acceptance):
    rng = np.random.default_rng(3)
    disagreements, n_prep, worst = 0, 0, 0.0
    with Clock() as clock:
        for _ in range(1000):
            # uniform radius inside the positivity range covers both outcomes
            fam = ScaledFamily.from_direction(random_direction(3, rng), 3)
            rho = fam.rho0 + rng.uniform(0, positivity_kappa(fam)) * fam.rho_hat
            ok, _ = spin1_is_prep(rho)
            try:
                mix = spin1_decompose(rho)
                err = np.abs(rho_from_mixture(mix, 1) - rho).max()
                decomposed = err < 1e-10
                worst = max(worst, err)
            except NotPRepresentableError:
                decomposed = False
            disagreements += ok != decomposed
            n_prep += ok
    check(acceptance, 3, disagreements == 0,
          f"{disagreements} disagreements over 1000 states ({n_prep} P-rep), "
          f"max residual {worst:.1e}", clock, 10)


def test_spin1_boundary_matches_analytic(acceptance):
    rng = np.random.default_rng(4)
    worst, largest = 0.0, 0
    with Clock() as clock:
        for _ in range(100):
            # schedule 250, 500, 1000, 2000; refinement stops once 1/kappa settles
            fam = ScaledFamily.from_direction(random_direction(3, rng), 3)
            res = boundary_kappa(fam)
            largest = max(largest, res.grid_sizes[-1])
            worst = max(worst, abs(res.kappa_e / spin1_kappa_e(fam) - 1))
        m0 = ScaledFamily.from_direction(np.diag([0, 1.0, 0]), 3)
        fixture = boundary_kappa(m0).kappa_e
    ok = worst < 0.01 and abs(fixture * 3 - 1) < 0.01
    check(acceptance, 4, ok, f"max relative error {worst:.1e}; |1,0> direction {fixture:.5f}; "
          f"largest grid {largest} points",
          clock, 300)


def test_spin_half_boundary_is_positivity(acceptance):
    rng = np.random.default_rng(5)
    worst = 0.0
    with Clock() as clock:
        for _ in range(50):
            fam = ScaledFamily.from_direction(random_direction(2, rng), 2)
            worst = max(worst, abs(boundary_kappa(fam).kappa_e / positivity_kappa(fam) - 1))
    check(acceptance, 5, worst < 0.01, f"max relative error {worst:.1e}", clock, 60)


def test_two_qubit_boundary_is_min_of_positivity_and_ppt(acceptance):
    rng = np.random.default_rng(6)
    worst, support = 0.0, 0
    singlet = np.array([0, 1, -1, 0]) / np.sqrt(2)
    with Clock() as clock:
        for _ in range(50):
            fam = ScaledFamily.from_direction(random_direction(4, rng), (2, 2))
            res = bipartite_boundary_kappa(fam, polish=10)
            ref = min(positivity_kappa(fam), ppt_kappa(fam))
            worst = max(worst, abs(res.kappa_e / ref - 1))
            support = max(support, res.support_size)
        fam = ScaledFamily.from_direction(np.outer(singlet, singlet), (2, 2))
        res = bipartite_boundary_kappa(fam, polish=10)
        fixture = res.kappa_e
        support = max(support, res.support_size)
    ok = worst < 0.02 and abs(fixture * 2 - 1) < 0.02 and support <= 15
    check(acceptance, 6, ok, f"max relative error {worst:.1e}; singlet {fixture:.5f}; "
          f"max support {support}", clock, 900)


def test_spin_half_spin_one_gap(acceptance):
    rng = np.random.default_rng(7)
    x1, x2 = random_direction(6, rng), random_direction(6, rng)
    up_zero = np.kron(np.diag([1.0, 0]), np.diag([0, 1.0, 0]))
    with Clock() as clock:
        res = scan2d(x1, x2, (2, 3), rays=64, polish=10, tol=1e-3)
        rejected = partial_trace_witness(up_zero, (2, 3)).rejects
    below = np.all(res.kappa_prep <= res.kappa_ppt * (1 + 1e-9))
    below_pos = np.all(res.kappa_prep <= res.kappa_positivity * (1 + 1e-9))
    gap = float(np.max(1 - res.kappa_prep / res.kappa_ppt))
    ok = below and below_pos and gap > 0.05 and rejected
    check(acceptance, 7, ok, f"prep <= ppt on all rays: {below}; largest relative gap {gap:.1%}; "
          f"fixture rejected: {rejected}", clock, 1800)


def test_second_moment_witness_necessity(acceptance):
    rng = np.random.default_rng(8)
    lowest, worst_eq, worst_oracle, smallest_strict = np.inf, 0.0, 0.0, np.inf
    with Clock() as clock:
        for i in range(10_000):
            j = SPINS[i % 4]
            mix = random_mixture(int(rng.integers(1, 7)), rng)
            rho = rho_from_mixture(mix, j)
            lowest = min(lowest, witness_scan(rho, j).value)
            own = mix.vectors[0]
            value = witness_second_moment(rho, own, j).value
            # for a mixture the witness equals (2j-1) j^2 Var(t.n)
            proj = mix.vectors @ own
            var = mix.weights @ proj**2 - (mix.weights @ proj) ** 2
            worst_oracle = max(worst_oracle, abs(value - (2 * j - 1) * j**2 * var))
            if len(mix) == 1 or j == 0.5:
                worst_eq = max(worst_eq, abs(value))
            else:
                smallest_strict = min(smallest_strict, value / var)
    ok = lowest >= -1e-12 and worst_eq < 1e-10 and worst_oracle < 1e-10 and smallest_strict > 0
    check(acceptance, 8, ok, f"min witness {lowest:.1e}; max |value| at equality {worst_eq:.1e}; "
          f"oracle deviation {worst_oracle:.1e}", clock, 120)


def test_concavity_of_inverse_kappa(acceptance):
    rng = np.random.default_rng(9)
    lowest = np.inf
    with Clock() as clock:
        for _ in range(100):
            f1 = ScaledFamily.from_direction(random_direction(3, rng), 3)
            f2 = ScaledFamily.from_direction(random_direction(3, rng), 3)
            lowest = min(lowest, concavity_check(f1, f2, c=0.5, method="analytic"))
    check(acceptance, 9, lowest >= -1e-4, f"min slack {lowest:.1e}", clock, 60)


def test_truncated_delta_is_negative(acceptance):
    rng = np.random.default_rng(10)
    highest = -np.inf
    with Clock() as clock:
        grid = fibonacci_grid(1000)
        for _ in range(20):
            alpha = (np.arccos(rng.uniform(-1, 1)), rng.uniform(0, 2 * np.pi))
            p = p_coeffs(coherent_projector(1, alpha), 1)
            highest = max(highest, evaluate_truncated_p(p, grid.theta, grid.phi).min())
    check(acceptance, 10, highest < -1e-3,
          f"largest grid minimum over 20 coherent states {highest:.3f}", clock, 1)
