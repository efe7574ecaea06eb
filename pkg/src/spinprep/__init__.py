"""Classicality (non-negative P-representability) of spin states.

A spin-j state is classical when it is a convex mixture of angular-momentum
coherent states.  The package decides membership, locates the boundary of
the classical set along rays from the maximally mixed state, and does the
same for two-spin systems with product coherent states.
"""

__version__ = "0.1.0"

from .analytic import (  # noqa: E402
    NotPRepresentableError,
    WitnessReport,
    qubit_decompose,
    spin1_decompose,
    spin1_is_prep,
    spin1_kappa_e,
    witness_scan,
    witness_second_moment,
    witness_third_moment_spin32,
)
from .angular import (  # noqa: E402
    Direction,
    clebsch_gordan,
    coherent_ket,
    coherent_projector,
    identity_resolution_check,
    multipole_operator,
    spherical_harmonic,
)
from .bipartite import (  # noqa: E402
    bipartite_boundary_kappa,
    bipartite_decide_prep,
    partial_trace,
    partial_trace_witness,
    partial_transpose,
    ppt_check,
    ppt_kappa,
    scan2d,
)
from .density import (  # noqa: E402
    DeltaMixture,
    NotAStateError,
    ScaledFamily,
    evaluate_truncated_p,
    p_coeffs,
    positivity_kappa,
    psd_check,
    rho_from_mixture,
    scaled_state,
    to_multipole,
)
from .lpsolve import (  # noqa: E402
    boundary_kappa,
    build_constraints,
    concavity_check,
    decide_prep,
    fibonacci_grid,
)
from .simplex import LPStandardForm, simplex_solve  # noqa: E402
