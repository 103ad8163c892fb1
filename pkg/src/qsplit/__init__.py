"""Numerics for alternative system/environment splits of closed quantum systems.

The package provides a dense linear-algebra substrate on finite composite
Hilbert spaces, structural transformations (particle regroupings and global
unitary re-factorizations), projection superoperators with their commutation
and reduction residuals, correlation measures, truncated-oscillator Brownian
motion models with exact and master-equation propagators, and a config-driven
experiment CLI.
"""

from .hilbert import (
    CompositeSpace,
    StateVector,
    DensityMatrix,
    HermitianOperator,
    tensor,
    partial_trace,
    gibbs_state,
    schmidt_decompose,
    trace_distance,
    trace_norm,
)
from .structures import (
    Bipartition,
    Regrouping,
    UnitaryRefactorization,
    RefactorCoefficients,
    regroup,
    apply_structure_map,
    refactor_coefficients,
)
from .projections import (
    BornProjection,
    CorrelatedProjection,
    EnvironmentPinningProjection,
    LemmaResidualReport,
    apply_projection,
    project,
    irrelevant_part,
    lemma1_residual,
    lemma2_residual,
    appendix_a_pure_condition,
    appendix_a_mixed_condition,
    SeparableDecomposition,
)
from .correlations import (
    CorrelationReport,
    entanglement_entropy,
    mutual_information,
    discord_two_qubit,
    von_neumann_entropy,
)
from .dynamics import (
    QbmModel,
    MasterEqParams,
    Trajectory,
    position_momentum_ops,
    build_hamiltonians,
    initial_state,
    evolve_exact,
    integrate_caldeira_leggett,
    integrate_recoilless,
    projection_derivative_compare,
    calibrate_friction,
    ResourceLimitError,
    IntegrationFailureError,
)
from . import sampling

__version__ = "0.1.0"
