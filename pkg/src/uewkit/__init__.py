"""uewkit: separability curves and ultrafine entanglement witnesses.

Certifies quantum entanglement from a single fixed few-outcome measurement
device per party: the measured constraint expectation restricts the candidate
separable states, the test-operator bound is re-optimized over that slice
(the separability curve), and any measured point strictly above the curve
certifies entanglement.  Independent brute-force and partial-transpose
oracles cross-validate every bound.
"""

from ._optimize import OptimizerSettings
from .multipartite import (
    MultiBound,
    Partition,
    classify,
    closed_form_bound,
    multi_operators,
    numeric_partition_bound,
    optimal_separable_multi,
)
from .povm import (
    AdmissibilityReport,
    Effect,
    Povm,
    ThreeOutcomeParams,
    ThreeOutcomePovm,
    build_three_outcome,
    chi_vectors,
    povm_from_dict,
    povm_to_dict,
    product_operator,
    uew_admissibility_check,
)
from .qcore import (
    CapacityError,
    DensityMatrix,
    HermitianOperator,
    Operator,
    ProductState,
    PureState,
    commutator_norm,
    expectation,
    identity,
    is_ppt,
    min_eigenvalue,
    partial_transpose,
    pure_density,
    tensor,
)
from .sampler import (
    CountsTable,
    EstimateResult,
    brute_force_constrained_sup,
    estimate,
    load_counts,
    ppt_oracle,
    sample_product_state,
    save_counts,
    scatter,
    simulate_counts,
    stream,
    weighted_estimate,
)
from .witness import (
    BoundResult,
    ConstraintSpec,
    CurvePoint,
    SeparabilityCurve,
    TestOperator,
    TightenResult,
    Verdict,
    WitnessOperator,
    attainable_constraint_range,
    branch_bounds,
    constrained_bound,
    constrained_pure_state_sup,
    curve_from_csv,
    curve_to_csv,
    detect,
    entangled_max,
    optimal_entangled_state,
    semianalytic_pair_bound,
    separability_curve,
    sew_bound,
    tighten,
    witness_from_bound,
)

__version__ = "0.1.0"
