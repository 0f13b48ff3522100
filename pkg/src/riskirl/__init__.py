"""Risk-sensitive IRL with coherent risk envelopes.

Library layout:
    envelopes         simplex polytopes, CRM evaluation, semi-parametric CRMs
    lp                dense simplex solver with duals and degeneracy flags
    static_inference  KKT halfspace pruning, product-variable extension
    planning          static minimax and exact/soft Bellman recursions
    likelihood        semi-parametric maximum likelihood and gradients
    lq, driving       synthetic ground-truth simulators
    bench, plots      experiment harness with CSV/JSON/PNG reports
    cli               command-line driver
"""

from .costs import ControlBounds, CostOracle, FeatureCostModel
from .envelopes import (
    DiscreteCost,
    Pmf,
    RiskEnvelope,
    SemiParametricCrm,
    cvar_envelope,
    enumerate_vertices,
    evaluate_crm,
    hausdorff,
    intersect_halfspace,
    project_offsets,
)
from .errors import (
    DegenerateLpError,
    DimensionMismatchError,
    EmptyEnvelopeError,
    InconsistentDemonstrationError,
    InconsistentDemonstrationWarning,
    LpFaultError,
    PlannerError,
    RiskIrlError,
)
from .likelihood import (
    FeatureTree,
    FitHyperparams,
    TrajectorySegment,
    cluster_actions,
    fit,
    likelihood_gradient,
    log_likelihood,
    nearest_action,
)
from .planning import (
    ActionLibrary,
    GameHistory,
    ScenarioConfig,
    boltzmann,
    exact_bellman,
    soft_bellman,
    softmin,
    solve_product_forward,
    solve_static_forward,
)
from .static_inference import (
    Demonstration,
    ProductPolytope,
    kkt_halfspace,
    kkt_halfspace_product,
    prune_envelope,
    prune_product,
    recover_weights_and_envelope,
    saturation_sets,
)

__version__ = "0.1.0"
