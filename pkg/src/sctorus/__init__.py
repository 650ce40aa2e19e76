"""Self-consistent transfer-operator laboratory for coupled hyperbolic torus maps."""

from .anosov import ConeReport, ConeSpec, MapSpec, certify_cones, default_cat_map
from .coupling import (
    AssumptionReport,
    CoupledMap,
    CouplingSpec,
    apply_phi,
    certify_assumptions,
    coupling_field,
    example_convolution_coupling,
    example_separable_coupling,
    invert_phi,
    meanzero_separable_coupling,
    zero_coupling,
)
from .errors import (
    ConeViolationError,
    ConfigError,
    CouplingAdmissibilityError,
    NoConvergenceError,
)
from .meanfield import (
    ConvergenceReport,
    SelfConsistentConfig,
    SweepReport,
    bk_diagnostic,
    lipschitz_sweep,
    memory_loss_experiment,
    sc_step,
    smooth_init_family,
    solve_fixed_point,
    uniqueness_experiment,
)
from .particles import (
    Ensemble,
    GapReport,
    empirical_observable,
    histogram_ensemble,
    meanfield_gap,
    sample_from_density,
    step_ensemble,
)
from .torus import (
    Observable,
    TorusDensity,
    integrate,
    l1_distance,
    proxy_strong_norm,
    torus_distance,
)
from .transfer import (
    CoupledOperatorPlan,
    UlamOperator,
    apply_coupled,
    build_ulam,
    push_density,
    push_sequential,
)
from .trig import TrigField2, TrigPolynomial

__version__ = "0.1.0"
