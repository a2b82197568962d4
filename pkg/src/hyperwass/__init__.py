"""Transport costs between point configurations and their mean measures.

Simulate point processes on cubes, measure window-count moment envelopes,
compute exact and certified-bounded Wasserstein costs, and run replicated
scaling studies (linear for rigid configurations, N polylog N for i.i.d.).
"""

from .certificates import (
    DualValue,
    LowerBoundCert,
    NRunAggregate,
    SandwichReport,
    corollary_sandwich,
    dual_value,
    lower_bound,
    surface_unit_ball,
)
from .config import ExperimentConfig, load_config
from .errors import (
    CeilingError,
    ConfigError,
    DegenerateGridError,
    HyperwassError,
    IngestError,
    MassMismatchError,
    NumericError,
    OutOfDomainError,
)
from .geometry import (
    EUCLIDEAN,
    TORUS,
    Cube,
    DyadicGrid,
    build_dyadic_grid,
    cube_for_count,
    distance,
    distance_matrix,
)
from .moments import (
    MomentCurve,
    MomentEnvelope,
    VarianceClassification,
    bernstein_moment_bound,
    bernstein_tail,
    classify_hyperuniformity,
    estimate_moment_curve,
    fit_envelope,
    gamma_p,
)
from .multiscale import (
    InterpolationLadder,
    ScaleCostReport,
    TheoremEnvelope,
    analytic_scale_costs,
    build_ladder,
    constructive_upper_bound,
    good_event_diagnostics,
    theorem_bound,
)
from .processes import (
    MeanDensity,
    PointSet,
    ProcessSpec,
    ingest_points,
    mean_count,
    mean_density_for,
    read_points,
    restrict,
    sample,
    uniform_mean,
    write_points,
)
from .transport import (
    DiscreteMeasure,
    SandwichEstimate,
    TransportPlan,
    exact_wp,
    holder_lift,
    measure_from_points,
    oracle_wp,
    quantize_density,
    rescale_pushforward,
    semidiscrete_wp,
)

__all__ = [name for name in dir() if not name.startswith("_")]
