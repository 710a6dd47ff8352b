"""WiFi RSS fingerprint indoor localization.

The matching stack weighs APs by how sharply their RSS pins down a position,
regulates outlier readings with least-median-of-squares regression, rebuilds
candidate fingerprints around stale scan entries (phantom fingerprints) and
penalizes matches with few common APs. A synthetic radio environment and an
evaluation harness round out the package.
"""

from .discrimination import (
    DiscriminationProfile,
    PropagationParams,
    ldpl_rss,
    pairwise_weight,
    profile,
    raw_factor,
)
from .evaluation import (
    ErrorSummary,
    ablation_suite,
    confusion_matrix,
    decimate_map,
    density_sweep,
    evaluate,
    nearest_rank,
    prepare_queries,
    run_queries,
)
from .io import (
    load_environment,
    load_matcher_config,
    load_queries,
    load_radio_map,
    save_queries,
    save_radio_map,
)
from .matching import (
    CandidateScores,
    LocationEstimate,
    MatchScore,
    MatcherConfig,
    NoCommonApError,
    PipelineToggles,
    Query,
    basic_localize,
    dorfin_localize,
    horus_localize,
    localize,
    phi,
    radar_localize,
    score_candidates,
    weighted_h,
)
from .model import (
    RSS_CEIL,
    RSS_FLOOR,
    Fingerprint,
    Location,
    RadioMap,
    Reading,
    RsdVector,
    euclidean_dissimilarity,
    location_error,
    moving_average,
    union_rsd,
)
from .phantom import (
    MotionEstimate,
    MotionStep,
    OutdatedReport,
    PhantomConfig,
    PhantomFingerprint,
    SuspiciousArea,
    assemble_phantom,
    detect_outdated,
    drop_stale,
    integrate_motion,
    select_bl,
    suspicious_area,
)
from .robust import (
    AdjustedQuery,
    LmsConfig,
    LmsFit,
    RegressionData,
    adjust_query,
    adjusted_rsd,
    build_regression,
    lms_fit,
)
from .simulate import (
    ApPlacement,
    Environment,
    ScanModel,
    TrajectorySpec,
    grid_locations,
    scan,
    survey,
    true_rss,
    walk,
)

__version__ = "0.1.0"
