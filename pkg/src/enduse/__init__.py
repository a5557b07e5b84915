"""Water end-use toolkit: signature extraction, synthetic demand generation,
and non-intrusive classification of single and overlapping events."""

__version__ = "0.1.0"

from .classifier import (
    ClassifierConfig,
    ClassifierModel,
    Prediction,
    classify_all,
    classify_single,
    detect_cycle_windows,
    is_single_varying,
    split_edge_subevent,
    split_interior_subevents,
    variation_vector,
)
from .clustering import (
    CalibrationConfig,
    Signature,
    SignatureLibrary,
    extract_signatures,
    k_medoids,
    medoid_signature,
    select_k,
    silhouette,
    smooth_signature,
)
from .defaults import build_default_library, build_default_model
from .dtw import SimilarityMatrix, dtw_distance, dtw_path, similarity_matrix
from .errors import (
    EndUseError,
    InputFormatError,
    InvalidInput,
    MissingFixtureData,
    ModelStateError,
    VolumeInfeasible,
)
from .evaluation import ClassificationReport, evaluate, match_events, prf1, score
from .features import FeatureStats, learn_bounds, robust_interval
from .generator import (
    FixturePriors,
    GeneratedDataset,
    UsageModel,
    generate,
    sample_daily_counts,
    sample_event_params,
    scale_signature,
)
from .timeseries import (
    EventFeatures,
    EventRecord,
    FlowSeries,
    NormalizationStats,
    compute_features,
    extract_events,
    read_trace_csv,
    write_trace_csv,
    z_normalize,
)
