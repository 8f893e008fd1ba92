"""Long-tailed semantic segmentation toolkit.

Class-frequency statistics with image- and pixel-level Gini coefficients,
greedy long-tailed subset sampling, the frequent/common/rare dual-metric
evaluation protocol, and frequency-based one-to-many query matching with
its inference-time mask composition.
"""

__version__ = "0.1.0"

from .dataset import (
    DatasetIndex,
    ImageRecord,
    LabelMap,
    load_index_cache,
    load_label_map,
    load_manifest,
    save_label_map,
    subset,
    write_manifest,
)
from .errors import DataError, LtsegError, UndefinedMetricError, UnreachableTargetError
from .evaluation import ConfusionMatrix, EvalReport, build_confusion, evaluate, miou
from .matching import (
    NO_OBJECT,
    AssignmentResult,
    MatchProblem,
    QueryOutput,
    compose_all,
    compose_semantic,
    expand_targets,
    hungarian,
    match_frequency_based,
    match_one_to_one,
    query_count,
    semantic_argmax,
)
from .sampler import SamplerConfig, SamplerReport, derive_target_distribution, sample_lt
from .stats import (
    ClassStats,
    FrequencySplit,
    compute_stats,
    gini,
    image_level_weights,
    pixel_level_weights,
    split_classes,
)
from .synth import SyntheticProfile, generate_synthetic, synthesize_index

__all__ = [
    "AssignmentResult",
    "ClassStats",
    "ConfusionMatrix",
    "DataError",
    "DatasetIndex",
    "EvalReport",
    "FrequencySplit",
    "ImageRecord",
    "LabelMap",
    "LtsegError",
    "MatchProblem",
    "NO_OBJECT",
    "QueryOutput",
    "SamplerConfig",
    "SamplerReport",
    "SyntheticProfile",
    "UndefinedMetricError",
    "UnreachableTargetError",
    "build_confusion",
    "compose_all",
    "compose_semantic",
    "compute_stats",
    "derive_target_distribution",
    "evaluate",
    "expand_targets",
    "generate_synthetic",
    "gini",
    "hungarian",
    "image_level_weights",
    "load_index_cache",
    "load_label_map",
    "load_manifest",
    "match_frequency_based",
    "match_one_to_one",
    "miou",
    "pixel_level_weights",
    "query_count",
    "sample_lt",
    "save_label_map",
    "semantic_argmax",
    "split_classes",
    "subset",
    "synthesize_index",
    "write_manifest",
]
