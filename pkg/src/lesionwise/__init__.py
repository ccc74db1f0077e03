"""Instance-aware segmentation losses and lesion-wise evaluation for 3D masks."""

__version__ = "0.1.0"

from .components import ComponentLabeling, component_mask, label_components
from .dataset_stats import CorpusStats, corpus_stats
from .io import VolumeFormatError, read_mask, read_volume, write_nifti, write_volume
from .losses import (
    LOGIT_CLAMP,
    DegeneratePolicy,
    EmptyGtMode,
    LossKind,
    LossValue,
    LossWeights,
    blob_instance_loss,
    blob_instance_terms,
    cc_instance_loss,
    cc_instance_terms,
    combined_loss,
    cross_entropy_loss,
    dicece_loss,
    gradient_map,
    normalize_gradient,
    soft_dice_loss,
)
from .metrics import (
    AggregateStat,
    CaseMetrics,
    MatchResult,
    QuartileRecall,
    aggregate,
    case_metrics,
    cc_dice,
    hard_dice,
    match_instances,
    quartile_recall,
)
from .phantoms import (
    ComponentSpec,
    PhantomSpec,
    build_phantom,
    figure1_scenario,
    figure2_scenario,
    random_instances_spec,
)
from .volumes import (
    BinaryMask,
    LogitVolume,
    ProbVolume,
    Shape,
    ShapeMismatchError,
    Spacing,
    binarize,
    sigmoid,
)
from .voronoi import (
    EmptyGroundTruthError,
    VoronoiPartition,
    voronoi_partition,
    voronoi_partition_bruteforce,
)

__all__ = [
    "__version__",
    "BinaryMask",
    "LogitVolume",
    "ProbVolume",
    "Shape",
    "ShapeMismatchError",
    "Spacing",
    "binarize",
    "sigmoid",
    "VolumeFormatError",
    "read_mask",
    "read_volume",
    "write_nifti",
    "write_volume",
    "ComponentLabeling",
    "component_mask",
    "label_components",
    "EmptyGroundTruthError",
    "VoronoiPartition",
    "voronoi_partition",
    "voronoi_partition_bruteforce",
    "LOGIT_CLAMP",
    "DegeneratePolicy",
    "EmptyGtMode",
    "LossKind",
    "LossValue",
    "LossWeights",
    "soft_dice_loss",
    "cross_entropy_loss",
    "dicece_loss",
    "cc_instance_loss",
    "cc_instance_terms",
    "blob_instance_loss",
    "blob_instance_terms",
    "combined_loss",
    "gradient_map",
    "normalize_gradient",
    "AggregateStat",
    "CaseMetrics",
    "MatchResult",
    "QuartileRecall",
    "aggregate",
    "case_metrics",
    "cc_dice",
    "hard_dice",
    "match_instances",
    "quartile_recall",
    "CorpusStats",
    "corpus_stats",
    "ComponentSpec",
    "PhantomSpec",
    "build_phantom",
    "figure1_scenario",
    "figure2_scenario",
    "random_instances_spec",
]
