"""Scale- and shift-invariant depth losses, mixing and evaluation tools."""

from .align import AffineAlignment, RobustStats, apply_alignment, lsq_align, robust_normalize, robust_stats
from .errors import (
    ConfigError,
    DegenerateAlignmentError,
    DegenerateRangeError,
    DegenerateScaleError,
    DimensionError,
    DomainError,
    EmptyMaskError,
    InsufficientDataError,
    NumericalError,
    ParseError,
    SsiError,
)
from .grids import ScalarGrid, ValidityMask, finite_diff, masked_reduce, subsample
from .losses import (
    GradMatchConfig,
    LossResult,
    TotalLossConfig,
    TrimConfig,
    gradient_matching,
    nmg,
    ordinal,
    silog,
    ssimae,
    ssimse,
    ssitrim,
    total_loss,
)
from .mo_opt import SimplexWeights, TaskGradient, combine, min_norm_2, min_norm_fw
from .sampler import DatasetHandle, MixPlan, MixSampler, epoch_progress, next_batch

__version__ = "0.1.0"
