"""Learning under mixed closed-set/open-set label noise.

Synthetic benchmarks with known ground truth, anchor-based estimation of the
(c+1) x c extended transition matrix (optionally one per feature cluster),
and statistically consistent classifier training by importance reweighting.
"""

from .errors import (
    AnchorShortageError,
    ConfigurationError,
    DependencyError,
    DivergenceError,
    MixnoiseError,
    ResourceError,
    ShapeError,
)
from .synthdata import (
    Dataset,
    MixtureSpec,
    NoiseSpec,
    RegionSpec,
    generate_mixture,
    generate_reservoir,
    inject_mixed_noise,
    inject_region_noise,
    true_extended_matrix,
    true_region_matrices,
)
from .netcore import ClassifierParams, TrainConfig, ce_loss, forward, grad_check, train_warmup
from .clusterkit import (
    AnchorSet,
    ClusterModel,
    assign_classes,
    detect_closed_anchors,
    detect_meta_anchors,
    identify_meta_cluster,
    kmeans,
)
from .transition import (
    AnchorConfig,
    ExtendedTransitionMatrix,
    TransitionBundle,
    estimate_cluster_dependent,
    estimate_extended,
    estimate_row,
    l1_error,
    noisy_posterior,
    revise,
)
from .robusttrain import RobustConfig, forward_loss, predict, reweighted_loss, train_robust
from .evalstats import TrialReport, accuracy, aggregate, ttest_independent

__version__ = "0.1.0"
