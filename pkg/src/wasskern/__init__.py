"""Wasserstein exponential kernels for shape classification.

Images become probability measures on a pixel grid; entropic-regularized
transport distances between them feed squared exponential kernel matrices,
whose truncated spectra define positive semi-definite feature maps; LS-SVM
and kNN classifiers run on top, with a CLI orchestrating experiments.
"""

from .classify import (
    KnnModel,
    LssvmDualModel,
    LssvmPrimalModel,
    Method,
    OvoEnsemble,
    OvoParams,
    CrossData,
    TrainingData,
    knn_predict_rows,
    predict_binary,
    predict_ovo,
    train_dual,
    train_ovo,
    train_primal,
)
from .data import LabeledImageSet, SplitPlan, balanced_subsample, load_csv, load_idx, synthetic_shapes
from .errors import DataError, NumericalError, UsageError, WasskernError
from .kernels import GramMatrix, KernelKind, KernelSpec, cross_gram, gram, gram_from_distances, kernel_value
from .measure import (
    DiscreteMeasure,
    GrayImage,
    GroundCost,
    PixelGrid,
    build_ground_cost,
    image_to_measure,
)
from .spectral import (
    EigenSystem,
    FeatureMap,
    eigendecompose,
    features_of,
    find_sigma_psd,
    lambda_min_scan,
    truncate,
)
from .transport import (
    ObjectiveKind,
    PairwiseReport,
    SinkhornConfig,
    TransportPlan,
    exact_lp_distance,
    pairwise_distances,
    sinkhorn_distance,
)

__version__ = "0.1.0"
