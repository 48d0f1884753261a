"""Streaming class-incremental classifier engine.

Raw foundation-model features are lifted through a frozen random cosine
feature map approximating the RBF kernel; per-class means and one shared
covariance matrix are accumulated incrementally; linear discriminants are
solved from those statistics on demand. Includes nearest-class-mean and
plain-LDA baselines, a softmax-averaged ensemble, a task-stream evaluation
harness, and binary formats for features, projectors, statistics, and
models.
"""
from .backends import active_backend
from .batch import FeatureBatch, split_by_class
from .classify import (
    DiscriminantModel,
    EnsembleModel,
    NcmModel,
    ensemble_fit,
    ensemble_predict,
    ncm_fit,
    ncm_predict,
    predict,
    score,
    solve_lda,
)
from .errors import KldaError
from .featstore import read_features, validate_manifest, write_features
from .harness import (
    MethodConfig,
    RunReport,
    TaskStream,
    average_runs,
    build_stream,
    run_cil,
    stream_from_class_batches,
    sweep,
    synth_gaussians,
    synth_rings,
)
from .rff import RffConfig, RffProjector, build_projector, exact_rbf_kernel, transform
from .stats import GaussianAccumulator

__version__ = "0.1.0"

__all__ = [
    "FeatureBatch",
    "split_by_class",
    "RffConfig",
    "RffProjector",
    "build_projector",
    "transform",
    "exact_rbf_kernel",
    "GaussianAccumulator",
    "DiscriminantModel",
    "NcmModel",
    "EnsembleModel",
    "solve_lda",
    "score",
    "predict",
    "ncm_fit",
    "ncm_predict",
    "ensemble_fit",
    "ensemble_predict",
    "MethodConfig",
    "TaskStream",
    "RunReport",
    "build_stream",
    "stream_from_class_batches",
    "run_cil",
    "average_runs",
    "sweep",
    "synth_gaussians",
    "synth_rings",
    "read_features",
    "write_features",
    "validate_manifest",
    "active_backend",
    "KldaError",
    "__version__",
]
