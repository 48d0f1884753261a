"""Discriminant solving and scoring: NCM, LDA, kernelized LDA, ensemble.

From accumulated statistics (class means mu_m, shared covariance sigma) the
solver produces, for every class,

    w_m = (sigma + ridge*I)^-1 mu_m        b_m = -1/2 mu_m . w_m

via one symmetric positive-definite factorization shared across all
right-hand sides; the covariance is never inverted explicitly. Scores
z . w_m + b_m equal the Gaussian log-posterior up to a per-sample constant,
so the argmax is the posterior argmax.

The ridge is relative: the amount added to the diagonal is
ridge * trace(sigma)/dim, making the knob unit-free. With fewer samples
than dimensions the covariance is rank-deficient, so a positive ridge is
what makes early-stream solving possible at all.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _binio, rff
from .batch import FeatureBatch
from .errors import (
    DimensionError,
    FormatError,
    ModelCorruptionError,
    ProtocolError,
    SingularityError,
    UndefinedSimilarityError,
)
from .rff import RffConfig, RffProjector, build_projector, transform_array
from .stats import GaussianAccumulator
from ._binio import atomic_write

MODEL_MAGIC = b"KMDL"
ENSEMBLE_MAGIC = b"KENS"
VERSION = 1


@dataclass(frozen=True)
class DiscriminantModel:
    """Solved weights (k x M, one column per class), biases (M,), ascending class ids."""

    weights: np.ndarray
    biases: np.ndarray
    class_ids: list[int]
    ridge: float

    def __post_init__(self):
        m = self.weights.shape[1]
        if self.biases.shape != (m,) or len(self.class_ids) != m:
            raise ModelCorruptionError(
                f"inconsistent model: {self.weights.shape} weights, "
                f"{self.biases.shape} biases, {len(self.class_ids)} class ids"
            )

    @property
    def input_width(self) -> int:
        return self.weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class NcmModel:
    """Per-class mean vectors for cosine-similarity prediction."""

    class_means: dict[int, np.ndarray]

    def __post_init__(self):
        for cid, mu in self.class_means.items():
            if not np.isfinite(mu).all():
                raise ModelCorruptionError(f"mean for class {cid} has non-finite entries")
            if np.linalg.norm(mu) == 0.0:
                raise ModelCorruptionError(f"mean for class {cid} has zero norm")


@dataclass(frozen=True)
class EnsembleModel:
    """Independent (projector, model) pairs sharing everything but the seed."""

    members: list[tuple[RffProjector, DiscriminantModel]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.members) < 1:
            raise ModelCorruptionError("ensemble needs at least one member")
        ids0 = self.members[0][1].class_ids
        for proj, model in self.members[1:]:
            if model.class_ids != ids0:
                raise ModelCorruptionError("ensemble members expose different class ids")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def class_ids(self) -> list[int]:
        return self.members[0][1].class_ids


def effective_ridge(covariance: np.ndarray, ridge: float) -> float:
    """Absolute diagonal loading: ridge scaled by the mean diagonal of the covariance."""
    return ridge * float(np.trace(covariance)) / covariance.shape[0]


def solve_lda(acc: GaussianAccumulator, ridge: float = 1e-4) -> DiscriminantModel:
    """Solve all class discriminants from the accumulated statistics.

    One Cholesky factorization of sigma + ridge_abs*I is shared across the M
    right-hand sides. Raises SingularityError when the regularized matrix is
    not positive definite (remedy: increase the ridge).
    """
    if ridge < 0:
        raise ProtocolError(f"ridge must be non-negative, got {ridge}")
    if acc.num_classes < 2:
        raise ProtocolError(f"need >= 2 classes to solve, have {acc.num_classes}")
    means, ids = acc.means_matrix()
    a = acc.covariance.copy()
    loading = effective_ridge(acc.covariance, ridge)
    a[np.diag_indices_from(a)] += loading
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularityError(
            f"covariance + {loading:g}*I is not positive definite; increase the ridge"
        ) from exc
    weights = scipy.linalg.cho_solve(factor, means, check_finite=False)
    biases = -0.5 * np.einsum("km,km->m", means, weights)
    return DiscriminantModel(weights=weights, biases=biases, class_ids=ids, ridge=ridge)


def score(model: DiscriminantModel, kernelized: FeatureBatch) -> np.ndarray:
    """Linear class scores, one row per sample, columns ordered like class_ids."""
    if kernelized.width != model.input_width:
        raise DimensionError(
            f"batch width {kernelized.width} != model width {model.input_width}"
        )
    return kernelized.values @ model.weights + model.biases


def predict(model: DiscriminantModel, kernelized: FeatureBatch) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class id."""
    s = score(model, kernelized)
    ids = np.asarray(model.class_ids)
    return ids[np.argmax(s, axis=1)]


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction so huge scores cannot overflow."""
    shifted = scores - scores.max(axis=1, keepdims=True)
    p = np.exp(shifted)
    p /= p.sum(axis=1, keepdims=True)
    return p


def ncm_fit(per_class_batches: dict[int, FeatureBatch]) -> NcmModel:
    """Mean prototype per class from one batch each."""
    if not per_class_batches:
        raise ProtocolError("no classes to fit")
    means = {}
    for cid, batch in sorted(per_class_batches.items()):
        if batch.n_rows < 1:
            raise ProtocolError(f"class {cid} has no samples")
        means[int(cid)] = batch.values.mean(axis=0)
    return NcmModel(class_means=means)


def ncm_predict(model: NcmModel, features: FeatureBatch) -> np.ndarray:
    """Highest cosine similarity to a class mean; ties resolve to the lowest id."""
    ids = sorted(model.class_means)
    means = np.column_stack([model.class_means[c] for c in ids])
    if features.width != means.shape[0]:
        raise DimensionError(f"batch width {features.width} != mean width {means.shape[0]}")
    norms = np.linalg.norm(features.values, axis=1)
    if (norms == 0.0).any():
        raise UndefinedSimilarityError("zero-norm test vector has no cosine similarity")
    sims = (features.values @ means) / np.linalg.norm(means, axis=0)
    sims /= norms[:, None]
    return np.asarray(ids)[np.argmax(sims, axis=1)]


def ensemble_fit(
    config: RffConfig,
    size: int,
    ridge: float,
    per_class_batches: dict[int, FeatureBatch],
) -> EnsembleModel:
    """Train `size` kernelized discriminants on identical data.

    Member e uses seed config.seed + e, so members differ only in their
    frequency/phase draws.
    """
    if size < 1:
        raise ProtocolError(f"ensemble size must be >= 1, got {size}")
    members = []
    for e in range(size):
        projector = build_projector(config.with_seed((config.seed + e) % 2**64))
        acc = GaussianAccumulator(config.transform_dim)
        for cid, batch in per_class_batches.items():
            z = transform_array(projector, batch.values)
            acc.update_class(FeatureBatch(z, batch.labels), cid)
        members.append((projector, solve_lda(acc, ridge)))
    return EnsembleModel(members=members)


def ensemble_probabilities(ensemble: EnsembleModel, raw_features: FeatureBatch) -> np.ndarray:
    """Member-averaged softmax probabilities, rows over samples, columns over class_ids."""
    n = raw_features.n_rows
    avg = np.zeros((n, len(ensemble.class_ids)))
    for projector, model in ensemble.members:
        if raw_features.width != projector.input_dim:
            raise ModelCorruptionError(
                f"batch width {raw_features.width} != member input_dim {projector.input_dim}"
            )
        z = transform_array(projector, raw_features.values)
        avg += softmax(z @ model.weights + model.biases)
    avg /= ensemble.size
    return avg


def ensemble_predict(ensemble: EnsembleModel, raw_features: FeatureBatch) -> np.ndarray:
    """Argmax of the averaged probabilities; ties resolve to the lowest class id."""
    probs = ensemble_probabilities(ensemble, raw_features)
    return np.asarray(ensemble.class_ids)[np.argmax(probs, axis=1)]


# --- model export (magics KMDL / KENS) --------------------------------------
#
# KMDL: magic 4s | version u32 | k u32 | M u32 | ridge f8 | class_ids M*i32
#       | weights k*M f8 row-major | biases M f8 | crc32 u32
# KENS: magic 4s | version u32 | E u32 | E x (KRFF block, KMDL block) | crc32 u32
#       (member blocks are self-framed and carry their own CRCs)


def encode_model(model: DiscriminantModel) -> bytes:
    header = MODEL_MAGIC + struct.pack(
        "<IIId", VERSION, model.input_width, model.num_classes, model.ridge
    )
    ids = np.asarray(model.class_ids, dtype="<i4").tobytes()
    return _binio.append_crc(
        [header, ids, _binio.floats_le(model.weights), _binio.floats_le(model.biases)]
    )


def decode_model(buf: bytes, offset: int = 0) -> tuple[DiscriminantModel, int]:
    start = offset
    offset = _binio.check_header(buf, offset, MODEL_MAGIC, VERSION)
    _binio.require(buf, offset, 16, "model header")
    k, m, ridge = struct.unpack_from("<IId", buf, offset)
    offset += 16
    total = offset + m * 4 + (k * m + m) * 8 + 4
    _binio.require(buf, start, total - start, "model payload")
    _binio.check_crc(buf, start, total)
    ids = np.frombuffer(buf, dtype="<i4", count=m, offset=offset).tolist()
    offset += m * 4
    weights, offset = _binio.read_floats(buf, offset, k * m, (k, m), "weights")
    biases, offset = _binio.read_floats(buf, offset, m, (m,), "biases")
    return DiscriminantModel(weights=weights, biases=biases, class_ids=ids, ridge=ridge), total - start


def encode_ensemble(ensemble: EnsembleModel) -> bytes:
    chunks = [ENSEMBLE_MAGIC, struct.pack("<II", VERSION, ensemble.size)]
    for projector, model in ensemble.members:
        chunks.append(rff.encode_projector(projector))
        chunks.append(encode_model(model))
    return _binio.append_crc(chunks)


def decode_ensemble(buf: bytes) -> EnsembleModel:
    offset = _binio.check_header(buf, 0, ENSEMBLE_MAGIC, VERSION)
    _binio.require(buf, offset, 4, "ensemble header")
    (size,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    _binio.check_crc(buf, 0, len(buf))
    members = []
    for _ in range(size):
        projector, used = rff.decode_projector(buf, offset)
        offset += used
        model, used = decode_model(buf, offset)
        offset += used
        members.append((projector, model))
    if offset + 4 != len(buf):
        raise FormatError(f"ensemble has {len(buf) - offset - 4} unexpected trailing bytes")
    return EnsembleModel(members=members)


def save_model(model: DiscriminantModel, path) -> None:
    atomic_write(path, encode_model(model))


def load_model(path) -> DiscriminantModel:
    with open(path, "rb") as fh:
        buf = fh.read()
    model, consumed = decode_model(buf)
    if consumed != len(buf):
        raise FormatError(f"trailing {len(buf) - consumed} bytes after model block")
    return model


def save_ensemble(ensemble: EnsembleModel, path) -> None:
    atomic_write(path, encode_ensemble(ensemble))


def load_ensemble(path) -> EnsembleModel:
    with open(path, "rb") as fh:
        return decode_ensemble(fh.read())
