"""Random-feature approximation of the RBF kernel.

A projector holds a frozen frequency matrix omega (d x D, entries
N(0, 1/sigma^2)), a phase vector beta (D entries uniform on [0, 2pi)) and
the scale sqrt(2/D). The feature map

    z(x)[j] = sqrt(2/D) * cos(x . omega[:, j] + beta[j])

has the property that z(x) . z(y) converges to
exp(-||x - y||^2 / (2 sigma^2)) as D grows; ``exact_rbf_kernel`` computes
that limit and serves as the independent oracle in the tests.

Reproducibility contract: sampling uses the Philox counter-based bit
generator keyed directly by the config seed, and the Gaussian draw is
Box-Muller applied to two uniform blocks, in this fixed order:

    u1 = rng.random((d, D)); u2 = rng.random((d, D))
    omega = sqrt(-2 ln(1 - u1)) * cos(2 pi u2) / sigma
    beta  = 2 pi * rng.random(D)

Identical configs therefore yield bit-identical projectors on any platform
with IEEE-754 doubles.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import _binio
from .backends import rff_transform
from .batch import FeatureBatch
from .errors import ConfigError, DimensionError, FormatError
from ._binio import atomic_write

MAGIC = b"KRFF"
VERSION = 1


@dataclass(frozen=True)
class RffConfig:
    """Sampling parameters for one projector.

    input_dim: raw feature width d; transform_dim: number of random
    features D; sigma: RBF bandwidth; seed: 64-bit reproducibility root.
    """

    input_dim: int
    transform_dim: int
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if int(self.input_dim) < 1:
            raise ConfigError(f"input_dim must be >= 1, got {self.input_dim}")
        if int(self.transform_dim) < 1:
            raise ConfigError(f"transform_dim must be >= 1, got {self.transform_dim}")
        if not (float(self.sigma) > 0.0) or not math.isfinite(float(self.sigma)):
            raise ConfigError(f"sigma must be a positive real, got {self.sigma}")
        if not (0 <= int(self.seed) < 2**64):
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "transform_dim", int(self.transform_dim))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "seed", int(self.seed))

    def with_seed(self, seed: int) -> "RffConfig":
        return RffConfig(self.input_dim, self.transform_dim, self.sigma, seed)


@dataclass(frozen=True)
class RffProjector:
    """Immutable sampled feature map: omega (d x D), beta (D,), scale sqrt(2/D)."""

    omega: np.ndarray
    beta: np.ndarray
    scale: float
    config: RffConfig

    def __post_init__(self):
        d, dim = self.config.input_dim, self.config.transform_dim
        if self.omega.shape != (d, dim):
            raise DimensionError(f"omega shape {self.omega.shape} != ({d}, {dim})")
        if self.beta.shape != (dim,):
            raise DimensionError(f"beta shape {self.beta.shape} != ({dim},)")
        self.omega.flags.writeable = False
        self.beta.flags.writeable = False

    @property
    def input_dim(self) -> int:
        return self.config.input_dim

    @property
    def transform_dim(self) -> int:
        return self.config.transform_dim


def build_projector(config: RffConfig) -> RffProjector:
    """Sample a projector deterministically from the config seed.

    omega entries are i.i.d. N(0, 1/sigma^2), beta i.i.d. uniform on
    [0, 2pi); see module docstring for the fixed draw order.
    """
    d, dim = config.input_dim, config.transform_dim
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    u1 = rng.random((d, dim))
    u2 = rng.random((d, dim))
    # Box-Muller; 1-u1 keeps the log argument in (0, 1].
    omega = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
    omega /= config.sigma
    beta = 2.0 * np.pi * rng.random(dim)
    scale = math.sqrt(2.0 / dim)
    return RffProjector(omega=omega, beta=beta, scale=scale, config=config)


def transform(projector: RffProjector, features: FeatureBatch) -> FeatureBatch:
    """Kernelize a batch; labels pass through untouched."""
    if features.width != projector.input_dim:
        raise DimensionError(
            f"batch width {features.width} != projector input_dim {projector.input_dim}"
        )
    z = rff_transform(features.values, projector.omega, projector.beta, projector.scale)
    return FeatureBatch(z, features.labels)


def transform_array(projector: RffProjector, x: np.ndarray) -> np.ndarray:
    """Array-level transform for callers that do not carry labels."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != projector.input_dim:
        raise DimensionError(
            f"array shape {x.shape} incompatible with projector input_dim {projector.input_dim}"
        )
    return rff_transform(x, projector.omega, projector.beta, projector.scale)


def exact_rbf_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """exp(-||x-y||^2 / (2 sigma^2)); the shift-invariant limit the features approximate."""
    if not sigma > 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"vector lengths differ: {x.shape[0]} vs {y.shape[0]}")
    diff = x - y
    return float(np.exp(-np.dot(diff, diff) / (2.0 * sigma * sigma)))


# --- binary sidecar (magic KRFF) -------------------------------------------
#
# magic 4s | version u32 | d u32 | D u32 | sigma f8 | seed u64
# | omega d*D f8 row-major | beta D f8 | crc32 u32
# All little-endian; CRC covers every preceding byte.


def encode_projector(projector: RffProjector) -> bytes:
    cfg = projector.config
    header = MAGIC + struct.pack(
        "<IIIdQ", VERSION, cfg.input_dim, cfg.transform_dim, cfg.sigma, cfg.seed
    )
    return _binio.append_crc(
        [header, _binio.floats_le(projector.omega), _binio.floats_le(projector.beta)]
    )


def decode_projector(buf: bytes, offset: int = 0) -> tuple[RffProjector, int]:
    """Decode one projector block; returns (projector, bytes consumed)."""
    start = offset
    offset = _binio.check_header(buf, offset, MAGIC, VERSION)
    _binio.require(buf, offset, 24, "projector header")
    d, dim, sigma, seed = struct.unpack_from("<IIdQ", buf, offset)
    offset += 24
    total = offset + (d * dim + dim) * 8 + 4
    _binio.require(buf, start, total - start, "projector payload")
    _binio.check_crc(buf, start, total)
    omega, offset = _binio.read_floats(buf, offset, d * dim, (d, dim), "omega")
    beta, offset = _binio.read_floats(buf, offset, dim, (dim,), "beta")
    config = RffConfig(d, dim, sigma, seed)
    proj = RffProjector(omega=omega, beta=beta, scale=math.sqrt(2.0 / dim), config=config)
    return proj, total - start


def save_projector(projector: RffProjector, path) -> None:
    atomic_write(path, encode_projector(projector))


def load_projector(path) -> RffProjector:
    with open(path, "rb") as fh:
        buf = fh.read()
    proj, consumed = decode_projector(buf)
    if consumed != len(buf):
        raise FormatError(f"trailing {len(buf) - consumed} bytes after projector block")
    return proj
