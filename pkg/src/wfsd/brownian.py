"""Seeded fine-grid Wiener increments and exact coarsening.

Every increment is a pure function of (master_seed, path_index, component,
step): each (seed, path, component) triple keys its own Philox counter
stream, and step n reads the n-th 64-bit output. Uniforms are mapped to
normals by the inverse CDF, so no draw depends on call order or on how
paths are split across workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import InvalidSpec

__all__ = [
    "PathSpec",
    "IncrementStream",
    "sample_fine_increments",
    "sample_block",
    "coarsen",
    "write_increments",
    "read_increments",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class PathSpec:
    master_seed: int
    path_index: int = 0
    horizon: float = 1.0
    fine_exp: int = 13
    dims: int = 1

    def __post_init__(self):
        if self.dims not in (1, 3):
            raise InvalidSpec(f"dims must be 1 or 3, got {self.dims!r}")
        if self.path_index < 0:
            raise InvalidSpec("path_index must be >= 0")
        if self.fine_exp < 0:
            raise InvalidSpec("fine_exp must be >= 0")
        if not self.horizon > 0:
            raise InvalidSpec("horizon must be positive")
        n = self.horizon * 2**self.fine_exp
        if n != int(n):
            raise InvalidSpec(
                f"horizon {self.horizon!r} is not a multiple of 2^-{self.fine_exp}"
            )

    @property
    def n_steps(self) -> int:
        return int(self.horizon * 2**self.fine_exp)

    @property
    def dt(self) -> float:
        return 2.0**-self.fine_exp


@dataclass(frozen=True)
class IncrementStream:
    """Increments of shape (dims, n_steps) on a grid of spacing ``dt``."""

    increments: np.ndarray
    dt: float

    @property
    def dims(self) -> int:
        return self.increments.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[-1]


def _component_normals(master_seed: int, path_index: int, component: int, n: int) -> np.ndarray:
    key = np.random.SeedSequence(
        [master_seed & _MASK64, path_index, component]
    ).generate_state(2, np.uint64)
    raw = np.random.Philox(key=key).random_raw(n)
    # 53-bit midpoint uniforms in (0, 1), never 0 or 1
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def sample_fine_increments(spec: PathSpec) -> IncrementStream:
    n = spec.n_steps
    sd = np.sqrt(spec.dt)
    inc = np.empty((spec.dims, n))
    for c in range(spec.dims):
        inc[c] = sd * _component_normals(spec.master_seed, spec.path_index, c, n)
    return IncrementStream(inc, spec.dt)


def sample_block(
    master_seed: int,
    path_indices,
    dims: int = 1,
    fine_exp: int = 13,
    horizon: float = 1.0,
) -> np.ndarray:
    """Increments for many paths, laid out (dims, n_steps, n_paths) for stepping."""
    indices = list(path_indices)
    if not indices:
        raise InvalidSpec("empty path index list")
    probe = PathSpec(master_seed, indices[0], horizon, fine_exp, dims)
    out = np.empty((dims, probe.n_steps, len(indices)))
    sd = np.sqrt(probe.dt)
    for j, idx in enumerate(indices):
        if idx < 0:
            raise InvalidSpec("path_index must be >= 0")
        for c in range(dims):
            out[c, :, j] = _component_normals(master_seed, idx, c, probe.n_steps)
    out *= sd
    return out


def _pairwise_halve(x: np.ndarray, axis: int) -> np.ndarray:
    x = np.moveaxis(x, axis, -1)
    return np.moveaxis(x[..., 0::2] + x[..., 1::2], -1, axis)


def coarsen(increments, levels: int, axis: int = -1) -> np.ndarray:
    """Sum blocks of 2^levels consecutive increments along ``axis``.

    Blocks are reduced as a binary tree (adjacent pairs, repeatedly), so
    coarsening in stages is bit-identical to coarsening in one call.
    """
    x = increments.increments if isinstance(increments, IncrementStream) else np.asarray(increments)
    if levels < 0:
        raise InvalidSpec("cannot refine increments")
    n = x.shape[axis]
    if n % (1 << levels):
        raise InvalidSpec(f"{n} increments do not split into blocks of {1 << levels}")
    for _ in range(levels):
        x = _pairwise_halve(x, axis)
    return x


def coarsen_stream(stream: IncrementStream, coarse_exp: int) -> IncrementStream:
    """Coarsen a stream on the 2^-f grid to the 2^-coarse_exp grid."""
    fine_exp = int(round(-np.log2(stream.dt)))
    if coarse_exp > fine_exp:
        raise InvalidSpec(f"coarse exponent {coarse_exp} exceeds fine exponent {fine_exp}")
    return IncrementStream(coarsen(stream.increments, fine_exp - coarse_exp), 2.0**-coarse_exp)


# ---------------------------------------------------------------------------
# binary dump: "WFBM", u32 version, f64 horizon, u32 fine_exp, u32 dims,
# u64 seed, u64 path_index, then dims * n_steps little-endian f64

_MAGIC = b"WFBM"
_VERSION = 1
_HEADER = struct.Struct("<4sIdIIQQ")


def write_increments(path, spec: PathSpec, stream: IncrementStream | None = None) -> None:
    if stream is None:
        stream = sample_fine_increments(spec)
    header = _HEADER.pack(
        _MAGIC, _VERSION, spec.horizon, spec.fine_exp, spec.dims,
        spec.master_seed & _MASK64, spec.path_index,
    )
    data = np.ascontiguousarray(stream.increments, dtype="<f8").tobytes()
    Path(path).write_bytes(header + data)


def read_increments(path) -> tuple[PathSpec, IncrementStream]:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise InvalidSpec("truncated increment file")
    magic, version, horizon, fine_exp, dims, seed, idx = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise InvalidSpec(f"bad magic {magic!r}")
    if version != _VERSION:
        raise InvalidSpec(f"unsupported version {version}")
    spec = PathSpec(seed, idx, horizon, fine_exp, dims)
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if data.size != dims * spec.n_steps:
        raise InvalidSpec("payload size does not match header")
    return spec, IncrementStream(data.reshape(dims, spec.n_steps).astype(np.float64), spec.dt)
