"""Binary model files.

Layout (all little-endian; see ``docs/model_format.md``)::

    magic        4 bytes   b"HNNE"
    version      u32       1
    D, d         u32, u32
    n_lookup     u32       rows of the lookup table
    lookup_level i32       -1 when the hierarchy had no centroid levels
    mode         u32       index into linproj.MODES
    flags        u32       bit 0 inflation, bit 1 guarantee
    backend      u32       index into nnsearch.BACKENDS
    n_levels     u32
    seed         i64
    n_points     u64
    level sizes  u32 * n_levels
    then float64: radius_fraction, shrink, inflation_ratio,
                  mean[D], basis[D*d], centroids[n_lookup*D],
                  translation[n_lookup*d], scale[n_lookup],
                  angle[n_lookup], stretch[n_lookup*2]
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import InvalidDataError
from .linproj import MODES, LinearMap
from .nnsearch import BACKENDS
from .transform import ProjectionModel
from .translate import AffineSet, TranslateParams

MAGIC = b"HNNE"
VERSION = 1
_HEAD = struct.Struct("<4sIIIIiIIIIqQ")
_FLAG_INFLATION = 1
_FLAG_GUARANTEE = 2


def model_to_bytes(model: ProjectionModel) -> bytes:
    lmap, aff, p = model.linear, model.affines, model.params
    dim, d = lmap.basis.shape
    n_lookup = model.lookup_centroids.shape[0]
    flags = (_FLAG_INFLATION if p.inflation else 0) | (_FLAG_GUARANTEE if p.guarantee else 0)
    sizes = tuple(int(s) for s in model.level_sizes)
    head = _HEAD.pack(
        MAGIC, VERSION, dim, d, n_lookup, int(model.lookup_level), MODES.index(lmap.mode), flags,
        BACKENDS.index(p.ann_backend), len(sizes), int(p.seed), int(model.n_points),
    )
    parts = [
        head,
        struct.pack(f"<{len(sizes)}I", *sizes),
        np.array([p.radius_fraction, p.shrink, p.inflation_ratio], dtype="<f8").tobytes(),
    ]
    for arr in (lmap.mean, lmap.basis, model.lookup_centroids, aff.translation, aff.scale,
                aff.rotation_angle, aff.stretch):
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def model_from_bytes(buf: bytes) -> ProjectionModel:
    if len(buf) < _HEAD.size:
        raise InvalidDataError("model file truncated (header)")
    magic, version, dim, d, n_lookup, level, mode, flags, backend, n_levels, seed, n_points = _HEAD.unpack_from(buf)
    if magic != MAGIC:
        raise InvalidDataError(f"not a model file (magic {magic!r})")
    if version != VERSION:
        raise InvalidDataError(f"unsupported model version {version}")
    if mode >= len(MODES) or backend >= len(BACKENDS):
        raise InvalidDataError("corrupt model header")
    off = _HEAD.size
    sizes = struct.unpack_from(f"<{n_levels}I", buf, off)
    off += 4 * n_levels
    counts = [3, dim, dim * d, n_lookup * dim, n_lookup * d, n_lookup, n_lookup, n_lookup * 2]
    if len(buf) != off + 8 * sum(counts):
        raise InvalidDataError(f"model file size {len(buf)} does not match its header")
    arrays = []
    for c in counts:
        arrays.append(np.frombuffer(buf, dtype="<f8", count=c, offset=off).astype(np.float64))
        off += 8 * c
    scalars, mean, basis, cents, trans, scale, angle, stretch = arrays
    params = TranslateParams(
        radius_fraction=float(scalars[0]),
        shrink=float(scalars[1]),
        inflation=bool(flags & _FLAG_INFLATION),
        ann_backend=BACKENDS[backend],
        seed=int(seed),
        guarantee=bool(flags & _FLAG_GUARANTEE),
        inflation_ratio=float(scalars[2]),
    )
    return ProjectionModel(
        linear=LinearMap(basis.reshape(dim, d), mean, MODES[mode]),
        lookup_centroids=cents.reshape(n_lookup, dim),
        affines=AffineSet(trans.reshape(n_lookup, d), scale, angle, stretch.reshape(n_lookup, 2)),
        params=params,
        lookup_level=int(level),
        level_sizes=tuple(sizes),
        n_points=int(n_points),
    )


def save_model(model: ProjectionModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path) -> ProjectionModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
