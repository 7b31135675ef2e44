"""Reading and writing matrices and labels, plus synthetic generators.

Two matrix formats are supported:

* CSV: comma separated, ``.`` decimal point, optional single header line,
  no quoting.
* f32-raw: ``b"HNND"``, ``u32 N``, ``u32 D``, then ``N * D`` little-endian
  float32 values in row-major order. Loading reads the payload straight
  into one float32 array (or memory-maps it), so peak memory stays close
  to the payload size.

Synthetic data uses NumPy's ``Generator`` with the PCG64 bit generator
seeded through ``SeedSequence``; streams are identical across platforms
for a given NumPy version.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
import struct

import numpy as np

from .errors import InvalidArgumentError, InvalidDataError
from .nnsearch import check_finite

F32_MAGIC = b"HNND"
_F32_HEADER = struct.Struct("<4sII")

GENERATORS = ("blobs", "uniform-square")


@dataclass
class DatasetSpec:
    """Where a dataset comes from.

    ``source`` is a file path or a generator name; ``params`` holds
    generator arguments (``n``, ``dim``, ``clusters``, ``separation``,
    ``noise``, ``seed``).
    """

    source: str
    format: str | None = None  # "csv" | "f32-raw"; guessed from the suffix when None
    has_header: bool | None = None  # None: detect
    labels_path: str | None = None
    params: dict = field(default_factory=dict)
    mmap: bool = False


# ---------------------------------------------------------------- CSV


def _parse_row(line: str, lineno: int) -> list[float]:
    try:
        return [float(tok) for tok in line.split(",")]
    except ValueError as exc:
        raise InvalidDataError(f"line {lineno}: cannot parse {line.strip()[:60]!r} ({exc})") from None


def _looks_numeric(line: str) -> bool:
    try:
        [float(tok) for tok in line.split(",")]
    except ValueError:
        return False
    return True


def load_csv(path, has_header: bool | None = None) -> np.ndarray:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    first = 0
    while first < len(lines) and not lines[first].strip():
        first += 1
    if first == len(lines):
        raise InvalidDataError(f"{path}: file is empty")
    if has_header is None:
        has_header = not _looks_numeric(lines[first])
    start = first + 1 if has_header else first
    rows = []
    width = None
    for lineno in range(start, len(lines)):
        line = lines[lineno]
        if not line.strip():
            continue
        row = _parse_row(line, lineno + 1)
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise InvalidDataError(f"line {lineno + 1}: expected {width} fields, got {len(row)} (ragged rows)")
        if not all(np.isfinite(row)):
            col = next(i for i, v in enumerate(row) if not np.isfinite(v))
            raise InvalidDataError(f"line {lineno + 1}, column {col + 1}: non-finite value")
        rows.append(row)
    if not rows:
        raise InvalidDataError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def save_csv(path, matrix, header: list[str] | None = None) -> None:
    matrix = np.asarray(matrix)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        np.savetxt(fh, matrix, delimiter=",", fmt="%.17g")


# ---------------------------------------------------------------- f32-raw


def save_f32raw(path, matrix) -> None:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise InvalidArgumentError("f32-raw stores 2-D matrices only")
    n, d = matrix.shape
    with open(path, "wb") as fh:
        fh.write(_F32_HEADER.pack(F32_MAGIC, n, d))
        # row blocks keep the float32 copy small for large inputs
        step = max(1, (1 << 24) // max(d, 1))
        for start in range(0, n, step):
            fh.write(np.ascontiguousarray(matrix[start:start + step], dtype="<f4").tobytes())


def read_f32raw_header(path) -> tuple[int, int]:
    with open(path, "rb") as fh:
        head = fh.read(_F32_HEADER.size)
    if len(head) < _F32_HEADER.size:
        raise InvalidDataError(f"{path}: truncated f32-raw header")
    magic, n, d = _F32_HEADER.unpack(head)
    if magic != F32_MAGIC:
        raise InvalidDataError(f"{path}: bad magic {magic!r}, expected {F32_MAGIC!r}")
    return n, d


def load_f32raw(path, mmap: bool = False, check: bool = True) -> np.ndarray:
    """Load an f32-raw file as an ``(N, D)`` float32 array."""
    n, d = read_f32raw_header(path)
    expected = _F32_HEADER.size + 4 * n * d
    actual = Path(path).stat().st_size
    if actual != expected:
        raise InvalidDataError(f"{path}: size {actual} bytes, header implies {expected}")
    if n == 0 or d == 0:
        raise InvalidDataError(f"{path}: empty matrix ({n} x {d})")
    if mmap:
        arr = np.memmap(path, dtype="<f4", mode="r", offset=_F32_HEADER.size, shape=(n, d))
    else:
        arr = np.fromfile(path, dtype="<f4", count=n * d, offset=_F32_HEADER.size).reshape(n, d)
    if check:
        check_finite(arr, str(path))
    return arr


# ---------------------------------------------------------------- labels


def load_labels(path) -> np.ndarray:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise InvalidDataError(f"{path}, line {lineno}: not an integer label: {line[:40]!r}") from None
    return np.asarray(out, dtype=np.int64)


def save_labels(path, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in np.asarray(labels, dtype=np.int64):
            fh.write(f"{v}\n")


# ---------------------------------------------------------------- generators


def gen_blobs(
    n: int,
    dim: int,
    clusters: int,
    separation: float = 20.0,
    noise: float = 1.0,
    seed: int = 0,
    decay: float = 0.2,
) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian clusters.

    Centers are drawn from a zero-mean Gaussian whose per-axis scale decays
    geometrically (``decay ** axis``), so the cluster layout has a dominant
    low-dimensional structure like most real feature spaces, and are then
    scaled so the closest pair is exactly ``separation`` apart. Each point
    adds ``N(0, noise^2)`` noise on every axis. Cluster sizes differ by at
    most one.
    """
    if clusters < 1 or n < clusters or dim < 1:
        raise InvalidArgumentError(f"need clusters >= 1, n >= clusters, dim >= 1 (got n={n}, dim={dim}, clusters={clusters})")
    if separation < 0 or noise < 0 or not 0 < decay <= 1:
        raise InvalidArgumentError("separation and noise must be non-negative, decay in (0, 1]")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(clusters, dim)) * decay ** np.arange(dim)
    if clusters > 1:
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        closest = dist[np.triu_indices(clusters, 1)].min()
        if closest > 0:
            centers *= separation / closest
    labels = np.repeat(np.arange(clusters), np.diff(np.linspace(0, n, clusters + 1).round().astype(int)))
    points = centers[labels] + rng.normal(scale=noise, size=(n, dim))
    return points, labels.astype(np.int64)


def gen_uniform_square(n: int, seed: int = 0) -> np.ndarray:
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    return np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, 2))


def parse_synthetic(text: str) -> DatasetSpec:
    """Parse ``"blobs,n=5000,dim=64,clusters=10"`` into a spec."""
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise InvalidArgumentError("empty synthetic dataset description")
    name, params = parts[0], {}
    if name not in GENERATORS:
        raise InvalidArgumentError(f"unknown generator {name!r}; choose from {GENERATORS}")
    for p in parts[1:]:
        key, sep, value = p.partition("=")
        if not sep:
            raise InvalidArgumentError(f"expected key=value, got {p!r}")
        try:
            params[key] = int(value)
        except ValueError:
            try:
                params[key] = float(value)
            except ValueError:
                raise InvalidArgumentError(f"{key}: not a number: {value!r}") from None
    return DatasetSpec(source=name, params=params)


def generate(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray | None]:
    params = dict(spec.params)
    for key, value in params.items():
        if key in ("n", "dim", "clusters") and (not isinstance(value, int) or value <= 0):
            raise InvalidArgumentError(f"generator parameter {key} must be a positive integer, got {value}")
    if spec.source == "blobs":
        params.setdefault("n", 5000)
        params.setdefault("dim", 64)
        params.setdefault("clusters", 10)
        return gen_blobs(**params)
    if spec.source == "uniform-square":
        params.setdefault("n", 100_000)
        return gen_uniform_square(**params), None
    raise InvalidArgumentError(f"unknown generator {spec.source!r}")


def guess_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".f32", ".raw", ".hnnd", ".bin"):
        return "f32-raw"
    return "csv"


def load(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray | None]:
    """Load or generate a dataset; returns ``(matrix, labels or None)``."""
    if spec.source in GENERATORS and not Path(spec.source).exists():
        data, labels = generate(spec)
    else:
        path = Path(spec.source)
        if not path.exists():
            raise InvalidDataError(f"{path}: no such file")
        fmt = spec.format or guess_format(path)
        if fmt == "csv":
            data = load_csv(path, spec.has_header)
        elif fmt == "f32-raw":
            data = load_f32raw(path, mmap=spec.mmap)
        else:
            raise InvalidArgumentError(f"unknown format {fmt!r}")
        labels = None
    if spec.labels_path is not None:
        labels = load_labels(spec.labels_path)
    if labels is not None and len(labels) != data.shape[0]:
        raise InvalidDataError(f"labels file has {len(labels)} entries but the data has {data.shape[0]} rows")
    return data, labels


def save_matrix(path, matrix) -> None:
    if guess_format(path) == "f32-raw":
        save_f32raw(path, matrix)
    else:
        save_csv(path, matrix)
