"""Preliminary linear projection.

The default estimates principal axes from a small level of hierarchy
centroids and projects every point and centroid with that single basis.
Other modes exist for ablations: full-data PCA, a random projection, and
random target coordinates with no projection at all.
"""
from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np

from .errors import InvalidArgumentError
from .hierarchy import Hierarchy
from .nnsearch import as_data_matrix


MODES = ("pca-centroids", "pca-full", "random-projection", "random-points")
PCA_MODES = ("pca-centroids", "pca-full")
# CLI spellings
MODE_ALIASES = {"random-proj": "random-projection", "random": "random-points"}

#: ``select_pca_level`` result meaning "estimate the basis on X itself".
USE_DATA = -1

DEFAULT_PCA_THRESHOLD = 1000


@dataclass(frozen=True)
class LinearMap:
    basis: np.ndarray  # (D, d)
    mean: np.ndarray  # (D,)
    mode: str

    def __post_init__(self):
        # one memory layout, so saved and live maps give identical products
        object.__setattr__(self, "basis", np.ascontiguousarray(self.basis, dtype=np.float64))
        object.__setattr__(self, "mean", np.ascontiguousarray(self.mean, dtype=np.float64))

    @property
    def in_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def out_dim(self) -> int:
        return self.basis.shape[1]


def canonical_mode(mode: str) -> str:
    mode = MODE_ALIASES.get(mode, mode)
    if mode not in MODES:
        raise InvalidArgumentError(f"unknown init mode {mode!r}; choose from {MODES}")
    return mode


def select_pca_level(h: Hierarchy | list[int], threshold: int = DEFAULT_PCA_THRESHOLD) -> int:
    """Index of the lowest level whose higher levels all have < ``threshold`` nodes.

    Accepts a hierarchy or a list of centroid level sizes (bottom first).
    Returns :data:`USE_DATA` when every centroid level is below the
    threshold, i.e. the data itself is the lowest admissible level.
    """
    sizes = h.level_sizes() if isinstance(h, Hierarchy) else list(h)
    chosen = USE_DATA
    for i, size in enumerate(sizes):
        if size >= threshold:
            chosen = i
    return chosen


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every column made positive
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _top_eigvecs(sym: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(sym)
    order = np.argsort(vals)[::-1][:d]
    return vals[order], vecs[:, order]


def pca_basis(points: np.ndarray, d: int, route: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Top ``d`` principal axes of ``points`` as orthonormal columns.

    ``route`` is ``"cov"`` (D x D covariance), ``"gram"`` (n x n inner
    products, cheaper when n < D) or ``"auto"``. Both give the same
    subspace; axes are sign-normalised so either route returns the same
    columns up to round-off.

    Returns ``(basis, mean)``.
    """
    x = np.asarray(points, dtype=np.float64)
    n, dim = x.shape
    mean = x.mean(axis=0)
    xc = x - mean
    if route == "auto":
        route = "gram" if n < dim else "cov"
    if route == "cov":
        vals, vecs = _top_eigvecs(xc.T @ xc / max(n - 1, 1), d)
    elif route == "gram":
        vals, u = _top_eigvecs(xc @ xc.T / max(n - 1, 1), d)
        vecs = xc.T @ u
        norms = np.linalg.norm(vecs, axis=0)
        ok = norms > 1e-12 * max(norms.max(initial=0.0), 1.0)
        vecs[:, ok] /= norms[ok]
        vecs[:, ~ok] = 0.0
    else:
        raise InvalidArgumentError(f"unknown PCA route {route!r}")
    top = vals[0] if vals.size else 0.0
    keep = vals > 1e-12 * top if top > 0 else np.zeros(d, dtype=bool)
    if not keep.all():
        vecs = _complete_basis(vecs, keep, dim)
    return _sign_fix(vecs), mean


def _complete_basis(vecs: np.ndarray, keep: np.ndarray, dim: int) -> np.ndarray:
    """Replace degenerate axes by coordinate axes, orthogonalised against the kept ones."""
    if not keep.any():
        warnings.warn("input has zero variance; using coordinate axes as projection basis", RuntimeWarning)
    d = vecs.shape[1]
    cols = [vecs[:, j] for j in range(d) if keep[j]]
    axis = 0
    while len(cols) < d:
        e = np.zeros(dim)
        e[axis] = 1.0
        axis += 1
        for c in cols:
            e = e - (c @ e) * c
        norm = np.linalg.norm(e)
        if norm > 1e-8:
            cols.append(e / norm)
    return np.stack(cols, axis=1)


def fit_linear(points, d: int, mode: str = "pca-centroids", seed: int = 0) -> LinearMap:
    """Fit the preliminary map on ``points``.

    For the PCA modes ``points`` are the rows the covariance is estimated
    from (centroids or the full data); the caller decides which. In
    ``random-points`` mode the returned map is a placeholder and the caller
    draws target coordinates directly.
    """
    mode = canonical_mode(mode)
    x = as_data_matrix(points)
    n, dim = x.shape
    if d < 1:
        raise InvalidArgumentError(f"target dimension must be positive, got {d}")
    if mode in PCA_MODES:
        if d > min(n - 1, dim):
            raise InvalidArgumentError(f"PCA with d={d} needs d <= min(n-1, D) = {min(n - 1, dim)}")
        basis, mean = pca_basis(x, d)
        return LinearMap(basis, mean, mode)
    if d > dim:
        raise InvalidArgumentError(f"d={d} exceeds input dimension {dim}")
    mean = np.asarray(x, dtype=np.float64).mean(axis=0)
    if mode == "random-projection":
        rng = np.random.default_rng(seed)
        basis = rng.uniform(-1.0, 1.0, size=(dim, d))
        basis /= np.linalg.norm(basis, axis=0)
        return LinearMap(basis, mean, mode)
    return LinearMap(np.zeros((dim, d)), np.zeros(dim), mode)


def apply_linear(lmap: LinearMap, points) -> np.ndarray:
    """``(points - mean) @ basis``."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != lmap.in_dim:
        raise InvalidArgumentError(f"points have {x.shape[1]} columns, map expects {lmap.in_dim}")
    return (x - lmap.mean) @ lmap.basis
