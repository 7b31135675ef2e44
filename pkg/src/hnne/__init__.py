"""Dimensionality reduction through a hierarchy of 1-nearest-neighbor graphs.

>>> import numpy as np, hnne
>>> x = np.random.default_rng(0).normal(size=(500, 10))
>>> embedding, model = hnne.fit(x, d=2)
>>> embedding.shape
(500, 2)
"""
__version__ = "0.1.0"

from .errors import HNNEError, InvalidArgumentError, InvalidDataError
from .hierarchy import Hierarchy, Partition, build_1nng, build_hierarchy, connected_components, partition_at_level
from .linproj import LinearMap, fit_linear, pca_basis, select_pca_level
from .metrics import MetricsReport, centroid_triplet_accuracy, knn_accuracy_cv, trustworthiness
from .nnsearch import NeighborList, knn, knn_approx, knn_exact
from .serialize import load_model, save_model
from .transform import FitResult, ProjectionModel, fit, fit_full, transform
from .translate import TranslateParams, translate_down

__all__ = [
    "FitResult", "HNNEError", "Hierarchy", "InvalidArgumentError", "InvalidDataError", "LinearMap",
    "MetricsReport", "NeighborList", "Partition", "ProjectionModel", "TranslateParams",
    "build_1nng", "build_hierarchy", "centroid_triplet_accuracy", "connected_components", "fit",
    "fit_full", "fit_linear", "knn", "knn_accuracy_cv", "knn_approx", "knn_exact", "load_model",
    "partition_at_level", "pca_basis", "save_model", "select_pca_level", "transform",
    "translate_down", "trustworthiness",
]
