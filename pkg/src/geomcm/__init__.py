"""Geo-multimedia cross-modal kNN search.

Text queries with a location are matched against geo-tagged images through a
shared concept-probability space, and answered from a signature-augmented
R-Tree.
"""

from .cosmat import (
    CorrProjModel,
    LogsTranModel,
    SemanticSpaceModel,
    cosine_similarity,
    embed_image,
    embed_text,
    fit_corr_proj,
    fit_logs_tran,
    fit_semantic_space,
    load_space,
    save_space,
)
from .gmrtree import GmrTree, Signature, TreeParams, audit_tree, bulk_load, load_tree, save_tree
from .model import Dataset, FeatureVector, GeoObject, GeoPoint, Modality, Query, ScoredResult, SemanticVector
from .search import brute_force, exact_top_k, kgmcms

__version__ = "0.1.0"

__all__ = [
    "CorrProjModel", "LogsTranModel", "SemanticSpaceModel", "cosine_similarity", "embed_image", "embed_text",
    "fit_corr_proj", "fit_logs_tran", "fit_semantic_space", "load_space", "save_space",
    "GmrTree", "Signature", "TreeParams", "audit_tree", "bulk_load", "load_tree", "save_tree",
    "Dataset", "FeatureVector", "GeoObject", "GeoPoint", "Modality", "Query", "ScoredResult", "SemanticVector",
    "brute_force", "exact_top_k", "kgmcms",
]
