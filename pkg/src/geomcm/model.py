"""Domain types shared across the package: points, feature vectors, objects, queries, results."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional, Sequence

import numpy as np


class Modality(str, enum.Enum):
    TEXT = "T"
    IMAGE = "I"


class GeoPoint(NamedTuple):
    x: float
    y: float

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureVector:
    modality: Modality
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "modality", Modality(self.modality))
        object.__setattr__(self, "values", _frozen_array(self.values))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.modality == other.modality and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.modality, self.values.tobytes()))


@dataclass(frozen=True, eq=False)
class SemanticVector:
    """Posterior distribution over the shared concept classes."""

    probabilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probabilities", _frozen_array(self.probabilities))

    def __len__(self) -> int:
        return self.probabilities.shape[0]

    def violations(self) -> list[str]:
        p = self.probabilities
        out = []
        if p.size == 0:
            return ["empty semantic vector"]
        if not np.all(np.isfinite(p)):
            return ["non-finite semantic entry"]
        if p.min() < 0.0 or p.max() > 1.0:
            out.append("semantic entry outside [0, 1]")
        if abs(p.sum() - 1.0) > 1e-9:
            out.append(f"semantic entries sum to {p.sum()!r}, not 1")
        return out

    def __eq__(self, other):
        if not isinstance(other, SemanticVector):
            return NotImplemented
        return np.array_equal(self.probabilities, other.probabilities)

    def __hash__(self):
        return hash(self.probabilities.tobytes())


@dataclass(frozen=True, eq=True)
class GeoObject:
    id: int
    location: GeoPoint
    feature: FeatureVector
    semantic: Optional[SemanticVector] = None
    label: Optional[int] = None

    def with_semantic(self, semantic: SemanticVector) -> "GeoObject":
        return GeoObject(self.id, self.location, self.feature, semantic, self.label)


@dataclass(frozen=True)
class Query:
    location: GeoPoint
    text_feature: FeatureVector
    k: int = 10
    mu: float = 0.5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"mu must lie in [0, 1], got {self.mu}")
        if self.text_feature.modality is not Modality.TEXT:
            raise ValueError("query feature must be a text feature")
        if not GeoPoint(*self.location).is_finite:
            raise ValueError("query location must be finite")
        object.__setattr__(self, "location", GeoPoint(float(self.location[0]), float(self.location[1])))


@dataclass(frozen=True)
class ScoredResult:
    object_id: int
    distance: float
    distance_proximity: float
    similarity: float
    score: float

    def sort_key(self):
        # score desc, distance asc, id asc
        return (-self.score, self.distance, self.object_id)


@dataclass(frozen=True)
class Violation:
    object_id: Optional[int]
    kind: str
    reason: str


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable collection of geo-multimedia objects.

    ``dims`` optionally pins the feature dimension per modality; otherwise the
    first object of each modality fixes it.
    """

    objects: tuple = ()
    dims: dict = field(default_factory=dict)
    class_count: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "dims", {Modality(k): int(v) for k, v in self.dims.items()})

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.objects == other.objects
            and self.dims == other.dims
            and self.class_count == other.class_count
        )

    @cached_property
    def bounding_box(self) -> tuple[GeoPoint, GeoPoint]:
        if not self.objects:
            raise ValueError("bounding box of an empty dataset")
        xy = self.locations
        lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        return GeoPoint(float(lo[0]), float(lo[1])), GeoPoint(float(hi[0]), float(hi[1]))

    @cached_property
    def locations(self) -> np.ndarray:
        xy = np.array([o.location for o in self.objects], dtype=np.float64).reshape(-1, 2)
        xy.setflags(write=False)
        return xy

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([o.id for o in self.objects], dtype=np.int64)

    def feature_matrix(self, modality: Modality = None) -> np.ndarray:
        objs = [o for o in self.objects if modality is None or o.feature.modality is Modality(modality)]
        if not objs:
            return np.zeros((0, 0))
        return np.vstack([o.feature.values for o in objs])

    def semantic_matrix(self) -> np.ndarray:
        missing = [o.id for o in self.objects if o.semantic is None]
        if missing:
            raise ValueError(f"objects without semantic vectors, e.g. id {missing[0]}")
        return np.vstack([o.semantic.probabilities for o in self.objects])

    def labels(self) -> np.ndarray:
        return np.array([-1 if o.label is None else o.label for o in self.objects], dtype=np.int64)

    def dim(self, modality: Modality) -> Optional[int]:
        modality = Modality(modality)
        if modality in self.dims:
            return self.dims[modality]
        for o in self.objects:
            if o.feature.modality is modality:
                return o.feature.dim
        return None

    def with_semantics(self, semantics: Sequence[SemanticVector]) -> "Dataset":
        objs = [o.with_semantic(s) for o, s in zip(self.objects, semantics, strict=True)]
        return Dataset(objs, self.dims, self.class_count)


def validate_dataset(ds: Dataset) -> list[Violation]:
    """Return every invariant violation in ``ds``; an empty list means valid."""
    out: list[Violation] = []
    seen: set[int] = set()
    reported_dupes: set[int] = set()
    expected = {m: ds.dim(m) for m in Modality}
    for o in ds.objects:
        if o.id in seen:
            if o.id not in reported_dupes:
                out.append(Violation(o.id, "duplicate-id", f"id {o.id} occurs more than once"))
                reported_dupes.add(o.id)
        seen.add(o.id)
        if not GeoPoint(*o.location).is_finite:
            out.append(Violation(o.id, "non-finite-coordinate", f"location {tuple(o.location)} is not finite"))
        f = o.feature
        if expected[f.modality] is not None and f.dim != expected[f.modality]:
            out.append(Violation(
                o.id, "dimension-mismatch",
                f"{f.modality.name.lower()} feature has length {f.dim}, expected {expected[f.modality]}",
            ))
        if not np.all(np.isfinite(f.values)):
            out.append(Violation(o.id, "non-finite-feature", "feature vector has non-finite entries"))
        if o.semantic is not None:
            for reason in o.semantic.violations():
                out.append(Violation(o.id, "bad-semantic", reason))
            if ds.class_count is not None and len(o.semantic) != ds.class_count:
                out.append(Violation(o.id, "bad-semantic", f"semantic length {len(o.semantic)} != {ds.class_count}"))
        if o.label is not None and ds.class_count is not None and not 0 <= o.label < ds.class_count:
            out.append(Violation(o.id, "bad-label", f"label {o.label} outside [0, {ds.class_count})"))
    return out
