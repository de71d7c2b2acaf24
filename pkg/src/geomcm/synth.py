"""Synthetic geo-tagged text/image corpora and a bag-of-words text featurizer.

Text features are real toy documents passed through :func:`toy_text_featurizer`,
so a query can be typed as words. Image features are class-conditional
Gaussians. Text and image of a training pair share the class, which is the
only source of cross-modal correlation.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .model import Dataset, FeatureVector, GeoObject, GeoPoint, Modality

_BASE_WORDS = (
    "river bridge castle harbor forest meadow temple market tower garden "
    "beach cliff canyon desert glacier island lake mountain valley village "
    "street station stadium museum church palace park plaza road tunnel "
    "boat train plane bicycle horse dog cat bird flower tree "
    "sunset snow rain night fog storm crowd festival concert statue "
    "lighthouse windmill vineyard waterfall volcano cave reef dune prairie swamp "
    "bakery library school factory airport farm barn mill pier ferry"
).split()

_TOKEN = re.compile(r"[a-z0-9_]+")


def make_vocabulary(size: int) -> tuple:
    words = list(_BASE_WORDS[:size])
    i = 0
    while len(words) < size:
        words.append(f"term{i}")
        i += 1
    return tuple(words)


def toy_text_featurizer(text: str, vocab: Sequence[str]) -> FeatureVector:
    """L2-normalized term frequencies over ``vocab``; unknown words are ignored.

    A text without any vocabulary word yields the zero vector, which carries
    no usable signal for embedding (see :func:`is_usable`).
    """
    if not vocab:
        raise ValueError("vocabulary must be nonempty")
    index = {w: i for i, w in enumerate(vocab)}
    tf = np.zeros(len(vocab))
    for tok in _TOKEN.findall(text.lower()):
        i = index.get(tok)
        if i is not None:
            tf[i] += 1.0
    n = np.sqrt(tf @ tf)
    if n > 0:
        tf /= n
    return FeatureVector(Modality.TEXT, tf)


def is_usable(feature: FeatureVector) -> bool:
    return bool(np.any(feature.values != 0.0))


@dataclass(frozen=True)
class SynthSpec:
    n: int
    class_count: int = 10
    d_text: int = 32
    d_image: int = 48
    spatial: str = "uniform"
    seed: int = 0
    n_train: Optional[int] = None
    extent: float = 100.0
    clusters: int = 8
    doc_length: int = 12
    topic_share: float = 0.75
    image_noise: float = 1.5

    def train_size(self) -> int:
        return self.n_train if self.n_train is not None else max(100 * self.class_count, 1000)


@dataclass(frozen=True, eq=False)
class Corpus:
    """Everything needed to regenerate documents and queries for a synthetic world."""

    vocab: tuple
    class_words: tuple  # per class, tuple of vocabulary indices
    image_means: np.ndarray
    spec: SynthSpec

    def document(self, rng: np.random.Generator, label: int) -> str:
        words = []
        own = self.class_words[label]
        for _ in range(self.spec.doc_length):
            if rng.random() < self.spec.topic_share:
                words.append(self.vocab[own[rng.integers(len(own))]])
            else:
                words.append(self.vocab[rng.integers(len(self.vocab))])
        return " ".join(words)

    def text_feature(self, rng: np.random.Generator, label: int) -> FeatureVector:
        return toy_text_featurizer(self.document(rng, label), self.vocab)

    def image_features(self, rng: np.random.Generator, labels: np.ndarray) -> np.ndarray:
        noise = rng.standard_normal((len(labels), self.image_means.shape[1])) * self.spec.image_noise
        return self.image_means[labels] + noise

    def to_dict(self) -> dict:
        return {
            "vocab": list(self.vocab),
            "class_words": [list(c) for c in self.class_words],
            "image_means": self.image_means.tolist(),
            "spec": asdict(self.spec),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Corpus":
        return cls(tuple(d["vocab"]), tuple(tuple(c) for c in d["class_words"]),
                   np.array(d["image_means"]), SynthSpec(**d["spec"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Corpus":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True, eq=False)
class SynthData:
    train_text: Dataset
    train_image: Dataset
    index: Dataset
    corpus: Corpus


def _balanced_labels(rng: np.random.Generator, n: int, c: int) -> np.ndarray:
    return rng.permutation(np.arange(n) % c)


def _locations(rng: np.random.Generator, spec: SynthSpec, n: int) -> np.ndarray:
    if spec.spatial == "uniform":
        return rng.uniform(0.0, spec.extent, size=(n, 2))
    if spec.spatial == "clustered":
        centers = rng.uniform(0.0, spec.extent, size=(spec.clusters, 2))
        which = rng.integers(spec.clusters, size=n)
        return centers[which] + rng.standard_normal((n, 2)) * (spec.extent / 20.0)
    raise ValueError(f"unknown spatial distribution {spec.spatial!r}")


def synthesize(spec: SynthSpec) -> SynthData:
    """Deterministic training pairs plus an image-only index split."""
    c = spec.class_count
    if c < 2:
        raise ValueError("need at least two classes")
    if spec.n < 10 * c:
        raise ValueError(f"n={spec.n} too small for {c} classes (need >= {10 * c})")
    if spec.d_text < c:
        raise ValueError("d_text must be at least class_count so every class owns a word")
    if spec.d_image < 1:
        raise ValueError("d_image must be >= 1")
    rng = np.random.default_rng(spec.seed)
    vocab = make_vocabulary(spec.d_text)
    class_words = tuple(tuple(range(k, spec.d_text, c)) for k in range(c))
    image_means = rng.standard_normal((c, spec.d_image))
    corpus = Corpus(vocab, class_words, image_means, spec)
    dims = {Modality.TEXT: spec.d_text, Modality.IMAGE: spec.d_image}

    nt = spec.train_size()
    tl = _balanced_labels(rng, nt, c)
    txy = _locations(rng, spec, nt)
    timg = corpus.image_features(rng, tl)
    train_text, train_image = [], []
    for i in range(nt):
        loc = GeoPoint(float(txy[i, 0]), float(txy[i, 1]))
        train_text.append(GeoObject(i, loc, corpus.text_feature(rng, int(tl[i])), None, int(tl[i])))
        train_image.append(GeoObject(i, loc, FeatureVector(Modality.IMAGE, timg[i]), None, int(tl[i])))

    labels = _balanced_labels(rng, spec.n, c)
    xy = _locations(rng, spec, spec.n)
    img = corpus.image_features(rng, labels)
    index = [
        GeoObject(i, GeoPoint(float(xy[i, 0]), float(xy[i, 1])),
                  FeatureVector(Modality.IMAGE, img[i]), None, int(labels[i]))
        for i in range(spec.n)
    ]
    return SynthData(
        Dataset(train_text, dims, c),
        Dataset(train_image, dims, c),
        Dataset(index, dims, c),
        corpus,
    )
