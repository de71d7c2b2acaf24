"""Random instance construction shared by the search and acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from geomcm.cosmat import embed_many, fit_semantic_space
from geomcm.gmrtree import GmrTree, TreeParams, build_by_insert, bulk_load
from geomcm.model import Dataset, FeatureVector, GeoObject, GeoPoint, Modality, Query, SemanticVector
from geomcm.synth import SynthSpec, synthesize

SMALL_SPEC = SynthSpec(n=200, class_count=6, d_text=12, d_image=16, seed=11, n_train=900)
SMALL_GAMMA = 6


def small_world():
    data = synthesize(SMALL_SPEC)
    space = fit_semantic_space(
        data.train_text.feature_matrix(), data.train_image.feature_matrix(),
        data.train_text.labels(), SMALL_SPEC.class_count, SMALL_GAMMA,
    )
    return data, space


@dataclass
class Instance:
    dataset: Dataset
    tree: GmrTree
    query: Query
    layout: str
    built_by: str


def random_dataset(rng, corpus, space, n, layout="uniform"):
    c = space.class_count
    labels = rng.integers(c, size=n)
    if layout == "grid":
        xy = rng.integers(0, 8, size=(n, 2)).astype(float)
    elif layout == "clustered":
        centers = rng.uniform(0, 100, size=(3, 2))
        xy = centers[rng.integers(3, size=n)] + rng.standard_normal((n, 2)) * 3.0
    else:
        xy = rng.uniform(0, 100, size=(n, 2))
    feats = corpus.image_features(rng, labels)
    if layout == "grid" and n > 4:
        # exact duplicates: same place, same image
        dup = rng.integers(n, size=n // 4)
        tgt = rng.integers(n, size=n // 4)
        xy[tgt] = xy[dup]
        feats[tgt] = feats[dup]
    sem = embed_many(space, feats, Modality.IMAGE)
    ids = rng.permutation(10 * n)[:n]
    objs = [
        GeoObject(int(ids[i]), GeoPoint(float(xy[i, 0]), float(xy[i, 1])),
                  FeatureVector(Modality.IMAGE, feats[i]), SemanticVector(sem[i]), int(labels[i]))
        for i in range(n)
    ]
    return Dataset(objs, {Modality.IMAGE: feats.shape[1]}, c)


def random_query(rng, corpus, ds, k=None, mu=None):
    if rng.random() < 0.8:
        loc = ds.objects[int(rng.integers(len(ds)))].location
    else:
        loc = GeoPoint(float(rng.uniform(-20, 120)), float(rng.uniform(-20, 120)))
    text = corpus.text_feature(rng, int(rng.integers(len(corpus.class_words))))
    k = int(rng.choice([1, 5, 10, 50])) if k is None else k
    mu = float(rng.choice([0.0, 0.5, 1.0])) if mu is None else mu
    return Query(loc, text, k, mu)


def random_instance(rng, corpus, space, n_max=2000, k=None, mu=None) -> Instance:
    n = int(np.exp(rng.uniform(0, np.log(n_max))))
    n = max(1, min(n, n_max))
    layout = str(rng.choice(["uniform", "grid", "clustered"]))
    ds = random_dataset(rng, corpus, space, n, layout)
    fanout = int(rng.choice([4, 8, 32]))
    params = TreeParams(fanout_max=fanout, sig_length=int(rng.choice([3, 8, 64])))
    if rng.random() < 0.2 and n <= 600:
        tree, built_by = build_by_insert(ds, space.class_count, params), "insert"
    else:
        tree, built_by = bulk_load(ds, space.class_count, params), "bulk"
    return Instance(ds, tree, random_query(rng, corpus, ds, k, mu), layout, built_by)


def ids_scores(results):
    return [(r.object_id, r.score) for r in results]
