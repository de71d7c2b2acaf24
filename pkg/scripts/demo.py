"""End-to-end walk-through: synthesize, train, index, and answer one query three ways."""

import numpy as np

from geomcm.bench import build_world
from geomcm.gmrtree import TreeParams, audit_tree
from geomcm.model import GeoPoint, Query
from geomcm.search import EXACT_SCORE, brute_force, exact_top_k, kgmcms
from geomcm.synth import SynthSpec, toy_text_featurizer


def show(title, results, stats=None):
    print(f"\n{title}")
    for r in results:
        print(f"  id {r.object_id:>6}  dist {r.distance:7.3f}  sim {r.similarity:6.3f}  score {r.score:6.4f}")
    if stats is not None:
        print(f"  nodes visited {stats.nodes_visited}, objects scored {stats.objects_scored}")


def main():
    world = build_world(SynthSpec(n=20_000, seed=1), gamma=16, params=TreeParams())
    print(f"indexed {len(world.tree)} objects, height {world.tree.height()}, audit issues {len(audit_tree(world.tree))}")
    print("leading correlations", np.round(world.space.corr_proj.correlations[:4], 3))

    corpus = world.data.corpus
    word = corpus.vocab[corpus.class_words[3][0]]
    q = Query(GeoPoint(40.0, 60.0), toy_text_featurizer(f"{word} {word}", corpus.vocab), k=5, mu=0.5)
    print(f"query text {word!r} at (40, 60), k=5, mu=0.5")

    show("signature-filtered kNN", *kgmcms(world.tree, world.space, q))
    show("exact top-k", *exact_top_k(world.tree, world.space, q))
    show("linear scan", brute_force(world.table, world.space, q, EXACT_SCORE))


if __name__ == "__main__":
    main()
