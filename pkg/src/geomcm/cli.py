"""``geomcm`` command line: synth, ingest, train, embed, build, query, bench.

Relative paths resolve against ``--data-dir`` (default: ``$GEOMCM_DATA_DIR``,
else the working directory). Every command exits nonzero on error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import bench, datafile
from .cosmat import embed_many, fit_semantic_space, load_space, save_space
from .gmrtree import TreeParams, build_by_insert, bulk_load, load_tree, save_tree
from .model import FeatureVector, GeoPoint, Modality, Query, SemanticVector
from .search import exact_top_k, kgmcms, rtree_postfilter
from .synth import Corpus, SynthSpec, is_usable, synthesize, toy_text_featurizer

log = logging.getLogger("geomcm")

DATA_DIR_ENV = "GEOMCM_DATA_DIR"


def _path(args, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else Path(args.data_dir) / p


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.split(",") if v]


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n=args.n, class_count=args.classes, d_text=args.d_text, d_image=args.d_image,
        spatial=args.spatial, seed=args.seed, n_train=args.n_train,
    )
    data = synthesize(spec)
    out = _path(args, args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datafile.write_dataset(data.train_text, out / "train_text.tsv")
    datafile.write_dataset(data.train_image, out / "train_image.tsv")
    datafile.write_dataset(data.index, out / "index.tsv")
    data.corpus.save(out / "corpus.json")
    print(f"wrote {len(data.train_text)} training pairs and {len(data.index)} index objects to {out}")
    return 0


def cmd_ingest(args) -> int:
    ds = datafile.read_dataset(_path(args, args.file))
    lo, hi = ds.bounding_box
    summary = {
        "objects": len(ds),
        "d_T": ds.dim(Modality.TEXT),
        "d_I": ds.dim(Modality.IMAGE),
        "classes": ds.class_count,
        "bounding_box": [list(lo), list(hi)],
        "embedded": all(o.semantic is not None for o in ds),
    }
    print(json.dumps(summary))
    if args.out:
        datafile.write_dataset(ds, _path(args, args.out))
    return 0


def cmd_train(args) -> int:
    text = datafile.read_dataset(_path(args, args.train_text))
    image = datafile.read_dataset(_path(args, args.train_image))
    if not np.array_equal(text.ids, image.ids):
        raise ValueError("training files must list the same ids in the same order")
    labels = text.labels()
    if not np.array_equal(labels, image.labels()) or (labels < 0).any():
        raise ValueError("paired training records need identical, present labels")
    classes = args.classes or text.class_count or int(labels.max()) + 1
    space = fit_semantic_space(
        text.feature_matrix(Modality.TEXT), image.feature_matrix(Modality.IMAGE), labels,
        classes, args.gamma, args.ridge, args.l2, args.max_iters, args.tol,
    )
    save_space(space, _path(args, args.out))
    corr = ", ".join(f"{c:.4f}" for c in space.corr_proj.correlations[:5])
    print(f"trained gamma={space.corr_proj.gamma} classes={classes}; leading correlations {corr}")
    return 0


def cmd_embed(args) -> int:
    space = load_space(_path(args, args.model))
    ds = datafile.read_dataset(_path(args, args.data))
    mods = {o.feature.modality for o in ds}
    if len(mods) != 1:
        raise ValueError("embed expects a single-modality dataset")
    sem = embed_many(space, ds.feature_matrix(), mods.pop())
    out = ds.with_semantics([SemanticVector(r) for r in sem])
    out = type(out)(out.objects, out.dims, space.class_count)
    datafile.write_dataset(out, _path(args, args.out))
    print(f"embedded {len(out)} objects into {space.class_count} concepts")
    return 0


def cmd_build(args) -> int:
    ds = datafile.read_dataset(_path(args, args.data))
    if ds.class_count is None:
        raise ValueError("dataset header lacks classes=; run embed first")
    params = TreeParams(args.fanout, args.fanout_min, args.ell, args.tau)
    if args.method == "bulk":
        tree = bulk_load(ds, ds.class_count, params)
    else:
        tree = build_by_insert(ds, ds.class_count, params)
    save_tree(tree, _path(args, args.out))
    print(f"indexed {len(tree)} objects: height {tree.height()}, ell={tree.ell}, tau={tree.tau:.4g}")
    return 0


def cmd_query(args) -> int:
    space = load_space(_path(args, args.model))
    tree = load_tree(_path(args, args.index))
    if args.feature is not None:
        feature = FeatureVector(Modality.TEXT, [float(v) for v in args.feature.split(",")])
    else:
        corpus = Corpus.load(_path(args, args.vocab))
        feature = toy_text_featurizer(args.text, corpus.vocab)
        if not is_usable(feature):
            raise ValueError("query text contains no vocabulary word")
    q = Query(GeoPoint(args.x, args.y), feature, args.k, args.mu)
    run = {"kgmcms": kgmcms, "exact": exact_top_k, "postfilter": rtree_postfilter}[args.mode]
    results, stats = run(tree, space, q, delta_mode=args.delta)
    if args.json:
        print(json.dumps({"results": [asdict(r) for r in results], "stats": asdict(stats)}))
    else:
        print(f"{'rank':>4} {'id':>8} {'distance':>12} {'proximity':>10} {'similarity':>11} {'score':>9}")
        for i, r in enumerate(results, 1):
            print(f"{i:>4} {r.object_id:>8} {r.distance:>12.4f} {r.distance_proximity:>10.4f} "
                  f"{r.similarity:>11.4f} {r.score:>9.4f}")
        print(f"# nodes visited {stats.nodes_visited}, objects scored {stats.objects_scored}, "
              f"signature-pruned {stats.signature_pruned}, truncated {stats.truncated}")
    return 0


def cmd_bench(args) -> int:
    methods = args.methods.split(",")
    for m in methods:
        if m not in bench.METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {', '.join(bench.METHODS)}")
    template = SynthSpec(
        n=max(args.classes * 10, 100), class_count=args.classes, d_text=args.d_text,
        d_image=args.d_image, spatial=args.spatial, seed=args.seed,
    )
    workload = bench.WorkloadSpec(0, args.queries, 1, args.mu, args.seed)
    params = TreeParams(args.fanout, None, args.ell, args.tau)
    report = bench.sweep(_ints(args.sizes), _ints(args.k), workload, template, methods,
                         args.gamma, params, progress=lambda s: log.info("running %s", s))
    print(report.table())
    if args.json:
        _path(args, args.json).write_text(json.dumps(report.to_dict(), indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geomcm", description="Geo-multimedia cross-modal kNN search")
    p.add_argument("--data-dir", default=os.environ.get(DATA_DIR_ENV, "."),
                   help=f"base for relative paths (default ${DATA_DIR_ENV} or .)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--n", type=int, default=10_000)
    s.add_argument("--classes", type=int, default=10)
    s.add_argument("--d-text", type=int, default=32)
    s.add_argument("--d-image", type=int, default=48)
    s.add_argument("--spatial", choices=("uniform", "clustered"), default="uniform")
    s.add_argument("--n-train", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", default="synth")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", help="parse and validate a dataset file")
    s.add_argument("file")
    s.add_argument("--out", help="re-export in canonical form")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", help="fit the semantic space on paired text/image files")
    s.add_argument("--train-text", required=True)
    s.add_argument("--train-image", required=True)
    s.add_argument("--gamma", type=int, default=16)
    s.add_argument("--classes", type=int, default=None)
    s.add_argument("--ridge", type=float, default=None, help="default scales with covariance trace")
    s.add_argument("--l2", type=float, default=1e-4)
    s.add_argument("--max-iters", type=int, default=5000)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--out", default="model.json")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("embed", help="attach semantic vectors to a dataset")
    s.add_argument("--model", default="model.json")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("build", help="build and save a GMR-Tree over an embedded dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out", default="index.npz")
    s.add_argument("--method", choices=("bulk", "insert"), default="bulk")
    s.add_argument("--fanout", type=int, default=32)
    s.add_argument("--fanout-min", type=int, default=None)
    s.add_argument("--ell", type=int, default=64)
    s.add_argument("--tau", type=float, default=None, help="default 2 / classes")
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("query", help="run one text-to-image query")
    s.add_argument("--index", default="index.npz")
    s.add_argument("--model", default="model.json")
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--y", type=float, required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--text", help="query words, featurized with --vocab")
    g.add_argument("--feature", help="comma-separated text feature vector")
    s.add_argument("--vocab", default="synth/corpus.json")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--mu", type=float, default=0.5)
    s.add_argument("--mode", choices=("kgmcms", "exact", "postfilter"), default="kgmcms")
    s.add_argument("--delta", choices=("corner", "exact"), default="corner")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("bench", help="size/k sweep over synthetic data")
    s.add_argument("--sizes", default="40000,80000,120000,160000,200000")
    s.add_argument("--k", default="10")
    s.add_argument("--mu", type=float, default=0.5)
    s.add_argument("--queries", type=int, default=100)
    s.add_argument("--methods", default=",".join(bench.METHODS))
    s.add_argument("--classes", type=int, default=10)
    s.add_argument("--d-text", type=int, default=32)
    s.add_argument("--d-image", type=int, default=48)
    s.add_argument("--gamma", type=int, default=16)
    s.add_argument("--spatial", choices=("uniform", "clustered"), default="uniform")
    s.add_argument("--fanout", type=int, default=32)
    s.add_argument("--ell", type=int, default=64)
    s.add_argument("--tau", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--json", help="write machine-readable records here")
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"geomcm {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
