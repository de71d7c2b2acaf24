"""Query workload benchmark: response time, traversal effort, and accuracy against the exact oracle.

Ground truth for recall and precision is the linear-scan exact-score result
of each query. The per-class confusion matrix compares the dominant concept
of the oracle's top-1 object (row) with that of each method's top-1 object
(column; the extra last column counts empty results).
"""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .cosmat import SemanticSpaceModel, embed_many, fit_semantic_space
from .gmrtree import GmrTree, TreeParams, bulk_load
from .model import Dataset, GeoPoint, Modality, Query, SemanticVector
from .search import EXACT_SCORE, ScanTable, SearchStats, brute_force, exact_top_k, kgmcms, rtree_postfilter
from .synth import SynthData, SynthSpec, synthesize

METHODS = ("gmrtree-kgmcms", "gmrtree-exact", "rtree-postfilter", "linear-scan")
DEFAULT_SIZES = (40_000, 80_000, 120_000, 160_000, 200_000)
DEFAULT_KS = (5, 10, 20, 50, 100)

GROUND_TRUTH_NOTE = (
    "ground truth = linear-scan exact-score top-k per query; "
    "confusion rows = dominant concept of the oracle top-1, columns = dominant concept of the method top-1"
)


@dataclass(frozen=True)
class WorkloadSpec:
    dataset_size: int
    query_count: int = 100
    k: int = 10
    mu: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.query_count < 1:
            raise ValueError("query_count must be >= 1")
        if self.k < 1 or not 0.0 <= self.mu <= 1.0:
            raise ValueError("need k >= 1 and mu in [0, 1]")


@dataclass
class World:
    """A synthesized, embedded and indexed dataset ready for querying."""

    data: SynthData
    space: SemanticSpaceModel
    dataset: Dataset
    tree: GmrTree
    table: ScanTable


def build_world(spec: SynthSpec, gamma: int = 16, params: TreeParams = TreeParams(),
                space: Optional[SemanticSpaceModel] = None) -> World:
    data = synthesize(spec)
    if space is None:
        space = fit_semantic_space(
            data.train_text.feature_matrix(), data.train_image.feature_matrix(),
            data.train_text.labels(), spec.class_count, gamma,
            concept_names=[f"concept{i}" for i in range(spec.class_count)],
        )
    sem = embed_many(space, data.index.feature_matrix(), Modality.IMAGE)
    ds = data.index.with_semantics([SemanticVector(row) for row in sem])
    tree = bulk_load(ds, spec.class_count, params)
    return World(data, space, ds, tree, ScanTable.from_dataset(ds))


def make_queries(world: World, workload: WorkloadSpec) -> list[Query]:
    """Query locations are drawn from object locations; texts from random classes."""
    rng = np.random.default_rng(workload.seed)
    objs = world.dataset.objects
    c = world.space.class_count
    out = []
    for _ in range(workload.query_count):
        loc = objs[int(rng.integers(len(objs)))].location
        text = world.data.corpus.text_feature(rng, int(rng.integers(c)))
        out.append(Query(GeoPoint(*loc), text, workload.k, workload.mu))
    return out


def _runner(method: str, world: World) -> Callable:
    if method == "gmrtree-kgmcms":
        return lambda q: kgmcms(world.tree, world.space, q)
    if method == "gmrtree-exact":
        return lambda q: exact_top_k(world.tree, world.space, q)
    if method == "rtree-postfilter":
        return lambda q: rtree_postfilter(world.tree, world.space, q)
    if method == "linear-scan":
        def scan(q):
            t0 = time.perf_counter()
            res = brute_force(world.table, world.space, q, EXACT_SCORE)
            return res, SearchStats(objects_scored=len(world.table.ids), elapsed=time.perf_counter() - t0)
        return scan
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


@dataclass
class MethodReport:
    method: str
    dataset_size: int
    k: int
    mu: float
    mean_ms: float
    median_ms: float
    mean_nodes_visited: float
    mean_objects_scored: float
    recall: float
    precision: float
    truncated_queries: int
    confusion: list = field(default_factory=list)


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    divergence: dict = field(default_factory=dict)  # (size, k) -> fraction of queries where kgmcms != exact ids
    note: str = GROUND_TRUTH_NOTE

    def to_records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]

    def to_dict(self) -> dict:
        return {
            "note": self.note,
            "rows": self.to_records(),
            "kgmcms_vs_exact_divergence": [
                {"dataset_size": s, "k": k, "rate": v} for (s, k), v in sorted(self.divergence.items())
            ],
        }

    def table(self) -> str:
        head = f"{'method':<18}{'size':>9}{'k':>5}{'mean ms':>10}{'median ms':>11}{'nodes':>9}{'scored':>10}{'recall':>8}{'prec':>7}"
        lines = [f"# {self.note}", head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.method:<18}{r.dataset_size:>9}{r.k:>5}{r.mean_ms:>10.3f}{r.median_ms:>11.3f}"
                f"{r.mean_nodes_visited:>9.1f}{r.mean_objects_scored:>10.1f}{r.recall:>8.3f}{r.precision:>7.3f}"
            )
        for (s, k), v in sorted(self.divergence.items()):
            lines.append(f"# kgmcms vs exact top-k id-set divergence at size={s}, k={k}: {v:.3f}")
        return "\n".join(lines)


def _dominant(world: World, res) -> Optional[int]:
    if not res:
        return None
    return int(np.argmax(world.tree.objects[res[0].object_id].semantic.probabilities))


def run_benchmark(world: World, workload: WorkloadSpec, methods: Sequence[str] = METHODS,
                  report: Optional[BenchReport] = None) -> BenchReport:
    """Run every method over the workload: one warm-up pass, then one timed pass."""
    report = report if report is not None else BenchReport()
    runners = {m: _runner(m, world) for m in methods}
    queries = make_queries(world, workload)
    truth = [brute_force(world.table, world.space, q, EXACT_SCORE) for q in queries]
    c = world.space.class_count

    results: dict = {}
    for m, run in runners.items():
        for q in queries:
            run(q)
        times, nodes, scored, outs = [], [], [], []
        for q in queries:
            t0 = time.perf_counter()
            res, st = run(q)
            times.append((time.perf_counter() - t0) * 1000.0)
            nodes.append(st.nodes_visited)
            scored.append(st.objects_scored)
            outs.append((res, st))
        results[m] = outs
        hit = ret = rel = 0
        confusion = [[0] * (c + 1) for _ in range(c)]
        truncated = 0
        for (res, st), gt in zip(outs, truth):
            got = {r.object_id for r in res}
            want = {r.object_id for r in gt}
            hit += len(got & want)
            ret += len(got)
            rel += len(want)
            truncated += int(st.truncated)
            row = _dominant(world, gt)
            col = _dominant(world, res)
            confusion[row][c if col is None else col] += 1
        report.rows.append(MethodReport(
            m, len(world.dataset), workload.k, workload.mu,
            statistics.fmean(times), statistics.median(times),
            statistics.fmean(nodes), statistics.fmean(scored),
            hit / rel if rel else 1.0, hit / ret if ret else 1.0, truncated, confusion,
        ))
    if "gmrtree-kgmcms" in results and "gmrtree-exact" in results:
        diff = sum(
            {r.object_id for r in a[0]} != {r.object_id for r in b[0]}
            for a, b in zip(results["gmrtree-kgmcms"], results["gmrtree-exact"])
        )
        report.divergence[(len(world.dataset), workload.k)] = diff / len(queries)
    return report


def sweep(sizes: Sequence[int], ks: Sequence[int], workload: WorkloadSpec, spec_template: SynthSpec,
          methods: Sequence[str] = METHODS, gamma: int = 16, params: TreeParams = TreeParams(),
          progress: Optional[Callable[[str], None]] = None) -> BenchReport:
    """Dataset-size by k grid; one world per size, with the semantic space trained once."""
    report = BenchReport()
    space = None
    for n in sizes:
        spec = SynthSpec(**{**asdict(spec_template), "n": n})
        world = build_world(spec, gamma, params, space)
        space = world.space
        for k in ks:
            if progress:
                progress(f"size={n} k={k}")
            wl = WorkloadSpec(n, workload.query_count, k, workload.mu, workload.seed)
            run_benchmark(world, wl, methods, report)
    return report
