"""Query execution over a GMR-Tree, plus the linear-scan oracle.

Two search strategies are provided:

``kgmcms``
    Best-first nearest-neighbor traversal that skips subtrees whose signature
    does not cover the query signature, collects the first ``k`` matching
    objects in distance order, and ranks those by combined score.

``exact_top_k``
    Best-first traversal keyed by an upper bound on the combined score; it
    returns the ``k`` objects with the highest score among all indexed
    objects and applies no signature filter.

Ranking ties are always broken by (score desc, distance asc, id asc).
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from math import sqrt
from typing import Optional

import numpy as np

from .cosmat import SemanticSpaceModel, embed_text
from .gmrtree import GmrNode, GmrTree, Signature, signature_bits, unit_rows
from .model import Dataset, Query, ScoredResult
from .scoring import (
    ScoringContext,
    combined_score,
    delta_max_exact,
    delta_max_upper_bound,
    distance_proximity,
    distance_proximity_many,
    euclidean,
    euclidean_many,
    max_dist_to_mbr,
    min_dist_to_mbr,
    score_upper_bound_for_node,
)

NN_ORDER = "nnOrder"
EXACT_SCORE = "exactScore"

# queue kinds: at equal key a node is expanded before an object is emitted,
# so objects come out in (distance, id) order
_NODE = 0
_OBJECT = 1


@dataclass
class SearchStats:
    nodes_visited: int = 0
    objects_scored: int = 0
    signature_pruned: int = 0
    elapsed: float = 0.0
    truncated: bool = False


# --------------------------------------------------------------------------
# Nearest-neighbor cursor


class NearestNeighborCursor:
    """Incremental nearest-neighbor enumeration of signature-matching objects.

    Each call to :meth:`next` resumes the same priority queue, so successive
    calls yield objects in nondecreasing distance from ``location``.
    With ``prune=False`` the traversal ignores entry signatures and filters
    objects only when they are emitted.
    """

    def __init__(self, tree: GmrTree, location, query_sig: Signature,
                 stats: Optional[SearchStats] = None, prune: bool = True):
        if query_sig.length != tree.ell:
            raise ValueError(f"query signature length {query_sig.length} != tree ell {tree.ell}")
        self.tree = tree
        self.location = (float(location[0]), float(location[1]))
        self.qbits = query_sig.bits
        self.prune = prune
        self.stats = stats if stats is not None else SearchStats()
        self._queue: list = []
        if tree.root.entries:
            self._queue.append((0.0, _NODE, tree.root.node_id, tree.root))

    def __iter__(self):
        return self

    def __next__(self) -> tuple[int, float]:
        r = self.next()
        if r is None:
            raise StopIteration
        return r

    def next(self) -> Optional[tuple[int, float]]:
        """Return ``(object_id, distance)`` of the next matching object, or None when exhausted."""
        q = self._queue
        qx, qy = self.location
        qbits = self.qbits
        stats = self.stats
        obj_sigs = self.tree.object_sigs
        while q:
            key, kind, pid, payload = heapq.heappop(q)
            if kind == _OBJECT:
                if not self.prune and obj_sigs[pid] & qbits != qbits:
                    continue
                return pid, key
            stats.nodes_visited += 1
            node: GmrNode = payload
            for e in node.entries:
                if self.prune and e.sig & qbits != qbits:
                    stats.signature_pruned += 1
                    continue
                b = e.box
                if node.level == 0:
                    dx = b.minx - qx
                    dy = b.miny - qy
                    heapq.heappush(q, (sqrt(dx * dx + dy * dy), _OBJECT, e.child, None))
                else:
                    heapq.heappush(q, (min_dist_to_mbr(self.location, b), _NODE, e.child.node_id, e.child))
        return None


def nearest_neighbor(cursor: NearestNeighborCursor) -> Optional[int]:
    r = cursor.next()
    return None if r is None else r[0]


# --------------------------------------------------------------------------
# Helpers


def _check_query(tree_or_classes, space: SemanticSpaceModel, q: Query):
    if q.text_feature.dim != space.corr_proj.d_text:
        raise ValueError(f"query feature length {q.text_feature.dim} != model d_T {space.corr_proj.d_text}")
    if tree_or_classes != space.class_count:
        raise ValueError(f"index has {tree_or_classes} concepts, model has {space.class_count}")


def query_embedding(space: SemanticSpaceModel, q: Query) -> np.ndarray:
    return unit_rows(embed_text(space, q.text_feature).probabilities[None, :])[0]


def _similarity(u_obj: np.ndarray, u_q: np.ndarray) -> float:
    s = float((u_obj * u_q).sum())
    return 1.0 if s > 1.0 else (-1.0 if s < -1.0 else s)


def _similarity_many(U: np.ndarray, u_q: np.ndarray) -> np.ndarray:
    return np.clip((U * u_q).sum(axis=1), -1.0, 1.0)


def farthest_distance(tree: GmrTree, location) -> float:
    """Exact maximum object distance, found best-first on max-distance bounds."""
    heap = [(-max_dist_to_mbr(location, tree.root_box()), 0, tree.root.node_id, tree.root)]
    while heap:
        negkey, kind, _, payload = heapq.heappop(heap)
        if kind == 1:
            return -negkey
        for e in payload.entries:
            if payload.is_leaf:
                heapq.heappush(heap, (-euclidean(location, (e.box.minx, e.box.miny)), 1, e.child, None))
            else:
                heapq.heappush(heap, (-max_dist_to_mbr(location, e.box), 0, e.child.node_id, e.child))
    raise ValueError("empty tree")


def _tree_context(tree: GmrTree, q: Query, delta_mode: str) -> ScoringContext:
    if delta_mode == "corner":
        return ScoringContext(delta_max_upper_bound(q.location, tree.root_box()), q.mu)
    if delta_mode == "exact":
        return ScoringContext(farthest_distance(tree, q.location), q.mu)
    raise ValueError(f"unknown delta mode {delta_mode!r}")


def _score_object(tree: GmrTree, oid: int, dist: float, u_q: np.ndarray, ctx: ScoringContext) -> ScoredResult:
    sim = _similarity(tree.unit_semantic(oid), u_q)
    if dist > ctx.delta_max:
        dist_for_prox = ctx.delta_max
    else:
        dist_for_prox = dist
    dst = distance_proximity(dist_for_prox, ctx)
    return ScoredResult(oid, dist, dst, sim, combined_score(dst, sim, ctx.mu))


# --------------------------------------------------------------------------
# Searches


def kgmcms(tree: GmrTree, space: SemanticSpaceModel, q: Query, prune: bool = True,
           delta_mode: str = "corner") -> tuple[list[ScoredResult], SearchStats]:
    """Signature-filtered best-first kNN, rescored and ranked by combined score.

    Returns every matching object when fewer than ``k`` match; ``stats.truncated``
    is then set.
    """
    t0 = time.perf_counter()
    _check_query(tree.class_count, space, q)
    stats = SearchStats()
    if not tree.objects:
        stats.truncated = True
        return [], stats
    qsem = embed_text(space, q.text_feature).probabilities
    u_q = unit_rows(qsem[None, :])[0]
    qsig = Signature(signature_bits(qsem, tree.ell, tree.tau), tree.ell)
    ctx = _tree_context(tree, q, delta_mode)
    cursor = NearestNeighborCursor(tree, q.location, qsig, stats, prune=prune)
    results: list[ScoredResult] = []
    while len(results) < q.k:
        r = cursor.next()
        if r is None:
            stats.truncated = True
            break
        oid, dist = r
        results.append(_score_object(tree, oid, dist, u_q, ctx))
        stats.objects_scored += 1
    results.sort(key=ScoredResult.sort_key)
    stats.elapsed = time.perf_counter() - t0
    return results, stats


def exact_top_k(tree: GmrTree, space: SemanticSpaceModel, q: Query,
                delta_mode: str = "corner") -> tuple[list[ScoredResult], SearchStats]:
    """The ``k`` indexed objects with the highest combined score.

    Entries are expanded in order of their score upper bound; objects are
    scored exactly when dequeued. The search stops once the k-th confirmed
    result strictly beats every remaining bound, which keeps tie-breaking
    identical to the linear scan.
    """
    t0 = time.perf_counter()
    _check_query(tree.class_count, space, q)
    stats = SearchStats()
    if not tree.objects:
        stats.truncated = True
        return [], stats
    u_q = query_embedding(space, q)
    ctx = _tree_context(tree, q, delta_mode)
    mu, dmax = ctx.mu, ctx.delta_max
    loc = q.location
    qx, qy = loc
    # best-k kept as a max-heap on sort_key (worst on top)
    best: list = []
    k = q.k
    heap = [(-1.0, _NODE, tree.root.node_id, tree.root)]
    while heap:
        negbound, kind, pid, payload = heap[0]
        if len(best) == k and best[0][0][0] > -negbound:
            break
        heapq.heappop(heap)
        if kind == _OBJECT:
            r = _score_object(tree, pid, payload, u_q, ctx)
            stats.objects_scored += 1
            key = r.sort_key()
            item = (tuple(-x for x in key), r)
            if len(best) < k:
                heapq.heappush(best, item)
            elif key < tuple(-x for x in best[0][0]):
                heapq.heapreplace(best, item)
            continue
        stats.nodes_visited += 1
        node: GmrNode = payload
        for e in node.entries:
            b = e.box
            if node.level == 0:
                dx = b.minx - qx
                dy = b.miny - qy
                d = sqrt(dx * dx + dy * dy)
                dc = d if d <= dmax else dmax
                prox = 1.0 if dmax == 0.0 else 1.0 - dc / dmax
                heapq.heappush(heap, (-combined_score(prox, 1.0, mu), _OBJECT, e.child, d))
            else:
                heapq.heappush(heap, (-score_upper_bound_for_node(loc, b, ctx), _NODE, e.child.node_id, e.child))
    results = sorted((r for _, r in best), key=ScoredResult.sort_key)
    stats.truncated = len(results) < k
    stats.elapsed = time.perf_counter() - t0
    return results, stats


def rtree_postfilter(tree: GmrTree, space: SemanticSpaceModel, q: Query,
                     delta_mode: str = "corner") -> tuple[list[ScoredResult], SearchStats]:
    """Baseline: plain R-Tree kNN that ignores entry signatures and filters emitted objects."""
    return kgmcms(tree, space, q, prune=False, delta_mode=delta_mode)


# --------------------------------------------------------------------------
# Linear-scan oracle


@dataclass
class ScanTable:
    """Column arrays for a linear scan over an embedded dataset."""

    ids: np.ndarray
    xy: np.ndarray
    semantics: np.ndarray
    units: np.ndarray = None
    sig_params: Optional[tuple] = None
    sig_list: list = field(default_factory=list)

    def __post_init__(self):
        if self.units is None:
            self.units = unit_rows(self.semantics)

    def signatures(self, ell: int, tau: float) -> list:
        if self.sig_params != (ell, tau):
            self.sig_list = [signature_bits(row, ell, tau) for row in self.semantics]
            self.sig_params = (ell, tau)
        return self.sig_list

    @classmethod
    def from_dataset(cls, ds: Dataset, ell: Optional[int] = None, tau: Optional[float] = None) -> "ScanTable":
        if len(ds) == 0:
            raise ValueError("empty dataset")
        table = cls(ds.ids, np.ascontiguousarray(ds.locations), ds.semantic_matrix())
        if ell is not None:
            table.signatures(ell, tau)
        return table


def brute_force(ds, space: SemanticSpaceModel, q: Query, mode: str = EXACT_SCORE,
                ell: Optional[int] = None, tau: Optional[float] = None,
                delta_mode: str = "corner") -> list[ScoredResult]:
    """Score by direct enumeration.

    ``nnOrder``: keep objects whose signature covers the query signature,
    take the ``k`` nearest (ties by id), rank them by score. Needs ``ell`` and
    ``tau``. ``exactScore``: rank every object by score.
    ``delta_mode="corner"`` normalizes distances by the farthest corner of the
    dataset bounding box (what the index uses); ``"exact"`` by the farthest
    object.
    """
    if q.text_feature.dim != space.corr_proj.d_text:
        raise ValueError("query feature dimension does not match the model")
    table = ds if isinstance(ds, ScanTable) else ScanTable.from_dataset(
        ds, ell if mode == NN_ORDER else None, tau)
    qsem = embed_text(space, q.text_feature).probabilities
    u_q = unit_rows(qsem[None, :])[0]
    if delta_mode == "corner":
        lo = table.xy.min(axis=0)
        hi = table.xy.max(axis=0)
        dmax = delta_max_upper_bound(q.location, (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])))
    elif delta_mode == "exact":
        dmax = delta_max_exact(q.location, table.xy)
    else:
        raise ValueError(f"unknown delta mode {delta_mode!r}")
    ctx = ScoringContext(dmax, q.mu)

    dist = euclidean_many(q.location, table.xy)
    ids = table.ids
    if mode == NN_ORDER:
        if ell is None or tau is None:
            raise ValueError("nnOrder needs the signature length and threshold")
        qbits = signature_bits(qsem, ell, tau)
        sig_list = table.signatures(ell, tau)
        keep = np.array([s & qbits == qbits for s in sig_list], dtype=bool)
        idx = np.flatnonzero(keep)
        order = np.lexsort((ids[idx], dist[idx]))[: q.k]
        idx = idx[order]
    elif mode == EXACT_SCORE:
        idx = np.arange(len(ids))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    d = dist[idx]
    prox = distance_proximity_many(np.minimum(d, dmax), ctx)
    sim = _similarity_many(table.units[idx], u_q)
    score = ctx.mu * prox + (1.0 - ctx.mu) * sim
    if mode == EXACT_SCORE and q.k < len(idx):
        # keep everything tied with the k-th score, then order the survivors
        kth = np.partition(score, len(score) - q.k)[len(score) - q.k]
        cand = np.flatnonzero(score >= kth)
        idx, d, prox, sim, score = idx[cand], d[cand], prox[cand], sim[cand], score[cand]
    order = np.lexsort((ids[idx], d, -score))
    if mode == EXACT_SCORE:
        order = order[: q.k]
    return [
        ScoredResult(int(ids[idx[i]]), float(d[i]), float(prox[i]), float(sim[i]), float(score[i]))
        for i in order
    ]
