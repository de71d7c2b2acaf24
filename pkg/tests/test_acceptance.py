"""Acceptance criteria; each test prints one [PASS]/[FAIL] line through the ``record`` fixture."""

import math
import time

import numpy as np
import pytest

from geomcm.bench import WorkloadSpec, build_world, sweep
from geomcm.cosmat import (
    FitTrace, _augment, embed_text, fit_corr_proj, fit_logs_tran, load_space, logistic_gradient, logistic_loss,
    project_image, project_text, save_space, to_semantic_many,
)
from geomcm.gmrtree import TreeParams, audit_tree, load_tree, save_tree
from geomcm.model import Query
from geomcm.search import (
    EXACT_SCORE, NN_ORDER, NearestNeighborCursor, ScanTable, brute_force, exact_top_k, kgmcms, query_embedding,
)
from geomcm.synth import SynthSpec

from helpers import ids_scores, random_instance
from oracles import cca_leading_corr_power, naive_cosine, numeric_gradient, sample_correlation

pytestmark = pytest.mark.slow


def _same(got, want, tol):
    if sorted(r.object_id for r in got) != sorted(r.object_id for r in want):
        return False
    return all(abs(a.score - b.score) <= tol for a, b in zip(got, want))


def _equivalence_sweep(space, corpus, search, mode, tol, seed):
    rng = np.random.default_rng(seed)
    bad = []
    t0 = time.perf_counter()
    for i in range(1000):
        inst = random_instance(rng, corpus, space, n_max=2000)
        t = inst.tree
        got, _ = search(t, space, inst.query)
        want = brute_force(ScanTable.from_dataset(inst.dataset), space, inst.query, mode, t.ell, t.tau)
        if not _same(got, want, tol):
            bad.append(i)
    return bad, time.perf_counter() - t0


def test_kgmcms_matches_filtered_scan(space, corpus, record):
    bad, secs = _equivalence_sweep(space, corpus, kgmcms, NN_ORDER, 1e-9, 100)
    ok = not bad and secs < 120
    record("1 kgmcms == brute_force(nnOrder)", ok,
           f"1000 instances, {len(bad)} mismatches, {secs:.1f}s (budget 120s)")
    assert ok, bad[:10]


def test_exact_matches_full_scan(space, corpus, record):
    bad, secs = _equivalence_sweep(space, corpus, exact_top_k, EXACT_SCORE, 1e-12, 200)
    ok = not bad and secs < 120
    record("2 exact_top_k == brute_force(exactScore)", ok,
           f"1000 instances, {len(bad)} mismatches, {secs:.1f}s (budget 120s)")
    assert ok, bad[:10]


def test_nearest_neighbor_order(space, corpus, record):
    rng = np.random.default_rng(300)
    bad = 0
    emitted = 0
    for _ in range(200):
        inst = random_instance(rng, corpus, space, n_max=2000)
        t = inst.tree
        qsig = t.signature_of(embed_text(space, inst.query.text_feature))
        prev = -math.inf
        for _, d in NearestNeighborCursor(t, inst.query.location, qsig):
            emitted += 1
            if d < prev:
                bad += 1
            prev = d
    record("3 NN emission nondecreasing in distance", bad == 0,
           f"200 trees, {emitted} emissions, {bad} inversions")
    assert bad == 0


def test_audit_and_no_lost_matches(space, corpus, record):
    rng = np.random.default_rng(400)
    audit_fail = lost = 0
    for _ in range(200):
        inst = random_instance(rng, corpus, space, n_max=2000)
        t = inst.tree
        if audit_tree(t):
            audit_fail += 1
        qsig = t.signature_of(embed_text(space, inst.query.text_feature))
        want = {oid for oid, bits in t.object_sigs.items() if bits & qsig.bits == qsig.bits}
        got = {oid for oid, _ in NearestNeighborCursor(t, inst.query.location, qsig)}
        lost += len(want - got)
    ok = audit_fail == 0 and lost == 0
    record("4 audit_tree passes, no matching object pruned", ok,
           f"200 trees, {audit_fail} audit failures, {lost} lost objects")
    assert ok


def test_cca_leading_correlation(record):
    rng = np.random.default_rng(500)
    worst_gap = 0.0
    beaten = 0
    for _ in range(20):
        dt, di = rng.integers(4, 17, size=2)
        z = rng.standard_normal((500, 2))
        X = z @ rng.standard_normal((2, dt)) + rng.standard_normal((500, dt)) * rng.uniform(0.5, 3)
        Y = z @ rng.standard_normal((2, di)) + rng.standard_normal((500, di)) * rng.uniform(0.5, 3)
        m = fit_corr_proj(X, Y, 1, ridge=0.0)
        rho = m.correlations[0]
        worst_gap = max(worst_gap, abs(rho - cca_leading_corr_power(X, Y, 0.0)))
        # the fitted directions realize rho on the data
        worst_gap = max(worst_gap, abs(rho - sample_correlation(project_text(m, X)[:, 0], project_image(m, Y)[:, 0])))
        best = 0.0
        for _ in range(100):
            a = rng.standard_normal(dt)
            b = rng.standard_normal(di)
            best = max(best, abs(sample_correlation(X @ (a / np.linalg.norm(a)), Y @ (b / np.linalg.norm(b)))))
        beaten += int(rho > best)
    ok = worst_gap <= 1e-6 and beaten == 20
    record("5 CCA leading correlation", ok,
           f"20 pairings, max |rho - oracle| {worst_gap:.2e} (tol 1e-6), beats random pairs in {beaten}/20")
    assert ok


def test_logistic_regression(record):
    rng = np.random.default_rng(600)
    Xa = _augment(rng.standard_normal((60, 5)))
    y = rng.integers(4, size=60)
    worst = 0.0
    for _ in range(10):
        W = rng.standard_normal((4, 6))
        num = numeric_gradient(lambda w: logistic_loss(w, Xa, y, 1e-2), W)
        ana = logistic_gradient(W, Xa, y, 1e-2)
        worst = max(worst, float(np.abs(num - ana).max() / max(np.abs(ana).max(), 1e-12)))
    tr = FitTrace([], 0, False)
    fit_logs_tran(Xa[:, :-1], y, 4, trace=tr)
    monotone = all(b <= a for a, b in zip(tr.losses, tr.losses[1:]))
    Z = np.concatenate([rng.normal(-2, 0.3, (50, 3)), rng.normal(2, 0.3, (50, 3)), rng.normal(0, 0.3, (50, 3)) + [6, -6, 0]])
    labels = np.repeat([0, 1, 2], 50)
    acc = float((to_semantic_many(fit_logs_tran(Z, labels, 3), Z).argmax(1) == labels).mean())
    ok = worst <= 1e-4 and monotone and acc == 1.0
    record("6 logistic regression", ok,
           f"grad rel err {worst:.1e} (tol 1e-4), loss monotone over {len(tr.losses)} steps: {monotone}, "
           f"separable accuracy {acc}")
    assert ok


def test_mu_extremes(space, corpus, record):
    rng = np.random.default_rng(700)
    fails = {0.0: 0, 1.0: 0}
    for mu in (0.0, 1.0):
        for _ in range(100):
            inst = random_instance(rng, corpus, space, n_max=2000, mu=mu)
            q = inst.query
            got = {r.object_id for r in exact_top_k(inst.tree, space, q)[0]}
            u = query_embedding(space, q)
            rows = []
            for o in inst.dataset.objects:
                d = math.dist(q.location, o.location)
                rows.append((-naive_cosine(u, o.semantic.probabilities), d, o.id) if mu == 0.0 else (d, o.id))
            want = {r[-1] for r in sorted(rows)[: q.k]}
            fails[mu] += int(got != want)
    ok = fails[0.0] == 0 and fails[1.0] == 0
    record("7 mu extremes reduce to pure rankings", ok,
           f"mu=0 vs cosine: {fails[0.0]}/100 differ; mu=1 vs distance: {fails[1.0]}/100 differ")
    assert ok


def test_scaling(record):
    t0 = time.perf_counter()
    template = SynthSpec(n=1000, class_count=10, d_text=32, d_image=48, seed=0)
    methods = ("gmrtree-kgmcms", "gmrtree-exact", "linear-scan")
    report = sweep((10_000, 20_000, 50_000, 100_000), (10,), WorkloadSpec(0, 50, 10, 0.5, 0), template, methods)
    secs = time.perf_counter() - t0
    rows = {(r.method, r.dataset_size): r for r in report.rows}
    fewer = all(
        rows[(m, n)].mean_objects_scored < rows[("linear-scan", n)].mean_objects_scored
        for n in (10_000, 20_000, 50_000, 100_000) for m in ("gmrtree-kgmcms", "gmrtree-exact")
    )
    fast = rows[("gmrtree-kgmcms", 100_000)].mean_ms < rows[("linear-scan", 100_000)].mean_ms
    ok = fewer and fast and secs < 600
    scored = ", ".join(f"{n // 1000}k: {rows[('gmrtree-kgmcms', n)].mean_objects_scored:.0f}/"
                       f"{rows[('gmrtree-exact', n)].mean_objects_scored:.0f}"
                       for n in (10_000, 20_000, 50_000, 100_000))
    record("8 scaling", ok,
           f"objects scored kgmcms/exact ({scored}) vs n for scan; at 100k kgmcms "
           f"{rows[('gmrtree-kgmcms', 100_000)].mean_ms:.3f} ms vs scan {rows[('linear-scan', 100_000)].mean_ms:.3f} ms; "
           f"{secs:.0f}s (budget 600s)")
    assert ok


def test_persistence_round_trip(tmp_path, record):
    world = build_world(SynthSpec(n=5000, class_count=6, d_text=12, d_image=16, seed=9, n_train=600), 6,
                        TreeParams(fanout_max=16, sig_length=32))
    save_tree(world.tree, tmp_path / "i.npz")
    save_space(world.space, tmp_path / "m.json")
    tree, space = load_tree(tmp_path / "i.npz"), load_space(tmp_path / "m.json")
    rng = np.random.default_rng(900)
    diffs = 0
    for _ in range(50):
        loc = world.dataset.objects[int(rng.integers(len(world.dataset)))].location
        q = Query(loc, world.data.corpus.text_feature(rng, int(rng.integers(6))), int(rng.choice([1, 5, 10, 50])),
                  float(rng.choice([0.0, 0.5, 1.0])))
        for search in (kgmcms, exact_top_k):
            a = search(world.tree, world.space, q)[0]
            b = search(tree, space, q)[0]
            diffs += int(ids_scores(a) != ids_scores(b) or [r.distance for r in a] != [r.distance for r in b])
    record("9 index and model save/load round trip", diffs == 0, f"50 queries x 2 methods, {diffs} differ")
    assert diffs == 0
