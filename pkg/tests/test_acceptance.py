"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with `pytest -s tests/test_acceptance.py -v` to see the lines as
they print.  The desk-scale scenario (criteria 6 to 9) is one seeded
2,000-frame synthetic dataset with the medium noise profile and 5%
planted annotation deletions, built once per session.
"""

import hashlib
import math
import shutil
import time
from contextlib import contextmanager
from types import SimpleNamespace

import numpy as np
import pytest

from lidarqc.audit import build_proposals, planted_deletion_recall
from lidarqc.cli import main as cli_main
from lidarqc.dataio import FeatureTable, RawDetection, read_frames
from lidarqc.features import (
    LMD_FEATURES,
    compute_features,
    feature_set,
    select_columns,
    spec_box,
    spec_lmd,
    spec_score,
)
from lidarqc.geometry import OrientedBox3D, PointCloud, iou_3d, iou_bev
from lidarqc.metrics import auroc, calibration, pearson, r_squared
from lidarqc.models import fit, predict
from lidarqc.nms import greedy_nms, match_to_gt
from lidarqc.selection import greedy_select
from lidarqc.synth import (
    generate_synthetic_dataset,
    profile_config,
    read_deletion_sidecar,
)
from oracles import brute_force_auroc, mc_iou_3d, mc_iou_bev, random_box_params

SCENARIO_SEED = 7
MODEL_SEED = 1


@contextmanager
def criterion(num: int, label: str):
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {num:2d} FAIL: {label}")
        raise
    print(f"ACCEPTANCE {num:2d} PASS: {label}")


def build_table(manifest, split) -> FeatureTable:
    rows = []
    for frame in read_frames(manifest, split=split):
        nms = greedy_nms(frame.detections)
        survivors = [frame.detections[i] for i in nms.survivors]
        matches = match_to_gt(survivors, frame.ground_truth)
        rows.extend(compute_features(frame, nms, matches))
    return FeatureTable.from_rows(rows, LMD_FEATURES)


@pytest.fixture(scope="session")
def scenario(tmp_path_factory):
    """Seeded 2,000-frame medium-noise run: tables, GB models, metrics."""
    started = time.monotonic()
    out = tmp_path_factory.mktemp("acceptance_ds")
    config = profile_config("medium", n_frames=2000, deletion_rate=0.05)
    manifest = generate_synthetic_dataset(config, SCENARIO_SEED, out)
    train = build_table(manifest, "train-meta")
    test = build_table(manifest, "test-meta")

    cls_auroc = {}
    reg_r2 = {}
    lmd_probs = None
    lmd_estimates = None
    for spec in (spec_score(), spec_box(), spec_lmd()):
        tr = train.select(spec.feature_names)
        te = test.select(spec.feature_names)
        clf = fit("classification", "gbt", tr.values, tr.tp, spec.feature_names,
                  seed=MODEL_SEED)
        probs = predict(clf, te.values)
        cls_auroc[spec.name] = auroc(probs, te.tp)
        reg = fit("regression", "gbt", tr.values, tr.iou, spec.feature_names,
                  seed=MODEL_SEED)
        estimates = predict(reg, te.values)
        reg_r2[spec.name] = r_squared(estimates, te.iou)
        if spec.name == "lmd":
            lmd_probs = probs
            lmd_estimates = estimates
    elapsed = time.monotonic() - started
    return SimpleNamespace(
        manifest=manifest,
        train=train,
        test=test,
        cls_auroc=cls_auroc,
        reg_r2=reg_r2,
        lmd_probs=lmd_probs,
        lmd_estimates=lmd_estimates,
        elapsed=elapsed,
    )


def test_criterion_1_geometry_oracle():
    with criterion(1, "BEV and 3D IoU within 1e-2 of the 1e6-sample MC oracle"):
        started = time.monotonic()
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(100):
            pa = random_box_params(rng)
            pb = random_box_params(rng)
            a = OrientedBox3D(*pa)
            b = OrientedBox3D(*pb)
            err_bev = abs(iou_bev(a, b) - mc_iou_bev(pa, pb, 1_000_000, rng))
            err_3d = abs(iou_3d(a, b) - mc_iou_3d(pa, pb, 1_000_000, rng))
            worst = max(worst, err_bev, err_3d)
            assert err_bev <= 1e-2
            assert err_3d <= 1e-2
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s"


def test_criterion_2_nms_partition_invariant():
    with criterion(2, "pre-image partition holds on 1,000 fuzzed frames"):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            n = int(rng.integers(0, 35))
            detections = []
            for i in range(n):
                box = OrientedBox3D(
                    rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-1, 1),
                    rng.uniform(0.5, 5), rng.uniform(0.5, 5), rng.uniform(0.5, 2.5),
                    rng.uniform(-math.pi, math.pi),
                )
                detections.append(
                    RawDetection("f", i, box, float(rng.uniform(0, 1)), (1.0,))
                )
            result = greedy_nms(detections, score_floor=0.1)
            above = sum(1 for d in detections if d.score >= 0.1)
            sizes = [len(result.prop_members(s)) for s in result.survivors]
            assert sum(sizes) == above
            assert all(size >= 1 for size in sizes)


def test_criterion_3_feature_cardinality():
    with criterion(3, "feature sets have exactly 90 / 9 / 1 entries"):
        assert len(spec_lmd().feature_names) == 90
        assert len(spec_box().feature_names) == 9
        assert len(spec_score().feature_names) == 1
        # And on a computed row, not just the registry.
        from lidarqc.dataio import FrameBundle

        frame = FrameBundle(
            "f", PointCloud("f", np.array([[0.0, 0.0, 0.0, 0.5]])), [],
            [RawDetection("f", 0, OrientedBox3D(0, 0, 0, 1, 1, 1, 0), 0.9, (1.0,))],
        )
        nms = greedy_nms(frame.detections)
        rows = compute_features(frame, nms)
        assert len(rows[0].values) == 90
        assert len(select_columns(rows, spec_box())[0].values) == 9
        assert len(select_columns(rows, spec_score())[0].values) == 1


def test_criterion_4_hand_pinned_feature_row():
    with criterion(4, "unit-cube example reproduces point statistics to 1e-12"):
        from lidarqc.dataio import FrameBundle

        inside = [
            (0.1, 0.1, 0.0, 0.2),
            (-0.2, 0.0, 0.1, 0.4),
            (0.3, -0.3, -0.2, 0.4),
            (0.0, 0.2, 0.3, 0.6),
        ]
        outside = [(30.0, 0, 0, 0.9)] * 4
        pts = np.array(inside + outside)
        frame = FrameBundle(
            "f", PointCloud("f", pts), [],
            [RawDetection("f", 0, OrientedBox3D(0, 0, 0, 1, 1, 1, 0), 0.9, (1.0,))],
        )
        row = compute_features(frame, greedy_nms(frame.detections))[0]
        assert row.values["point_count"] == 4.0
        assert row.values["point_fraction"] == 0.5
        assert abs(row.values["refl_max"] - 0.6) <= 1e-12
        assert abs(row.values["refl_mean"] - 0.4) <= 1e-12
        assert abs(row.values["refl_std"] - math.sqrt(0.02)) <= 1e-12


def test_criterion_5_metric_oracles():
    with criterion(5, "AUROC matches brute force; hand metric examples hold to 1e-12"):
        rng = np.random.default_rng(505)
        for _ in range(10):
            scores = np.round(rng.uniform(0, 1, 200), 2)
            labels = rng.integers(0, 2, 200)
            labels[:2] = [0, 1]
            assert abs(auroc(scores, labels) - brute_force_auroc(scores, labels)) <= 1e-12

        probs = np.concatenate([np.full(100, 0.25), np.full(100, 0.75)])
        labels = np.concatenate([np.repeat([1, 0], [25, 75]), np.repeat([1, 0], [75, 25])])
        ece, mce, _ = calibration(probs, labels, bins=10)
        assert abs(ece) <= 1e-12 and abs(mce) <= 1e-12
        ece, mce, _ = calibration(np.full(40, 0.9), np.zeros(40), bins=10)
        assert abs(ece - 0.9) <= 1e-12 and abs(mce - 0.9) <= 1e-12

        assert abs(r_squared([0.5, 0.5], [0.0, 1.0]) - 0.0) <= 1e-12
        assert abs(pearson([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) - math.sqrt(27.0 / 28.0)) <= 1e-12


def test_criterion_6_feature_set_ordering(scenario):
    with criterion(6, "GB metrics order score <= box <= LMD with margin, under 10 min"):
        a = scenario.cls_auroc
        r = scenario.reg_r2
        assert a["score"] <= a["box"] <= a["lmd"], f"AUROC ordering violated: {a}"
        assert a["lmd"] - a["score"] >= 0.02, f"AUROC margin too small: {a}"
        assert r["score"] <= r["box"] <= r["lmd"], f"R^2 ordering violated: {r}"
        assert scenario.elapsed < 600.0, f"pipeline took {scenario.elapsed:.0f}s"


def test_criterion_7_calibration_improvement(scenario):
    with criterion(7, "GB meta classifier calibrates no worse than the raw score"):
        ece_score, _, _ = calibration(scenario.test.column("score"), scenario.test.tp, bins=10)
        ece_gb, _, _ = calibration(scenario.lmd_probs, scenario.test.tp, bins=10)
        assert ece_gb <= ece_score, f"ECE got worse: gb={ece_gb:.4f} score={ece_score:.4f}"


SELECTION_HYPER = {"n_trees": 50, "max_depth": 3, "learning_rate": 0.1, "min_leaf": 60}


def test_criterion_8_greedy_selection_saturation(scenario):
    with criterion(8, "budget-10 selection lands within 0.01 of the full set"):
        sub_train = scenario.train.subset(np.arange(min(2500, len(scenario.train))))
        for task in ("classification", "regression"):
            trace = greedy_select(
                sub_train, scenario.test, budget=10, task=task, family="gbt",
                hyper=SELECTION_HYPER, seed=2,
            )
            gap = abs(trace.steps[-1][1] - trace.full_set_value)
            assert gap <= 0.01, f"{task} saturation gap {gap:.4f}"

        # Planted oracle feature: a copy of the target must be picked first.
        rng = np.random.default_rng(88)
        y = rng.uniform(0, 1, 300)
        values = np.column_stack([y, rng.normal(size=300), rng.normal(size=300)])
        mk = lambda prefix: FeatureTable(
            feature_names=("oracle", "noise_a", "noise_b"),
            frame_ids=[f"{prefix}{i}" for i in range(300)],
            box_ids=np.arange(300),
            values=values,
            iou=y,
            tp=(y >= 0.5).astype(int),
        )
        trace = greedy_select(
            mk("tr"), mk("ev"), budget=1, task="regression", family="gbt",
            hyper={"n_trees": 60, "learning_rate": 0.3, "min_leaf": 1}, seed=3,
        )
        assert trace.selected[0] == "oracle"
        assert trace.steps[0][1] > 0.95


def test_criterion_9_audit_efficacy(scenario):
    with criterion(9, "planted-deletion recall@50: lmd beats random 3x; proposals all FP"):
        deletions = [
            d for d in read_deletion_sidecar(scenario.manifest)
            if d.frame_id in set(scenario.test.frame_ids)
        ]
        assert deletions, "scenario should plant deletions in the test split"
        lmd = build_proposals(scenario.test, scenario.lmd_estimates, "lmd", k=50)
        rnd = build_proposals(scenario.test, None, "random", k=50, seed=3)
        recall_lmd = planted_deletion_recall(lmd, deletions, 50)
        recall_rnd = planted_deletion_recall(rnd, deletions, 50)
        assert all(p.iou < 0.5 for p in lmd)
        assert all(p.iou < 0.5 for p in rnd)
        assert recall_lmd >= 3.0 * max(recall_rnd, 1.0 / len(deletions)), (
            f"lmd recall {recall_lmd:.4f} vs random {recall_rnd:.4f}"
        )


def _tree_digest(root) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(str(path.relative_to(root)).encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def test_criterion_10_pipeline_determinism(tmp_path):
    with criterion(10, "same seed twice yields byte-identical artifacts"):
        base = tmp_path / "run"

        def pipeline() -> str:
            steps = [
                ["synth", "--out-dir", base / "ds", "--profile", "medium",
                 "--frames", "40", "--seed", "19", "--deletion-rate", "0.1"],
                ["features", "--manifest", base / "ds" / "manifest.json",
                 "--out-dir", base / "train", "--split", "train-meta"],
                ["features", "--manifest", base / "ds" / "manifest.json",
                 "--out-dir", base / "test", "--split", "test-meta"],
                ["fit", "--table", base / "train" / "features.tsv",
                 "--out-dir", base / "model", "--task", "regression",
                 "--family", "gbt", "--hyper", "n_trees=30", "--seed", "5"],
                ["eval", "--table", base / "test" / "features.tsv",
                 "--model", base / "model" / "model.json", "--out-dir", base / "eval"],
                ["audit", "--table", base / "test" / "features.tsv",
                 "--model", base / "model" / "model.json", "--out-dir", base / "audit",
                 "--method", "lmd", "--k", "25", "--seed", "5"],
            ]
            for argv in steps:
                assert cli_main([str(a) for a in argv]) == 0
            return _tree_digest(base)

        first = pipeline()
        shutil.rmtree(base)
        second = pipeline()
        assert first == second


def test_criterion_11_served_review_round_trip(tmp_path):
    """Secondary-component server side: scripted 10-verdict session."""
    import json
    import threading
    import urllib.request

    from lidarqc.audit import read_proposals
    from lidarqc.dataio import load_manifest
    from lidarqc.server import ReviewState, make_server

    with criterion(11, "scripted review session: 7/2/1 verdicts summarize as 7/10"):
        base = tmp_path
        steps = [
            ["synth", "--out-dir", base / "ds", "--profile", "medium",
             "--frames", "30", "--seed", "23", "--deletion-rate", "0.15"],
            ["features", "--manifest", base / "ds" / "manifest.json",
             "--out-dir", base / "train", "--split", "train-meta"],
            ["features", "--manifest", base / "ds" / "manifest.json",
             "--out-dir", base / "test", "--split", "test-meta"],
            ["fit", "--table", base / "train" / "features.tsv",
             "--out-dir", base / "model", "--task", "regression",
             "--family", "gbt", "--hyper", "n_trees=30", "--seed", "5"],
            ["audit", "--table", base / "test" / "features.tsv",
             "--model", base / "model" / "model.json", "--out-dir", base / "audit",
             "--method", "lmd", "--k", "12", "--seed", "5"],
        ]
        for argv in steps:
            assert cli_main([str(a) for a in argv]) == 0

        state = ReviewState(
            proposals=read_proposals(base / "audit" / "proposals.jsonl"),
            manifest=load_manifest(base / "ds" / "manifest.json"),
            ledger_path=base / "ledger.jsonl",
        )
        assert len(state.proposals) >= 10
        server = make_server(state, port=0)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_address[1]}"
            decisions = (
                [("annotation_error", "missing_label")] * 7
                + [("not_error", "none")] * 2
                + [("unsure", "none")]
            )
            for rank, (decision, kind) in enumerate(decisions, start=1):
                payload = json.dumps(
                    {"method": "lmd", "rank": rank, "decision": decision, "kind": kind}
                ).encode()
                req = urllib.request.Request(
                    f"{url}/v1/verdicts", data=payload,
                    headers={"Content-Type": "application/json"}, method="POST",
                )
                with urllib.request.urlopen(req, timeout=10) as resp:
                    assert resp.status == 200
            with urllib.request.urlopen(f"{url}/v1/summary", timeout=10) as resp:
                summary = json.loads(resp.read())
            overall = summary["methods"]["lmd"]["overall"]
            assert overall == {"errors": 7, "reviewed": 10}
        finally:
            server.shutdown()
            server.server_close()
