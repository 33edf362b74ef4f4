import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avsaliency import harness
from avsaliency.core import FixationFrame, SaliencyError, VideoCategory, ViewingGeometry, ZeroVariance
from avsaliency.fixations import density_map
from avsaliency.metrics import ScoreRecord

from .oracles import cc_oracle, nss_oracle

GEOM = ViewingGeometry(2.0)


def _frame(seed, h=16, w=16, n=6):
    rng = np.random.default_rng(seed)
    return FixationFrame(h, w, tuple(map(tuple, rng.integers(0, min(h, w), size=(n, 2)))))


# --- eval_frames ------------------------------------------------------------


def test_perfect_prediction_gives_unit_cc_sim():
    fix = {("v", k): _frame(k) for k in range(3)}
    dens = {k: density_map(f, GEOM) for k, f in fix.items()}
    records, missing = harness.eval_frames(dens, fix, dens)
    assert missing == 0
    for r in records:
        assert r.cc == pytest.approx(1.0, abs=1e-12)
        assert r.sim == pytest.approx(1.0, abs=1e-12)
        assert r.sauc is None


def test_missing_prediction_counted():
    fix = {("v", k): _frame(k) for k in range(3)}
    preds = {("v", 0): np.random.default_rng(0).random((16, 16)), ("v", 2): np.random.default_rng(1).random((16, 16))}
    records, missing = harness.eval_frames(preds, fix, geometry=GEOM)
    assert missing == 1 and [r.frame_idx for r in records] == [0, 2]
    report = harness.aggregate(records, missing=missing)
    assert report.overall.frames == 2 and report.missing == 1


def test_random_predictions_match_oracles():
    rng = np.random.default_rng(5)
    fix = {("v", k): _frame(10 + k) for k in range(4)}
    preds = {k: rng.random((16, 16)) for k in fix}
    dens = {k: density_map(f, GEOM) for k, f in fix.items()}
    records, _ = harness.eval_frames(preds, fix, dens)
    for r in records:
        k = (r.video_id, r.frame_idx)
        assert r.nss == pytest.approx(nss_oracle(preds[k], fix[k].points), abs=1e-9)
        assert r.cc == pytest.approx(cc_oracle(preds[k], dens[k]), abs=1e-9)


def test_prediction_is_resized_to_fixation_grid():
    fix = {("v", 0): FixationFrame(16, 24, ((8, 12),))}
    pred = np.zeros((2, 3))
    pred[1, 1] = 1.0
    (r,), _ = harness.eval_frames({("v", 0): pred}, fix, geometry=GEOM)
    assert r.nss is not None and r.auc_judd > 0.5


def test_degenerate_prediction_yields_absent_scores():
    fix = {("v", 0): _frame(0)}
    (r,), _ = harness.eval_frames({("v", 0): np.ones((16, 16))}, fix, geometry=GEOM)
    assert r.nss is None and r.cc is None
    assert r.auc_judd == 0.5
    assert r.sim is not None


# --- negatives --------------------------------------------------------------


def test_shuffled_negatives_policy():
    fix = {(f"v{v}", k): _frame(100 * v + k, n=3) for v in range(15) for k in range(5)}
    a = harness.shuffled_negatives(fix, seed=1)
    b = harness.shuffled_negatives(fix, seed=1)
    assert a == b
    neg = a[("v0", 2)]
    # drawn from 10 other videos at the same relative frame position
    sources = [fix[(f"v{v}", 2)] for v in range(1, 15)]
    pool = {p for f in sources for p in f.points}
    assert set(neg.points) <= pool
    assert 0 < len(neg) <= 30
    capped = harness.shuffled_negatives(fix, seed=1, cap=5)
    assert all(len(f) <= 5 for f in capped.values())


# --- aggregation ------------------------------------------------------------


def _rec(vid, k, nss):
    return ScoreRecord(vid, k, nss=nss, auc_judd=0.5, sauc=None, cc=0.1, sim=0.2)


def test_aggregate_frame_weighted():
    recs = [_rec("a", 0, 1.0), _rec("a", 1, 1.0), _rec("b", 0, 3.0)]
    cats = {"a": VideoCategory.NATURE, "b": VideoCategory.SOCIAL_EVENTS}
    rep = harness.aggregate(recs, cats)
    assert rep.per_category["Nature"].means["nss"] == 1.0
    assert rep.per_category["SocialEvents"].means["nss"] == 3.0
    assert rep.overall.means["nss"] == pytest.approx(5 / 3, abs=1e-12)
    assert rep.overall.means["sauc"] is None and rep.overall.absent["sauc"] == 3
    with pytest.raises(SaliencyError):
        harness.aggregate(recs, {"a": VideoCategory.NATURE})


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=30), st.randoms())
def test_aggregate_permutation_invariant(values, rnd):
    recs = [_rec(f"v{i % 3}", i, v) for i, v in enumerate(values)]
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    a, b = harness.aggregate(recs), harness.aggregate(shuffled)
    assert a.overall == b.overall and a.per_video == b.per_video
    assert a.overall.means["nss"] == pytest.approx(sum(values) / len(values), abs=1e-12)


def test_aggregate_constant():
    rep = harness.aggregate([_rec(f"v{i}", i, 2.5) for i in range(7)])
    assert rep.overall.means["nss"] == 2.5
    assert all(s.means["nss"] == 2.5 for s in rep.per_video.values())


# --- temporal ---------------------------------------------------------------


def test_temporal_identity_on_1000():
    seq = np.random.default_rng(0).random(1000)
    np.testing.assert_array_equal(harness.temporal_profile({"v": seq}), seq)


def test_temporal_ramp():
    curve = harness.temporal_profile({"v": np.linspace(0, 1, 50)})
    t = np.linspace(0, 1, 1000)
    assert np.max(np.abs(curve - t)) < 1e-9


def test_temporal_constant_and_mean(caplog):
    np.testing.assert_array_equal(harness.temporal_profile({"v": [1.0] * 7}), np.ones(1000))
    curve = harness.temporal_profile({"a": [0.0] * 5, "b": [2.0] * 9, "c": [5.0]})
    np.testing.assert_allclose(curve, 1.0)
    assert "excluded" in caplog.text
    with pytest.raises(SaliencyError):
        harness.temporal_profile({"c": [1.0]})


def test_moving_average():
    np.testing.assert_allclose(harness.moving_average(np.full(100, 3.0), 25), 3.0)
    ramp = np.arange(100.0)
    sm = harness.moving_average(ramp, 25)
    np.testing.assert_allclose(sm[12:-12], ramp[12:-12])
    assert sm.size == 100


# --- contextual -------------------------------------------------------------


def test_contextual_delta_peak():
    s = np.zeros((16, 16))
    s[4, 4] = 1.0
    fix = FixationFrame(16, 16, ((4, 4), (12, 12), (13, 2)))
    region = harness.SourceRegion("v", 0, 2, 2, 6, 6)
    c = harness.contextual_nss(s, fix, region)
    assert c.inside > c.full > c.outside
    assert (c.n_inside, c.n_outside) == (1, 2)
    z = (s - s.mean()) / s.std()
    assert c.inside == pytest.approx(z[4, 4], abs=1e-12)


def test_contextual_all_inside_and_errors():
    s = np.random.default_rng(0).random((8, 8))
    fix = FixationFrame(8, 8, ((1, 1), (2, 2)))
    c = harness.contextual_nss(s, fix, harness.SourceRegion("v", 0, 0, 0, 7, 7))
    assert c.outside is None and c.inside == pytest.approx(c.full, abs=1e-12)
    with pytest.raises(ZeroVariance):
        harness.contextual_nss(np.ones((8, 8)), fix, harness.SourceRegion("v", 0, 0, 0, 3, 3))
    with pytest.raises(SaliencyError):
        harness.contextual_nss(s, fix, harness.SourceRegion("v", 0, 0, 0, 8, 3))
    with pytest.raises(SaliencyError):
        harness.SourceRegion("v", 0, 5, 0, 3, 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_contextual_decomposition_identity(seed):
    rng = np.random.default_rng(seed)
    s = rng.random((16, 16))
    fix = FixationFrame(16, 16, tuple(map(tuple, rng.integers(0, 16, size=(12, 2)))))
    x0, y0 = rng.integers(0, 12, size=2)
    c = harness.contextual_nss(s, fix, harness.SourceRegion("v", 0, int(x0), int(y0), int(x0) + 4, int(y0) + 4))
    parts = [(n, v) for n, v in ((c.n_inside, c.inside), (c.n_outside, c.outside)) if n]
    assert c.full == pytest.approx(sum(n * v for n, v in parts) / (c.n_inside + c.n_outside), abs=1e-9)


def test_sources_csv_roundtrip(tmp_path):
    regs = [harness.SourceRegion("b", 3, 1, 2, 5, 6), harness.SourceRegion("a", 0, 0, 0, 1, 1)]
    harness.write_sources_csv(regs, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[:2] == [
        "video_id,frame_idx,x_min,y_min,x_max,y_max",
        "a,0,0,0,1,1",
    ]
    back = harness.read_sources_csv(tmp_path / "s.csv")
    assert back[("b", 3)] == regs[0]
    (tmp_path / "bad.csv").write_text("video_id,frame\n")
    with pytest.raises(SaliencyError):
        harness.read_sources_csv(tmp_path / "bad.csv")


# --- improvement and histogram ----------------------------------------------


def test_improvement_rate_cases():
    keys = [("v", i) for i in range(99)]
    a = {k: 1.0 for k in keys}
    assert harness.improvement_rate(a, a) == 0.0
    assert harness.improvement_rate({k: 2.0 for k in keys}, a) == 100.0
    b = {k: (2.0 if i < 53 else 0.0) for i, k in enumerate(keys)}
    assert harness.improvement_rate(b, a) == pytest.approx(53.5, abs=0.1)
    with pytest.raises(SaliencyError):
        harness.improvement_rate(a, {keys[0]: 1.0})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=40), st.integers(0, 100))
def test_improvement_rate_complement(vals, shift):
    a = {("v", i): float(v) for i, v in enumerate(vals)}
    b = {("v", i): float(vals[(i + shift) % len(vals)]) for i in range(len(vals))}
    total = harness.improvement_rate(a, b) + harness.improvement_rate(b, a)
    ties = any(a[k] == b[k] for k in a)
    assert total <= 100 + 1e-12
    assert (abs(total - 100) < 1e-9) == (not ties)


def test_histogram_cases():
    h = harness.score_histogram([0.5], 4, (0, 1))
    assert h.counts.tolist() == [0, 0, 1, 0]
    h = harness.score_histogram([0.05, 0.15, 0.25, 0.35], 4, (0, 0.4))
    assert h.counts.tolist() == [1, 1, 1, 1]
    h = harness.score_histogram([-10, 10, None], 2, (0, 1))
    assert h.counts.tolist() == [1, 1] and h.mean == 0.0
    with pytest.raises(SaliencyError):
        harness.score_histogram([], 3, (0, 1))


def test_histogram_matches_bruteforce():
    rng = np.random.default_rng(3)
    scores = rng.normal(1, 2, 500).tolist()
    lo, hi, n = -2.0, 4.0, 12
    h = harness.score_histogram(scores, n, (lo, hi))
    width = (hi - lo) / n
    brute = [0] * n
    for s in scores:
        i = 0
        while i < n - 1 and s >= lo + (i + 1) * width:
            i += 1
        brute[i] += 1
    assert h.counts.tolist() == brute
    assert h.mean == pytest.approx(sum(scores) / len(scores), abs=1e-12)


# --- report output ----------------------------------------------------------


def _report():
    recs = [
        ScoreRecord("a", 0, nss=1.23456789, auc_judd=0.8, sauc=None, cc=0.5, sim=0.4),
        ScoreRecord("a", 1, nss=2.0, auc_judd=0.9, sauc=0.7, cc=None, sim=0.3),
        ScoreRecord("b", 0, nss=-0.5, auc_judd=0.6, sauc=0.55, cc=0.1, sim=0.2),
    ]
    cats = {"a": VideoCategory.NATURE, "b": VideoCategory.MISCELLANEOUS}
    return harness.aggregate(recs, cats, missing=2, metadata={"model": "toy", "seed": 3})


def test_emit_report_deterministic(tmp_path):
    files_a = harness.emit_report(_report(), tmp_path / "a")
    files_b = harness.emit_report(_report(), tmp_path / "b")
    assert [p.name for p in files_a] == ["report.csv", "frames.csv", "report.json", "report.svg"]
    for pa, pb in zip(files_a, files_b):
        assert pa.read_bytes() == pb.read_bytes()


def test_report_contents(tmp_path):
    harness.emit_report(_report(), tmp_path)
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "model,scope,nss,auc_judd,sauc,cc,sim,frames,missing"
    assert lines[1].startswith("toy,overall,0.9115,0.7667,0.6250,0.3000,0.3000,3,2")
    assert lines[2].startswith("toy,category:Nature,1.6173,0.8500,0.7000,0.5000,0.3500,2,")
    assert any(l.startswith("toy,video:b,") for l in lines)
    frames = (tmp_path / "frames.csv").read_text().splitlines()
    assert frames[1] == "a,0,1.23456789,0.8,,0.5,0.4"
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["frames"][0]["sauc"] is None
    assert doc["frames"][0]["nss"] == 1.23456789
    back = harness.read_frame_scores(tmp_path / "frames.csv")
    assert back == _report().records


def test_svg_line_plot_has_1000_vertices():
    svg = harness.svg_line_plot({"AV & co": np.linspace(0, 1, 1000)}, title="t<1>")
    poly = svg.split('points="')[1].split('"')[0]
    assert len(poly.split(" ")) == 1000
    assert "AV &amp; co" in svg and "t&lt;1&gt;" in svg


def test_svg_histogram_and_bars():
    h = harness.score_histogram([0.1, 0.2, 0.9], 5, (0, 1))
    assert harness.svg_histogram(h).count("<rect") == 6
    svg = harness.svg_bar_chart({"Nature": {"in": 2.0, "out": -0.5}, "Misc": {"in": 1.0}})
    assert svg.count("<rect") == 4


def test_emit_report_rejects_unknown_format(tmp_path):
    with pytest.raises(SaliencyError):
        harness.emit_report(_report(), tmp_path, formats=["xml"])
