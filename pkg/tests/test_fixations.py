import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avsaliency.core import EmptyFixations, FixationFrame, FixationRecord, SaliencyError, ViewingGeometry
from avsaliency.fixations import (
    DensityMapTransformer,
    MEPBaseline,
    SubjectSplit,
    SynthClipSpec,
    area_downsample,
    center_bias_corpus,
    density_map,
    human_infinite,
    mep,
    split_per_video,
    split_subjects,
    synth_dataset,
)

GEOM = ViewingGeometry(2.0)


def test_density_single_point_closed_form():
    d = density_map(FixationFrame(21, 21, ((10, 10),)), GEOM)
    # direct construction of the truncated kernel
    yy, xx = np.mgrid[0:21, 0:21]
    r2 = (yy - 10) ** 2 + (xx - 10) ** 2
    ref = np.where(r2 <= 64, np.exp(-r2 / 8.0), 0.0)
    np.testing.assert_allclose(d, ref / ref.sum(), atol=1e-15)
    assert d[10, 10] == d.max()
    assert d[10, 0] == 0.0 and d[10, 2] > 0


def test_density_empty_raises():
    with pytest.raises(EmptyFixations):
        density_map(FixationFrame(5, 5), GEOM)


def test_density_two_equal_modes():
    d = density_map(FixationFrame(20, 40, ((10, 10), (10, 30))), GEOM)
    assert d[10, 10] == pytest.approx(d[10, 30], abs=1e-15)
    assert d.sum() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
# kernel radius is 8 px, so points stay clear of the border
@given(st.integers(13, 26), st.integers(13, 26), st.integers(-5, 5), st.integers(-5, 5))
def test_density_translation_equivariance(y, x, dy, dx):
    a = density_map(FixationFrame(40, 40, ((y, x),)), GEOM)
    b = density_map(FixationFrame(40, 40, ((y + dy, x + dx),)), GEOM)
    np.testing.assert_allclose(np.roll(a, (dy, dx), axis=(0, 1)), b, atol=1e-15)


def test_transformer_downsample():
    t = DensityMapTransformer(pixels_per_degree=2.0, downsample=8).fit()
    out = t.transform([FixationFrame(64, 96, ((30, 40),))])
    assert out.shape == (1, 8, 12)
    assert out.sum() == pytest.approx(1.0)
    assert t.get_params() == {"pixels_per_degree": 2.0, "downsample": 8}
    with pytest.raises(SaliencyError):
        area_downsample(np.ones((9, 8)), 8)


def test_mep_cases():
    d = density_map(FixationFrame(16, 16, ((8, 8),)), GEOM)
    np.testing.assert_allclose(mep([d]), d)
    np.testing.assert_allclose(mep([d, d, d]), d)
    e = density_map(FixationFrame(16, 16, ((3, 3),)), GEOM)
    np.testing.assert_allclose(mep([d, e]), (d + e) / 2, atol=1e-15)
    with pytest.raises(SaliencyError):
        mep([])
    with pytest.raises(SaliencyError):
        mep([d, np.ones((4, 4)) / 16])


def test_mep_point_masses_and_mean_oracle():
    a, b = np.zeros((4, 4)), np.zeros((4, 4))
    a[0, 0], b[3, 2] = 1.0, 1.0
    m = mep([a, b])
    assert m[0, 0] == 0.5 and m[3, 2] == 0.5 and m.sum() == 1.0
    rng = np.random.default_rng(11)
    maps = [x / x.sum() for x in rng.random((100, 6, 5))]
    oracle = [[sum(x[i][j] for x in maps) / 100 for j in range(5)] for i in range(6)]
    np.testing.assert_allclose(mep(maps), oracle, atol=1e-15)


def test_mep_estimator_skips_empty_frames():
    frames = [FixationFrame(16, 16, ((8, 8),)), FixationFrame(16, 16)]
    est = MEPBaseline(2.0).fit(frames)
    assert est.n_frames_ == 1
    assert est.predict([None, None]).shape == (2, 16, 16)
    with pytest.raises(EmptyFixations):
        MEPBaseline().fit([FixationFrame(4, 4)])


def test_split_subjects_odd():
    s = split_subjects(["c", "a", "b"], seed=1)
    assert len(s.half_a) == 2 and len(s.half_b) == 1
    assert s.half_a | s.half_b == {"a", "b", "c"}
    assert split_subjects(["b", "a", "c"], seed=1) == s
    s7 = split_subjects(["s1", "s2", "s3"], seed=7)
    assert {len(s7.half_a), len(s7.half_b)} == {2, 1}
    with pytest.raises(SaliencyError):
        SubjectSplit(frozenset("a"), frozenset("a"), 0)


def _records(points_a, points_b, frame=0):
    out = [FixationRecord("v", frame, f"a{i}", x, y) for i, (y, x) in enumerate(points_a)]
    out += [FixationRecord("v", frame, f"b{i}", x, y) for i, (y, x) in enumerate(points_b)]
    return out


def _split(recs):
    subs = {r.subject_id for r in recs}
    return SubjectSplit(frozenset(s for s in subs if s[0] == "a"), frozenset(s for s in subs if s[0] == "b"), 0)


def test_human_infinite_identical_halves():
    pts = [(10, 10), (20, 30)]
    recs = _records(pts, pts)
    (r,) = human_infinite(recs, _split(recs), GEOM, (32, 48))
    assert r.cc == pytest.approx(1.0, abs=1e-12)
    assert r.sim == pytest.approx(1.0, abs=1e-12)
    assert r.sauc is None


def test_human_infinite_disjoint_halves_negative_nss():
    recs = _records([(5, 5)], [(25, 40)])
    (r,) = human_infinite(recs, _split(recs), GEOM, (32, 48))
    assert r.nss < 0


def test_human_infinite_swap_symmetry_and_empty_half():
    recs = _records([(5, 5), (8, 9)], [(6, 7)]) + [FixationRecord("v", 1, "a0", 3, 3)]
    split = _split(recs)
    a = human_infinite(recs, split, GEOM, (16, 16))
    b = human_infinite(recs, split.swapped(), GEOM, (16, 16))
    assert a[0].scores() == pytest.approx(b[0].scores(), abs=1e-15)
    assert a[1].scores() == {k: None for k in a[1].scores()}


def test_split_per_video_deterministic():
    recs = center_bias_corpus(n_videos=3, frames=1, subjects=5)
    s1, s2 = split_per_video(recs, 4), split_per_video(recs, 4)
    assert s1 == s2 and sorted(s1) == ["v000", "v001", "v002"]
    assert all(len(s.half_a) == 3 for s in s1.values())


def test_synth_determinism_and_layout():
    spec = SynthClipSpec(frames=4, n_clips=2, seed=3)
    a, b = synth_dataset(spec), synth_dataset(spec)
    for ca, cb in zip(a, b):
        assert ca.frames.tobytes() == cb.frames.tobytes()
        assert ca.fixations == cb.fixations
    c = a[0]
    assert c.frames.shape == (4, 3, 64, 96) and c.frames.dtype == np.float32
    assert len(c.audio) == round(4 / 25 * 16000)
    assert len(c.fixations) == 4 * 20
    # 18 of 20 subjects sit within a pixel of the target blob
    cy, cx = c.centers[0, c.target]
    near = [r for r in c.fixations if r.frame_idx == 0 and abs(r.y - cy) <= 1.5 and abs(r.x - cx) <= 1.5]
    assert len(near) == 18
    x0, y0, x1, y1 = c.boxes[0]
    assert x0 <= cx <= x1 and y0 <= cy <= y1


def test_synth_tone_matches_target():
    spec = SynthClipSpec(frames=8, n_clips=4, seed=0)
    for c in synth_dataset(spec):
        spectrum = np.abs(np.fft.rfft(c.audio))
        peak_hz = np.argmax(spectrum) * c.sample_rate / len(c.audio)
        assert peak_hz == pytest.approx(spec.tone_map[c.target], abs=c.sample_rate / len(c.audio))


def test_synth_spec_validation():
    with pytest.raises(SaliencyError):
        SynthClipSpec(blob_count=3)
    with pytest.raises(SaliencyError):
        SynthClipSpec(tone_map={0: 9000.0, 1: 440.0})
    with pytest.raises(SaliencyError):
        SynthClipSpec(drift=-0.1)
    still = synth_dataset(SynthClipSpec(frames=5, drift=0.0))[0]
    np.testing.assert_array_equal(still.centers[0], still.centers[-1])


def test_center_bias_corpus_shape():
    recs = center_bias_corpus(n_videos=2, frames=3, subjects=4)
    assert len(recs) == 24
    assert all(0 <= r.x < 64 and 0 <= r.y < 48 for r in recs)
    mean_x = np.mean([r.x for r in center_bias_corpus()])
    assert abs(mean_x - 31.5) < 1
