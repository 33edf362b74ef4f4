import math
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avsaliency.audio import (
    AudioError,
    LogMelExtractor,
    PcmSignal,
    ShortAudio,
    audio_tensor,
    dump_mel,
    frame_audio,
    frame_offsets,
    hz_to_mel,
    log_mel,
    mel_band_edges,
    mel_filterbank,
    pad_spectrogram,
    read_wav,
    resample,
    write_wav,
)
from avsaliency.core import read_map


def _tone(freq, n, rate=16000, amp=0.5):
    return PcmSignal(amp * np.sin(2 * np.pi * freq * np.arange(n) / rate), rate)


def _htk_band(freq):
    # band whose centre lies nearest in mel, from the HTK formula directly
    lo, hi = 2595 * math.log10(1 + 125 / 700), 2595 * math.log10(1 + 7500 / 700)
    centres = [lo + (hi - lo) * (i + 1) / 65 for i in range(64)]
    m = 2595 * math.log10(1 + freq / 700)
    return min(range(64), key=lambda i: abs(centres[i] - m))


def test_silence_is_log_offset():
    spec = log_mel(PcmSignal(np.zeros(16000), 16000))
    np.testing.assert_allclose(spec, math.log(0.01), atol=1e-9)


def test_frame_count():
    assert log_mel(PcmSignal(np.zeros(25600), 16000)).shape == (158, 64)
    assert log_mel(PcmSignal(np.zeros(400), 16000)).shape == (1, 64)
    with pytest.raises(ShortAudio):
        log_mel(PcmSignal(np.zeros(399), 16000))
    with pytest.raises(AudioError):
        log_mel(PcmSignal(np.zeros(1000), 8000))


@pytest.mark.parametrize("freq", [300.0, 1000.0, 2500.0, 6000.0])
def test_tone_lands_in_htk_band(freq):
    spec = log_mel(_tone(freq, 25600))
    assert int(np.argmax(spec.mean(axis=0))) == _htk_band(freq)


def test_filterbank_properties():
    fb = mel_filterbank()
    assert fb.shape == (257, 64)
    assert np.all(fb >= 0) and np.all(fb <= 1)
    assert np.all(fb[0] == 0)
    assert np.all(fb.max(axis=0) > 0)
    # triangles overlap so that interior bins are covered by at most two bands
    assert np.all((fb > 0).sum(axis=1) <= 2)
    edges = mel_band_edges()
    assert edges[0] == pytest.approx(125.0) and edges[-1] == pytest.approx(7500.0)
    np.testing.assert_allclose(np.diff(hz_to_mel(edges)), np.diff(hz_to_mel(edges))[0])


def test_hop_shift_covariance():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 0.1, 16000)
    a = log_mel(PcmSignal(x, 16000))
    b = log_mel(PcmSignal(x[160:], 16000))
    np.testing.assert_allclose(a[1:], b, atol=1e-12)


def test_resample_48k_preserves_peak_bin():
    x = _tone(1000.0, 48000, rate=48000)
    y = resample(x, 16000)
    assert len(y) == 16000 and y.sample_rate == 16000
    assert int(np.argmax(np.abs(np.fft.rfft(y.samples)))) == 1000
    ex = np.sum(x.samples[4800:-4800] ** 2) / (48000 - 9600)
    ey = np.sum(y.samples[1600:-1600] ** 2) / (16000 - 3200)
    assert 10 * math.log10(ey / ex) == pytest.approx(0.0, abs=0.05)


def test_resample_dc_and_identity():
    y = resample(PcmSignal(np.full(4410, 0.3), 44100), 16000)
    np.testing.assert_allclose(y.samples, 0.3, atol=1e-12)
    x = _tone(440.0, 1000)
    np.testing.assert_array_equal(resample(x, 16000).samples, x.samples)


def test_resample_rejects_out_of_band():
    # a 7 kHz tone at 48 kHz is above the cutoff for 8 kHz output
    y = resample(_tone(7000.0, 48000, rate=48000), 8000)
    assert np.max(np.abs(y.samples[400:-400])) < 1e-2


def test_wav_roundtrip(tmp_path):
    x = _tone(440.0, 1600)
    write_wav(x, tmp_path / "a.wav")
    y = read_wav(tmp_path / "a.wav")
    assert y.sample_rate == 16000
    np.testing.assert_allclose(y.samples, x.samples, atol=1 / 32768)


def test_wav_stereo_averaged(tmp_path):
    path = tmp_path / "s.wav"
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(2)
        wf.setsampwidth(2)
        wf.setframerate(16000)
        wf.writeframes(struct.pack("<4h", 16384, 0, -16384, -16384))
    np.testing.assert_allclose(read_wav(path).samples, [0.25, -0.5])


def test_wav_rejects_other_widths_and_garbage(tmp_path):
    path = tmp_path / "b.wav"
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(1)
        wf.setframerate(8000)
        wf.writeframes(bytes(10))
    with pytest.raises(AudioError):
        read_wav(path)
    (tmp_path / "g.wav").write_bytes(b"not a wave file")
    with pytest.raises(AudioError):
        read_wav(tmp_path / "g.wav")


def test_frame_offsets():
    assert frame_offsets(214).tolist() == list(range(0, 151, 10))
    assert frame_offsets(79).tolist() == list(range(16))
    assert frame_offsets(64).tolist() == [0] * 16
    with pytest.raises(ShortAudio):
        frame_offsets(63)


@settings(max_examples=50, deadline=None)
@given(st.integers(64, 5000))
def test_frame_offsets_properties(t):
    o = frame_offsets(t)
    assert o[0] == 0 and o[-1] == t - 64
    assert np.all(np.diff(o) >= 0)
    ideal = np.arange(16) * (t - 64) / 15
    assert np.all(np.abs(o - ideal) <= 0.5)


def test_frame_audio_layout():
    spec = np.arange(100 * 64, dtype=np.float64).reshape(100, 64)
    out = frame_audio(spec)
    assert out.shape == (16, 3, 64, 64) and out.dtype == np.float32
    np.testing.assert_array_equal(out[:, 0], out[:, 2])
    np.testing.assert_array_equal(out[5, 1], spec[frame_offsets(100)[5] : frame_offsets(100)[5] + 64])
    with pytest.raises(AudioError):
        frame_audio(np.zeros((100, 32)))


def test_pad_and_short_audio_tensor():
    spec = np.arange(10 * 64, dtype=float).reshape(10, 64)
    padded = pad_spectrogram(spec)
    assert padded.shape == (64, 64)
    np.testing.assert_array_equal(padded[10:], np.repeat(spec[-1:], 54, axis=0))
    assert audio_tensor(_tone(440.0, 200)).shape == (16, 3, 64, 64)


def test_extractor_and_dump(tmp_path):
    ext = LogMelExtractor().fit()
    out = ext.transform([_tone(440.0, 16000), _tone(880.0, 48000, rate=48000)])
    assert out.shape == (2, 16, 3, 64, 64)
    spec = log_mel(_tone(440.0, 16000))
    dump_mel(spec, tmp_path / "m.smf")
    np.testing.assert_allclose(read_map(tmp_path / "m.smf", validate=False), spec, atol=1e-5)
