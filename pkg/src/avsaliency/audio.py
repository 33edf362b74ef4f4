"""Audio frontend: WAV IO, resampling, log-mel spectrogram and audio framing."""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import SaliencyError

SAMPLE_RATE = 16000
WIN_LENGTH = 400  # 0.025 s
HOP_LENGTH = 160  # 0.010 s
N_FFT = 512
N_MELS = 64
MEL_FMIN = 125.0
MEL_FMAX = 7500.0
LOG_OFFSET = 0.01
AUDIO_FRAMES = 16
FRAME_STEPS = 64
AUDIO_CHANNELS = 3

KAISER_BETA = 8.6
TAPS_PER_PHASE = 64
CUTOFF_FRACTION = 0.9


class AudioError(SaliencyError):
    pass


class ShortAudio(AudioError):
    pass


@dataclass(frozen=True)
class PcmSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise AudioError("samples must be a finite 1-D sequence")
        if not self.sample_rate > 0:
            raise AudioError("sample_rate must be positive")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> PcmSignal:
    """Decode 16-bit PCM WAV; stereo is averaged to mono, scaled by 1/32768."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioError(f"{path}: malformed WAV ({exc})") from None
    if width != 2:
        raise AudioError(f"{path}: only 16-bit PCM is supported (got {8 * width}-bit)")
    if channels not in (1, 2):
        raise AudioError(f"{path}: only mono or stereo is supported")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    return PcmSignal(data, rate)


def write_wav(signal: PcmSignal, path) -> None:
    """Write 16-bit mono PCM, clipping to the representable range."""
    ints = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(signal.sample_rate))
        wf.writeframes(ints.tobytes())


# --- resampling -------------------------------------------------------------


def _phase_filters(phases: np.ndarray, up: int, cutoff: float) -> np.ndarray:
    """Kaiser-windowed sinc taps, one row per fractional phase, unit DC gain."""
    half = TAPS_PER_PHASE // 2
    k = np.arange(-(half - 1), half + 1)  # tap offsets relative to floor(t)
    frac = phases[:, None] / up
    d = frac - k[None, :]
    window = np.i0(KAISER_BETA * np.sqrt(np.clip(1.0 - (d / half) ** 2, 0.0, None))) / np.i0(KAISER_BETA)
    taps = 2 * cutoff * np.sinc(2 * cutoff * d) * window
    return taps / taps.sum(axis=1, keepdims=True)


def resample(signal: PcmSignal, target: int = SAMPLE_RATE) -> PcmSignal:
    """Polyphase windowed-sinc sample-rate conversion.

    Edges are extended by repeating the boundary samples, so constant
    signals stay exactly constant.
    """
    if not target > 0:
        raise AudioError("target rate must be positive")
    x = signal.samples
    if x.size == 0:
        raise AudioError("cannot resample an empty signal")
    rate = int(signal.sample_rate)
    if rate == target:
        return PcmSignal(x.copy(), target)
    g = math.gcd(rate, int(target))
    up, down = int(target) // g, rate // g
    n_out = int(math.floor(x.size * target / rate + 0.5))
    # cutoff in cycles per input sample
    cutoff = CUTOFF_FRACTION * 0.5 * min(rate, target) / rate
    half = TAPS_PER_PHASE // 2
    offsets = np.arange(-(half - 1), half + 1)
    out = np.empty(n_out, dtype=np.float64)
    block = 1 << 15
    for start in range(0, n_out, block):
        m = np.arange(start, min(n_out, start + block), dtype=np.int64)
        pos = m * down
        base = pos // up
        phase = pos % up
        uniq, inverse = np.unique(phase, return_inverse=True)
        table = _phase_filters(uniq.astype(np.float64), up, cutoff)
        idx = np.clip(base[:, None] + offsets[None, :], 0, x.size - 1)
        out[m] = np.einsum("ij,ij->i", x[idx], table[inverse])
    return PcmSignal(out, int(target))


# --- log-mel ----------------------------------------------------------------


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(n_mels: int = N_MELS, fmin: float = MEL_FMIN, fmax: float = MEL_FMAX) -> np.ndarray:
    """``n_mels + 2`` band edge frequencies in Hz, evenly spaced in mel."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_filterbank(
    sample_rate: int = SAMPLE_RATE,
    n_fft: int = N_FFT,
    n_mels: int = N_MELS,
    fmin: float = MEL_FMIN,
    fmax: float = MEL_FMAX,
) -> np.ndarray:
    """Triangular filters (linear in mel), shape ``(n_fft // 2 + 1, n_mels)``."""
    bin_mel = hz_to_mel(np.arange(n_fft // 2 + 1) * sample_rate / n_fft)
    edges = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    lower, center, upper = edges[:-2], edges[1:-1], edges[2:]
    rising = (bin_mel[:, None] - lower) / (center - lower)
    falling = (upper - bin_mel[:, None]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    weights[0, :] = 0.0  # DC carries no band energy
    return weights


def log_mel(signal: PcmSignal) -> np.ndarray:
    """Log-mel spectrogram, shape ``(T, 64)`` with ``T = 1 + (N - 400) // 160``."""
    if signal.sample_rate != SAMPLE_RATE:
        raise AudioError(f"log_mel expects {SAMPLE_RATE} Hz input, got {signal.sample_rate}")
    x = signal.samples
    if x.size < WIN_LENGTH:
        raise ShortAudio(f"need at least {WIN_LENGTH} samples, got {x.size}")
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(WIN_LENGTH) / WIN_LENGTH)
    frames = np.lib.stride_tricks.sliding_window_view(x, WIN_LENGTH)[::HOP_LENGTH]
    power = np.abs(np.fft.rfft(frames * window, n=N_FFT, axis=1)) ** 2
    return np.log(power @ mel_filterbank() + LOG_OFFSET)


def frame_offsets(n_steps: int, frames: int = AUDIO_FRAMES, width: int = FRAME_STEPS) -> np.ndarray:
    """Window start offsets evenly spread over ``[0, n_steps - width]``."""
    if n_steps < width:
        raise ShortAudio(f"spectrogram has {n_steps} steps, need at least {width}")
    span = n_steps - width
    k = np.arange(frames)
    # round-half-up of k * span / (frames - 1) in exact integer arithmetic
    return (2 * k * span + (frames - 1)) // (2 * (frames - 1))


def frame_audio(spec: np.ndarray) -> np.ndarray:
    """Cut a ``(T, 64)`` spectrogram into the ``16x3x64x64`` model input."""
    spec = np.asarray(spec, dtype=np.float64)
    if spec.ndim != 2 or spec.shape[1] != N_MELS:
        raise AudioError(f"expected a (T, {N_MELS}) spectrogram, got {spec.shape}")
    offsets = frame_offsets(spec.shape[0])
    windows = np.stack([spec[o : o + FRAME_STEPS] for o in offsets])
    return np.repeat(windows[:, None], AUDIO_CHANNELS, axis=1).astype(np.float32)


def pad_spectrogram(spec: np.ndarray, min_steps: int = FRAME_STEPS) -> np.ndarray:
    """Repeat the last time step until the spectrogram has ``min_steps`` rows."""
    if spec.shape[0] >= min_steps:
        return spec
    tail = np.repeat(spec[-1:], min_steps - spec.shape[0], axis=0)
    return np.concatenate([spec, tail], axis=0)


def audio_tensor(signal: PcmSignal) -> np.ndarray:
    """Resample, log-mel, pad and frame a signal into the model's audio input."""
    sig = resample(signal, SAMPLE_RATE)
    if len(sig) < WIN_LENGTH:
        sig = PcmSignal(np.concatenate([sig.samples, np.repeat(sig.samples[-1:], WIN_LENGTH - len(sig))]), SAMPLE_RATE)
    return frame_audio(pad_spectrogram(log_mel(sig)))


class LogMelExtractor(TransformerMixin, BaseEstimator):
    """Transforms a list of :class:`PcmSignal` into stacked audio tensors."""

    def __init__(self, sample_rate: int = SAMPLE_RATE):
        self.sample_rate = sample_rate

    def fit(self, X=None, y=None):
        if self.sample_rate != SAMPLE_RATE:
            raise AudioError(f"the frontend is fixed at {SAMPLE_RATE} Hz")
        return self

    def transform(self, X) -> np.ndarray:
        return np.stack([audio_tensor(s) for s in X])


def dump_mel(spec: np.ndarray, path) -> None:
    from .core import write_map

    write_map(spec, Path(path), "smf", validate=False)
