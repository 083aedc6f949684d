"""LogMel front end: framing, Hamming window, power spectrum, mel filterbank.

Defaults follow a 16 kHz signal: 25 ms windows (400 samples) every 10 ms
(160 samples), zero-padded to a 512-point DFT, 80 triangular mel filters over
0 Hz to Nyquist, natural-log band energies, and 100 ms segments of 10 frames
flattened frame-major to 800 values.
"""

import wave
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, TooShortError, UnsupportedFormatError

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_N_FFT = 512
DEFAULT_N_MELS = 80
DEFAULT_FLOOR = 1e-10
FRAMES_PER_SEGMENT = 10


@dataclass(frozen=True)
class WaveBuffer:
    samples: np.ndarray
    sample_rate: int
    utterance_id: str = ""

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ParameterError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray  # (n_filters, n_fft // 2 + 1)
    sample_rate: int
    fmin: float
    fmax: float

    @property
    def n_filters(self):
        return self.weights.shape[0]

    @property
    def n_bins(self):
        return self.weights.shape[1]


@dataclass(frozen=True)
class LogMelSegment:
    values: np.ndarray  # (frames_per_segment * n_mels,), frame-major
    utterance_id: str
    segment_index: int

    def frames(self, n_mels=DEFAULT_N_MELS):
        return self.values.reshape(-1, n_mels)


def read_wav(path, utterance_id=""):
    """Read a mono PCM16 WAV file into a :class:`WaveBuffer` scaled to [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise UnsupportedFormatError(f"{path}: {exc}") from None
    except EOFError:
        raise UnsupportedFormatError(f"{path}: truncated RIFF data") from None
    if width != 2:
        raise UnsupportedFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: expected mono, got {channels} channels")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return WaveBuffer(samples, rate, utterance_id)


def write_wav(path, samples, sample_rate):
    """Write float samples in [-1, 1] as mono PCM16; out-of-range values clip."""
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(sample_rate))
        wf.writeframes(pcm.tobytes())


def ms_to_samples(ms, sample_rate):
    return int(round(ms * sample_rate / 1000.0))


def frame_signal(wave_buf, win_ms=25.0, hop_ms=10.0):
    """Slice the signal into overlapping frames, one per row, without padding."""
    win = ms_to_samples(win_ms, wave_buf.sample_rate)
    hop = ms_to_samples(hop_ms, wave_buf.sample_rate)
    if win < 1 or hop < 1:
        raise ParameterError(f"window {win} and hop {hop} must both be at least one sample")
    x = np.asarray(wave_buf.samples, dtype=np.float64)
    if len(x) < win:
        raise TooShortError(f"{len(x)} samples is shorter than one {win}-sample window",
                            wave_buf.utterance_id or None)
    n_frames = 1 + (len(x) - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def hamming_window(n):
    if n < 2:
        raise ParameterError(f"Hamming window needs n >= 2, got {n}")
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def power_spectrum(frames, n_fft=DEFAULT_N_FFT):
    """|DFT|^2 for bins 0..n_fft/2 of each (already windowed) frame.

    Accepts a single frame or a (n_frames, frame_len) matrix; frames are
    zero-padded to ``n_fft``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if n_fft & (n_fft - 1) or n_fft < 1:
        raise ParameterError(f"n_fft must be a power of two, got {n_fft}")
    if frames.shape[-1] > n_fft:
        raise ParameterError(f"frame length {frames.shape[-1]} exceeds n_fft {n_fft}")
    spec = np.fft.rfft(frames, n=n_fft, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(n_filters=DEFAULT_N_MELS, n_fft=DEFAULT_N_FFT,
                         sample_rate=DEFAULT_SAMPLE_RATE, fmin=0.0, fmax=None):
    """Triangular filters with unit peaks equally spaced on the mel scale.

    ``n_filters + 2`` mel points span [mel(fmin), mel(fmax)]; filter ``j``
    rises from point ``j`` to a peak at point ``j + 1`` and falls to zero at
    point ``j + 2``. Weights are the triangle evaluated at each DFT bin centre.
    """
    nyquist = sample_rate / 2.0
    if fmax is None:
        fmax = nyquist
    if n_filters < 1:
        raise ParameterError(f"need at least one filter, got {n_filters}")
    if fmax > nyquist:
        raise ParameterError(f"fmax {fmax} Hz exceeds Nyquist {nyquist} Hz")
    if not 0.0 <= fmin < fmax:
        raise ParameterError(f"need 0 <= fmin < fmax, got fmin={fmin}, fmax={fmax}")
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    bins = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, peak, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (peak - lo)
    falling = (hi - bins[None, :]) / (hi - peak)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(weights.max(axis=1) <= 0.0)
    if empty.size:
        raise ParameterError(
            f"mel filters {empty.tolist()} cover no DFT bin; use fewer filters or a larger n_fft")
    return MelFilterbank(weights, sample_rate, float(fmin), float(fmax))


def logmel_frame(power, fb, floor=DEFAULT_FLOOR):
    """ln(max(mel energy, floor)) for one spectrum or a matrix of spectra."""
    power = np.asarray(power, dtype=np.float64)
    if power.shape[-1] != fb.n_bins:
        raise DimensionError(
            f"spectrum has {power.shape[-1]} bins but the filterbank expects {fb.n_bins}")
    return np.log(np.maximum(power @ fb.weights.T, floor))


def segment_array(frames, frames_per_segment=FRAMES_PER_SEGMENT, utterance_id=None):
    """(n_segments, frames_per_segment * n_mels) non-overlapping segments.

    A trailing partial group of frames is dropped.
    """
    if frames_per_segment < 1:
        raise ParameterError(f"frames_per_segment must be >= 1, got {frames_per_segment}")
    frames = np.asarray(frames, dtype=np.float64)
    n_seg = frames.shape[0] // frames_per_segment
    if n_seg == 0:
        raise TooShortError(
            f"{frames.shape[0]} frames is fewer than one {frames_per_segment}-frame segment",
            utterance_id)
    used = frames[:n_seg * frames_per_segment]
    return used.reshape(n_seg, frames_per_segment * frames.shape[1])


def segment_utterance(frames, frames_per_segment=FRAMES_PER_SEGMENT, utterance_id=""):
    arr = segment_array(frames, frames_per_segment, utterance_id or None)
    return [LogMelSegment(row, utterance_id, i) for i, row in enumerate(arr)]


class LogMelExtractor:
    """Waveform -> LogMel frames -> segments with fixed settings."""

    def __init__(self, sample_rate=DEFAULT_SAMPLE_RATE, win_ms=25.0, hop_ms=10.0,
                 n_fft=DEFAULT_N_FFT, n_mels=DEFAULT_N_MELS, fmin=0.0, fmax=None,
                 floor=DEFAULT_FLOOR, frames_per_segment=FRAMES_PER_SEGMENT):
        self.sample_rate = sample_rate
        self.win_ms = win_ms
        self.hop_ms = hop_ms
        self.n_fft = n_fft
        self.floor = floor
        self.frames_per_segment = frames_per_segment
        win = ms_to_samples(win_ms, sample_rate)
        if win > n_fft:
            raise ParameterError(f"{win}-sample window does not fit in n_fft={n_fft}")
        self.window = hamming_window(win)
        self.filterbank = build_mel_filterbank(n_mels, n_fft, sample_rate, fmin, fmax)

    @property
    def segment_dim(self):
        return self.frames_per_segment * self.filterbank.n_filters

    def frames(self, wave_buf):
        if wave_buf.sample_rate != self.sample_rate:
            raise ParameterError(
                f"{wave_buf.utterance_id or 'signal'}: sample rate {wave_buf.sample_rate} Hz, "
                f"expected {self.sample_rate} Hz (resampling is not supported)")
        framed = frame_signal(wave_buf, self.win_ms, self.hop_ms) * self.window
        return logmel_frame(power_spectrum(framed, self.n_fft), self.filterbank, self.floor)

    def segments(self, wave_buf):
        return segment_array(self.frames(wave_buf), self.frames_per_segment,
                             wave_buf.utterance_id or None)


class Standardizer:
    """Per-feature zero-mean, unit-variance scaling fitted on training rows only."""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, rows, min_std=1e-8):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise DimensionError(f"need a non-empty 2-D matrix to fit, got shape {rows.shape}")
        return cls(rows.mean(axis=0), np.maximum(rows.std(axis=0), min_std))

    def transform(self, rows):
        return (np.asarray(rows, dtype=np.float64) - self.mean) / self.std

    def inverse(self, rows):
        return np.asarray(rows) * self.std + self.mean
