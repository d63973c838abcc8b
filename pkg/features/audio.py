"""
Audio Preprocessing
Silence removal, 1 s segmentation, STFT and 128-bin log-Mel patches at 16 kHz
"""

import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from math import gcd
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import soundfile as sf
from scipy import signal

from utils.errors import DataError

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
WINDOW_MS = 32
HOP_MS = 8
N_MELS = 128
LOG_OFFSET = 1e-6
SEGMENT_S = 1.0
SEGMENT_HOP_S = 0.5
SILENCE_THRESHOLD_DB = -60.0
SILENCE_MIN_REGION_MS = 100.0
SILENCE_FRAME_MS = 25.0
KAISER_BETA = 8.0


@dataclass(frozen=True)
class AudioClip:
    """Mono audio in [-1, 1] with its provenance"""
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    source_id: str = ""
    label: str = ""
    offset_s: float = 0.0
    segment_index: Optional[int] = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise DataError(f"clip '{self.source_id}' must be a non-empty mono signal")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"clip '{self.source_id}' contains non-finite samples")
        if self.sample_rate <= 0:
            raise DataError(f"invalid sample rate {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def slice(self, start: int, stop: int, **changes) -> "AudioClip":
        return replace(
            self,
            samples=self.samples[start:stop],
            offset_s=self.offset_s + start / self.sample_rate,
            **changes,
        )


@dataclass(frozen=True)
class LogMelPatch:
    """128 mel bins x F frames for one 1-second segment"""
    matrix: np.ndarray
    clip_id: str
    label: str
    segment_index: int = 0

    @property
    def frames(self) -> int:
        return self.matrix.shape[1]


def _samples_for(ms: float, sample_rate: int) -> int:
    return int(round(sample_rate * ms / 1000.0))


def frames_per_segment(sample_rate: int = SAMPLE_RATE, window_ms: float = WINDOW_MS, hop_ms: float = HOP_MS) -> int:
    """Frame count of a 1-second segment (no padding, partial final frame dropped)"""
    window = _samples_for(window_ms, sample_rate)
    hop = _samples_for(hop_ms, sample_rate)
    return 1 + (int(round(SEGMENT_S * sample_rate)) - window) // hop


# -------------------------------------------------------------------- spectra


def stft_magnitude(clip: AudioClip, window_ms: float = WINDOW_MS, hop_ms: float = HOP_MS) -> np.ndarray:
    """
    Hann-windowed magnitude spectrogram

    At 16 kHz this is a 512-sample window, 128-sample hop and a 512-point FFT.

    Returns:
        Array [frames, n_fft // 2 + 1]
    """
    window = _samples_for(window_ms, clip.sample_rate)
    hop = _samples_for(hop_ms, clip.sample_rate)
    if clip.samples.size < window:
        raise DataError(
            f"clip '{clip.source_id}' has {clip.samples.size} samples, shorter than one {window}-sample window"
        )

    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, window)[::hop]
    taper = signal.get_window("hann", window, fftbins=True)
    return np.abs(np.fft.rfft(frames * taper, n=window, axis=1))


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(
    sample_rate: int = SAMPLE_RATE,
    n_fft: int = 512,
    n_mels: int = N_MELS,
    fmin: float = 0.0,
    fmax: Optional[float] = None,
) -> np.ndarray:
    """
    Triangular filters equally spaced on the HTK mel scale

    Filters narrower than the FFT bin spacing would catch no bin; those rows
    get unit weight at the bin nearest their center.

    Returns:
        Array [n_mels, n_fft // 2 + 1]
    """
    fmax = sample_rate / 2.0 if fmax is None else fmax
    bin_hz = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))

    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz[None, :] - lower) / (center - lower)
    falling = (upper - bin_hz[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))

    for row in np.flatnonzero(weights.sum(axis=1) <= 0.0):
        weights[row, int(np.argmin(np.abs(bin_hz - edges[row + 1])))] = 1.0
    weights.setflags(write=False)
    return weights


def mel_centers(sample_rate: int = SAMPLE_RATE, n_mels: int = N_MELS) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(sample_rate / 2.0), n_mels + 2))[1:-1]


def log_mel(clip: AudioClip, n_mels: int = N_MELS) -> LogMelPatch:
    """
    128-bin log-Mel patch of a 1-second clip: log(mel(|STFT|^2) + 1e-6)

    Returns:
        LogMelPatch with a [n_mels, frames] matrix
    """
    expected = int(round(SEGMENT_S * clip.sample_rate))
    if clip.samples.size != expected:
        raise DataError(
            f"log_mel expects a {SEGMENT_S:g} s segment ({expected} samples), got {clip.samples.size}"
        )
    power = stft_magnitude(clip) ** 2
    n_fft = 2 * (power.shape[1] - 1)
    mel = power @ mel_filterbank(clip.sample_rate, n_fft, n_mels).T
    matrix = np.log(mel + LOG_OFFSET).T
    return LogMelPatch(
        matrix=matrix,
        clip_id=clip.source_id,
        label=clip.label,
        segment_index=clip.segment_index or 0,
    )


def spectral_flatness(clip: AudioClip) -> float:
    """Mean per-frame ratio of geometric to arithmetic mean of the power spectrum"""
    power = stft_magnitude(clip) ** 2 + 1e-12
    per_frame = np.exp(np.mean(np.log(power), axis=1)) / np.mean(power, axis=1)
    return float(np.mean(per_frame))


def summarize_patch(matrix: np.ndarray) -> np.ndarray:
    """Per-bin mean and standard deviation over time, concatenated"""
    return np.concatenate([matrix.mean(axis=1), matrix.std(axis=1)])


# --------------------------------------------------------- silence / segments


def frame_rms(samples: np.ndarray, frame_length: int) -> np.ndarray:
    """RMS of consecutive non-overlapping frames; the last frame may be partial"""
    n_frames = int(np.ceil(samples.size / frame_length))
    padded = np.zeros(n_frames * frame_length)
    padded[: samples.size] = samples
    counts = np.full(n_frames, float(frame_length))
    counts[-1] = samples.size - (n_frames - 1) * frame_length
    return np.sqrt((padded.reshape(n_frames, frame_length) ** 2).sum(axis=1) / counts)


def remove_silence(
    clip: AudioClip,
    threshold_db: float = SILENCE_THRESHOLD_DB,
    min_region_ms: float = SILENCE_MIN_REGION_MS,
    frame_ms: float = SILENCE_FRAME_MS,
) -> List[AudioClip]:
    """
    Cut runs of quiet frames lasting at least min_region_ms

    A frame is quiet when its RMS is below threshold_db relative to full scale.
    Shorter quiet runs stay inside the surrounding region.

    Returns:
        Non-silent regions in time order; [] for an entirely silent clip
    """
    frame_length = max(1, _samples_for(frame_ms, clip.sample_rate))
    rms = frame_rms(clip.samples, frame_length)
    with np.errstate(divide="ignore"):
        level_db = 20.0 * np.log10(rms)
    quiet = level_db < threshold_db
    if quiet.all():
        return []
    min_frames = max(1, int(np.ceil(min_region_ms / frame_ms - 1e-9)))

    cut = np.zeros_like(quiet)
    start = None
    for i, is_quiet in enumerate(np.append(quiet, False)):
        if is_quiet and start is None:
            start = i
        elif not is_quiet and start is not None:
            if i - start >= min_frames:
                cut[start:i] = True
            start = None

    if not cut.any():
        return [clip]

    regions: List[AudioClip] = []
    start = None
    for i, is_cut in enumerate(np.append(cut, True)):
        if not is_cut and start is None:
            start = i
        elif is_cut and start is not None:
            regions.append(clip.slice(start * frame_length, min(i * frame_length, clip.samples.size)))
            start = None
    return regions


def segment(clip: AudioClip, length_s: float = SEGMENT_S, hop_s: float = SEGMENT_HOP_S) -> List[AudioClip]:
    """Fixed-length windows; the trailing remainder is dropped"""
    length = int(round(length_s * clip.sample_rate))
    hop = int(round(hop_s * clip.sample_rate))
    if clip.samples.size < length:
        return []
    count = (clip.samples.size - length) // hop + 1
    return [clip.slice(i * hop, i * hop + length, segment_index=i) for i in range(count)]


# ------------------------------------------------------------------------ I/O


def resample(clip: AudioClip, target_rate: int = SAMPLE_RATE) -> AudioClip:
    """Polyphase windowed-sinc resampling (Kaiser window, beta 8)"""
    if clip.sample_rate == target_rate:
        return clip
    factor = gcd(int(clip.sample_rate), int(target_rate))
    up, down = target_rate // factor, clip.sample_rate // factor
    samples = signal.resample_poly(clip.samples, up, down, window=("kaiser", KAISER_BETA))
    return replace(clip, samples=np.clip(samples, -1.0, 1.0), sample_rate=target_rate)


def load_wav(path: Union[str, Path], label: Optional[str] = None, target_rate: Optional[int] = SAMPLE_RATE) -> AudioClip:
    """
    Read a PCM WAV file, mix to mono and optionally resample

    The label defaults to the name of the containing directory.
    """
    path = Path(path)
    try:
        samples, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError) as exc:
        raise DataError(f"cannot read audio file {path}: {exc}") from exc
    if samples.shape[0] == 0:
        raise DataError(f"audio file {path} is empty")

    clip = AudioClip(
        samples=samples.mean(axis=1),
        sample_rate=int(rate),
        source_id=path.stem,
        label=label if label is not None else path.parent.name,
    )
    return resample(clip, target_rate) if target_rate else clip


def write_wav(clip: AudioClip, path: Union[str, Path], subtype: str = "PCM_16") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), clip.samples, clip.sample_rate, subtype=subtype)
    return path
