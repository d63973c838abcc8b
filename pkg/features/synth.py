"""
Synthetic Instruments
Deterministic 16 kHz renderings of five instrument families used as a
desk-scale hierarchical dataset, plus Gaussian vector data following a class tree
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy import signal

from features.audio import SAMPLE_RATE, AudioClip
from taxonomy.class_tree import ClassTree
from utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

MANIFESTS_DIR = Path(__file__).parent / "manifests"
DEFAULT_MANIFEST = MANIFESTS_DIR / "synthetic_instruments.json"

BELL_RATIOS = (1.0, 2.76, 5.40, 8.93)
PEAK_LEVEL = 0.5
MIN_PLUCK_DECAY = 1.5

SeedLike = Union[int, np.random.SeedSequence]


class SynthFamily(str, Enum):
    BOWED = "bowed"
    PLUCKED = "plucked"
    STRUCK = "struck"
    WIND = "wind"
    PERCUSSIVE = "percussive"


class LeafVariant(BaseModel):
    """Per-leaf perturbation of its family's sound model"""
    model_config = ConfigDict(extra="forbid")

    name: str
    family: SynthFamily
    f0_range: Tuple[float, float] = (220.0, 440.0)
    decay: float = Field(default=3.0, ge=0.0)
    inharmonicity: float = Field(default=0.0, ge=0.0, le=0.1)
    brightness: float = Field(default=1.0, gt=0.0)
    vibrato_rate: float = Field(default=5.0, ge=0.0)
    vibrato_depth: float = Field(default=0.0, ge=0.0, le=0.05)
    noise_level: float = Field(default=0.0, ge=0.0, le=1.0)
    hit_rate: float = Field(default=6.0, gt=0.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "LeafVariant":
        low, high = self.f0_range
        if not 20.0 <= low <= high < SAMPLE_RATE / 4:
            raise ValueError(f"f0_range {self.f0_range} must satisfy 20 <= low <= high < {SAMPLE_RATE // 4}")
        if self.family == SynthFamily.PLUCKED and self.decay < MIN_PLUCK_DECAY:
            raise ValueError(f"plucked decay must be at least {MIN_PLUCK_DECAY}/s")
        return self


class SynthManifest(BaseModel):
    """Leaves, their parameters and the rendering layout of the synthetic dataset"""
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    tree: str = "synthetic"
    sample_rate: int = SAMPLE_RATE
    recordings_per_leaf: int = Field(default=6, gt=0)
    notes_per_recording: int = Field(default=8, gt=0)
    note_duration_s: Tuple[float, float] = (1.5, 2.5)
    rest_s: float = Field(default=0.25, ge=0.0)
    leaves: List[LeafVariant]

    @model_validator(mode="after")
    def _check_leaves(self) -> "SynthManifest":
        names = [leaf.name for leaf in self.leaves]
        if len(set(names)) != len(names):
            raise ValueError("leaf names in the manifest must be unique")
        low, high = self.note_duration_s
        if not 0.0 < low <= high:
            raise ValueError(f"invalid note_duration_s {self.note_duration_s}")
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError(f"synthetic audio is rendered at {SAMPLE_RATE} Hz")
        return self

    @property
    def families(self) -> Dict[str, str]:
        return {leaf.name: leaf.family.value for leaf in self.leaves}

    def variant(self, name: str) -> LeafVariant:
        for leaf in self.leaves:
            if leaf.name == name:
                return leaf
        raise DataError(f"leaf '{name}' is not in the synthetic manifest")


def load_manifest(path: Union[str, Path, None] = None) -> SynthManifest:
    path = Path(path) if path is not None else DEFAULT_MANIFEST
    if not path.exists():
        raise ConfigError(f"synthetic manifest not found: {path}")
    try:
        return SynthManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise ConfigError(f"invalid synthetic manifest {path}: {exc}") from exc


# ------------------------------------------------------------------ rendering


def _envelope(n: int, attack_s: float, release_s: float, sample_rate: int) -> np.ndarray:
    env = np.ones(n)
    attack = min(n, max(1, int(attack_s * sample_rate)))
    release = min(n - attack, int(release_s * sample_rate))
    env[:attack] = np.linspace(0.0, 1.0, attack, endpoint=False) + 1.0 / attack
    if release > 0:
        env[n - release:] *= np.linspace(1.0, 0.0, release)
    return env


def _partials(f0: float, variant: LeafVariant, sample_rate: int) -> List[Tuple[float, float]]:
    """(frequency, amplitude) of harmonic partials below 0.45 * sample rate"""
    out = []
    k = 1
    while True:
        frequency = k * f0 * np.sqrt(1.0 + variant.inharmonicity * k * k)
        if frequency >= 0.45 * sample_rate or k > 40:
            return out
        out.append((frequency, k ** (-variant.brightness)))
        k += 1


def _band_noise(rng: np.random.Generator, n: int, low: float, high: float, sample_rate: int) -> np.ndarray:
    nyquist = sample_rate / 2.0
    low = max(low, 20.0)
    high = min(high, 0.95 * nyquist)
    sos = signal.butter(4, [low, high], btype="bandpass", fs=sample_rate, output="sos")
    return signal.sosfilt(sos, rng.standard_normal(n))


def _render_bowed(rng, t, f0, variant, sample_rate):
    phase_jitter = rng.uniform(0.0, 2 * np.pi)
    vibrato = 1.0 + variant.vibrato_depth * np.sin(2 * np.pi * variant.vibrato_rate * t + phase_jitter)
    phase = 2 * np.pi * np.cumsum(f0 * vibrato) / sample_rate
    tone = sum(amp * np.sin(k * phase) for k, (_, amp) in enumerate(_partials(f0, variant, sample_rate), start=1))
    bow = variant.noise_level * _band_noise(rng, t.size, f0, 8 * f0, sample_rate)
    return (tone + bow) * _envelope(t.size, 0.08, 0.05, sample_rate)


def _render_plucked(rng, t, f0, variant, sample_rate):
    out = np.zeros_like(t)
    for k, (frequency, amp) in enumerate(_partials(f0, variant, sample_rate), start=1):
        decay = variant.decay * (1.0 + 0.15 * (k - 1))
        out += amp * np.exp(-decay * t) * np.sin(2 * np.pi * frequency * t + rng.uniform(0, 2 * np.pi))
    return out * _envelope(t.size, 0.003, 0.0, sample_rate)


def _render_struck(rng, t, f0, variant, sample_rate):
    out = np.zeros_like(t)
    for i, ratio in enumerate(BELL_RATIOS):
        frequency = f0 * ratio * (1.0 + variant.inharmonicity * i)
        if frequency >= 0.45 * sample_rate:
            break
        amp = (i + 1) ** (-variant.brightness)
        decay = variant.decay * (1.0 + 0.3 * ratio)
        out += amp * np.exp(-decay * t) * np.sin(2 * np.pi * frequency * t + rng.uniform(0, 2 * np.pi))
    return out * _envelope(t.size, 0.002, 0.02, sample_rate)


def _render_wind(rng, t, f0, variant, sample_rate):
    vibrato = 1.0 + variant.vibrato_depth * np.sin(2 * np.pi * variant.vibrato_rate * t)
    phase = 2 * np.pi * np.cumsum(f0 * vibrato) / sample_rate
    tone = sum(amp * np.sin(k * phase) for k, (_, amp) in enumerate(_partials(f0, variant, sample_rate), start=1))
    breath = _band_noise(rng, t.size, f0, 6 * f0, sample_rate)
    breath /= np.max(np.abs(breath)) + 1e-12
    return ((1.0 - variant.noise_level) * tone + variant.noise_level * breath) * _envelope(t.size, 0.06, 0.05, sample_rate)


def _render_percussive(rng, t, f0, variant, sample_rate):
    n = t.size
    out = np.zeros(n)
    noise = _band_noise(rng, n, f0, min(f0 * (4.0 + 8.0 * variant.brightness), 7600.0), sample_rate)
    noise /= np.max(np.abs(noise)) + 1e-12
    onset = 0
    while onset < n:
        span = t[: n - onset]
        gain = rng.uniform(0.6, 1.0)
        body = np.sin(2 * np.pi * f0 * span * (1.0 - 0.2 * span.clip(0, 1)))
        hit = variant.noise_level * noise[onset:] + (1.0 - variant.noise_level) * body
        out[onset:] += gain * np.exp(-variant.decay * span) * hit
        onset += max(1, int(rng.uniform(0.6, 1.4) * sample_rate / variant.hit_rate))
    return out * _envelope(n, 0.001, 0.02, sample_rate)


_RENDERERS = {
    SynthFamily.BOWED: _render_bowed,
    SynthFamily.PLUCKED: _render_plucked,
    SynthFamily.STRUCK: _render_struck,
    SynthFamily.WIND: _render_wind,
    SynthFamily.PERCUSSIVE: _render_percussive,
}


def synth_instrument(
    family: Union[SynthFamily, str],
    leaf_variant: LeafVariant,
    duration_s: float,
    seed: SeedLike,
    sample_rate: int = SAMPLE_RATE,
) -> AudioClip:
    """
    Render one note of a synthetic instrument

    Args:
        family: bowed, plucked, struck, wind or percussive
        leaf_variant: Pitch range, decay, inharmonicity, brightness and noise
        duration_s: Note length in seconds
        seed: Integer or SeedSequence; equal seeds give identical waveforms

    Returns:
        AudioClip peak-normalised to 0.5 full scale
    """
    try:
        family = SynthFamily(family)
    except ValueError:
        raise ConfigError(f"unknown instrument family '{family}'") from None
    if duration_s <= 0:
        raise ConfigError(f"duration must be positive, got {duration_s}")

    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = float(rng.uniform(*leaf_variant.f0_range))

    samples = _RENDERERS[family](rng, t, f0, leaf_variant, sample_rate)
    peak = np.max(np.abs(samples))
    if peak > 0:
        samples = samples * (PEAK_LEVEL / peak)
    return AudioClip(samples=samples, sample_rate=sample_rate, source_id=leaf_variant.name, label=leaf_variant.name)


def synth_recording(
    leaf_variant: LeafVariant,
    n_notes: int,
    seed: SeedLike,
    note_duration_s: Tuple[float, float] = (1.5, 2.5),
    rest_s: float = 0.25,
    source_id: Optional[str] = None,
    sample_rate: int = SAMPLE_RATE,
) -> AudioClip:
    """Several notes of one leaf separated by rests of digital silence"""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(n_notes + 1)
    durations = np.random.default_rng(children[0]).uniform(*note_duration_s, size=n_notes)
    rest = np.zeros(int(round(rest_s * sample_rate)))

    parts = []
    for duration, child in zip(durations, children[1:]):
        parts.append(synth_instrument(leaf_variant.family, leaf_variant, float(duration), child, sample_rate).samples)
        parts.append(rest)
    return AudioClip(
        samples=np.concatenate(parts),
        sample_rate=sample_rate,
        source_id=source_id or leaf_variant.name,
        label=leaf_variant.name,
    )


# ------------------------------------------------------------- vector data


def gaussian_hierarchy_vectors(
    tree: ClassTree,
    per_class: int,
    dim: int = 32,
    seed: int = 0,
    leaf_scale: float = 1.0,
    level_growth: float = 1.5,
    noise: float = 1.0,
    leaves: Optional[List[str]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gaussian clusters whose means are sums of per-node offsets along each leaf's chain

    A node at level h draws its offset with scale leaf_scale * level_growth**h, so
    leaves sharing ancestors have nearby means.

    Returns:
        Tuple of (features [n, dim], leaf-name labels [n])
    """
    if per_class <= 0 or dim <= 0:
        raise ConfigError("per_class and dim must be positive")
    rng = np.random.default_rng(seed)
    offsets = {
        node.id: rng.normal(0.0, leaf_scale * level_growth ** node.level, size=dim)
        for node in tree.nodes
        if node.parent is not None
    }

    names = list(leaves) if leaves is not None else list(tree.leaf_names)
    features, labels = [], []
    for name in names:
        mean = sum(offsets[node] for node in tree.chain(name) if node in offsets)
        features.append(mean + rng.normal(0.0, noise, size=(per_class, dim)))
        labels.extend([name] * per_class)
    return np.concatenate(features), np.array(labels)
