"""
Patch Datasets
Labeled pools of log-Mel patches (or vectors), the on-disk feature cache and
builders for the synthetic dataset and labeled audio directories
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from features.audio import (
    N_MELS,
    SILENCE_THRESHOLD_DB,
    AudioClip,
    LogMelPatch,
    frames_per_segment,
    load_wav,
    log_mel,
    remove_silence,
    segment,
    summarize_patch,
    write_wav,
)
from features.synth import SynthManifest, synth_recording
from utils.errors import DataError

logger = logging.getLogger(__name__)


class FeatureKind(str, Enum):
    LOGMEL = "logmel"
    SUMMARY = "summary"


@dataclass
class PatchPool:
    """
    Feature rows with their leaf labels and provenance

    features is [n, mel bins, frames] for log-Mel patches or [n, dim] for vectors.
    """
    features: np.ndarray
    labels: np.ndarray
    clip_ids: np.ndarray
    segment_index: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels).astype(str)
        n = len(self.labels)
        self.clip_ids = np.asarray(self.clip_ids).astype(str) if len(self.clip_ids) else np.array([""] * n)
        self.segment_index = np.asarray(self.segment_index, dtype=np.int64) if len(self.segment_index) else np.zeros(n, dtype=np.int64)
        if not (self.features.shape[0] == n == len(self.clip_ids) == len(self.segment_index)):
            raise DataError(
                f"pool columns disagree: {self.features.shape[0]} features, {n} labels, "
                f"{len(self.clip_ids)} clip ids, {len(self.segment_index)} segment indices"
            )
        if not np.all(np.isfinite(self.features)):
            raise DataError("pool contains non-finite features")

    @classmethod
    def from_arrays(cls, features: np.ndarray, labels: Sequence[str]) -> "PatchPool":
        n = len(labels)
        return cls(
            features=np.asarray(features, dtype=np.float64),
            labels=np.asarray(labels),
            clip_ids=np.array([f"row{i}" for i in range(n)]),
            segment_index=np.zeros(n, dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_shape(self) -> List[int]:
        return list(self.features.shape[1:])

    @property
    def classes(self) -> List[str]:
        return sorted(set(self.labels.tolist()))

    def counts(self) -> Dict[str, int]:
        names, counts = np.unique(self.labels, return_counts=True)
        return dict(zip(names.tolist(), counts.tolist()))

    def indices_of(self, label: str) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def subset(self, labels: Iterable[str]) -> "PatchPool":
        """Rows whose label is in labels, in original order"""
        keep = np.isin(self.labels, list(labels))
        return PatchPool(
            features=self.features[keep],
            labels=self.labels[keep],
            clip_ids=self.clip_ids[keep],
            segment_index=self.segment_index[keep],
        )

    def with_features(self, features: np.ndarray) -> "PatchPool":
        return PatchPool(features=features, labels=self.labels, clip_ids=self.clip_ids, segment_index=self.segment_index)

    def summarized(self) -> "PatchPool":
        """Replace 2-D patches with per-bin mean and std vectors"""
        if self.features.ndim != 3:
            return self
        return self.with_features(np.stack([summarize_patch(m) for m in self.features]))


class FeatureCache:
    """
    One binary fp64 file of patches per clip plus a JSON sidecar

    Layout: {root}/{clip_id}.npy holding [segments, mel bins, frames] and
    {root}/{clip_id}.json with label, source, segment indices and frame count.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _paths(self, clip_id: str):
        safe = clip_id.replace("/", "_")
        return self.root / f"{safe}.npy", self.root / f"{safe}.json"

    def has(self, clip_id: str) -> bool:
        return all(p.exists() for p in self._paths(clip_id))

    def save(self, clip_id: str, label: str, patches: np.ndarray, segment_indices: Sequence[int], source: str = ""):
        array_path, sidecar_path = self._paths(clip_id)
        np.save(array_path, np.asarray(patches, dtype="<f8"))
        sidecar = {
            "clip_id": clip_id,
            "label": label,
            "source": source,
            "segment_index": [int(i) for i in segment_indices],
            "frames": int(patches.shape[-1]) if len(patches) else frames_per_segment(),
            "n_patches": int(len(patches)),
        }
        sidecar_path.write_text(json.dumps(sidecar, indent=2), encoding="utf-8")

    def load(self, clip_id: str):
        array_path, sidecar_path = self._paths(clip_id)
        if not self.has(clip_id):
            raise DataError(f"clip '{clip_id}' is not in the feature cache at {self.root}")
        try:
            sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
            patches = np.load(array_path, allow_pickle=False)
        except (json.JSONDecodeError, ValueError, OSError) as exc:
            raise DataError(f"corrupt cache entry for '{clip_id}': {exc}") from exc
        if len(patches) != sidecar["n_patches"]:
            raise DataError(f"cache entry '{clip_id}' holds {len(patches)} patches, sidecar says {sidecar['n_patches']}")
        return patches, sidecar

    def clip_ids(self) -> List[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))

    def load_pool(self, clip_ids: Optional[Sequence[str]] = None) -> PatchPool:
        ids = list(clip_ids) if clip_ids is not None else self.clip_ids()
        features, labels, sources, segments = [], [], [], []
        for clip_id in ids:
            patches, sidecar = self.load(clip_id)
            if not len(patches):
                continue
            features.append(patches)
            labels.extend([sidecar["label"]] * len(patches))
            sources.extend([clip_id] * len(patches))
            segments.extend(sidecar["segment_index"])
        if not features:
            raise DataError(f"feature cache at {self.root} holds no patches")
        return PatchPool(
            features=np.concatenate(features),
            labels=np.array(labels),
            clip_ids=np.array(sources),
            segment_index=np.array(segments),
        )


@dataclass(frozen=True)
class RecordingTask:
    """A recording to featurise; render() is only called on a cache miss"""
    clip_id: str
    label: str
    render: Callable[[], AudioClip]


def clip_to_patches(clip: AudioClip, threshold_db: float = SILENCE_THRESHOLD_DB) -> List[LogMelPatch]:
    """Silence removal, 1 s / 0.5 s segmentation and log-Mel for one recording"""
    return [
        log_mel(piece)
        for region in remove_silence(clip, threshold_db=threshold_db)
        for piece in segment(region)
    ]


def _extract(task: RecordingTask, cache: Optional[FeatureCache], threshold_db: float):
    if cache is not None and cache.has(task.clip_id):
        patches, sidecar = cache.load(task.clip_id)
        return task.clip_id, sidecar["label"], patches, sidecar["segment_index"]

    extracted = clip_to_patches(task.render(), threshold_db)
    if extracted:
        matrices = np.stack([patch.matrix for patch in extracted])
    else:
        matrices = np.zeros((0, N_MELS, frames_per_segment()))
    indices = list(range(len(extracted)))
    if cache is not None:
        cache.save(task.clip_id, task.label, matrices, indices, source=task.clip_id)
    return task.clip_id, task.label, matrices, indices


def _pool_from_tasks(
    tasks: Sequence[RecordingTask],
    cache: Optional[FeatureCache],
    threshold_db: float,
    workers: int,
    description: str,
) -> PatchPool:
    features, labels, sources, segments = [], [], [], []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        results = executor.map(lambda task: _extract(task, cache, threshold_db), tasks)
        for clip_id, label, matrices, indices in tqdm(results, total=len(tasks), desc=description, leave=False):
            if not len(matrices):
                logger.warning(f"Recording '{clip_id}' produced no 1 s segments after silence removal")
                continue
            features.append(matrices)
            labels.extend([label] * len(matrices))
            sources.extend([clip_id] * len(matrices))
            segments.extend(indices)
    if not features:
        raise DataError("no patches were extracted")
    return PatchPool(
        features=np.concatenate(features),
        labels=np.array(labels),
        clip_ids=np.array(sources),
        segment_index=np.array(segments),
    )


def synthetic_tasks(manifest: SynthManifest, leaves: Optional[Sequence[str]] = None) -> List[RecordingTask]:
    """One task per recording; seeds derive from the manifest seed and leaf position"""
    names = list(leaves) if leaves is not None else [leaf.name for leaf in manifest.leaves]
    per_leaf = np.random.SeedSequence(manifest.seed).spawn(len(manifest.leaves))
    seeds = {leaf.name: seq for leaf, seq in zip(manifest.leaves, per_leaf)}

    tasks = []
    for name in names:
        variant = manifest.variant(name)
        for r, recording_seed in enumerate(seeds[name].spawn(manifest.recordings_per_leaf)):
            clip_id = f"{name}-{r:03d}"
            tasks.append(RecordingTask(
                clip_id=clip_id,
                label=name,
                render=partial(
                    synth_recording,
                    variant,
                    manifest.notes_per_recording,
                    recording_seed,
                    note_duration_s=tuple(manifest.note_duration_s),
                    rest_s=manifest.rest_s,
                    source_id=clip_id,
                ),
            ))
    return tasks


def build_synthetic_pool(
    manifest: SynthManifest,
    cache_dir: Optional[Union[str, Path]] = None,
    threshold_db: float = SILENCE_THRESHOLD_DB,
    workers: int = 4,
    leaves: Optional[Sequence[str]] = None,
) -> PatchPool:
    """Render, segment and featurise the synthetic dataset (log-Mel patches)"""
    tasks = synthetic_tasks(manifest, leaves)
    cache = FeatureCache(cache_dir) if cache_dir is not None else None
    logger.info(f"Building synthetic pool from {len(tasks)} recordings")
    pool = _pool_from_tasks(tasks, cache, threshold_db, workers, "synthetic audio")
    logger.info(f"Synthetic pool: {len(pool)} patches over {len(pool.classes)} leaves")
    return pool


def _load_labeled_wav(path: Path) -> AudioClip:
    return replace(load_wav(path), source_id=f"{path.parent.name}-{path.stem}", label=path.parent.name)


def load_audio_directory(
    root: Union[str, Path],
    cache_dir: Optional[Union[str, Path]] = None,
    threshold_db: float = SILENCE_THRESHOLD_DB,
    workers: int = 4,
) -> PatchPool:
    """
    Featurise a labeled directory laid out as <leaf-label>/<file>.wav
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"audio directory not found: {root}")
    files = sorted(p for p in root.glob("*/*") if p.suffix.lower() == ".wav")
    if not files:
        raise DataError(f"no .wav files under {root}/<label>/")

    tasks = [
        RecordingTask(clip_id=f"{path.parent.name}-{path.stem}", label=path.parent.name, render=partial(_load_labeled_wav, path))
        for path in files
    ]
    cache = FeatureCache(cache_dir) if cache_dir is not None else None
    logger.info(f"Loading {len(files)} recordings from {root}")
    return _pool_from_tasks(tasks, cache, threshold_db, workers, "audio files")


def write_synthetic_audio(manifest: SynthManifest, out_dir: Union[str, Path]) -> List[Path]:
    """Write the synthetic recordings as <leaf>/<recording>.wav"""
    out_dir = Path(out_dir)
    written = []
    for task in tqdm(synthetic_tasks(manifest), desc="writing wav", leave=False):
        written.append(write_wav(task.render(), out_dir / task.label / f"{task.clip_id}.wav"))
    logger.info(f"Wrote {len(written)} recordings to {out_dir}")
    return written
