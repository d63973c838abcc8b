"""
Parameter checkpoints
A flat little-endian fp64 container ({stem}.bin) with a JSON manifest ({stem}.json)
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from utils.errors import DataError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_DTYPE = np.dtype("<f8")


def _paths(path: Union[str, Path]) -> Tuple[Path, Path]:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".bin", ".json") else path
    return stem.with_suffix(".bin"), stem.with_suffix(".json")


def save_arrays(
    path: Union[str, Path],
    arrays: Mapping[str, np.ndarray],
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """
    Write named arrays and a manifest; returns the manifest path

    Arrays are stored in insertion order, each at the recorded byte offset.
    """
    bin_path, manifest_path = _paths(path)
    bin_path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    offset = 0
    with open(bin_path, "wb") as fh:
        for name, array in arrays.items():
            payload = np.ascontiguousarray(array, dtype=_DTYPE)
            raw = payload.tobytes(order="C")
            fh.write(raw)
            entries.append({
                "name": name,
                "shape": list(payload.shape),
                "offset": offset,
                "nbytes": len(raw),
            })
            offset += len(raw)

    manifest = {
        "format_version": FORMAT_VERSION,
        "dtype": "float64",
        "byte_order": "little",
        "data_file": bin_path.name,
        "arrays": entries,
        "metadata": dict(metadata or {}),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    logger.debug(f"Saved {len(entries)} arrays ({offset} bytes) to {bin_path}")
    return manifest_path


def load_arrays(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """
    Read a checkpoint written by save_arrays

    Returns:
        Tuple of (name -> array, metadata)
    """
    bin_path, manifest_path = _paths(path)
    if not manifest_path.exists() or not bin_path.exists():
        raise DataError(f"checkpoint not found: {manifest_path}")

    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt checkpoint manifest {manifest_path}: {exc}") from exc

    blob = bin_path.read_bytes()
    arrays: Dict[str, np.ndarray] = {}
    for entry in manifest.get("arrays", []):
        start, size = int(entry["offset"]), int(entry["nbytes"])
        if start + size > len(blob):
            raise DataError(f"checkpoint {bin_path} is truncated at array '{entry['name']}'")
        values = np.frombuffer(blob, dtype=_DTYPE, count=size // _DTYPE.itemsize, offset=start)
        arrays[entry["name"]] = values.reshape(entry["shape"]).astype(np.float64)

    return arrays, manifest.get("metadata", {})
