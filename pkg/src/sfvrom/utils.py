import hashlib
import json
from enum import Enum
from pathlib import Path

import numpy as np

from sfvrom.config import ArtifactIOError, raise_error

ROOT_FOLDER = "results"
SUMMARY_FILE = "summary.json"
STATS_FILE = "stats.csv"
SLICE_FILE = "slice.csv"
FRAMES_FILE = "frames.sfvm"
FRAME_TIMES_FILE = "frame_times.sfvm"
SNAPSHOT_FILE = "snapshots.sfvm"
SNAPSHOT_COLUMNS_FILE = "snapshot_columns.sfvm"
SNAPSHOT_MANIFEST = "snapshots.json"
BASIS_FILE = "basis.sfvm"
SINGULAR_VALUES_FILE = "singular_values.sfvm"
FACE_INTEGRALS_FILE = "face_integrals.sfvm"
HYPER_INDEX_FILE = "hyper_index.sfvm"
BASIS_MANIFEST = "basis.json"
SPOOL_FOLDER = "spool"
CONFIG_FILE = "run.cfg"


def generate_path(output_folder, problem, method, nx, counts) -> str:
    """Generate path according to run parameters"""
    if output_folder is None:
        output_folder = ROOT_FOLDER
    stochastic = "x".join(str(c) for c in counts) or "det"
    return f"./{output_folder}/{problem}_{method}_{nx}nx_{stochastic}ny"


def create_folder(path) -> Path:
    """Create folder and returns path"""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as error:
        raise_error(ArtifactIOError, f"Cannot create folder {path}: {error}")
    return path


def dump_json(path: Path, data):
    try:
        Path(path).write_text(json.dumps(convert_numpy(data), indent=4))
    except OSError as error:
        raise_error(ArtifactIOError, f"Cannot write {path}: {error}")


def json_load(path):
    try:
        with open(path) as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as error:
        raise_error(ArtifactIOError, f"Cannot read {path}: {error}")


def convert_numpy(obj):
    """Convert numpy objects into python types which can be dumped."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    elif isinstance(obj, np.generic):
        return obj.item()
    elif isinstance(obj, Enum):
        return obj.value
    elif isinstance(obj, Path):
        return str(obj)
    elif isinstance(obj, dict):
        return {key: convert_numpy(val) for key, val in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy(item) for item in obj]
    else:
        return obj


def array_hash(*arrays):
    """sha256 over the raw little-endian bytes of ``arrays``."""
    digest = hashlib.sha256()
    for array in arrays:
        array = np.ascontiguousarray(array)
        digest.update(str(array.shape).encode())
        digest.update(array.astype(array.dtype.newbyteorder("<")).tobytes())
    return digest.hexdigest()
