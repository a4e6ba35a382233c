"""
Verification Service for run provenance.

Hashes experiment configs so every result row can be traced back to its
inputs, and expands one seed into independent per-trial random streams.
"""

import hashlib
import json
from typing import Any, Dict, List

import numpy as np

SCHEMA_VERSION = "1"


def canonical_json(payload: Dict[str, Any]) -> str:
    """Key-sorted, whitespace-free JSON used for hashing."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(config: Dict[str, Any]) -> str:
    """
    SHA-256 of a config's canonical JSON (output location excluded).

    Args:
        config: Config as a plain dictionary

    Returns:
        First 16 hex characters of the digest
    """
    payload = {k: v for k, v in config.items() if k != "out"}
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]


def stream_words(seed: int, experiment: str, instance: int, trial: int = 0) -> List[int]:
    """Counter-based stream id: hash(seed, experiment, instance, trial) split into 32-bit words."""
    raw = f"{seed}|{experiment}|{instance}|{trial}"
    digest = hashlib.sha256(raw.encode()).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, len(digest), 4)]


def stream_rng(seed: int, experiment: str, instance: int, trial: int = 0) -> np.random.Generator:
    """Independent generator for one (instance, trial) cell of an experiment."""
    return np.random.default_rng(stream_words(seed, experiment, instance, trial))


def file_digest(path: str) -> str:
    """SHA-256 of a result file, recorded in summaries."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
