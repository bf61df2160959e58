"""Run metadata stamped into every output artifact."""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os

from . import __version__


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON encoding, first 16 hex digits."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def timestamp() -> str:
    """UTC ISO-8601 time; ``SOURCE_DATE_EPOCH`` pins it for reproducible artifacts."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
           else _dt.datetime.now(_dt.timezone.utc))
    return now.replace(microsecond=0).isoformat()


def stamp(settings: dict, seed: int, /, **extra) -> dict:
    return {"tool": "sidelink-sim", "version": __version__, "config_hash": config_hash(settings),
            "seed": seed, "timestamp": timestamp(), **extra}
