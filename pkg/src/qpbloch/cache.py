"""Content-addressed on-disk cache for stage results.

Keys are SHA-256 digests of the canonical JSON of every field that affects
the numbers.  Each entry stores its payload with a checksum; an entry that
fails to parse or verify is reported and treated as a miss.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from pathlib import Path

from .config import canonical_json

logger = logging.getLogger(__name__)

ENV_VAR = "QPBLOCH_CACHE_DIR"


def default_dir() -> Path | None:
    d = os.environ.get(ENV_VAR)
    return Path(d) if d else None


def make_key(stage: str, **fields) -> str:
    return hashlib.sha256(canonical_json({"stage": stage, **fields}).encode()).hexdigest()


class Cache:
    """Directory-backed store; ``root=None`` disables caching."""

    def __init__(self, root: str | os.PathLike | None):
        self.root = Path(root) if root is not None else None
        self._write_lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def lookup(self, key: str):
        if self.root is None:
            self.misses += 1
            return None
        path = self._path(key)
        try:
            raw = path.read_text()
        except FileNotFoundError:
            self.misses += 1
            return None
        try:
            entry = json.loads(raw)
            body = canonical_json(entry["payload"])
            if entry["key"] != key or entry["sha256"] != hashlib.sha256(body.encode()).hexdigest():
                raise ValueError("checksum mismatch")
        except (ValueError, KeyError, TypeError) as exc:
            logger.warning("corrupt cache entry %s (%s); recomputing", path, exc)
            self.misses += 1
            return None
        self.hits += 1
        return entry["payload"]

    def store(self, key: str, payload) -> None:
        if self.root is None:
            return
        body = canonical_json(payload)
        entry = {"key": key, "sha256": hashlib.sha256(body.encode()).hexdigest(), "payload": json.loads(body)}
        path = self._path(key)
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "w") as fh:
                    fh.write(canonical_json(entry))
                os.replace(tmp, path)
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise

    def get_or_compute(self, key: str, compute):
        """Cached payload, or ``compute()`` normalized through JSON and stored."""
        hit = self.lookup(key)
        if hit is not None:
            return hit
        payload = json.loads(canonical_json(compute()))
        self.store(key, payload)
        return payload
