"""Run artifacts: deterministic JSON, RFC-4180 CSV tables and the manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from datetime import datetime, timezone

import numpy as np


def jsonable(x):
    """Convert numpy and complex values; non-finite floats become ``None``."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": jsonable(float(x.real)), "im": jsonable(float(x.imag))}
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def blob_hash(data: bytes) -> str:
    """Git-style blob hash: sha1 of ``b"blob <size>\\0" + data``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


class RunWriter:
    """Collects files under ``out`` and records their hashes for the manifest."""

    def __init__(self, out: str):
        self.out = out
        self.files: dict[str, str] = {}
        os.makedirs(out, exist_ok=True)

    def _write(self, name: str, data: bytes):
        with open(os.path.join(self.out, name), "wb") as fh:
            fh.write(data)
        self.files[name] = blob_hash(data)

    def json(self, name: str, obj):
        self._write(name, dumps(obj).encode())

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        self._write(name, buf.getvalue().encode())

    def manifest(self, command: str, config: dict, seed, extra=None):
        data = {
            "command": command,
            "config": config,
            "seed": seed,
            "files": dict(sorted(self.files.items())),
            "created_utc": datetime.now(timezone.utc).isoformat(),
        }
        if extra:
            data.update(extra)
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            fh.write(dumps(data))


def h_rows(lam, h):
    """Rows ``lambda, re_1, im_1, re_2, ...`` for a sampled spectral characteristic."""
    for x, v in zip(lam, h):
        row = [float(x)]
        for z in v:
            row += [float(np.real(z)), float(np.imag(z))]
        yield row


def h_header(K: int):
    return ["lambda"] + [f"{p}_{k + 1}" for k in range(K) for p in ("re", "im")]
