"""Deterministic artifact I/O: canonical JSON, CSV, config hashing,
stage manifests. No timestamps anywhere, so identical inputs reproduce
identical bytes."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(obj, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(float(v)) if isinstance(v, (float, np.floating)) else v
                 for v in row]
            )


def config_hash(config_dict: dict) -> str:
    blob = json.dumps(jsonable(config_dict), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(stage_dir, stage: str, cfg_hash: str, seeds,
                   extra: dict | None = None) -> None:
    manifest = {
        "stage": stage,
        "config_hash": cfg_hash,
        "seeds": list(seeds),
        "version": 1,
    }
    if extra:
        manifest.update(extra)
    dump_json(manifest, Path(stage_dir) / "manifest.json")
