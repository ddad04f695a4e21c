"""Reproducible run manifests: config hash, seed, outputs with content hashes."""

from __future__ import annotations

import hashlib
import json
import os

TOOL_VERSION = "0.1.0"


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, cfg_hash, seed, wall_time, outputs,
                   error_budget=None, extra=None):
    manifest = {
        "tool_version": TOOL_VERSION,
        "config_hash": cfg_hash,
        "seed": seed,
        "wall_time_s": wall_time,
        "rm_convention": "max_sectional",
        "outputs": [{"path": os.path.basename(p), "sha256": file_sha256(p)}
                    for p in outputs],
        "error_budget": error_budget or {},
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
