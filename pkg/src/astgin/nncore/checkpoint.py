"""Parameter checkpoints.

Layout: a numpy ``.npz`` archive.  Each parameter is stored as the array
``param/<name>`` (shape and dtype are carried by the array header), plus a
``__meta__`` entry holding a UTF-8 JSON document with at least
``{"format": "astgin-checkpoint", "version": 1, "params": [...], "decay": {...}}``
and any caller metadata (model config, training config) under ``"extra"``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .optim import ParameterStore

FORMAT = "astgin-checkpoint"
VERSION = 1


def save_checkpoint(path, store: ParameterStore, extra: dict | None = None) -> Path:
    path = Path(path)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "params": list(store),
        "decay": {n: store.decays(n) for n in store},
        "extra": extra or {},
    }
    arrays = {f"param/{n}": p.data for n, p in store.items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[ParameterStore, dict]:
    with np.load(Path(path), allow_pickle=False) as archive:
        if "__meta__" not in archive:
            raise ValueError(f"{path}: not a checkpoint (missing __meta__)")
        meta = json.loads(archive["__meta__"].tobytes().decode("utf-8"))
        if meta.get("format") != FORMAT:
            raise ValueError(f"{path}: unknown format {meta.get('format')!r}")
        if meta.get("version") != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')!r}")
        store = ParameterStore()
        for name in meta["params"]:
            arr = archive[f"param/{name}"]
            store.add(name, arr, decay=meta["decay"][name])
            store[name].data = arr.copy()
    return store, meta.get("extra", {})
