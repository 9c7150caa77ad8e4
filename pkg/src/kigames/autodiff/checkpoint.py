"""Checkpoint files: a versioned ``.npz`` of named tensors plus JSON metadata."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT = "kigames-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"param/{k}": v for k, v in params.state_dict().items()}
    header = {"format": FORMAT, "version": VERSION, "names": params.names(), "meta": meta or {}}
    arrays["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path):
    """Return ``(state_dict, meta)``; arrays come back bit-identical to what was saved."""
    with np.load(Path(path), allow_pickle=False) as z:
        if "__header__" not in z:
            raise CheckpointError(f"{path}: not a {FORMAT} file")
        header = json.loads(bytes(z["__header__"]).decode())
        if header.get("format") != FORMAT:
            raise CheckpointError(f"{path}: unknown format {header.get('format')!r}")
        if header.get("version") != VERSION:
            raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
        state = {name: z[f"param/{name}"].copy() for name in header["names"]}
    return state, header["meta"]
