"""Model checkpoint container.

A checkpoint is an uncompressed NumPy ``.npz`` archive (no pickled objects):

- ``__meta__``: UTF-8 JSON as a uint8 array with ``format``, ``input_shape``,
  ``layers`` (list of layer dicts), ``trainable``, ``step`` and ``config_hash``.
- ``param/<layer>/<name>``, ``state/<layer>/<name>``, ``adam_m/<layer>/<name>``,
  ``adam_v/<layer>/<name>``: the arrays, stored at their own dtype.

Arrays are written verbatim, so a write/read round trip is bit-exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .layers import layer_from_dict
from .model import NetworkModel

FORMAT = "simenhance-checkpoint/1"
_GROUPS = ("param", "state", "adam_m", "adam_v")


def save_checkpoint(model: NetworkModel, path, config_hash: str = "") -> Path:
    path = Path(path)
    meta = {
        "format": FORMAT,
        "input_shape": list(model.input_shape),
        "layers": [layer.to_dict() for layer in model.layers],
        "trainable": list(model.trainable),
        "step": model.step,
        "config_hash": config_hash,
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for group, seq in zip(_GROUPS, (model.params, model.state, model.opt_m, model.opt_v)):
        for i, d in enumerate(seq):
            for name, arr in d.items():
                arrays[f"{group}/{i}/{name}"] = arr
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path) -> tuple[NetworkModel, str]:
    """Read a checkpoint; returns the model and the stored config hash."""
    with np.load(Path(path), allow_pickle=False) as data:
        try:
            meta = json.loads(data["__meta__"].tobytes().decode())
        except (KeyError, ValueError) as exc:
            raise ParseError(f"{path}: not a checkpoint ({exc})") from None
        if meta.get("format") != FORMAT:
            raise ParseError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        n = len(meta["layers"])
        groups = {g: [{} for _ in range(n)] for g in _GROUPS}
        for key in data.files:
            if key == "__meta__":
                continue
            group, idx, name = key.split("/")
            groups[group][int(idx)][name] = data[key].copy()
    model = NetworkModel(
        layers=[layer_from_dict(d) for d in meta["layers"]],
        input_shape=tuple(meta["input_shape"]),
        params=groups["param"],
        state=groups["state"],
        trainable=list(meta["trainable"]),
        opt_m=groups["adam_m"],
        opt_v=groups["adam_v"],
        step=int(meta["step"]),
    )
    return model, meta["config_hash"]
