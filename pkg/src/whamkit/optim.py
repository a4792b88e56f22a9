"""Adam optimizer on flat parameter vectors and the checkpoint file format.

Checkpoint layout (little-endian):
    8 bytes   magic b"WKCKPT01"
    u32       format version (currently 1)
    u32       header length in bytes
    bytes     header JSON: {"dims": {...}, "meta": {...},
                            "sections": [{"name": str, "count": int}, ...]}
    f64[]     section payloads, concatenated in header order

The "params" section is the flat parameter vector; optimizer state adds
"adam_m" and "adam_v" sections plus a step counter in meta.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, InvalidInputError

MAGIC = b"WKCKPT01"
VERSION = 1


@dataclass
class AdamState:
    """Bias-corrected Adam with an optional per-parameter learning-rate scale."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: np.ndarray = field(default=None)  # type: ignore[assignment]
    step_count: int = 0
    lr_scale: np.ndarray | None = None

    def ensure(self, n: int) -> None:
        if self.m is None:
            self.m = np.zeros(n)
            self.v = np.zeros(n)
        if self.m.shape != (n,):
            raise InvalidInputError("Adam state length does not match the parameter vector")


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One Adam update; returns the new parameter vector."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise InvalidInputError("parameter and gradient vectors differ in length")
    state.ensure(params.size)
    state.step_count += 1
    t = state.step_count
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    step = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    if state.lr_scale is not None:
        step = step * state.lr_scale
    return params - step


def save_checkpoint(path, dims: dict, params_vec: np.ndarray,
                    meta: dict | None = None,
                    extra_sections: dict[str, np.ndarray] | None = None) -> None:
    sections = [("params", np.asarray(params_vec, dtype=np.float64))]
    for name, arr in (extra_sections or {}).items():
        sections.append((name, np.asarray(arr, dtype=np.float64)))
    header = {
        "dims": dims,
        "meta": meta or {},
        "sections": [{"name": n, "count": int(a.size)} for n, a in sections],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for _, arr in sections:
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, dict, dict[str, np.ndarray]]:
    """Returns (dims, meta, sections)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        sections = {}
        for sec in header["sections"]:
            raw = fh.read(8 * sec["count"])
            if len(raw) != 8 * sec["count"]:
                raise CheckpointError(f"{path}: truncated section {sec['name']!r}")
            sections[sec["name"]] = np.frombuffer(raw, dtype="<f8").copy()
    if "params" not in sections:
        raise CheckpointError(f"{path}: missing params section")
    return header["dims"], header["meta"], sections
