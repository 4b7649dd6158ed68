"""Binary checkpoints for networks.

Layout::

    CDRL1\n
    <version>\n
    <one-line UTF-8 JSON header: spec, layout, env, kind, n_values>\n
    <n_values little-endian float64 in layout order>
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .diffcore import MlpSpec, ParamSet
from .exceptions import FormatError

MAGIC = b"CDRL1"
VERSION = 1


class Checkpoint(NamedTuple):
    spec: MlpSpec
    params: ParamSet
    env: Optional[str]
    kind: str


def checkpoint_save(path, spec: MlpSpec, params: ParamSet, env=None, kind="student"):
    if params.layout != tuple(spec.layout()):
        raise FormatError("parameters do not match the spec layout")
    header = {
        "spec": spec.to_dict(),
        "layout": [list(x) for x in params.layout],
        "env": env,
        "kind": kind,
        "n_values": params.size,
    }
    blob = b"".join([
        MAGIC, b"\n",
        str(VERSION).encode(), b"\n",
        json.dumps(header, sort_keys=True).encode("utf-8"), b"\n",
        params.data.astype("<f8").tobytes(),
    ])
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def checkpoint_load(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != MAGIC:
        raise FormatError(f"{path}: not a CDRL1 checkpoint")
    try:
        version = int(parts[1])
    except ValueError:
        raise FormatError(f"{path}: unreadable version field") from None
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(parts[2].decode("utf-8"))
        spec = MlpSpec.from_dict(header["spec"])
        n = int(header["n_values"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: bad header ({exc})") from None
    payload = parts[3]
    if len(payload) != 8 * n:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, expected {8 * n}")
    layout = [tuple(x) for x in header["layout"]]
    if tuple(spec.layout()) != tuple((str(a), int(b), int(c), bool(d)) for a, b, c, d in layout):
        raise FormatError(f"{path}: header layout disagrees with spec")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    return Checkpoint(spec, ParamSet(layout, data), header.get("env"), header.get("kind", "student"))
