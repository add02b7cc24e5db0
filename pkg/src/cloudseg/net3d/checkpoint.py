"""Bit-exact, versioned model checkpoints.

A checkpoint is a JSON header (config, parameter manifest with shapes and
byte offsets, format version, payload hash) followed by a little-endian
float32 blob. Parameters and Adam moments are stored in the model's
parameter order, so save followed by load reproduces the model bitwise.
"""

from __future__ import annotations

import numpy as np

from ..binio import read_container, write_container
from ..errors import CorruptCheckpoint, CorruptFile, VersionMismatch
from .unet import UNet3D, UNetConfig

CHECKPOINT_MAGIC = b"CSEGCKPT"
CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(model: UNet3D, path, extra: dict | None = None) -> None:
    manifest = []
    blobs = []
    offset = 0

    def add(name: str, kind: str, arr: np.ndarray) -> None:
        nonlocal offset
        raw = np.ascontiguousarray(arr.astype("<f4", copy=False)).tobytes()
        manifest.append({"name": name, "kind": kind, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)

    for name, p in model.params.items():
        add(name, "param", p)
    for name in model.params:
        if name in model.adam.m:
            add(name, "adam_m", model.adam.m[name])
            add(name, "adam_v", model.adam.v[name])

    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "in_channels": model.in_channels,
        "dtype": "float32",
        "adam_t": model.adam.t,
        "manifest": manifest,
    }
    if extra:
        header["extra"] = extra
    write_container(path, CHECKPOINT_MAGIC, header, b"".join(blobs))


def load_checkpoint(path) -> UNet3D:
    try:
        header, blob = read_container(path, CHECKPOINT_MAGIC)
    except CorruptFile as exc:
        raise CorruptCheckpoint(str(exc)) from exc
    version = header.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format version {version!r} is not supported")

    model = UNet3D(UNetConfig.from_dict(header["config"]), in_channels=header["in_channels"])
    model.adam.t = header.get("adam_t", 0)
    seen = set()
    for sec in header["manifest"]:
        shape = tuple(sec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=sec["offset"]).reshape(shape).copy()
        name, kind = sec["name"], sec["kind"]
        if kind == "param":
            if name not in model.params or model.params[name].shape != shape:
                raise CorruptCheckpoint(f"manifest entry {name!r} does not fit the config")
            model.params[name] = arr
            seen.add(name)
        elif kind == "adam_m":
            model.adam.m[name] = arr
        elif kind == "adam_v":
            model.adam.v[name] = arr
        else:
            raise CorruptCheckpoint(f"unknown manifest kind {kind!r}")
    missing = set(model.params) - seen
    if missing:
        raise CorruptCheckpoint(f"checkpoint lacks parameters: {sorted(missing)[:3]}...")
    return model


def checkpoint_extra(path) -> dict:
    """The free-form metadata stored alongside a checkpoint (step counters etc.)."""
    try:
        header, _ = read_container(path, CHECKPOINT_MAGIC)
    except CorruptFile as exc:
        raise CorruptCheckpoint(str(exc)) from exc
    return header.get("extra", {})
