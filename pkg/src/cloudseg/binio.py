"""Binary container shared by grid sidecars and model checkpoints.

Layout: 8-byte magic, little-endian u32 header length, UTF-8 JSON header,
raw payload. The header carries a SHA-256 of the payload so truncation and
corruption are detected on load.
"""

from __future__ import annotations

import hashlib
import json
import struct

from .errors import CorruptFile

_LEN = struct.Struct("<I")


def write_container(path, magic: bytes, header: dict, blob: bytes) -> None:
    if len(magic) != 8:
        raise ValueError("magic must be 8 bytes")
    header = dict(header)
    header["blob_sha256"] = hashlib.sha256(blob).hexdigest()
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(_LEN.pack(len(header_bytes)))
        f.write(header_bytes)
        f.write(blob)


def read_container(path, magic: bytes) -> tuple[dict, bytes]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:8] != magic:
        raise CorruptFile(f"{path}: bad or missing magic")
    (header_len,) = _LEN.unpack(data[8:12])
    if len(data) < 12 + header_len:
        raise CorruptFile(f"{path}: truncated header")
    try:
        header = json.loads(data[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: unreadable header: {exc}") from exc
    blob = data[12 + header_len :]
    expected = header.get("blob_sha256")
    if expected is None or hashlib.sha256(blob).hexdigest() != expected:
        raise CorruptFile(f"{path}: payload hash mismatch")
    return header, blob
