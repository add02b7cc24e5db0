"""PLY 1.0 reader and writer for colored, optionally labeled point clouds.

Supported layout: element ``vertex`` with float properties x, y, z, uchar
properties red, green, blue, and an optional uchar ``label``. Both ASCII and
binary little-endian encodings are handled; big-endian files are rejected.
Colors are 8-bit on disk and [0, 1] floats in memory.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .errors import IoFailure, MalformedPly, UnsupportedEncoding

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_header(f) -> tuple[str, int, list[tuple[str, str]]]:
    """Returns (encoding, vertex_count, [(property_name, numpy_dtype), ...])."""
    magic = f.readline().strip()
    if magic != b"ply":
        raise MalformedPly("missing 'ply' magic line")
    encoding = None
    vertex_count = None
    properties: list[tuple[str, str]] = []
    in_vertex = False
    while True:
        raw = f.readline()
        if not raw:
            raise MalformedPly("header ended before end_header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith("comment"):
            continue
        if line == "end_header":
            break
        parts = line.split()
        if parts[0] == "format":
            if parts[1] == "ascii":
                encoding = "ascii"
            elif parts[1] == "binary_little_endian":
                encoding = "binary-le"
            elif parts[1] == "binary_big_endian":
                raise UnsupportedEncoding("big-endian PLY is not supported")
            else:
                raise MalformedPly(f"unknown format {parts[1]!r}")
        elif parts[0] == "element":
            in_vertex = parts[1] == "vertex"
            if in_vertex:
                vertex_count = int(parts[2])
        elif parts[0] == "property" and in_vertex:
            if parts[1] == "list":
                raise MalformedPly("list properties on vertex element are not supported")
            if parts[1] not in _PLY_DTYPES:
                raise MalformedPly(f"unknown property type {parts[1]!r}")
            properties.append((parts[2], _PLY_DTYPES[parts[1]]))
    if encoding is None:
        raise MalformedPly("header has no format line")
    if vertex_count is None:
        raise MalformedPly("header has no vertex element")
    return encoding, vertex_count, properties


def load_ply(path) -> PointCloud:
    """Load a point cloud; colors are rescaled from 8-bit to [0, 1]."""
    with open(path, "rb") as f:
        encoding, n, properties = _parse_header(f)
        names = [name for name, _ in properties]
        for required in ("x", "y", "z", "red", "green", "blue"):
            if required not in names:
                raise MalformedPly(f"vertex element lacks property {required!r}")
        for axis in ("x", "y", "z"):
            if dict(properties)[axis] != "f4":
                raise MalformedPly(f"property {axis!r} must be float")
        for chan in ("red", "green", "blue"):
            if dict(properties)[chan] != "u1":
                raise MalformedPly(f"property {chan!r} must be uchar")
        if "label" in names and dict(properties)["label"] != "u1":
            raise MalformedPly("property 'label' must be uchar")

        dtype = np.dtype([(name, "<" + dt) for name, dt in properties])
        if encoding == "binary-le":
            payload = f.read(dtype.itemsize * n)
            if len(payload) < dtype.itemsize * n:
                raise MalformedPly("truncated binary payload")
            rows = np.frombuffer(payload, dtype=dtype, count=n)
        else:
            rows = np.zeros(n, dtype=dtype)
            for i in range(n):
                line = f.readline()
                if not line:
                    raise MalformedPly("truncated ascii payload")
                fields = line.split()
                if len(fields) < len(properties):
                    raise MalformedPly(f"ascii row {i} has too few fields")
                for (name, dt), tok in zip(properties, fields):
                    rows[i][name] = float(tok) if dt in ("f4", "f8") else int(tok)

    positions = np.column_stack([rows["x"], rows["y"], rows["z"]]).astype(np.float64)
    colors = np.column_stack([rows["red"], rows["green"], rows["blue"]]).astype(np.float64) / 255.0
    labels = rows["label"].copy() if "label" in names else None
    return PointCloud(positions, colors, labels)


def save_ply(cloud: PointCloud, path, encoding: str = "binary-le") -> None:
    """Write a cloud readable by load_ply; the label property appears only when present."""
    if encoding not in ("ascii", "binary-le"):
        raise ValueError(f"encoding must be 'ascii' or 'binary-le', got {encoding!r}")
    n = len(cloud)
    colors8 = np.clip(np.rint(cloud.colors * 255.0), 0, 255).astype(np.uint8)
    header = ["ply"]
    header.append("format ascii 1.0" if encoding == "ascii" else "format binary_little_endian 1.0")
    header.append(f"element vertex {n}")
    header += [f"property float {axis}" for axis in ("x", "y", "z")]
    header += [f"property uchar {chan}" for chan in ("red", "green", "blue")]
    if cloud.labels is not None:
        header.append("property uchar label")
    header.append("end_header")

    try:
        with open(path, "wb") as f:
            f.write(("\n".join(header) + "\n").encode("ascii"))
            if encoding == "ascii":
                pos = cloud.positions.astype(np.float32)
                for i in range(n):
                    fields = ["%.9g" % v for v in pos[i]] + [str(int(c)) for c in colors8[i]]
                    if cloud.labels is not None:
                        fields.append(str(int(cloud.labels[i])))
                    f.write((" ".join(fields) + "\n").encode("ascii"))
            else:
                spec = [("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                        ("red", "<u1"), ("green", "<u1"), ("blue", "<u1")]
                if cloud.labels is not None:
                    spec.append(("label", "<u1"))
                rows = np.zeros(n, dtype=np.dtype(spec))
                rows["x"], rows["y"], rows["z"] = (cloud.positions[:, k].astype(np.float32) for k in range(3))
                rows["red"], rows["green"], rows["blue"] = colors8[:, 0], colors8[:, 1], colors8[:, 2]
                if cloud.labels is not None:
                    rows["label"] = cloud.labels
                f.write(rows.tobytes())
    except OSError as exc:
        raise IoFailure(f"failed to write {path}: {exc}") from exc
