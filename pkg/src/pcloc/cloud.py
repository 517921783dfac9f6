"""Colored point clouds and PLY ingestion/export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass(frozen=True)
class PointCloud:
    """World-frame points (float64, meters) with 8-bit RGB colors.

    An empty cloud is representable (a scan that hit nothing) but cannot be
    rendered.
    """

    points: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=np.float64)
        cols = np.ascontiguousarray(self.colors, dtype=np.uint8)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must be (N, 3)")
        if cols.shape != pts.shape:
            raise ValueError("colors must be (N, 3) and match points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        cols.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "colors", cols)

    def __len__(self):
        return len(self.points)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.points.min(axis=0), self.points.max(axis=0)

    def decimate(self, fraction: float, seed: int = 0) -> "PointCloud":
        """Uniform random subsample keeping ``round(fraction * N)`` points in original order."""
        if not 0 < fraction <= 1:
            raise ValueError("fraction must be in (0, 1]")
        if fraction == 1:
            return self
        n = max(1, int(round(fraction * len(self))))
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(self), size=n, replace=False))
        return PointCloud(self.points[idx], self.colors[idx])

    def fingerprint(self) -> int:
        return cloud_fingerprint(self)


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes, h: int = _FNV_OFFSET) -> int:
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def cloud_fingerprint(cloud: PointCloud) -> int:
    """64-bit FNV-1a over the point count and the first/last 1024 coordinate bytes.

    A cheap mismatch guard between a cloud and artifacts built from it.
    """
    raw = cloud.points.astype("<f8").tobytes()
    h = fnv1a64(int(len(cloud)).to_bytes(8, "little"))
    h = fnv1a64(raw[:1024], h)
    h = fnv1a64(raw[-1024:], h)
    return h


def _parse_header(f):
    first = f.readline()
    if first.strip() != b"ply":
        raise FormatError("not a PLY file")
    fmt = None
    elements = []  # (name, count, [(prop_name, dtype)])
    while True:
        line = f.readline()
        if not line:
            raise FormatError("unexpected end of header")
        tokens = line.decode("ascii", "replace").split()
        if not tokens:
            continue
        key = tokens[0]
        if key == "end_header":
            break
        if key == "format":
            fmt = tokens[1]
        elif key == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif key == "property":
            if not elements:
                raise FormatError("property before element")
            if tokens[1] == "list":
                elements[-1][2].append((tokens[-1], ("list", tokens[2], tokens[3])))
            else:
                if tokens[1] not in _PLY_TYPES:
                    raise FormatError(f"unknown PLY type {tokens[1]}")
                elements[-1][2].append((tokens[2], _PLY_TYPES[tokens[1]]))
        elif key in ("comment", "obj_info"):
            continue
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise FormatError(f"unsupported PLY format {fmt}")
    return fmt, elements


def read_ply(path: str | Path) -> PointCloud:
    """Read x, y, z and red, green, blue from the ``vertex`` element.

    Supports ascii and binary little/big endian; unknown properties are
    skipped. List properties are only supported on elements after ``vertex``.
    """
    with open(path, "rb") as f:
        fmt, elements = _parse_header(f)
        for name, count, props in elements:
            if name == "vertex":
                break
            raise FormatError("vertex must be the first element")
        else:
            raise FormatError("no vertex element")
        if any(isinstance(t, tuple) for _, t in props):
            raise FormatError("list properties on vertex are not supported")
        names = [p for p, _ in props]
        for req in ("x", "y", "z"):
            if req not in names:
                raise FormatError(f"missing vertex property {req}")
        if fmt == "ascii":
            rows = []
            for _ in range(count):
                line = f.readline()
                if not line:
                    raise FormatError("truncated ascii body")
                rows.append(line.split())
            table = np.array(rows, dtype=np.float64).reshape(count, len(props))
            cols = {n: table[:, i] for i, n in enumerate(names)}
        else:
            endian = "<" if fmt == "binary_little_endian" else ">"
            dtype = np.dtype([(n, endian + t) for n, t in props])
            buf = f.read(dtype.itemsize * count)
            if len(buf) < dtype.itemsize * count:
                raise FormatError("truncated binary body")
            arr = np.frombuffer(buf, dtype=dtype, count=count)
            cols = {n: arr[n] for n in names}
    pts = np.stack([cols["x"], cols["y"], cols["z"]], axis=1).astype(np.float64)
    if all(c in cols for c in ("red", "green", "blue")):
        rgb = np.stack([cols["red"], cols["green"], cols["blue"]], axis=1)
        rgb = np.clip(np.round(rgb), 0, 255).astype(np.uint8)
    else:
        rgb = np.full(pts.shape, 255, dtype=np.uint8)
    return PointCloud(pts, rgb)


def write_ply(path: str | Path, cloud: PointCloud, binary: bool = True, coord_type: str = "double") -> None:
    """Write a PLY; doubles by default so simulated points stay exact."""
    n = len(cloud)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {n}\n"
        f"property {coord_type} x\nproperty {coord_type} y\nproperty {coord_type} z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    ).encode("ascii")
    ct = "<" + _PLY_TYPES[coord_type]
    with open(path, "wb") as f:
        f.write(header)
        if binary:
            dtype = np.dtype([("x", ct), ("y", ct), ("z", ct), ("r", "u1"), ("g", "u1"), ("b", "u1")])
            arr = np.empty(n, dtype=dtype)
            arr["x"], arr["y"], arr["z"] = cloud.points.T
            arr["r"], arr["g"], arr["b"] = cloud.colors.T
            f.write(arr.tobytes())
        else:
            for p, c in zip(cloud.points, cloud.colors):
                f.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} {c[0]} {c[1]} {c[2]}\n".encode("ascii"))

