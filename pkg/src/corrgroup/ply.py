"""Minimal PLY vertex I/O.

Reads ASCII and binary-little-endian files, extracting x/y/z (32- or
64-bit floats) from the vertex element per the header's property order;
other properties and elements are skipped. The writer emits x/y/z as
64-bit floats so coordinates round-trip exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from .geom3d import PointCloud

_SCALAR_TYPES = {
    "char": ("b", 1), "int8": ("b", 1),
    "uchar": ("B", 1), "uint8": ("B", 1),
    "short": ("h", 2), "int16": ("h", 2),
    "ushort": ("H", 2), "uint16": ("H", 2),
    "int": ("i", 4), "int32": ("i", 4),
    "uint": ("I", 4), "uint32": ("I", 4),
    "float": ("f", 4), "float32": ("f", 4),
    "double": ("d", 8), "float64": ("d", 8),
}
_FLOAT_TYPES = {"float", "float32", "double", "float64"}


class PlyFormatError(ValueError):
    """Malformed or unsupported PLY content."""


def _parse_header(handle) -> tuple[str, list[tuple[str, int, list[tuple[str, str]]]]]:
    """Return (format, elements) where each element is (name, count, props)."""
    line = handle.readline().decode("ascii", "replace").strip()
    if line != "ply":
        raise PlyFormatError("missing 'ply' magic line")
    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    while True:
        raw = handle.readline()
        if not raw:
            raise PlyFormatError("unexpected end of header")
        line = raw.decode("ascii", "replace").strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        fields = line.split()
        if fields[0] == "format":
            if len(fields) < 2 or fields[1] not in ("ascii", "binary_little_endian"):
                raise PlyFormatError(f"unsupported PLY format: {line}")
            fmt = fields[1]
        elif fields[0] == "element":
            if len(fields) != 3:
                raise PlyFormatError(f"malformed element line: {line}")
            elements.append((fields[1], int(fields[2]), []))
        elif fields[0] == "property":
            if not elements:
                raise PlyFormatError("property before any element")
            if fields[1] == "list":
                elements[-1][2].append(("list", " ".join(fields[2:])))
            else:
                if len(fields) != 3:
                    raise PlyFormatError(f"malformed property line: {line}")
                elements[-1][2].append((fields[1], fields[2]))
        elif fields[0] == "end_header":
            break
        else:
            raise PlyFormatError(f"unrecognized header line: {line}")
    if fmt is None:
        raise PlyFormatError("header has no format line")
    if not elements:
        raise PlyFormatError("header declares no elements")
    return fmt, elements


def _vertex_layout(props: list[tuple[str, str]]) -> tuple[int, int, int]:
    names = [name for _, name in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise PlyFormatError(f"vertex element lacks property '{axis}'")
    for ptype, name in props:
        if name in ("x", "y", "z") and ptype not in _FLOAT_TYPES:
            raise PlyFormatError(f"vertex property '{name}' must be a float type, got {ptype}")
    return names.index("x"), names.index("y"), names.index("z")


def load_ply(path) -> PointCloud:
    """Read the vertex element of a PLY file into a point cloud."""
    with open(path, "rb") as handle:
        fmt, elements = _parse_header(handle)
        names = [name for name, _, _ in elements]
        if "vertex" not in names:
            raise PlyFormatError("no vertex element")
        if fmt == "ascii":
            return _load_ascii(handle, elements)
        return _load_binary_le(handle, elements)


def _load_ascii(handle, elements) -> PointCloud:
    text = handle.read().decode("ascii", "replace")
    lines = iter(text.splitlines())
    for name, count, props in elements:
        if name != "vertex":
            for _ in range(count):
                next(lines, None)
            continue
        if any(ptype == "list" for ptype, _ in props):
            raise PlyFormatError("list properties in the vertex element are unsupported")
        ix, iy, iz = _vertex_layout(props)
        pts = np.empty((count, 3), dtype=np.float64)
        for row in range(count):
            line = next(lines, None)
            if line is None:
                raise PlyFormatError(f"vertex element truncated at row {row}")
            fields = line.split()
            if len(fields) < len(props):
                raise PlyFormatError(f"vertex row {row} has {len(fields)} fields, expected {len(props)}")
            pts[row] = (float(fields[ix]), float(fields[iy]), float(fields[iz]))
        return PointCloud(pts)
    raise PlyFormatError("no vertex element")


def _load_binary_le(handle, elements) -> PointCloud:
    for name, count, props in elements:
        if any(ptype == "list" for ptype, _ in props):
            if name == "vertex":
                raise PlyFormatError("list properties in the vertex element are unsupported")
            raise PlyFormatError("cannot skip list-typed elements preceding vertices")
        try:
            codes = [_SCALAR_TYPES[ptype] for ptype, _ in props]
        except KeyError as exc:
            raise PlyFormatError(f"unknown property type {exc.args[0]}") from None
        stride = sum(size for _, size in codes)
        if name != "vertex":
            handle.seek(count * stride, 1)
            continue
        ix, iy, iz = _vertex_layout(props)
        blob = handle.read(count * stride)
        if len(blob) != count * stride:
            raise PlyFormatError("binary vertex data truncated")
        dtype = np.dtype({
            "names": [f"p{i}" for i in range(len(props))],
            "formats": ["<" + code for code, _ in codes],
        })
        table = np.frombuffer(blob, dtype=dtype, count=count)
        pts = np.column_stack([
            table[f"p{ix}"].astype(np.float64),
            table[f"p{iy}"].astype(np.float64),
            table[f"p{iz}"].astype(np.float64),
        ])
        return PointCloud(pts)
    raise PlyFormatError("no vertex element")


def save_ply(cloud: PointCloud, path, *, binary: bool = False) -> None:
    """Write a point cloud as a PLY vertex list (x/y/z doubles)."""
    n = len(cloud)
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    with open(path, "wb") as handle:
        handle.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            handle.write(struct.pack(f"<{3 * n}d", *cloud.points.ravel()))
        else:
            rows = ["%.17g %.17g %.17g" % (x, y, z) for x, y, z in cloud.points]
            handle.write(("\n".join(rows) + ("\n" if rows else "")).encode("ascii"))
