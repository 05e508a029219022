"""Point cloud text formats, the binary PGI container and 16-bit PNG export."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, FormatError, InvalidArgumentError, ParseError
from .geom import PointCloud
from .resample import Pgi

PGI_MAGIC = b"PGI1"
_HEADER = struct.Struct("<4sHHH")

FLAG_TRANSFORM = 1 << 0
FLAG_F64 = 1 << 1
FLAG_BLOCK_MAP = 1 << 2
_KNOWN_FLAGS = FLAG_TRANSFORM | FLAG_F64 | FLAG_BLOCK_MAP

_PLY_FLOAT = {"float", "float32", "double", "float64"}
_PLY_INT = {"char", "uchar", "short", "ushort", "int", "uint",
            "int8", "uint8", "int16", "uint16", "int32", "uint32"}


# --- point clouds ---------------------------------------------------------

def _guess_format(path: Path, fmt: str | None) -> str:
    if fmt:
        fmt = fmt.lower()
    elif path.suffix.lower() == ".ply":
        fmt = "ply-ascii"
    else:
        fmt = "xyz"
    if fmt == "ply":
        fmt = "ply-ascii"
    if fmt not in ("xyz", "ply-ascii"):
        raise InvalidArgumentError(f"unknown point format {fmt!r}")
    return fmt


def read_points(path, fmt: str | None = None) -> PointCloud:
    """Load an XYZ or ASCII PLY file; source ids follow file order."""
    path = Path(path)
    fmt = _guess_format(path, fmt)
    text = path.read_text()
    if fmt == "xyz":
        return _parse_xyz(text)
    return _parse_ply(text)


def _parse_xyz(text: str) -> PointCloud:
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) not in (3, 6):
            raise ParseError(f"expected 3 or 6 columns, got {len(fields)}", lineno)
        if width is not None and len(fields) != width:
            raise ParseError("inconsistent column count", lineno)
        width = len(fields)
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    if not rows:
        raise EmptyInputError("no points in file")
    data = np.array(rows, dtype=np.float64)
    attrs = data[:, 3:] if width == 6 else None
    return PointCloud(data[:, :3], attrs)


def _parse_ply(text: str) -> PointCloud:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)
    elements: list[list] = []  # [name, count, [(type, name)]]
    fmt_seen = False
    body = None
    for lineno, raw in enumerate(lines[1:], start=2):
        fields = raw.split()
        if not fields or fields[0] in ("comment", "obj_info"):
            continue
        key = fields[0]
        if key == "format":
            if len(fields) < 2 or fields[1] != "ascii":
                raise ParseError("only ASCII PLY is supported", lineno)
            fmt_seen = True
        elif key == "element":
            if len(fields) != 3:
                raise ParseError("malformed element line", lineno)
            try:
                elements.append([fields[1], int(fields[2]), []])
            except ValueError:
                raise ParseError("element count is not an integer", lineno) from None
        elif key == "property":
            if not elements:
                raise ParseError("property before any element", lineno)
            if fields[1] == "list":
                if len(fields) != 5:
                    raise ParseError("malformed list property", lineno)
                elements[-1][2].append(("list", fields[4]))
            elif len(fields) == 3:
                elements[-1][2].append((fields[1], fields[2]))
            else:
                raise ParseError("malformed property line", lineno)
        elif key == "end_header":
            body = lineno
            break
        else:
            raise ParseError(f"unexpected header keyword {key!r}", lineno)
    if body is None:
        raise ParseError("missing end_header", len(lines))
    if not fmt_seen:
        raise ParseError("missing format line", 2)

    skip = 0
    vertex = None
    for name, count, props in elements:
        if name == "vertex":
            vertex = (count, props)
            break
        skip += count
    if vertex is None:
        raise ParseError("no vertex element", body)
    count, props = vertex
    names = [p[1] for p in props]
    for i, (ptype, pname) in enumerate(props):
        if ptype == "list":
            raise ParseError(f"list property {pname!r} in vertex element", body)
        if ptype not in _PLY_FLOAT and ptype not in _PLY_INT:
            raise ParseError(f"unknown property type {ptype!r}", body)
    try:
        xyz = [names.index(a) for a in ("x", "y", "z")]
    except ValueError:
        raise ParseError("vertex element lacks x/y/z", body) from None
    rgb = [names.index(c) for c in ("red", "green", "blue")] if all(
        c in names for c in ("red", "green", "blue")) else None

    pts = np.empty((count, 3))
    cols = np.empty((count, 3)) if rgb else None
    first = body + skip  # 0-based index of the first vertex line
    if count == 0:
        raise EmptyInputError("PLY file has no vertices")
    if first + count > len(lines):
        raise ParseError("file ends before all vertices were read", len(lines))
    for i in range(count):
        lineno = first + i + 1
        fields = lines[first + i].split()
        if len(fields) != len(props):
            raise ParseError(f"expected {len(props)} values, got {len(fields)}", lineno)
        try:
            pts[i] = [float(fields[j]) for j in xyz]
            if rgb:
                cols[i] = [int(fields[j]) / 255.0 for j in rgb]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
    return PointCloud(pts, cols)


def write_points(path, pc: PointCloud, fmt: str | None = None) -> None:
    path = Path(path)
    if _guess_format(path, fmt) == "xyz":
        write_xyz(path, pc)
    else:
        write_ply(path, pc)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_xyz(path, pc: PointCloud) -> None:
    """One point per line; floats are written with round-trip precision."""
    data = pc.points if pc.attrs is None else np.hstack([pc.points, pc.attrs[:, :3]])
    lines = [" ".join(_fmt(v) for v in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n")


def write_ply(path, pc: PointCloud) -> None:
    header = ["ply", "format ascii 1.0", f"element vertex {len(pc)}",
              "property double x", "property double y", "property double z"]
    has_rgb = pc.attrs is not None and pc.attrs.shape[1] >= 3
    if has_rgb:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
        rgb = np.clip(np.rint(pc.attrs[:, :3] * 255.0), 0, 255).astype(int)
    header.append("end_header")
    rows = []
    for i, p in enumerate(pc.points):
        row = " ".join(_fmt(v) for v in p)
        if has_rgb:
            row += " " + " ".join(str(c) for c in rgb[i])
        rows.append(row)
    Path(path).write_text("\n".join(header + rows) + "\n")


# --- PGI container --------------------------------------------------------

def _f32_exact(a: np.ndarray) -> bool:
    return bool(np.array_equal(a.astype(np.float32).astype(np.float64), a))


def pgi_to_bytes(pgi: Pgi) -> bytes:
    """Serialize a PGI.

    Layout (little-endian): ``"PGI1"``, u16 n_g, u16 k, u16 flags; pixel triples
    row-major (f32, or f64 when flag bit 1 is set because some value is not
    float32-exact); u32 source ids; the duplicate mask bit-packed LSB-first;
    optionally (bit 0) the normalization center and scale in the payload float
    type; optionally (bit 2) the u32 guidance source id of every block.
    """
    ids = pgi.source_id
    if ids.min() < 0 or ids.max() > 0xFFFFFFFF:
        raise InvalidArgumentError("source ids must fit in u32")
    if pgi.n_g > 0xFFFF or pgi.k > 0xFFFF:
        raise InvalidArgumentError("n_g and k must fit in u16")
    flags = 0
    transform = None
    if pgi.transform is not None:
        center, scale = pgi.transform
        transform = np.append(np.asarray(center, dtype=np.float64), float(scale))
        flags |= FLAG_TRANSFORM
    exact = _f32_exact(pgi.pixels) and (transform is None or _f32_exact(transform))
    if not exact:
        flags |= FLAG_F64
    if pgi.block_of is not None:
        if pgi.block_of.min() < 0 or pgi.block_of.max() > 0xFFFFFFFF:
            raise InvalidArgumentError("block map ids must fit in u32")
        flags |= FLAG_BLOCK_MAP
    ftype = "<f4" if exact else "<f8"
    parts = [
        _HEADER.pack(PGI_MAGIC, pgi.n_g, pgi.k, flags),
        pgi.pixels.astype(ftype).tobytes(),
        ids.astype("<u4").tobytes(),
        np.packbits(pgi.is_duplicate.reshape(-1), bitorder="little").tobytes(),
    ]
    if transform is not None:
        parts.append(transform.astype(ftype).tobytes())
    if pgi.block_of is not None:
        parts.append(pgi.block_of.astype("<u4").tobytes())
    return b"".join(parts)


def pgi_from_bytes(data: bytes) -> Pgi:
    if len(data) < _HEADER.size:
        raise FormatError("PGI file truncated in header")
    magic, n_g, k, flags = _HEADER.unpack_from(data, 0)
    if magic[:3] != PGI_MAGIC[:3]:
        raise FormatError(f"bad magic {magic!r}")
    if magic != PGI_MAGIC:
        raise FormatError(f"unsupported PGI version {magic[3:]!r}")
    if flags & ~_KNOWN_FLAGS:
        raise FormatError(f"unknown flag bits 0x{flags:04x}")
    if n_g < 1 or k < 1:
        raise FormatError("n_g and k must be positive")
    m = n_g * k
    ftype = np.dtype("<f8" if flags & FLAG_F64 else "<f4")
    pos = _HEADER.size

    def take(dtype, count):
        nonlocal pos
        dtype = np.dtype(dtype)
        end = pos + dtype.itemsize * count
        if end > len(data):
            raise FormatError("PGI file truncated")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        pos = end
        return arr

    pixels = take(ftype, 3 * m * m).astype(np.float64).reshape(m, m, 3)
    ids = take("<u4", m * m).astype(np.int64).reshape(m, m)
    mask_bytes = take(np.uint8, (m * m + 7) // 8)
    dup = np.unpackbits(mask_bytes, bitorder="little")[: m * m].astype(bool).reshape(m, m)
    transform = None
    if flags & FLAG_TRANSFORM:
        t = take(ftype, 4).astype(np.float64)
        transform = (t[:3].copy(), float(t[3]))
    block_of = None
    if flags & FLAG_BLOCK_MAP:
        block_of = take("<u4", n_g * n_g).astype(np.int64).reshape(n_g, n_g)
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after PGI payload")
    return Pgi(n_g, k, pixels, ids, dup, block_of, transform)


def write_pgi(path, pgi: Pgi) -> None:
    Path(path).write_bytes(pgi_to_bytes(pgi))


def read_pgi(path) -> Pgi:
    return pgi_from_bytes(Path(path).read_bytes())


# --- feature maps -----------------------------------------------------------

FMAP_MAGIC = b"PGFM"


def write_feature_map(path, fmap: np.ndarray) -> None:
    """``"PGFM"``, u16 channels, u16 side, then f32 values channel-major."""
    d, n, n2 = fmap.shape
    if n != n2:
        raise InvalidArgumentError("feature map must be square")
    Path(path).write_bytes(struct.pack("<4sHH", FMAP_MAGIC, d, n) + fmap.astype("<f4").tobytes())


def read_feature_map(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8 or data[:4] != FMAP_MAGIC:
        raise FormatError("not a feature map file")
    _, d, n = struct.unpack_from("<4sHH", data, 0)
    if len(data) != 8 + 4 * d * n * n:
        raise FormatError("feature map size mismatch")
    return np.frombuffer(data, dtype="<f4", offset=8).astype(np.float64).reshape(d, n, n)


# --- PNG visualization ------------------------------------------------------

def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".txt")


def export_pgi_png(pgi: Pgi, path) -> tuple[Path, Path]:
    """Write the coordinate image as a 16-bit RGB PNG plus a min/max sidecar.

    Channel ``c`` is quantized as ``round(65535 * (x - min_c) / (max_c - min_c))``;
    a constant channel is written as zeros and flagged in the sidecar.
    """
    import cv2

    path = Path(path)
    img = pgi.pixels
    lo = img.reshape(-1, 3).min(axis=0)
    hi = img.reshape(-1, 3).max(axis=0)
    q = np.zeros(img.shape, dtype=np.uint16)
    lines = []
    for c in range(3):
        span = hi[c] - lo[c]
        degenerate = not span > 0
        if not degenerate:
            q[..., c] = np.rint(65535.0 * (img[..., c] - lo[c]) / span).astype(np.uint16)
        lines += [f"channel{c}_min={float(lo[c])!r}", f"channel{c}_max={float(hi[c])!r}",
                  f"channel{c}_degenerate={int(degenerate)}"]
    if not cv2.imwrite(str(path), q[..., ::-1]):
        raise OSError(f"could not write PNG to {path}")
    side = _sidecar(path)
    side.write_text("\n".join(lines) + "\n")
    return path, side


def load_pgi_png(path) -> np.ndarray:
    """Dequantize an exported PNG back to an ``(m, m, 3)`` coordinate image."""
    import cv2

    path = Path(path)
    q = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if q is None or q.dtype != np.uint16 or q.ndim != 3:
        raise FormatError(f"{path} is not a 16-bit RGB PNG")
    q = q[..., ::-1].astype(np.float64)
    meta = dict(line.split("=", 1) for line in _sidecar(path).read_text().split())
    out = np.empty_like(q)
    for c in range(3):
        lo, hi = float(meta[f"channel{c}_min"]), float(meta[f"channel{c}_max"])
        out[..., c] = lo if meta[f"channel{c}_degenerate"] == "1" else lo + q[..., c] / 65535.0 * (hi - lo)
    return out
