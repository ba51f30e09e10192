"""Readers and writers for the on-disk formats.

Images are numpy arrays of shape (H, W, C), float32. Binary PPM (P6) holds
8-bit RGB frames, PFM (little-endian, scale -1) holds depth and debug grids,
PGM (P5) holds masks and label ids.
"""

from __future__ import annotations

import re
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .geometry import Pose

CORR_DTYPE = np.dtype([("object_id", "<u2"), ("local", "<f4", (3,))])


def as_grid(a):
    """Coerce a 2-D or 3-D array into an (H, W, C) float32 grid."""
    a = np.asarray(a, dtype=np.float32)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"expected an (H, W[, C]) grid, got shape {a.shape}")
    return a


def _read_header(f, n_fields):
    """Read whitespace-separated PNM header tokens, skipping # comments."""
    tokens = []
    while len(tokens) < n_fields:
        line = f.readline()
        if not line:
            raise DataError("truncated PNM header")
        line = line.split(b"#", 1)[0]
        tokens.extend(line.split())
    return [t.decode("ascii") for t in tokens]


def write_ppm(path, img):
    img = as_grid(img)
    if img.shape[2] != 3:
        raise ValueError("PPM needs 3 channels")
    h, w, _ = img.shape
    data = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        magic, w, h, maxval = _read_header(f, 4)
        if magic != "P6":
            raise DataError(f"{path}: not a binary PPM (magic {magic!r})")
        w, h, maxval = int(w), int(h), int(maxval)
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        raw = np.frombuffer(f.read(), dtype=dtype)
    if raw.size < w * h * 3:
        raise DataError(f"{path}: truncated pixel data")
    return (raw[: w * h * 3].reshape(h, w, 3).astype(np.float32) / np.float32(maxval))


def write_pgm(path, img, maxval=None):
    a = np.asarray(img)
    if a.ndim == 3:
        a = a[:, :, 0]
    h, w = a.shape
    if maxval is None:
        maxval = 255 if a.max(initial=0) < 256 else 65535
    if maxval < 256:
        data = a.astype(np.uint8).tobytes()
    else:
        data = a.astype(">u2").tobytes()
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(data)


def read_pgm(path):
    """Return the raw integer grid (H, W) from a binary PGM."""
    with open(path, "rb") as f:
        magic, w, h, maxval = _read_header(f, 4)
        if magic != "P5":
            raise DataError(f"{path}: not a binary PGM (magic {magic!r})")
        w, h, maxval = int(w), int(h), int(maxval)
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        raw = np.frombuffer(f.read(), dtype=dtype)
    if raw.size < w * h:
        raise DataError(f"{path}: truncated pixel data")
    return raw[: w * h].reshape(h, w).astype(np.int32)


def write_mask_pgm(path, mask):
    """Binary background mask: 255 = background, 0 = foreground."""
    write_pgm(path, (as_grid(mask)[:, :, 0] > 0.5).astype(np.uint8) * 255, maxval=255)


def read_mask_pgm(path):
    return as_grid((read_pgm(path) > 127).astype(np.float32))


def write_pfm(path, img):
    img = as_grid(img)
    h, w, c = img.shape
    if c not in (1, 3):
        raise ValueError("PFM supports 1 or 3 channels")
    tag = "Pf" if c == 1 else "PF"
    data = np.ascontiguousarray(np.flipud(img), dtype="<f4")
    with open(path, "wb") as f:
        f.write(f"{tag}\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(data.tobytes())


def read_pfm(path):
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag not in (b"Pf", b"PF"):
            raise DataError(f"{path}: not a PFM file")
        dims = f.readline().split()
        while not dims:
            dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        c = 1 if tag == b"Pf" else 3
        dtype = "<f4" if scale < 0 else ">f4"
        raw = np.frombuffer(f.read(), dtype=dtype)
    if raw.size < w * h * c:
        raise DataError(f"{path}: truncated PFM data")
    return np.flipud(raw[: w * h * c].reshape(h, w, c)).astype(np.float32)


def write_corr(path, object_ids, local):
    rec = np.zeros(object_ids.shape, dtype=CORR_DTYPE)
    rec["object_id"] = object_ids
    rec["local"] = local
    Path(path).write_bytes(rec.tobytes())


def read_corr(path, width, height):
    raw = np.frombuffer(Path(path).read_bytes(), dtype=CORR_DTYPE)
    if raw.size != width * height:
        raise DataError(f"{path}: expected {width * height} records, got {raw.size}")
    raw = raw.reshape(height, width)
    return raw["object_id"].astype(np.int32), raw["local"].astype(np.float64)


def write_flow(path, flow):
    """Binary flow field: u32 point count then N x 3 float32, little-endian."""
    flow = np.asarray(flow, dtype="<f4").reshape(-1, 3)
    with open(path, "wb") as f:
        f.write(struct.pack("<I", flow.shape[0]))
        f.write(flow.tobytes())


def read_flow(path):
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise DataError(f"{path}: truncated flow file")
    (n,) = struct.unpack("<I", data[:4])
    body = np.frombuffer(data[4:], dtype="<f4")
    if body.size != 3 * n:
        raise DataError(f"{path}: expected {n} flow records, got {body.size / 3:g}")
    return body.reshape(n, 3).astype(np.float64)


def write_poses(path, poses):
    Path(path).write_text("".join(p.to_line() + "\n" for p in poses))


def read_poses(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    return [Pose.from_line(ln) for ln in lines]


_NUM = re.compile(r"(\d+)")


def natural_key(name):
    return [int(t) if t.isdigit() else t for t in _NUM.split(str(name))]
