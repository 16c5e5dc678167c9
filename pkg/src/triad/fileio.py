"""Bit-exact readers and writers for every artifact the pipeline exchanges.

Formats:
  .flo  -- 4-byte magic "PIEH", little-endian int32 width/height, then
           interleaved float32 (u, v) rows top-to-bottom. Components with
           magnitude above 1e9 mark invalid pixels.
  .pfm  -- "Pf" (1 channel) or "PF" (3 channels), "<width> <height>",
           scale line whose sign encodes endianness (negative = little),
           then float32 scanlines stored bottom-to-top. Converted to the
           internal top-to-bottom convention on read. NaN marks invalid.
  .pgm  -- binary P5, 8- or 16-bit (16-bit big-endian per the format),
           scaled to [0, 1] floats on read.
  trajectory -- text lines "t tx ty tz qx qy qz qw" (world-from-camera),
           strictly increasing timestamps.
  intrinsics -- single text line "fx fy cx cy width height".

Everything here is a pure function; concurrent reads of distinct files are
safe. Internal rasters are row-major, top-to-bottom, everywhere.
"""

from __future__ import annotations

import io
import math

import numpy as np

from .errors import FormatError
from .geometry import (
    Intrinsics,
    RelativePose,
    Trajectory,
    quaternion_to_rotation,
    rotation_to_quaternion,
)

FLO_MAGIC = b"PIEH"


def read_flow(path) -> np.ndarray:
    """Read a .flo file into a (H, W, 2) float32 raster (sentinels preserved)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != FLO_MAGIC:
        raise FormatError(f"{path}: bad flow magic {data[:4]!r}")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated flow header")
    w = int(np.frombuffer(data, dtype="<i4", count=1, offset=4)[0])
    h = int(np.frombuffer(data, dtype="<i4", count=1, offset=8)[0])
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: invalid flow dimensions {w}x{h}")
    expected = 12 + 8 * w * h
    if len(data) < expected:
        raise FormatError(f"{path}: truncated flow payload ({len(data)} < {expected} bytes)")
    values = np.frombuffer(data, dtype="<f4", count=2 * w * h, offset=12)
    return values.reshape(h, w, 2).astype(np.float32)


def write_flow(flow: np.ndarray, path) -> None:
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise FormatError(f"flow raster must have shape (H, W, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(FLO_MAGIC)
        f.write(np.array([w, h], dtype="<i4").tobytes())
        f.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def _read_pnm_token(f: io.BufferedReader, path) -> bytes:
    """Next whitespace-delimited header token, skipping '#' comment lines."""
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            raise FormatError(f"{path}: truncated header")
        if c == b"#" and not tok:
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a (H, W) or (H, W, 3) float32 raster, top-to-bottom."""
    with open(path, "rb") as f:
        magic = _read_pnm_token(f, path)
        if magic == b"Pf":
            channels = 1
        elif magic == b"PF":
            channels = 3
        else:
            raise FormatError(f"{path}: bad PFM magic {magic!r}")
        try:
            w = int(_read_pnm_token(f, path))
            h = int(_read_pnm_token(f, path))
            scale = float(_read_pnm_token(f, path))
        except ValueError as e:
            raise FormatError(f"{path}: malformed PFM header ({e})") from e
        if w <= 0 or h <= 0 or scale == 0.0:
            raise FormatError(f"{path}: malformed PFM header values")
        payload = f.read(4 * w * h * channels)
    if len(payload) < 4 * w * h * channels:
        raise FormatError(f"{path}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(payload, dtype=dtype, count=w * h * channels)
    arr = values.reshape((h, w) if channels == 1 else (h, w, channels))
    # PFM scanlines run bottom-to-top; flip to the internal convention.
    return np.flipud(arr).astype(np.float32)


def write_pfm(img: np.ndarray, path) -> None:
    img = np.asarray(img, dtype=np.float32)
    if img.ndim == 2:
        magic = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"PF"
    else:
        raise FormatError(f"PFM rasters must be (H, W) or (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.ascontiguousarray(np.flipud(img), dtype="<f4").tobytes())


def read_image(path) -> np.ndarray:
    """Read a binary PGM (P5) into a (H, W) float64 raster scaled to [0, 1]."""
    with open(path, "rb") as f:
        magic = _read_pnm_token(f, path)
        if magic != b"P5":
            raise FormatError(f"{path}: bad PGM magic {magic!r}")
        try:
            w = int(_read_pnm_token(f, path))
            h = int(_read_pnm_token(f, path))
            maxval = int(_read_pnm_token(f, path))
        except ValueError as e:
            raise FormatError(f"{path}: malformed PGM header ({e})") from e
        if w <= 0 or h <= 0 or not (0 < maxval < 65536):
            raise FormatError(f"{path}: malformed PGM header values")
        dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
        payload = f.read(w * h * dtype.itemsize)
    if len(payload) < w * h * dtype.itemsize:
        raise FormatError(f"{path}: truncated PGM payload")
    values = np.frombuffer(payload, dtype=dtype, count=w * h).reshape(h, w)
    return values.astype(np.float64) / maxval


def write_image(img: np.ndarray, path, maxval: int = 65535) -> None:
    if not (0 < maxval < 65536):
        raise FormatError(f"PGM maxval must be in (0, 65536), got {maxval}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise FormatError(f"PGM rasters must be (H, W), got {img.shape}")
    quantized = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    dtype = "u1" if maxval < 256 else ">u2"
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(quantized.astype(dtype).tobytes())


def read_intrinsics(path) -> Intrinsics:
    with open(path, "r", encoding="ascii") as f:
        tokens = f.read().split()
    if len(tokens) != 6:
        raise FormatError(f"{path}: expected 6 intrinsics values, got {len(tokens)}")
    try:
        fx, fy, cx, cy = (float(t) for t in tokens[:4])
        width, height = int(tokens[4]), int(tokens[5])
    except ValueError as e:
        raise FormatError(f"{path}: malformed intrinsics ({e})") from e
    return Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)


def write_intrinsics(k: Intrinsics, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(f"{k.fx:.17g} {k.fy:.17g} {k.cx:.17g} {k.cy:.17g} {k.width} {k.height}\n")


def read_trajectory(path) -> Trajectory:
    """Read TUM-style "t tx ty tz qx qy qz qw" lines into world-from-camera poses."""
    timestamps: list[float] = []
    poses: list[RelativePose] = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 8:
                raise FormatError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
            try:
                t, tx, ty, tz, qx, qy, qz, qw = (float(p) for p in parts)
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: malformed number ({e})") from e
            qnorm = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
            if abs(qnorm - 1.0) > 1e-3:
                raise FormatError(f"{path}:{lineno}: quaternion norm {qnorm!r} too far from 1")
            if timestamps and t <= timestamps[-1]:
                raise FormatError(f"{path}:{lineno}: timestamps must be strictly increasing")
            timestamps.append(t)
            poses.append(RelativePose(quaternion_to_rotation(qx, qy, qz, qw), (tx, ty, tz)))
    return Trajectory(np.array(timestamps), tuple(poses))


def write_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        for t, pose in zip(traj.timestamps, traj.poses):
            qx, qy, qz, qw = rotation_to_quaternion(pose.rotation)
            tx, ty, tz = pose.translation
            f.write(
                f"{t:.17g} {tx:.17g} {ty:.17g} {tz:.17g} "
                f"{qx:.17g} {qy:.17g} {qz:.17g} {qw:.17g}\n"
            )
