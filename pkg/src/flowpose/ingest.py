"""Readers and writers for every on-disk artifact.

Formats
-------
* frames and label maps: binary PGM (``P5``), 8-bit.
* flow: ``PIEH`` magic, little-endian int32 width and height, then
  row-major interleaved little-endian float32 ``(u, v)`` pairs.
* detections: ``frame_index x0 y0 x1 y1 score`` per line.
* keypoints: ``frame_index joint_name x y`` per line.

Blank lines and lines starting with ``#`` are ignored in the text formats.
All writers go through :func:`atomic_write`, so a reader never sees a
partially written file.
"""
from __future__ import annotations

import os
import re
import struct
import tempfile
from pathlib import Path

import numpy as np

from .data import JOINT_NAMES, BBox, Detection, FlowField, Frame, Keypoints, PartLabelMap
from .errors import DuplicateError, FormatError, ParseError, ValidationError

FRAME_PATTERN = re.compile(r"^frame_(\d{6,})\.pgm$")
INDEXED_PGM_PATTERN = re.compile(r"^[A-Za-z]+_(\d{6,})\.pgm$")
FLOW_MAGIC = b"PIEH"
_SEP = rb"(?:\s|#[^\r\n]*)+"
_PGM_HEADER = re.compile(rb"P5" + _SEP + rb"(\d+)" + _SEP + rb"(\d+)" + _SEP + rb"(\d+)\s")


def atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# PGM


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError(f"PGM payload must be 2-D, got shape {pixels.shape}")
    if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
        raise ValueError("PGM payload must fit in 8 bits")
    height, width = pixels.shape
    header = b"P5\n%d %d\n255\n" % (width, height)
    return header + np.ascontiguousarray(pixels, dtype=np.uint8).tobytes()


def decode_pgm(data: bytes, name: str = "<bytes>") -> tuple[np.ndarray, int]:
    """Parse a binary PGM, returning ``(pixels uint8 [H, W], maxval)``."""
    m = _PGM_HEADER.match(data)
    if m is None:
        raise FormatError(f"{name}: malformed PGM header")
    width, height, maxval = (int(g) for g in m.groups())
    if width <= 0 or height <= 0:
        raise FormatError(f"{name}: non-positive PGM dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise FormatError(f"{name}: unsupported PGM maxval {maxval}")
    payload = data[m.end():m.end() + width * height]
    if len(payload) != width * height:
        raise FormatError(f"{name}: truncated PGM payload")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    if pixels.max() > maxval:
        raise FormatError(f"{name}: pixel value exceeds maxval {maxval}")
    return pixels, maxval


def frame_to_bytes(frame: Frame) -> np.ndarray:
    return np.rint(frame.luma * 255.0).astype(np.uint8)


def read_frame(path, index: int | None = None) -> Frame:
    path = Path(path)
    pixels, maxval = decode_pgm(path.read_bytes(), str(path))
    if index is None:
        m = INDEXED_PGM_PATTERN.match(path.name)
        index = int(m.group(1)) if m else 0
    return Frame(pixels.astype(np.float64) / maxval, index=index)


def write_frame(frame: Frame, path) -> None:
    atomic_write(path, encode_pgm(frame_to_bytes(frame)))


def frame_path(directory, index: int) -> Path:
    return Path(directory) / f"frame_{index:06d}.pgm"


def load_frame_sequence(dir_path) -> list[Frame]:
    """Load every ``frame_%06d.pgm`` in a directory, ordered by index."""
    dir_path = Path(dir_path)
    found = {}
    for entry in sorted(os.listdir(dir_path)):
        m = FRAME_PATTERN.match(entry)
        if not m:
            continue
        index = int(m.group(1))
        if index in found:
            raise DuplicateError(f"duplicate frame index {index} in {dir_path}")
        found[index] = dir_path / entry
    return [read_frame(found[i], index=i) for i in sorted(found)]


# --------------------------------------------------------------------------
# flow


def encode_flow(field: FlowField) -> bytes:
    if not np.all(np.isfinite(field.vectors)):
        raise ValidationError("flow must be finite to serialise")
    header = FLOW_MAGIC + struct.pack("<ii", field.width, field.height)
    return header + field.vectors.astype("<f4").tobytes()


def decode_flow(data: bytes, name: str = "<bytes>") -> FlowField:
    if data[:4] != FLOW_MAGIC:
        raise FormatError(f"{name}: bad flow magic {data[:4]!r}")
    if len(data) < 12:
        raise FormatError(f"{name}: truncated flow header")
    width, height = struct.unpack("<ii", data[4:12])
    if width <= 0 or height <= 0:
        raise FormatError(f"{name}: non-positive flow dimensions {width}x{height}")
    expected = 12 + 8 * width * height
    if len(data) != expected:
        raise FormatError(f"{name}: expected {expected} bytes, found {len(data)}")
    vec = np.frombuffer(data, dtype="<f4", offset=12).reshape(height, width, 2)
    return FlowField(vec.astype(np.float64))


def write_flow(field: FlowField, path) -> None:
    atomic_write(path, encode_flow(field))


def read_flow(path) -> FlowField:
    path = Path(path)
    return decode_flow(path.read_bytes(), str(path))


# --------------------------------------------------------------------------
# label maps


def write_label_map(label_map: PartLabelMap, path) -> None:
    atomic_write(path, encode_pgm(label_map.labels))


def read_label_map(path, k: int | None = None, frame_index: int | None = None) -> PartLabelMap:
    """Read a label PGM; when ``k`` is given every value must be <= k."""
    path = Path(path)
    pixels, maxval = decode_pgm(path.read_bytes(), str(path))
    if maxval != 255:
        raise FormatError(f"{path}: label maps are stored with maxval 255, found {maxval}")
    top = int(pixels.max()) if pixels.size else 0
    if k is not None and top > k:
        raise ValidationError(f"{path}: label {top} exceeds declared part count {k}")
    if frame_index is None:
        m = INDEXED_PGM_PATTERN.match(path.name)
        frame_index = int(m.group(1)) if m else 0
    return PartLabelMap(pixels, k=k if k is not None else max(top, 1), frame_index=frame_index)


# --------------------------------------------------------------------------
# detections and keypoints


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield lineno, line.split()


def _parse_int(token: str, where: str) -> int:
    try:
        return int(token)
    except ValueError:
        pass
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{where}: non-numeric field {token!r}") from None
    if not value.is_integer():
        raise ParseError(f"{where}: expected an integer, got {token!r}")
    return int(value)


def _parse_float(token: str, where: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{where}: non-numeric field {token!r}") from None
    if not np.isfinite(value):
        raise ParseError(f"{where}: non-finite value {token!r}")
    return value


def load_detections(path, frame_size: tuple[int, int] | None = None) -> list[Detection]:
    """Parse a detection sidecar.

    ``frame_size`` is ``(width, height)``; when given, boxes are clamped to
    the frame and a box that collapses under clamping is rejected.
    """
    records = []
    for lineno, tokens in _data_lines(path):
        where = f"{path}:{lineno}"
        if len(tokens) != 6:
            raise ParseError(f"{where}: expected 6 fields, found {len(tokens)}")
        frame_index, x0, y0, x1, y1 = (_parse_int(t, where) for t in tokens[:5])
        score = _parse_float(tokens[5], where)
        if frame_index < 0:
            raise ValidationError(f"{where}: negative frame index")
        if frame_size is not None:
            w, h = frame_size
            x0, x1 = min(max(x0, 0), w), min(max(x1, 0), w)
            y0, y1 = min(max(y0, 0), h), min(max(y1, 0), h)
        if x0 >= x1 or y0 >= y1:
            raise ValidationError(f"{where}: degenerate box ({x0}, {y0}, {x1}, {y1})")
        records.append(Detection(frame_index, BBox(x0, y0, x1, y1), score))
    # sorted() is stable, so ties keep input order
    return sorted(records, key=lambda d: d.frame_index)


def format_detections(detections) -> str:
    lines = []
    for d in detections:
        b = d.bbox
        lines.append(f"{d.frame_index} {b.x0} {b.y0} {b.x1} {b.y1} {float(d.score)!r}\n")
    return "".join(lines)


def write_detections(detections, path) -> None:
    atomic_write(path, format_detections(detections).encode("utf-8"))


def group_by_frame(detections) -> dict[int, list[Detection]]:
    out: dict[int, list[Detection]] = {}
    for d in detections:
        out.setdefault(d.frame_index, []).append(d)
    return out


def load_keypoints(path) -> list[Keypoints]:
    per_frame: dict[int, dict[str, tuple[float, float]]] = {}
    for lineno, tokens in _data_lines(path):
        where = f"{path}:{lineno}"
        if len(tokens) != 4:
            raise ParseError(f"{where}: expected 4 fields, found {len(tokens)}")
        frame_index = _parse_int(tokens[0], where)
        name = tokens[1]
        if name not in JOINT_NAMES:
            raise ValidationError(f"{where}: unknown joint name {name!r}")
        x, y = _parse_float(tokens[2], where), _parse_float(tokens[3], where)
        joints = per_frame.setdefault(frame_index, {})
        if name in joints:
            raise DuplicateError(f"{where}: joint {name!r} repeated for frame {frame_index}")
        joints[name] = (x, y)
    return [Keypoints(i, per_frame[i]) for i in sorted(per_frame)]


def format_keypoints(keypoints) -> str:
    lines = []
    for kp in sorted(keypoints, key=lambda k: k.frame_index):
        for name in JOINT_NAMES:
            if name in kp.joints:
                x, y = kp.joints[name]
                lines.append(f"{kp.frame_index} {name} {float(x)!r} {float(y)!r}\n")
    return "".join(lines)


def write_keypoints(keypoints, path) -> None:
    atomic_write(path, format_keypoints(keypoints).encode("utf-8"))
