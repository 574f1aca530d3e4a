"""File formats: MOT-style CSV records, binary PGM depth and luminance
images, embedding blobs, label files, motion files, flat config text, and
atomic writes.

Frame indices are 1-based inside files (MOT convention) and 0-based in
memory; the converters here own that shift. Floats in text formats use
canonical 6-significant-digit formatting, which makes write -> parse ->
write a fixed point.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .depth_filter import DepthMap
from .errors import DataError
from .geometry import BoundingBox, Detection
from .metrics import AnnotatedSequence
from .relight import LumaImage
from .tracker import AffineMotion
from .weak_labels import LabelRecord, format_label_line, parse_label_line


class ParseError(DataError):
    """Malformed text input; message carries the 1-based line number."""


class FormatError(DataError):
    """Malformed binary input."""


def _fmt(value: float) -> str:
    return format(float(value), ".6g")


@dataclass(frozen=True)
class MotRecord:
    """One `frame,id,x,y,w,h,conf,class,visibility` line; x,y is the box
    top-left corner, id is -1 for raw detections."""

    frame: int
    track_id: int
    x: float
    y: float
    w: float
    h: float
    conf: float
    class_id: int
    visibility: float

    def __post_init__(self):
        if self.frame < 1:
            raise DataError(f"frame must be 1-based positive, got {self.frame}")
        if self.w <= 0 or self.h <= 0:
            raise DataError(f"record w/h must be positive, got {self.w}, {self.h}")
        for name in ("x", "y", "w", "h", "conf", "visibility"):
            if not math.isfinite(getattr(self, name)):
                raise DataError(f"record field {name} must be finite")

    @property
    def box(self) -> BoundingBox:
        return BoundingBox(self.x, self.y, self.x + self.w, self.y + self.h)


def parse_mot(text: str) -> list[MotRecord]:
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 9:
            raise ParseError(f"line {lineno}: expected 9 fields, got {len(fields)}")
        try:
            record = MotRecord(
                frame=int(fields[0]),
                track_id=int(fields[1]),
                x=float(fields[2]),
                y=float(fields[3]),
                w=float(fields[4]),
                h=float(fields[5]),
                conf=float(fields[6]),
                class_id=int(fields[7]),
                visibility=float(fields[8]),
            )
        except (ValueError, DataError) as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        records.append(record)
    return records


def format_mot(records: list[MotRecord]) -> str:
    lines = []
    for r in records:
        lines.append(
            f"{r.frame},{r.track_id},{_fmt(r.x)},{_fmt(r.y)},{_fmt(r.w)},"
            f"{_fmt(r.h)},{_fmt(r.conf)},{r.class_id},{_fmt(r.visibility)}"
        )
    return "".join(line + "\n" for line in lines)


def record_to_detection(record: MotRecord) -> Detection:
    return Detection(
        frame_index=record.frame - 1,
        box=record.box,
        confidence=record.conf,
        class_id=record.class_id,
    )


def detection_to_record(det: Detection, track_id: int = -1,
                        visibility: float = 1.0) -> MotRecord:
    b = det.box
    return MotRecord(
        frame=det.frame_index + 1,
        track_id=track_id,
        x=b.x_min,
        y=b.y_min,
        w=b.width,
        h=b.height,
        conf=det.confidence,
        class_id=det.class_id,
        visibility=visibility,
    )


def records_to_sequence(
    records: list[MotRecord], sequence_id: str, n_frames: int | None = None
) -> AnnotatedSequence:
    """Group id-bearing records into per-frame annotations covering frames
    0 .. n_frames-1 (n_frames defaults to the highest frame present)."""
    max_frame = max((r.frame for r in records), default=0)
    if n_frames is None:
        n_frames = max_frame
    elif max_frame > n_frames:
        raise DataError(
            f"{sequence_id}: record at frame {max_frame} exceeds the "
            f"expected {n_frames}-frame range"
        )
    by_frame: dict[int, list[tuple[int, BoundingBox]]] = {
        f: [] for f in range(n_frames)
    }
    for r in records:
        if r.track_id < 1:
            raise DataError(
                f"{sequence_id}: annotation ids must be positive, got {r.track_id}"
            )
        by_frame[r.frame - 1].append((r.track_id, r.box))
    return AnnotatedSequence.from_dict(sequence_id, by_frame)


def group_records_by_frame(
    records: list[MotRecord], n_frames: int | None = None
) -> list[list[MotRecord]]:
    max_frame = max((r.frame for r in records), default=0)
    if n_frames is None:
        n_frames = max_frame
    elif max_frame > n_frames:
        raise DataError(
            f"record at frame {max_frame} exceeds the expected "
            f"{n_frames}-frame range"
        )
    frames: list[list[MotRecord]] = [[] for _ in range(n_frames)]
    for r in records:
        frames[r.frame - 1].append(r)
    return frames


def _parse_pgm_header(data: bytes) -> tuple[bytes, int, int, int, int]:
    """Returns (magic, width, height, maxval, payload offset)."""
    tokens: list[bytes] = []
    i = 0
    n = len(data)
    while len(tokens) < 4:
        if i >= n:
            raise FormatError("truncated header")
        c = data[i:i + 1]
        if c == b"#":
            while i < n and data[i:i + 1] != b"\n":
                i += 1
            i += 1
        elif c.isspace():
            i += 1
        else:
            start = i
            while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
                i += 1
            tokens.append(data[start:i])
    if i >= n or not data[i:i + 1].isspace():
        raise FormatError("missing whitespace after maxval")
    i += 1
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"non-numeric header fields {tokens[1:]}") from None
    if width < 1 or height < 1:
        raise FormatError(f"bad dimensions {width}x{height}")
    return magic, width, height, maxval, i


def read_depth_pgm(data: bytes) -> DepthMap:
    """Binary PGM, magic P5, maxval 65535, big-endian 16-bit, row-major."""
    magic, width, height, maxval, offset = _parse_pgm_header(data)
    if magic != b"P5":
        raise FormatError(f"expected magic P5, got {magic!r}")
    if maxval != 65535:
        raise FormatError(f"depth maps must be 16-bit (maxval 65535), got {maxval}")
    payload = data[offset:]
    expected = width * height * 2
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype=">u2").astype(np.int32)
    return DepthMap(values.reshape(height, width))


def write_depth_pgm(depth: DepthMap) -> bytes:
    if int(depth.values.max()) > 65535:
        raise DataError("depth values exceed 16-bit range")
    header = f"P5\n{depth.width} {depth.height}\n65535\n".encode("ascii")
    return header + depth.values.astype(">u2").tobytes()


def read_luma_pgm(data: bytes) -> LumaImage:
    """Binary PGM, magic P5, maxval 255, one byte per pixel."""
    magic, width, height, maxval, offset = _parse_pgm_header(data)
    if magic != b"P5":
        raise FormatError(f"expected magic P5, got {magic!r}")
    if maxval != 255:
        raise FormatError(f"luminance images must be 8-bit (maxval 255), got {maxval}")
    payload = data[offset:]
    expected = width * height
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    return LumaImage(values.reshape(height, width))


def write_luma_pgm(image: LumaImage) -> bytes:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    quantized = np.rint(image.pixels).clip(0, 255).astype(np.uint8)
    return header + quantized.tobytes()


def read_embeddings(data: bytes, counts: list[int]) -> list[list[tuple[float, ...]]]:
    """Per-frame embedding blocks; counts come from the detection file.

    Layout: one text header line `dim=<D>`, then little-endian float32
    vectors, frame by frame, detection by detection.
    """
    newline = data.find(b"\n")
    if newline < 0:
        raise FormatError("missing embedding header line")
    header = data[:newline].decode("ascii", errors="replace")
    if not header.startswith("dim="):
        raise FormatError(f"expected header dim=<D>, got {header!r}")
    try:
        dim = int(header[4:])
    except ValueError:
        raise FormatError(f"bad embedding dim in header {header!r}") from None
    if dim < 1:
        raise FormatError(f"embedding dim must be positive, got {dim}")
    payload = data[newline + 1:]
    total = sum(counts)
    expected = total * dim * 4
    if len(payload) != expected:
        raise FormatError(
            f"embedding payload is {len(payload)} bytes, expected {expected} "
            f"({total} vectors of dim {dim})"
        )
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    frames = []
    pos = 0
    for count in counts:
        block = []
        for _ in range(count):
            block.append(tuple(flat[pos:pos + dim]))
            pos += dim
        frames.append(block)
    return frames


def write_embeddings(dim: int, frames: list[list[tuple[float, ...]]]) -> bytes:
    chunks = [f"dim={dim}\n".encode("ascii")]
    for block in frames:
        for vec in block:
            if len(vec) != dim:
                raise DataError(
                    f"embedding has {len(vec)} components, expected {dim}"
                )
            chunks.append(np.asarray(vec, dtype="<f4").tobytes())
    return b"".join(chunks)


def parse_labels(text: str) -> list[LabelRecord]:
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            records.append(parse_label_line(line))
        except DataError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    return records


def format_labels(records: list[LabelRecord]) -> str:
    return "".join(format_label_line(r) + "\n" for r in records)


def parse_override(text: str) -> dict[str, list[LabelRecord]]:
    """Override lines are a label record with a leading image_id column."""
    overrides: dict[str, list[LabelRecord]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        image_id, _, rest = line.partition(" ")
        if not rest:
            raise ParseError(f"line {lineno}: expected `image_id record...`")
        try:
            record = parse_label_line(rest)
        except DataError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        overrides.setdefault(image_id, []).append(record)
    return overrides


def format_override(overrides: dict[str, list[LabelRecord]]) -> str:
    lines = []
    for image_id, records in overrides.items():
        if " " in image_id or not image_id:
            raise DataError(f"image_id {image_id!r} must be nonempty, no spaces")
        for r in records:
            lines.append(f"{image_id} {format_label_line(r)}")
    return "".join(line + "\n" for line in lines)


def parse_motion(text: str) -> dict[int, AffineMotion]:
    """Per-frame camera motion: `frame,a,b,tx,c,d,ty` rows (row-major 2x3),
    1-based frames; frames absent from the file get no compensation."""
    motions: dict[int, AffineMotion] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 7:
            raise ParseError(f"line {lineno}: expected 7 fields, got {len(fields)}")
        try:
            frame = int(fields[0])
            values = [float(v) for v in fields[1:]]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if frame < 1:
            raise ParseError(f"line {lineno}: frame must be 1-based positive")
        try:
            motion = AffineMotion(np.array(values).reshape(2, 3))
        except DataError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        motions[frame - 1] = motion
    return motions


def format_motion(motions: dict[int, AffineMotion]) -> str:
    lines = []
    for frame in sorted(motions):
        m = motions[frame].matrix.reshape(-1)
        lines.append(
            f"{frame + 1}," + ",".join(_fmt(v) for v in m)
        )
    return "".join(line + "\n" for line in lines)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat `key = value` lines; `#` starts a comment; blank lines ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"line {lineno}: expected `key = value`")
        values[key.strip()] = value.strip()
    return values


def format_config_text(values: dict[str, str]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())


def atomic_write(path: str, data: bytes | str) -> None:
    """Write-then-rename so readers never observe partial files."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: str, payload: dict) -> None:
    atomic_write(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return payload
