"""Image-sequence storage: raw float32 with a JSON sidecar, or 16-bit PGM.

A sequence is a directory holding ``header.json`` plus either a single
``frames.f32`` payload (little-endian float32, frames concatenated in C
order; lossless) or one ``frame_NNNNNN.pgm`` per frame (P5, maxval 65535,
big-endian samples; values quantized through the recorded scale/offset so
signed data survives).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["SequenceError", "SequenceHeader", "read_sequence", "write_sequence"]

HEADER_NAME = "header.json"
RAW_NAME = "frames.f32"
DTYPES = ("f32le", "pgm16")


class SequenceError(Exception):
    """Malformed, truncated or inconsistent sequence storage."""


@dataclass
class SequenceHeader:
    width: int
    height: int
    frame_count: int
    dtype: str = "f32le"
    scale: float = 1.0
    offset: float = 0.0
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.dtype not in DTYPES:
            raise SequenceError(f"unknown sequence dtype {self.dtype!r}")
        if self.width < 1 or self.height < 1 or self.frame_count < 0:
            raise SequenceError("non-positive sequence geometry")
        if self.scale <= 0:
            raise SequenceError(f"scale must be > 0, got {self.scale}")

    def to_json_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "frame_count": self.frame_count,
            "dtype": self.dtype,
            "scale": self.scale,
            "offset": self.offset,
            "meta": self.meta,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "SequenceHeader":
        try:
            hdr = cls(
                width=int(data["width"]),
                height=int(data["height"]),
                frame_count=int(data["frame_count"]),
                dtype=str(data.get("dtype", "f32le")),
                scale=float(data.get("scale", 1.0)),
                offset=float(data.get("offset", 0.0)),
                meta=dict(data.get("meta", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SequenceError(f"malformed sequence header: {exc}") from exc
        hdr.validate()
        return hdr


def _pgm_name(t: int) -> str:
    return f"frame_{t:06d}.pgm"


def write_sequence(frames, path, dtype: str = "f32le", meta: dict | None = None,
                   scale: float | None = None, offset: float | None = None,
                   ) -> SequenceHeader:
    """Write a (T, H, W) array as a sequence directory; returns the header.

    For ``pgm16`` the quantization ``q = round((v - offset)/scale)`` uses
    the data range by default (scale = span/65535), bounding the round-trip
    error by half a step.
    """
    frames = np.asarray(frames, dtype=np.float32)
    if frames.ndim != 3:
        raise SequenceError(f"expected (T, H, W) frames, got shape {frames.shape}")
    t, h, w = frames.shape
    if dtype not in DTYPES:
        raise SequenceError(f"unknown sequence dtype {dtype!r}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)

    if dtype == "pgm16":
        lo = float(frames.min()) if frames.size else 0.0
        hi = float(frames.max()) if frames.size else 1.0
        if offset is None:
            offset = lo
        if scale is None:
            span = hi - offset
            scale = span / 65535.0 if span > 0 else 1.0
    else:
        scale = 1.0 if scale is None else scale
        offset = 0.0 if offset is None else offset

    header = SequenceHeader(
        width=w, height=h, frame_count=t, dtype=dtype,
        scale=float(scale), offset=float(offset), meta=dict(meta or {}),
    )
    header.validate()

    if dtype == "f32le":
        payload = frames.astype("<f4", copy=False)
        with open(path / RAW_NAME, "wb") as fh:
            fh.write(payload.tobytes())
    else:
        for i in range(t):
            q = np.rint((frames[i].astype(np.float64) - offset) / scale)
            q = np.clip(q, 0, 65535).astype(">u2")
            with open(path / _pgm_name(i), "wb") as fh:
                fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
                fh.write(q.tobytes())

    with open(path / HEADER_NAME, "w", encoding="utf-8") as fh:
        json.dump(header.to_json_dict(), fh, indent=2)
        fh.write("\n")
    return header


def _read_pgm(path: Path, width: int, height: int) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    # parse "P5 <w> <h> <maxval>" allowing comments and any whitespace
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise SequenceError(f"{path.name}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise SequenceError(f"{path.name}: not a binary PGM (P5)")
    pw, ph, maxval = (int(t) for t in tokens[1:4])
    if (pw, ph) != (width, height):
        raise SequenceError(
            f"{path.name}: frame is {pw}x{ph}, header says {width}x{height}"
        )
    if maxval != 65535:
        raise SequenceError(f"{path.name}: expected 16-bit PGM, maxval {maxval}")
    need = width * height * 2
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise SequenceError(f"{path.name}: truncated PGM payload")
    return np.frombuffer(raw, dtype=">u2").reshape(height, width)


def read_sequence(path):
    """Read a sequence directory; returns ``(frames, header)`` with frames
    as float32 (T, H, W).  f32le round-trips bit-exactly; pgm16 values are
    de-quantized through the recorded scale/offset."""
    path = Path(path)
    header_path = path / HEADER_NAME
    if not header_path.is_file():
        raise SequenceError(f"missing {HEADER_NAME} in {path}")
    try:
        with open(header_path, "r", encoding="utf-8") as fh:
            header = SequenceHeader.from_json_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise SequenceError(f"malformed sequence header: {exc}") from exc

    t, h, w = header.frame_count, header.height, header.width
    if header.dtype == "f32le":
        raw_path = path / RAW_NAME
        if not raw_path.is_file():
            raise SequenceError(f"missing {RAW_NAME} in {path}")
        data = np.fromfile(raw_path, dtype="<f4")
        if data.size != t * h * w:
            raise SequenceError(
                f"{RAW_NAME} holds {data.size} values, expected {t * h * w}"
            )
        frames = data.reshape(t, h, w).astype(np.float32, copy=False)
    else:
        frames = np.empty((t, h, w), dtype=np.float32)
        for i in range(t):
            q = _read_pgm(path / _pgm_name(i), w, h)
            frames[i] = (q.astype(np.float64) * header.scale + header.offset).astype(
                np.float32
            )
    return frames, header
