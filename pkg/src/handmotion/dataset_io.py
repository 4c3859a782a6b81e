"""Dataset persistence: one manifest.jsonl plus one binary file per record.

Binary layout (little endian): magic ``HMW1``, u32 frame count N, u32 row
width D=198, f32[N*D] row-major payload, trailing u32 CRC32 of the payload
bytes. The manifest line carries id, file, frame count, fps, captions,
visibility, and the filter log.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import ChecksumError, FormatError
from .motion import FRAME_DIM, flatten, unflatten
from .records import SequenceRecord

MAGIC = b"HMW1"
_HEADER = struct.Struct("<4sII")
_CRC = struct.Struct("<I")


def write_motion_file(path: Path, rows: np.ndarray) -> None:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2 or rows.shape[1] != FRAME_DIM:
        raise FormatError(f"expected Nx{FRAME_DIM} rows, got {rows.shape}", path)
    payload = rows.tobytes()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, rows.shape[0], FRAME_DIM))
        f.write(payload)
        f.write(_CRC.pack(zlib.crc32(payload)))


def read_motion_file(path: Path) -> np.ndarray:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size + _CRC.size:
        raise FormatError("file truncated before header", path)
    magic, n, d = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path)
    if d != FRAME_DIM:
        raise FormatError(f"unsupported row width {d}", path)
    need = _HEADER.size + 4 * n * d + _CRC.size
    if len(blob) != need:
        raise FormatError(f"expected {need} bytes, found {len(blob)}", path)
    payload = blob[_HEADER.size : _HEADER.size + 4 * n * d]
    (crc,) = _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if zlib.crc32(payload) != crc:
        raise ChecksumError("payload CRC mismatch", path)
    return np.frombuffer(payload, dtype="<f4").reshape(n, d).copy()


def _pack_visibility(vis: np.ndarray) -> list[str]:
    return ["".join("1" if v else "0" for v in vis[:, h]) for h in range(2)]


def _unpack_visibility(packed: list[str]) -> np.ndarray:
    cols = [np.frombuffer(s.encode(), dtype=np.uint8) - ord("0") for s in packed]
    return np.stack(cols, axis=1).astype(bool)


def write_dataset(records: list[SequenceRecord], directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / "manifest.jsonl"
    with open(manifest, "w") as mf:
        for rec in records:
            fname = f"{rec.id}.hmw"
            write_motion_file(directory / fname, flatten(rec.motion))
            entry = {
                "id": rec.id,
                "file": fname,
                "num_frames": rec.motion.frames,
                "fps": rec.motion.fps,
                "caption_high": rec.caption_high,
                "caption_fine": rec.caption_fine,
                "visibility": _pack_visibility(rec.visibility),
                "filter_log": [[n, bool(p), float(s)] for n, p, s in rec.filter_log],
            }
            mf.write(json.dumps(entry, sort_keys=True) + "\n")
    return manifest


def read_dataset(directory: str | Path) -> list[SequenceRecord]:
    directory = Path(directory)
    manifest = directory / "manifest.jsonl"
    if not manifest.exists():
        raise FormatError("manifest.jsonl not found", manifest)
    records = []
    with open(manifest) as mf:
        for line_no, line in enumerate(mf, 1):
            line = line.strip()
            if not line:
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"manifest line {line_no} is not JSON: {exc}", manifest)
            rows = read_motion_file(directory / entry["file"])
            if rows.shape[0] != entry["num_frames"]:
                raise FormatError(
                    f"frame count mismatch for {entry['id']}", directory / entry["file"]
                )
            records.append(
                SequenceRecord(
                    id=entry["id"],
                    motion=unflatten(rows, fps=entry["fps"]),
                    caption_high=entry["caption_high"],
                    caption_fine=entry["caption_fine"],
                    visibility=_unpack_visibility(entry["visibility"]),
                    filter_log=[(n, bool(p), float(s)) for n, p, s in entry["filter_log"]],
                )
            )
    return records
