"""Export encoder outputs as a CEMB embedding file for offline runs.

File layout (little-endian): magic ``CEMB``, version u16, dim u32, count u64,
then per entry key-length u32, UTF-8 key, dim x f32. Keys are sorted so the
output is byte-deterministic.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import EncodingError, canonical_key

MAGIC = b"CEMB"
VERSION = 1


@dataclass
class ExportReport:
    written: int = 0
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (key, reason)


def load_manifest(path: str | Path) -> dict:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: manifest must be a JSON object")
    texts = data.get("texts", [])
    images = data.get("images", [])
    if not all(isinstance(t, str) for t in texts + images):
        raise ValueError(f"{path}: 'texts' and 'images' must be string lists")
    return {"texts": texts, "images": images}


def export_store(encoder, manifest: dict, out_path: str | Path) -> ExportReport:
    """Encode every manifest entry and write the store. Entries the encoder
    cannot process (for example unreadable images) are skipped and reported."""
    report = ExportReport()
    vectors: dict[str, np.ndarray] = {}
    for kind, payloads in (("text", manifest.get("texts", [])),
                           ("image", manifest.get("images", []))):
        for payload in payloads:
            key = canonical_key(kind, payload)
            try:
                vectors[key] = np.asarray(encoder.encode(kind, payload),
                                          dtype=np.float64)
            except EncodingError as err:
                report.skipped.append((key, str(err)))

    dim = encoder.dim
    parts = [MAGIC, struct.pack("<HIQ", VERSION, dim, len(vectors))]
    for key in sorted(vectors):
        encoded = key.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(vectors[key].astype("<f4").tobytes())
    Path(out_path).write_bytes(b"".join(parts))
    report.written = len(vectors)
    return report
