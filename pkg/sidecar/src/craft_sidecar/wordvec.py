"""Word-vector table for verb-to-term similarity (NumberBatch-style text
format: one ``word v1 v2 ...`` per line, optional leading count/dim header)."""

from __future__ import annotations

from pathlib import Path

import numpy as np

FLOOR = -1.0


class WordVecTable:
    def __init__(self, path: str | Path):
        self._vectors: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(
                Path(path).read_text(encoding="utf-8").splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) == 2 and lineno == 1:
                continue
            word, vals = parts[0], parts[1:]
            arr = np.asarray([float(v) for v in vals], dtype=np.float64)
            norm = np.linalg.norm(arr)
            if norm > 0:
                self._vectors[word.replace("_", " ")] = arr / norm

    def __len__(self) -> int:
        return len(self._vectors)

    def similarity(self, verb: str, term: str) -> tuple[float, bool]:
        """(score, missing); missing terms score the documented floor."""
        a = self._vectors.get(verb)
        b = self._vectors.get(term)
        if a is None or b is None:
            return FLOOR, True
        return float(np.clip(np.dot(a, b), -1.0, 1.0)), False
