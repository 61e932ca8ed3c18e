"""Unit-norm embedding vectors behind file-backed and HTTP-backed providers.

File format (bit-exact, little-endian): magic ``CEMB`` (4 bytes), version u16,
dim u32, count u64; then per entry key-length u32, UTF-8 key bytes and
dim x f32 values. Vectors are stored as f32; similarity is computed in f64.
"""

from __future__ import annotations

import difflib
import struct
import threading
import time
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import numpy as np

from .errors import DataError, DimError, FormatError, KeyMissingError, TransportError

MAGIC = b"CEMB"
VERSION = 1

# Text prompt templates; the template id is part of every embedding cache key.
TEMPLATES = {
    "photo_of": "a photo of a {object}",
    "used_to": "a {object} used to {verb}",
}
DEFAULT_TEMPLATE = "photo_of"
AFFORDANCE_PROMPT = "something used to {verb}"


def render_prompt(template_id: str, object_label: str, verb_label: str = "") -> str:
    if template_id not in TEMPLATES:
        raise FormatError(f"unknown prompt template {template_id!r}")
    return TEMPLATES[template_id].format(object=object_label, verb=verb_label)


class EmbeddingVector:
    """L2-normalized float vector. Construction rejects zero/non-finite input."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float64).reshape(-1)
        if arr.size == 0:
            raise DataError("empty vector")
        if not np.all(np.isfinite(arr)):
            raise DataError("vector contains NaN/Inf")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise DataError("zero vector cannot be normalized")
        self.values = arr / norm
        self.values.setflags(write=False)

    @property
    def dim(self) -> int:
        return int(self.values.size)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity of unit vectors, clamped to [-1, 1]."""
    if a.dim != b.dim:
        raise DimError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return float(np.clip(np.dot(a.values, b.values), -1.0, 1.0))


class EmbeddingStore:
    """Immutable map from namespaced keys (``text:<prompt>`` / ``image:<ref>``)
    to vectors sharing one dimension."""

    def __init__(self, vectors: Mapping[str, EmbeddingVector]):
        dims = {v.dim for v in vectors.values()}
        if len(dims) > 1:
            raise FormatError(f"mixed dimensions in store: {sorted(dims)}")
        self._vectors = dict(vectors)
        self.dim = dims.pop() if dims else 0

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def keys(self) -> list[str]:
        return sorted(self._vectors)

    def get(self, key: str) -> EmbeddingVector:
        try:
            return self._vectors[key]
        except KeyError:
            suggestions = difflib.get_close_matches(key, self._vectors.keys(), n=5, cutoff=0.0)
            raise KeyMissingError(key, suggestions) from None


def load_store(path: str | Path) -> EmbeddingStore:
    """Load a CEMB file. Any structural defect fails atomically (no partial store)."""
    blob = Path(path).read_bytes()
    if len(blob) < 18 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic, not a CEMB file")
    version, dim, count = struct.unpack_from("<HIQ", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported CEMB version {version}")
    if dim == 0:
        raise FormatError(f"{path}: zero dimension")
    offset = 18
    vectors: dict[str, EmbeddingVector] = {}
    for _ in range(count):
        if offset + 4 > len(blob):
            raise FormatError(f"{path}: truncated entry header")
        (key_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        if offset + key_len + 4 * dim > len(blob):
            raise FormatError(f"{path}: truncated entry body")
        key = blob[offset:offset + key_len].decode("utf-8")
        offset += key_len
        raw = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
        if key in vectors:
            raise FormatError(f"{path}: duplicate key {key!r}")
        if not np.all(np.isfinite(raw)):
            raise DataError(f"{path}: non-finite value for key {key!r}")
        try:
            vectors[key] = EmbeddingVector(raw)
        except DataError as err:
            raise DataError(f"{path}: key {key!r}: {err}") from err
    if offset != len(blob):
        raise FormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return EmbeddingStore(vectors)


def write_store(path: str | Path, entries: Mapping[str, Iterable[float]]) -> None:
    """Write a CEMB file; keys are sorted so output is byte-deterministic."""
    arrays = {k: np.asarray(v, dtype=np.float64).reshape(-1) for k, v in entries.items()}
    dims = {a.size for a in arrays.values()}
    if len(dims) > 1:
        raise FormatError(f"mixed dimensions in entries: {sorted(dims)}")
    dim = dims.pop() if dims else 0
    parts = [MAGIC, struct.pack("<HIQ", VERSION, dim, len(arrays))]
    for key in sorted(arrays):
        kb = key.encode("utf-8")
        parts.append(struct.pack("<I", len(kb)))
        parts.append(kb)
        parts.append(arrays[key].astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class EmbeddingProvider(Protocol):
    template_id: str

    def embed_text(self, prompt: str) -> EmbeddingVector: ...

    def embed_image(self, ref: str) -> EmbeddingVector: ...


def _image_key(ref: str) -> str:
    return ref if ref.startswith("image:") else f"image:{ref}"


class FileProvider:
    """Pure-lookup provider over a loaded store."""

    def __init__(self, store: EmbeddingStore, template_id: str = DEFAULT_TEMPLATE):
        self.store = store
        self.template_id = template_id

    def embed_text(self, prompt: str) -> EmbeddingVector:
        return self.store.get(f"text:{prompt}")

    def embed_image(self, ref: str) -> EmbeddingVector:
        return self.store.get(_image_key(ref))


class HttpProvider:
    """Client for the embedding sidecar's ``POST /embed`` endpoint.

    Responses are cached by (kind, payload, template_id); the cache is the only
    mutable state and is lock-protected. Requests are idempotent, so failures
    retry with exponential backoff.
    """

    def __init__(self, base_url: str, template_id: str = DEFAULT_TEMPLATE,
                 retries: int = 3, backoff: float = 0.25, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.template_id = template_id
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._cache: dict[tuple[str, str, str], EmbeddingVector] = {}
        self._lock = threading.Lock()

    def embed_text(self, prompt: str) -> EmbeddingVector:
        return self._embed("text", prompt)

    def embed_image(self, ref: str) -> EmbeddingVector:
        return self._embed("image", ref)

    def _embed(self, kind: str, payload: str) -> EmbeddingVector:
        key = (kind, payload, self.template_id)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        body = {"kind": kind, "payload": payload, "template_id": self.template_id}
        data = self._post_json("/embed", body)
        if not isinstance(data, dict) or "values" not in data:
            raise TransportError(f"malformed /embed response for {payload!r}")
        vec = EmbeddingVector(data["values"])
        with self._lock:
            self._cache[key] = vec
        return vec

    def _post_json(self, route: str, body: dict) -> object:
        import requests

        last_err: Exception | None = None
        for attempt in range(1, self.retries + 1):
            try:
                resp = requests.post(self.base_url + route, json=body, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise TransportError(f"{route} returned {resp.status_code}")
                if resp.status_code != 200:
                    raise TransportError(
                        f"{route} returned {resp.status_code}: {resp.text[:200]}")
                return resp.json()
            except TransportError as err:
                # 4xx contract violations don't improve on retry
                if "returned 4" in str(err):
                    raise
                last_err = err
            except requests.RequestException as err:
                last_err = err
            if attempt < self.retries:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
        raise TransportError(
            f"{route} failed after {self.retries} attempts: {last_err}") from last_err


class FixtureSimilarity:
    """Dict-backed verb-term similarity with the documented -1.0 floor."""

    floor = -1.0

    def __init__(self, scores: Mapping[tuple[str, str], float]):
        self._scores = dict(scores)
        self.misses: list[str] = []

    def similarity(self, verb: str, term: str) -> float:
        try:
            return self._scores[(verb, term)]
        except KeyError:
            self.misses.append(term)
            return self.floor


class WordVecSimilarity:
    """Cosine similarity over a text word-vector table (one ``word v1 v2 ...``
    per line, NumberBatch-style)."""

    floor = -1.0

    def __init__(self, path: str | Path):
        self._vectors: dict[str, np.ndarray] = {}
        self.misses: list[str] = []
        dim = None
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) == 2 and lineno == 1:
                continue  # optional "count dim" header
            word, vals = parts[0], parts[1:]
            try:
                arr = np.asarray([float(v) for v in vals], dtype=np.float64)
            except ValueError as err:
                raise FormatError(f"{path}:{lineno}: bad vector: {err}") from err
            if dim is None:
                dim = arr.size
            elif arr.size != dim:
                raise FormatError(f"{path}:{lineno}: dimension mismatch")
            norm = np.linalg.norm(arr)
            if norm > 0:
                self._vectors[word.replace("_", " ")] = arr / norm

    def similarity(self, verb: str, term: str) -> float:
        a = self._vectors.get(verb)
        b = self._vectors.get(term)
        if a is None or b is None:
            self.misses.append(term if b is None else verb)
            return self.floor
        return float(np.clip(np.dot(a, b), -1.0, 1.0))


class HttpSimilarity:
    """Client for the sidecar's ``POST /similarity`` endpoint."""

    floor = -1.0

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.misses: list[str] = []

    def similarity(self, verb: str, term: str) -> float:
        import requests

        try:
            resp = requests.post(self.base_url + "/similarity",
                                 json={"verb": verb, "terms": [term]}, timeout=self.timeout)
        except requests.RequestException as err:
            raise TransportError(f"/similarity unreachable: {err}") from err
        if resp.status_code != 200:
            raise TransportError(f"/similarity returned {resp.status_code}")
        data = resp.json()
        if data.get("missing", [False])[0]:
            self.misses.append(term)
        return float(data["scores"][0])


class NullSimilarity:
    """Degenerate provider: everything is a miss at the floor. Used when no
    similarity source is configured but a two-stage sort was requested."""

    floor = -1.0

    def __init__(self):
        self.misses: list[str] = []

    def similarity(self, verb: str, term: str) -> float:
        self.misses.append(term)
        return self.floor
