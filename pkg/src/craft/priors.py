"""Candidate priors: path-scored ego-subgraph evidence and LLM object lists.

Every prior lives on the probability simplex: positive scores summing to 1.
Path evidence for an object is the best (max) product of max-normalized edge
weights over simple walks from the verb root, which keeps scores in (0, 1]
and stays stable on dense subgraphs.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol

from .errors import ConfigError, EmptyPriorError, LLMPriorError, TransportError
from .graph import EgoSubgraph, concept_label, normalize_concept

SIMPLEX_FLOOR = 1e-12  # multiplicative updates can never revive a hard zero
MIN_PATH_FACTOR = 1e-9  # keeps zero-weight edges inside (0, 1]
DEFAULT_MAX_PATHS = 64
_EXPANSION_CAP = 200_000  # hard guard for pathological subgraphs

PROVENANCE_CONCEPTNET = "conceptnet"
PROVENANCE_LLM = "llm"


@dataclass(frozen=True, order=True)
class PathStep:
    # order=True keeps best-first enumeration deterministic when two walks
    # share a node sequence (parallel edges with different relations)
    node: str
    rel: str
    direction: str  # forward | reverse (relative to the stored edge)
    weight: float


@dataclass(frozen=True)
class ReasoningPath:
    root: str
    steps: tuple[PathStep, ...]
    normalized_score: float

    @property
    def target(self) -> str:
        return self.steps[-1].node if self.steps else self.root

    @property
    def max_edge_weight(self) -> float:
        return max((s.weight for s in self.steps), default=0.0)


@dataclass(frozen=True)
class PriorEntry:
    object_id: str
    score: float
    edge_weight: float | None = None  # max edge weight on the strongest path


@dataclass(frozen=True)
class PriorSet:
    verb: str
    entries: tuple[PriorEntry, ...]
    provenance: str
    iteration: int = 0

    @classmethod
    def from_raw(cls, verb: str, raw: dict[str, float], provenance: str, iteration: int = 0,
                 edge_weights: dict[str, float] | None = None) -> "PriorSet":
        """Normalize raw non-negative scores onto the simplex.

        Scores are floored at SIMPLEX_FLOOR after the first normalization and
        renormalized, so every entry stays strictly positive.
        """
        if not raw:
            raise EmptyPriorError(f"no candidates to score for {verb!r}")
        total = sum(raw.values())
        if total <= 0 or not math.isfinite(total):
            raise EmptyPriorError(f"degenerate raw scores for {verb!r}")
        scores = {o: max(v / total, SIMPLEX_FLOOR) for o, v in raw.items()}
        total2 = sum(scores.values())
        entries = tuple(
            PriorEntry(o, s / total2, (edge_weights or {}).get(o))
            for o, s in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
        )
        return cls(verb, entries, provenance, iteration)

    @property
    def objects(self) -> tuple[str, ...]:
        return tuple(e.object_id for e in self.entries)

    def score_of(self, object_id: str) -> float:
        for e in self.entries:
            if e.object_id == object_id:
                return e.score
        raise KeyError(object_id)

    def as_dict(self) -> dict[str, float]:
        return {e.object_id: e.score for e in self.entries}

    def total(self) -> float:
        return sum(e.score for e in self.entries)


def _clamp_factor(weight: float, max_weight: float) -> float:
    if max_weight <= 0:
        return MIN_PATH_FACTOR
    return min(1.0, max(weight / max_weight, MIN_PATH_FACTOR))


def enumerate_paths(ego: EgoSubgraph, object_id: str,
                    max_paths: int = DEFAULT_MAX_PATHS) -> list[ReasoningPath]:
    """All simple walks root -> object, best-first.

    Returned in descending normalized_score, ties broken by fewer hops then
    lexicographic node sequence, so the first entry is the canonical best
    path. Unreachable objects yield an empty list.
    """
    max_w = ego.max_edge_weight
    # heap entries: (-score, n_steps, node_seq, steps, visited)
    heap: list[tuple[float, int, tuple[str, ...], tuple[PathStep, ...], frozenset[str]]] = [
        (-1.0, 0, (ego.root,), (), frozenset({ego.root}))
    ]
    out: list[ReasoningPath] = []
    expansions = 0
    while heap and len(out) < max_paths and expansions < _EXPANSION_CAP:
        neg_score, _, seq, steps, visited = heapq.heappop(heap)
        node = seq[-1]
        if node == object_id and steps:
            out.append(ReasoningPath(ego.root, steps, -neg_score))
            continue  # simple walks end at the target; no extensions
        for edge, direction in ego.incident(node):
            nxt = edge.dst if direction == "forward" else edge.src
            if nxt in visited:
                continue
            expansions += 1
            score = -neg_score * _clamp_factor(edge.weight, max_w)
            step = PathStep(nxt, edge.rel, direction, edge.weight)
            heapq.heappush(
                heap,
                (-score, len(steps) + 1, seq + (nxt,), steps + (step,), visited | {nxt}),
            )
    return out


def score_prior(ego: EgoSubgraph, max_paths: int = DEFAULT_MAX_PATHS) -> PriorSet:
    """Prior over the ego-subgraph's object candidates.

    Raw score per object = normalized_score of its best path; the set is then
    projected onto the simplex. Iteration counter starts at 0.
    """
    if not ego.candidate_ids:
        raise EmptyPriorError(f"no object candidates for verb {ego.root!r}")
    raw: dict[str, float] = {}
    edge_weights: dict[str, float] = {}
    for obj in ego.candidate_ids:
        paths = enumerate_paths(ego, obj, max_paths)
        if not paths:
            continue  # candidate disconnected under the whitelist
        raw[obj] = paths[0].normalized_score
        edge_weights[obj] = paths[0].max_edge_weight
    if not raw:
        raise EmptyPriorError(f"no candidate reachable from {ego.root!r}")
    return PriorSet.from_raw(ego.root, raw, PROVENANCE_CONCEPTNET, 0, edge_weights)


class SimilarityLookup(Protocol):
    """Verb-to-term similarity provider (NumberBatch-backed in production)."""

    floor: float

    def similarity(self, verb: str, term: str) -> float: ...


def select_top_k(p: PriorSet, k: int, verb_sim: SimilarityLookup) -> PriorSet:
    """Two-stage truncation: sort by best-path edge weight, then by similarity
    to the query verb; keep k and renormalize. Lookup misses fall back to the
    provider's floor (providers count their own misses)."""
    if k < 1:
        raise ConfigError(f"top-k must be >= 1, got {k}")
    verb_label = concept_label(p.verb)

    def sort_key(e: PriorEntry) -> tuple[float, float, str]:
        weight = e.edge_weight if e.edge_weight is not None else 0.0
        sim = verb_sim.similarity(verb_label, concept_label(e.object_id))
        return (-weight, -sim, e.object_id)

    survivors = sorted(p.entries, key=sort_key)[:k]
    return PriorSet.from_raw(
        p.verb,
        {e.object_id: e.score for e in survivors},
        p.provenance,
        p.iteration,
        {e.object_id: e.edge_weight for e in survivors if e.edge_weight is not None},
    )


class LLMClient(Protocol):
    def objects_for(self, verb: str, k: int) -> list[str]: ...


class FixtureLLMClient:
    """Replays recorded responses from ``<dir>/<verb-term>.json`` files."""

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)

    def objects_for(self, verb: str, k: int) -> list[str]:
        term = verb.split("/", 1)[-1]
        path = self.fixture_dir / f"{term}.json"
        if not path.exists():
            raise LLMPriorError(f"no recorded fixture for verb {verb!r} at {path}")
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise LLMPriorError(f"fixture for {verb!r} is not valid JSON: {err}",
                                payload=path.read_text(encoding="utf-8"))
        return _validate_objects_payload(payload)


class HttpLLMClient:
    """Live client for any endpoint honoring the object-list contract:
    request {"verb", "k", "prompt_template_id"} -> response {"objects": [...]}."""

    def __init__(self, url: str, prompt_template_id: str = "default", timeout: float = 30.0):
        self.url = url
        self.prompt_template_id = prompt_template_id
        self.timeout = timeout

    def objects_for(self, verb: str, k: int) -> list[str]:
        import requests

        body = {"verb": concept_label(verb), "k": k,
                "prompt_template_id": self.prompt_template_id}
        try:
            resp = requests.post(self.url, json=body, timeout=self.timeout)
        except requests.RequestException as err:
            raise TransportError(f"LLM endpoint unreachable: {err}") from err
        if resp.status_code != 200:
            raise LLMPriorError(f"LLM endpoint returned {resp.status_code}", payload=resp.text)
        try:
            payload = resp.json()
        except ValueError:
            raise LLMPriorError("LLM endpoint returned non-JSON body", payload=resp.text)
        return _validate_objects_payload(payload)


def _validate_objects_payload(payload: object) -> list[str]:
    if not isinstance(payload, dict) or "objects" not in payload:
        raise LLMPriorError("response missing 'objects' field", payload=payload)
    objects = payload["objects"]
    if not isinstance(objects, list) or not all(isinstance(o, str) for o in objects):
        raise LLMPriorError("'objects' must be a list of strings", payload=payload)
    if not objects:
        raise LLMPriorError("empty object list", payload=payload)
    return objects


def llm_prior(verb: str, client: LLMClient, k: int = 10,
              weighting: str = "reciprocal") -> PriorSet:
    """Prior from an LLM-ranked object list.

    Rank r gets weight 1/r (normalized), preserving the model's ordering as a
    graded prior; ``weighting="uniform"`` flattens it.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if weighting not in ("reciprocal", "uniform"):
        raise ConfigError(f"unknown weighting {weighting!r}")
    objects = client.objects_for(verb, k)
    seen: dict[str, None] = {}
    for obj in objects:
        cid, _, _ = normalize_concept(obj)
        if cid not in seen:
            seen[cid] = None
        if len(seen) == k:
            break
    ids = list(seen)
    raw = {
        cid: (1.0 / (rank + 1) if weighting == "reciprocal" else 1.0)
        for rank, cid in enumerate(ids)
    }
    p = PriorSet.from_raw(verb, raw, PROVENANCE_LLM, 0)
    return p


def write_prior_dump(priors: Iterable[PriorSet], path: str | Path) -> None:
    """Audit dump: one ``verb <TAB> object <TAB> score <TAB> provenance`` line per entry."""
    lines = []
    for p in priors:
        for e in p.entries:
            lines.append(f"{p.verb}\t{e.object_id}\t{e.score!r}\t{p.provenance}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


PriorSource = Callable[[str], PriorSet]
