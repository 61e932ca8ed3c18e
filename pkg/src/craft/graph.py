"""Affordance graph: assertion ingestion and verb-rooted ego-subgraph extraction.

Concept ids are canonical keys of the form ``<lang>/<term>`` (lowercase,
underscore-joined words). Graphs are immutable once built and safe to share
across threads; ingestion is the single writer.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import DataError, EmptyGraphError, FormatError, MissingVerbError

# Part-of-speech codes used in concept URIs.
_POS_CODES = {"n": "noun", "v": "verb", "a": "adjective", "s": "adjective", "r": "adverb"}

# Relations considered affordance-relevant out of the box. Antonym is
# deliberately opt-in: contrastive links tend to surface visually plausible
# but functionally wrong candidates.
DEFAULT_RELATIONS = frozenset(
    {"UsedFor", "CapableOf", "RelatedTo", "HasSubevent", "AtLocation", "ReceivesAction"}
)

DEFAULT_DEPTH = 2

_WS = re.compile(r"\s+")


def normalize_relation(raw: str) -> str:
    raw = raw.strip()
    if raw.startswith("/r/"):
        raw = raw[3:]
    return raw


def normalize_concept(raw: str, default_lang: str = "en") -> tuple[str, str, str]:
    """Normalize a concept URI or bare label to ``(id, label, pos)``.

    Accepts ``/c/en/knife/n`` style URIs, already-normalized ``en/knife`` ids
    and bare labels like ``Knife Block``. Idempotent: feeding the returned id
    back in yields the same id.
    """
    text = raw.strip().lower()
    if not text:
        raise DataError("empty concept")
    if text.startswith("/c/"):
        text = text[3:]
    lang = default_lang
    pos = "unknown"
    if "/" in text:
        parts = [p for p in text.split("/") if p]
        if parts and 2 <= len(parts[0]) <= 3 and parts[0].isalpha():
            lang = parts[0]
            parts = parts[1:]
        if not parts:
            raise DataError(f"no term in concept {raw!r}")
        term = parts[0]
        if len(parts) > 1 and parts[1] in _POS_CODES:
            pos = _POS_CODES[parts[1]]
    else:
        term = text
    term = _WS.sub("_", term.strip()).strip("_")
    if not term:
        raise DataError(f"no term in concept {raw!r}")
    label = term.replace("_", " ")
    return f"{lang}/{term}", label, pos


def concept_label(concept_id: str) -> str:
    """Plain-word display form of a concept id (``en/knife_block`` -> ``knife block``)."""
    term = concept_id.split("/", 1)[1] if "/" in concept_id else concept_id
    return term.replace("_", " ")


def concept_lang(concept_id: str) -> str:
    return concept_id.split("/", 1)[0] if "/" in concept_id else ""


@dataclass(frozen=True)
class ConceptNode:
    id: str
    label: str
    pos: str  # noun | verb | adjective | adverb | unknown


@dataclass(frozen=True)
class AffordanceEdge:
    src: str
    rel: str
    dst: str
    weight: float


@dataclass(frozen=True)
class IngestConfig:
    lang: str = "en"
    relations: frozenset[str] = DEFAULT_RELATIONS

    def hash(self) -> str:
        blob = json.dumps({"lang": self.lang, "relations": sorted(self.relations)}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class IngestReport:
    lines_total: int = 0
    comments: int = 0
    kept: int = 0
    skipped_language: int = 0
    skipped_relation: int = 0
    duplicates_collapsed: int = 0
    malformed: list[tuple[int, str]] = field(default_factory=list)


class AffordanceGraph:
    """Relation graph with adjacency indexed in both directions.

    Immutable after construction; node and edge iteration order is sorted by
    id so two builds from the same input serialize identically.
    """

    def __init__(self, nodes: Iterable[ConceptNode], edges: Iterable[AffordanceEdge],
                 config_hash: str = ""):
        self.nodes: dict[str, ConceptNode] = {n.id: n for n in sorted(nodes, key=lambda n: n.id)}
        self.edges: tuple[AffordanceEdge, ...] = tuple(
            sorted(edges, key=lambda e: (e.src, e.rel, e.dst))
        )
        self.config_hash = config_hash
        self._out: dict[str, list[AffordanceEdge]] = {}
        self._in: dict[str, list[AffordanceEdge]] = {}
        for e in self.edges:
            if e.src not in self.nodes or e.dst not in self.nodes:
                raise DataError(f"edge endpoint missing from node set: {e}")
            self._out.setdefault(e.src, []).append(e)
            self._in.setdefault(e.dst, []).append(e)

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self.nodes

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def edges_from(self, concept_id: str) -> list[AffordanceEdge]:
        return self._out.get(concept_id, [])

    def edges_to(self, concept_id: str) -> list[AffordanceEdge]:
        return self._in.get(concept_id, [])

    def incident(self, concept_id: str) -> Iterator[tuple[AffordanceEdge, str]]:
        """Edges touching a node, tagged ``forward`` (node is src) or ``reverse``."""
        for e in self._out.get(concept_id, []):
            yield e, "forward"
        for e in self._in.get(concept_id, []):
            yield e, "reverse"


@dataclass(frozen=True)
class ObjectHeuristic:
    """Rules deciding which ego-subgraph nodes count as object candidates."""

    non_object_suffixes: tuple[str, ...] = ("ing",)
    max_tokens: int = 3
    include_unknown_pos: bool = True

    def is_object_like(self, node: ConceptNode) -> bool:
        term = node.id.split("/", 1)[-1]
        if term.count("_") + 1 > self.max_tokens:
            return False
        if node.pos == "noun":
            return True
        if node.pos == "unknown" and self.include_unknown_pos:
            return not any(term.endswith(suf) for suf in self.non_object_suffixes)
        return False


class EgoSubgraph:
    """Bounded-depth neighborhood of a verb, induced on whitelisted relations."""

    def __init__(self, root: str, depth: int, nodes: Iterable[ConceptNode],
                 edges: Iterable[AffordanceEdge], candidate_ids: Iterable[str]):
        self.root = root
        self.depth = depth
        self.nodes: dict[str, ConceptNode] = {n.id: n for n in sorted(nodes, key=lambda n: n.id)}
        self.edges: tuple[AffordanceEdge, ...] = tuple(
            sorted(edges, key=lambda e: (e.src, e.rel, e.dst))
        )
        self.candidate_ids: tuple[str, ...] = tuple(sorted(candidate_ids))
        self._out: dict[str, list[AffordanceEdge]] = {}
        self._in: dict[str, list[AffordanceEdge]] = {}
        for e in self.edges:
            self._out.setdefault(e.src, []).append(e)
            self._in.setdefault(e.dst, []).append(e)

    @property
    def max_edge_weight(self) -> float:
        return max((e.weight for e in self.edges), default=0.0)

    def incident(self, concept_id: str) -> Iterator[tuple[AffordanceEdge, str]]:
        for e in self._out.get(concept_id, []):
            yield e, "forward"
        for e in self._in.get(concept_id, []):
            yield e, "reverse"


def ingest_assertions(rows: Iterable[str], cfg: IngestConfig | None = None
                      ) -> tuple[AffordanceGraph, IngestReport]:
    """Build a graph from tab-separated assertion lines.

    Line format: ``relation_uri <TAB> start_uri <TAB> end_uri <TAB> weight``;
    ``#``-prefixed lines are comments. Malformed lines are skipped and logged
    in the report, never fatal. Duplicate (src, rel, dst) triples keep the
    maximum weight. Raises EmptyGraphError when nothing survives the filters.
    """
    cfg = cfg or IngestConfig()
    report = IngestReport()
    nodes: dict[str, ConceptNode] = {}
    weights: dict[tuple[str, str, str], float] = {}

    def note_node(cid: str, label: str, pos: str) -> None:
        prev = nodes.get(cid)
        if prev is None:
            nodes[cid] = ConceptNode(cid, label, pos)
        elif prev.pos == "unknown" and pos != "unknown":
            nodes[cid] = ConceptNode(cid, prev.label, pos)

    for lineno, line in enumerate(rows, start=1):
        report.lines_total += 1
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            report.comments += 1
            continue
        cols = stripped.split("\t")
        if len(cols) != 4:
            report.malformed.append((lineno, f"expected 4 columns, got {len(cols)}"))
            continue
        rel_raw, start_raw, end_raw, weight_raw = cols
        try:
            weight = float(weight_raw)
        except ValueError:
            report.malformed.append((lineno, f"bad weight {weight_raw!r}"))
            continue
        if weight < 0:
            report.malformed.append((lineno, f"negative weight {weight_raw!r}"))
            continue
        rel = normalize_relation(rel_raw)
        try:
            src_id, src_label, src_pos = normalize_concept(start_raw, cfg.lang)
            dst_id, dst_label, dst_pos = normalize_concept(end_raw, cfg.lang)
        except DataError as err:
            report.malformed.append((lineno, str(err)))
            continue
        if concept_lang(src_id) != cfg.lang or concept_lang(dst_id) != cfg.lang:
            report.skipped_language += 1
            continue
        if rel not in cfg.relations:
            report.skipped_relation += 1
            continue
        key = (src_id, rel, dst_id)
        if key in weights:
            report.duplicates_collapsed += 1
            weights[key] = max(weights[key], weight)
        else:
            weights[key] = weight
            report.kept += 1
        note_node(src_id, src_label, src_pos)
        note_node(dst_id, dst_label, dst_pos)

    if not weights:
        raise EmptyGraphError("no assertions survived the language/relation filters")
    edges = [AffordanceEdge(s, r, d, w) for (s, r, d), w in weights.items()]
    return AffordanceGraph(nodes.values(), edges, config_hash=cfg.hash()), report


def extract_ego_subgraph(g: AffordanceGraph, verb: str, depth: int = DEFAULT_DEPTH,
                         whitelist: frozenset[str] | set[str] | None = None,
                         heuristic: ObjectHeuristic | None = None) -> EgoSubgraph:
    """Breadth-first closure of `verb` over whitelisted relations, both edge
    directions, up to `depth` hops. Subgraph edges are the induced whitelisted
    edges among reached nodes, so closure holds by construction."""
    if depth < 1:
        raise DataError(f"depth must be >= 1, got {depth}")
    whitelist = frozenset(whitelist) if whitelist is not None else DEFAULT_RELATIONS
    if verb not in g:
        prefix = verb.split("/", 1)[-1]
        suggestions = sorted(
            cid for cid in g.nodes
            if cid.startswith(verb) or cid.split("/", 1)[-1].startswith(prefix)
        )[:5]
        raise MissingVerbError(verb, suggestions)

    dist = {verb: 0}
    queue = deque([verb])
    while queue:
        u = queue.popleft()
        if dist[u] >= depth:
            continue
        for edge, direction in g.incident(u):
            if edge.rel not in whitelist:
                continue
            v = edge.dst if direction == "forward" else edge.src
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)

    node_ids = set(dist)
    sub_nodes = [g.nodes[i] for i in sorted(node_ids)]
    sub_edges = [
        e for e in g.edges
        if e.rel in whitelist and e.src in node_ids and e.dst in node_ids
    ]
    ego = EgoSubgraph(verb, depth, sub_nodes, sub_edges, candidate_ids=())
    ego.candidate_ids = tuple(filter_object_candidates(ego, heuristic))
    return ego


def filter_object_candidates(ego: EgoSubgraph, rules: ObjectHeuristic | None = None) -> list[str]:
    """Object-like nodes of an ego-subgraph, excluding the root, sorted by id."""
    rules = rules or ObjectHeuristic()
    return sorted(
        n.id for n in ego.nodes.values()
        if n.id != ego.root and rules.is_object_like(n)
    )


_SNAPSHOT_MAGIC = "#craft-graph v1 "


def save_graph(g: AffordanceGraph, path) -> None:
    """Write the line-delimited snapshot format (lossless, byte-deterministic)."""
    header = {"config_hash": g.config_hash, "nodes": g.node_count, "edges": g.edge_count}
    lines = [_SNAPSHOT_MAGIC + json.dumps(header, sort_keys=True)]
    for n in g.nodes.values():
        lines.append(f"N\t{n.id}\t{n.label}\t{n.pos}")
    for e in g.edges:
        lines.append(f"E\t{e.src}\t{e.rel}\t{e.dst}\t{e.weight!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_graph(path) -> AffordanceGraph:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(_SNAPSHOT_MAGIC):
        raise FormatError(f"{path}: not a craft graph snapshot")
    try:
        header = json.loads(lines[0][len(_SNAPSHOT_MAGIC):])
    except json.JSONDecodeError as err:
        raise FormatError(f"{path}: bad snapshot header: {err}") from err
    nodes: list[ConceptNode] = []
    edges: list[AffordanceEdge] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        cols = line.split("\t")
        if cols[0] == "N" and len(cols) == 4:
            nodes.append(ConceptNode(cols[1], cols[2], cols[3]))
        elif cols[0] == "E" and len(cols) == 5:
            edges.append(AffordanceEdge(cols[1], cols[2], cols[3], float(cols[4])))
        else:
            raise FormatError(f"{path}:{lineno}: unrecognized snapshot line")
    if len(nodes) != header.get("nodes") or len(edges) != header.get("edges"):
        raise FormatError(f"{path}: header counts do not match body")
    return AffordanceGraph(nodes, edges, config_hash=header.get("config_hash", ""))
