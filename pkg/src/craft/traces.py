"""Interpretability exports: best-path reasoning traces and role-tagged
ego-graph renders in DOT form. All outputs are byte-deterministic."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import FormatError, TraceError
from .graph import EgoSubgraph
from .priors import PathStep, PriorSet, ReasoningPath, enumerate_paths

TRACE_SCHEMA_VERSION = 1

ROLE_ROOT = "root-verb"
ROLE_CANDIDATE = "candidate"
ROLE_INTERMEDIATE = "intermediate"

# Style classes keep roles symbolic; the palette mirrors the usual rendering
# (root yellow, candidates red, intermediates blue).
ROLE_STYLES = {
    ROLE_ROOT: {"fillcolor": "gold", "shape": "doublecircle"},
    ROLE_CANDIDATE: {"fillcolor": "lightcoral", "shape": "ellipse"},
    ROLE_INTERMEDIATE: {"fillcolor": "lightblue", "shape": "ellipse"},
}


@dataclass(frozen=True)
class ReasoningTrace:
    verb: str
    object: str
    path: ReasoningPath
    score: float
    verdict_hint: str = "unknown"  # relevant | irrelevant | unknown


def extract_trace(ego: EgoSubgraph, object_id: str,
                  verdict_hint: str = "unknown") -> ReasoningTrace:
    """Best-scoring path for a scored candidate (ties: shortest, then
    lexicographic node sequence)."""
    if object_id not in ego.candidate_ids:
        raise TraceError(f"{object_id!r} is not a scored candidate of {ego.root!r}")
    paths = enumerate_paths(ego, object_id)
    if not paths:
        raise TraceError(f"{object_id!r} unreachable from {ego.root!r}")
    best = paths[0]
    return ReasoningTrace(ego.root, object_id, best, best.normalized_score, verdict_hint)


@dataclass(frozen=True)
class EgoGraphRender:
    root: str
    nodes: tuple[tuple[str, str], ...]  # (node id, role), sorted by id
    edges: tuple[tuple[str, str, str], ...]  # (src, rel, dst), sorted


def render_ego(ego: EgoSubgraph, prior: PriorSet | None = None) -> EgoGraphRender:
    """Tag roles: the root verb, prior survivors as candidates (all scored
    candidates when no prior is given), everything else intermediate."""
    survivors = set(prior.objects) if prior is not None else set(ego.candidate_ids)
    nodes = []
    for nid in sorted(ego.nodes):
        if nid == ego.root:
            role = ROLE_ROOT
        elif nid in survivors:
            role = ROLE_CANDIDATE
        else:
            role = ROLE_INTERMEDIATE
        nodes.append((nid, role))
    edges = tuple((e.src, e.rel, e.dst) for e in ego.edges)
    return EgoGraphRender(ego.root, tuple(nodes), edges)


def export_ego_dot(render: EgoGraphRender, header_comment: str = "") -> str:
    """DOT text with stable node ordering and role style classes."""
    lines = []
    if header_comment:
        lines.append(f"// {header_comment}")
    lines.append("digraph ego {")
    lines.append('  node [style="filled"];')
    for nid, role in render.nodes:
        style = ROLE_STYLES[role]
        attrs = ", ".join(
            [f'class="{role}"']
            + [f'{k}="{v}"' for k, v in sorted(style.items())]
        )
        lines.append(f'  "{nid}" [{attrs}];')
    for src, rel, dst in render.edges:
        lines.append(f'  "{src}" -> "{dst}" [label="{rel}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_traces_json(traces: list[ReasoningTrace], config_hash: str = "",
                       tool_version: str = "") -> str:
    """Schema-versioned, lossless serialization (sorted keys, '\\n' newline)."""
    doc = {
        "schema_version": TRACE_SCHEMA_VERSION,
        "tool_version": tool_version,
        "config_hash": config_hash,
        "traces": [
            {
                "verb": t.verb,
                "object": t.object,
                "score": t.score,
                "verdict_hint": t.verdict_hint,
                "path": {
                    "root": t.path.root,
                    "normalized_score": t.path.normalized_score,
                    "steps": [
                        {"node": s.node, "rel": s.rel, "direction": s.direction,
                         "weight": s.weight}
                        for s in t.path.steps
                    ],
                },
            }
            for t in traces
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def read_traces_json(text: str) -> list[ReasoningTrace]:
    doc = json.loads(text)
    if doc.get("schema_version") != TRACE_SCHEMA_VERSION:
        raise FormatError(f"unsupported trace schema {doc.get('schema_version')!r}")
    traces = []
    for item in doc["traces"]:
        steps = tuple(
            PathStep(s["node"], s["rel"], s["direction"], s["weight"])
            for s in item["path"]["steps"]
        )
        path = ReasoningPath(item["path"]["root"], steps, item["path"]["normalized_score"])
        traces.append(ReasoningTrace(item["verb"], item["object"], path,
                                     item["score"], item["verdict_hint"]))
    return traces
