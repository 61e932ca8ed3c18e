from __future__ import annotations

import pytest

from craft.graph import (AffordanceEdge, AffordanceGraph, ConceptNode,
                         extract_ego_subgraph)


def make_graph(edges, pos=None, config_hash="test"):
    """Graph from (src, rel, dst, weight) tuples; pos overrides by node id."""
    pos = pos or {}
    nodes = {}
    for src, rel, dst, w in edges:
        for nid in (src, dst):
            if nid not in nodes:
                label = nid.split("/", 1)[-1].replace("_", " ")
                nodes[nid] = ConceptNode(nid, label, pos.get(nid, "unknown"))
    return AffordanceGraph(
        nodes.values(),
        [AffordanceEdge(s, r, d, w) for s, r, d, w in edges],
        config_hash=config_hash,
    )


@pytest.fixture
def chain_graph():
    # saw -UsedFor-> cut stored ConceptNet-style; cleaver hangs off saw
    return make_graph(
        [
            ("en/saw", "UsedFor", "en/cut", 4.0),
            ("en/saw", "RelatedTo", "en/cleaver", 2.0),
        ],
        pos={"en/cut": "verb", "en/saw": "noun", "en/cleaver": "noun"},
    )


@pytest.fixture
def diamond_graph():
    # two routes cut -> blade: via knife (strong) and via tool (weak)
    return make_graph(
        [
            ("en/knife", "UsedFor", "en/cut", 4.0),
            ("en/knife", "RelatedTo", "en/blade", 4.0),
            ("en/tool", "UsedFor", "en/cut", 4.0),
            ("en/tool", "RelatedTo", "en/blade", 1.0),
        ],
        pos={"en/cut": "verb", "en/knife": "noun", "en/tool": "noun", "en/blade": "noun"},
    )


@pytest.fixture
def diamond_ego(diamond_graph):
    return extract_ego_subgraph(diamond_graph, "en/cut", depth=2)


def brute_force_simple_paths(ego, target):
    """Independent oracle: every simple walk root -> target with its
    max-normalized weight product, via plain recursion over the edge list."""
    max_w = max(e.weight for e in ego.edges)
    found = []

    def clamp(w):
        return min(1.0, max(w / max_w, 1e-9))

    def walk(node, visited, score, steps):
        if node == target and steps:
            found.append((score, tuple(steps)))
            return
        for e in ego.edges:
            if e.src == node and e.dst not in visited:
                walk(e.dst, visited | {e.dst}, score * clamp(e.weight),
                     steps + [(e.dst, e.rel, "forward", e.weight)])
            if e.dst == node and e.src not in visited:
                walk(e.src, visited | {e.src}, score * clamp(e.weight),
                     steps + [(e.src, e.rel, "reverse", e.weight)])

    walk(ego.root, {ego.root}, 1.0, [])
    return found
