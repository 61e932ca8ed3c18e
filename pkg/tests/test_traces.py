from __future__ import annotations

import pytest

from craft.errors import TraceError
from craft.graph import extract_ego_subgraph
from craft.priors import score_prior, select_top_k
from craft.embeddings import FixtureSimilarity
from craft.traces import (EgoGraphRender, export_ego_dot, export_traces_json,
                          extract_trace, read_traces_json, render_ego)

from conftest import make_graph


def test_single_edge_trace(chain_graph):
    ego = extract_ego_subgraph(chain_graph, "en/cut", depth=1)
    trace = extract_trace(ego, "en/saw")
    assert trace.verb == "en/cut"
    assert trace.object == "en/saw"
    assert len(trace.path.steps) == 1
    assert trace.score == 1.0
    assert trace.verdict_hint == "unknown"


def test_diamond_trace_picks_stronger_route(diamond_ego):
    trace = extract_trace(diamond_ego, "en/blade")
    # knife route: (4/4)*(4/4) = 1.0; tool route: (4/4)*(1/4) = 0.25
    assert trace.score == 1.0
    assert [s.node for s in trace.path.steps] == ["en/knife", "en/blade"]


def test_equal_score_tie_prefers_shorter_path():
    graph = make_graph(
        [
            ("en/knife", "UsedFor", "en/cut", 4.0),      # 1 hop to knife
            ("en/use", "RelatedTo", "en/cut", 4.0),
            ("en/knife", "RelatedTo", "en/use", 4.0),    # 2 hops, same score 1.0
        ],
        pos={"en/cut": "verb", "en/knife": "noun", "en/use": "verb"},
    )
    ego = extract_ego_subgraph(graph, "en/cut", depth=2)
    trace = extract_trace(ego, "en/knife")
    assert trace.score == 1.0
    assert len(trace.path.steps) == 1


def test_unscored_object_is_trace_error(diamond_ego):
    with pytest.raises(TraceError):
        extract_trace(diamond_ego, "en/ghost")


def test_trace_score_matches_prior_raw_evidence(diamond_ego):
    # the exported score must be the same evidence score_prior normalized
    prior = score_prior(diamond_ego)
    raws = {o: extract_trace(diamond_ego, o).score for o in diamond_ego.candidate_ids}
    total = sum(raws.values())
    for obj, raw in raws.items():
        assert prior.score_of(obj) == pytest.approx(raw / total, abs=1e-12)


def test_render_roles_and_candidate_set(diamond_ego):
    prior = score_prior(diamond_ego)
    survivors = select_top_k(prior, 2, FixtureSimilarity({}))
    render = render_ego(diamond_ego, survivors)
    roles = dict(render.nodes)
    assert roles["en/cut"] == "root-verb"
    assert sum(1 for r in roles.values() if r == "root-verb") == 1
    assert {n for n, r in render.nodes if r == "candidate"} == set(survivors.objects)


def test_dot_export_chain_structure(chain_graph):
    ego = extract_ego_subgraph(chain_graph, "en/cut", depth=2)
    dot = export_ego_dot(render_ego(ego))
    node_lines = [l for l in dot.splitlines() if "class=" in l]
    edge_lines = [l for l in dot.splitlines() if "->" in l]
    assert len(node_lines) == 3
    assert len(edge_lines) == 2
    assert any('class="root-verb"' in l and "en/cut" in l for l in node_lines)
    assert all("label=" in l for l in edge_lines)
    assert dot.startswith("digraph")


def test_dot_export_byte_deterministic(diamond_ego):
    render = render_ego(diamond_ego)
    assert export_ego_dot(render) == export_ego_dot(render)
    render2 = render_ego(diamond_ego)
    assert export_ego_dot(render) == export_ego_dot(render2)


def test_dot_styles_candidates_distinctly(diamond_ego):
    dot = export_ego_dot(render_ego(diamond_ego, score_prior(diamond_ego)))
    candidate_lines = [l for l in dot.splitlines() if 'class="candidate"' in l]
    assert len(candidate_lines) == len(diamond_ego.candidate_ids)
    assert all("lightcoral" in l for l in candidate_lines)
    root_line = next(l for l in dot.splitlines() if 'class="root-verb"' in l)
    assert "gold" in root_line


def test_traces_json_empty_document():
    text = export_traces_json([])
    assert read_traces_json(text) == []


def test_traces_json_round_trip_single(diamond_ego):
    traces = [extract_trace(diamond_ego, "en/blade", verdict_hint="relevant")]
    text = export_traces_json(traces, config_hash="h", tool_version="v")
    assert read_traces_json(text) == traces


def test_traces_json_round_trip_hundred(chain_graph):
    ego = extract_ego_subgraph(chain_graph, "en/cut", depth=2)
    one = extract_trace(ego, "en/cleaver")
    traces = [one] * 100
    recovered = read_traces_json(export_traces_json(traces))
    assert len(recovered) == 100
    assert recovered == traces


def test_traces_json_deterministic_bytes(diamond_ego):
    traces = [extract_trace(diamond_ego, o) for o in diamond_ego.candidate_ids]
    assert export_traces_json(traces) == export_traces_json(list(traces))
