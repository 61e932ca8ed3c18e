from __future__ import annotations

import json
import math

import pytest

from craft.errors import ConfigError, EmptyPriorError, LLMPriorError
from craft.embeddings import FixtureSimilarity
from craft.graph import extract_ego_subgraph
from craft.priors import (FixtureLLMClient, PriorEntry, PriorSet,
                          enumerate_paths, llm_prior, score_prior,
                          select_top_k, write_prior_dump)

from conftest import brute_force_simple_paths, make_graph


def test_single_max_weight_edge_scores_one(chain_graph):
    ego = extract_ego_subgraph(chain_graph, "en/cut", depth=1)
    paths = enumerate_paths(ego, "en/saw")
    assert len(paths) == 1
    assert paths[0].normalized_score == 1.0
    assert paths[0].steps[0].direction == "reverse"  # stored as saw -> cut


def test_two_hop_product_of_normalized_weights(chain_graph):
    ego = extract_ego_subgraph(chain_graph, "en/cut", depth=2)
    paths = enumerate_paths(ego, "en/cleaver")
    # factors 4/4 then 2/4, straight product per the scoring rule
    assert paths[0].normalized_score == pytest.approx(1.0 * 0.5, abs=1e-15)


def test_diamond_has_exactly_two_paths(diamond_ego):
    paths = enumerate_paths(diamond_ego, "en/blade")
    oracle = brute_force_simple_paths(diamond_ego, "en/blade")
    assert len(paths) == len(oracle) == 2
    assert paths[0].normalized_score == max(s for s, _ in oracle)
    # descending score order
    assert paths[0].normalized_score >= paths[1].normalized_score


def test_unreachable_object_yields_empty_list(diamond_ego):
    assert enumerate_paths(diamond_ego, "en/nowhere") == []


def test_path_scores_match_brute_force_on_dense_fixture():
    graph = make_graph(
        [
            ("en/a", "UsedFor", "en/cut", 4.0),
            ("en/b", "RelatedTo", "en/a", 3.0),
            ("en/b", "CapableOf", "en/cut", 1.0),
            ("en/c", "RelatedTo", "en/b", 2.0),
            ("en/c", "AtLocation", "en/a", 2.5),
            ("en/cut", "HasSubevent", "en/c", 0.5),
        ],
        pos={"en/cut": "verb"},
    )
    ego = extract_ego_subgraph(graph, "en/cut", depth=3)
    for target in ("en/a", "en/b", "en/c"):
        got = enumerate_paths(ego, target, max_paths=256)
        oracle = sorted((s for s, _ in brute_force_simple_paths(ego, target)),
                        reverse=True)
        assert [p.normalized_score for p in got] == pytest.approx(oracle, abs=1e-12)


def test_score_prior_single_candidate_is_simplex_point(chain_graph):
    ego = extract_ego_subgraph(chain_graph, "en/cut", depth=1)
    p = score_prior(ego)
    assert p.objects == ("en/saw",)
    assert p.entries[0].score == 1.0
    assert p.iteration == 0
    assert p.provenance == "conceptnet"


def test_score_prior_two_candidates_preserve_ratio():
    # raw best-path scores 0.8 and 0.2 are already a simplex
    graph = make_graph(
        [
            ("en/knife", "UsedFor", "en/cut", 3.2),
            ("en/saw", "UsedFor", "en/cut", 0.8),
            ("en/whetstone", "RelatedTo", "en/knife", 4.0),
        ],
        pos={"en/cut": "verb", "en/knife": "noun", "en/saw": "noun"},
    )
    ego = extract_ego_subgraph(graph, "en/cut", depth=1)
    p = score_prior(ego)
    assert p.score_of("en/knife") == pytest.approx(0.8, abs=1e-12)
    assert p.score_of("en/saw") == pytest.approx(0.2, abs=1e-12)


def test_score_prior_matches_brute_force_oracle(diamond_ego):
    p = score_prior(diamond_ego)
    raw = {}
    for obj in diamond_ego.candidate_ids:
        raw[obj] = max(s for s, _ in brute_force_simple_paths(diamond_ego, obj))
    total = sum(raw.values())
    for obj, score in raw.items():
        assert p.score_of(obj) == pytest.approx(score / total, abs=1e-12)


def test_score_prior_requires_candidates():
    graph = make_graph([("en/cut", "RelatedTo", "en/use", 1.0)],
                       pos={"en/cut": "verb", "en/use": "verb"})
    ego = extract_ego_subgraph(graph, "en/cut", depth=1)
    with pytest.raises(EmptyPriorError):
        score_prior(ego)


def _prior(entries):
    total = sum(s for _, s, _ in entries)
    return PriorSet(
        "en/cut",
        tuple(PriorEntry(o, s / total, w) for o, s, w in entries),
        "conceptnet",
        0,
    )


def test_top_k_exceeding_size_keeps_all_in_order():
    p = _prior([(f"en/o{i}", 10 - i, float(10 - i)) for i in range(10)])
    sim = FixtureSimilarity({})
    out = select_top_k(p, 25, sim)
    assert out.objects == p.objects
    assert out.total() == pytest.approx(1.0, abs=1e-9)


def test_top_k_first_stage_tie_broken_by_similarity():
    p = _prior([("en/knife", 0.5, 4.0), ("en/bee", 0.5, 4.0)])
    sim = FixtureSimilarity({("cut", "knife"): 0.9, ("cut", "bee"): 0.1})
    out = select_top_k(p, 1, sim)
    assert out.objects == ("en/knife",)
    assert out.entries[0].score == 1.0


def test_top_k_thirty_candidate_fixture_matches_hand_sort():
    entries = []
    sims = {}
    for i in range(30):
        weight = float(i % 5)  # forced first-stage ties
        sim = (i * 7 % 30) / 30.0
        entries.append((f"en/c{i:02d}", 1.0 + i, weight))
        sims[("cut", f"c{i:02d}")] = sim
    p = _prior(entries)
    provider = FixtureSimilarity(sims)
    out = select_top_k(p, 25, provider)
    # independent ranking by the two stated keys
    expected = sorted(
        (e.object_id for e in p.entries),
        key=lambda o: (-dict((f"en/c{i:02d}", float(i % 5)) for i in range(30))[o],
                       -sims[("cut", o.split("/")[1])], o),
    )[:25]
    assert set(out.objects) == set(expected)
    # truncation keeps survivors' relative score order
    survivor_scores = [p.score_of(o) for o in out.objects]
    assert survivor_scores == sorted(survivor_scores, reverse=True)
    assert out.total() == pytest.approx(1.0, abs=1e-9)


def test_top_k_miss_uses_floor_and_counts():
    p = _prior([("en/knife", 0.6, 2.0), ("en/zzzz", 0.4, 2.0)])
    sim = FixtureSimilarity({("cut", "knife"): 0.5})
    out = select_top_k(p, 1, sim)
    assert out.objects == ("en/knife",)
    assert sim.misses == ["zzzz"]


def test_top_k_rejects_nonpositive_k():
    p = _prior([("en/knife", 1.0, 1.0)])
    with pytest.raises(ConfigError):
        select_top_k(p, 0, FixtureSimilarity({}))


class ListClient:
    def __init__(self, objects):
        self._objects = objects

    def objects_for(self, verb, k):
        return self._objects


def test_llm_prior_single_object():
    p = llm_prior("en/cut", ListClient(["knife"]), k=1)
    assert p.objects == ("en/knife",)
    assert p.entries[0].score == 1.0
    assert p.provenance == "llm"


def test_llm_prior_rank_reciprocal_weights():
    p = llm_prior("en/cut", ListClient(["knife", "scissors"]), k=2)
    assert p.score_of("en/knife") == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert p.score_of("en/scissors") == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_llm_prior_uniform_weighting():
    p = llm_prior("en/cut", ListClient(["knife", "scissors"]), k=2,
                  weighting="uniform")
    assert p.score_of("en/knife") == pytest.approx(0.5, abs=1e-12)


def test_llm_prior_fixture_replay(tmp_path):
    objects = ["knife", "scissors", "saw", "axe", "razor",
               "blade", "cleaver", "shears", "cutter", "scalpel"]
    (tmp_path / "cut.json").write_text(json.dumps({"objects": objects}))
    p = llm_prior("en/cut", FixtureLLMClient(tmp_path), k=10)
    assert len(p.entries) == 10
    assert p.total() == pytest.approx(1.0, abs=1e-9)
    # ordering preserved: rank weights strictly decreasing
    scores = [p.score_of(f"en/{o}") for o in objects]
    assert scores == sorted(scores, reverse=True)
    harmonic = sum(1 / r for r in range(1, 11))
    assert scores[0] == pytest.approx(1.0 / harmonic, abs=1e-12)


def test_llm_prior_malformed_response_carries_payload(tmp_path):
    (tmp_path / "cut.json").write_text(json.dumps({"items": ["knife"]}))
    with pytest.raises(LLMPriorError) as exc:
        llm_prior("en/cut", FixtureLLMClient(tmp_path), k=5)
    assert exc.value.payload == {"items": ["knife"]}


def test_llm_prior_empty_response_is_error(tmp_path):
    (tmp_path / "cut.json").write_text(json.dumps({"objects": []}))
    with pytest.raises(LLMPriorError):
        llm_prior("en/cut", FixtureLLMClient(tmp_path), k=5)


def test_prior_dump_format(tmp_path):
    p = _prior([("en/knife", 0.75, 1.0), ("en/saw", 0.25, 1.0)])
    out = tmp_path / "dump.tsv"
    write_prior_dump([p], out)
    lines = out.read_text().splitlines()
    assert len(lines) == 2
    verb, obj, score, prov = lines[0].split("\t")
    assert (verb, obj, prov) == ("en/cut", "en/knife", "conceptnet")
    assert float(score) == pytest.approx(0.75)


def test_prior_entries_sorted_desc_ties_lexicographic():
    p = PriorSet.from_raw("en/cut", {"en/b": 1.0, "en/a": 1.0, "en/c": 2.0},
                          "conceptnet")
    assert p.objects == ("en/c", "en/a", "en/b")
