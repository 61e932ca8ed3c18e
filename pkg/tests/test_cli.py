from __future__ import annotations

import json

import pytest

from craft.cli import main
from craft.worlds import build_margin_world, write_world_files

from test_graph import TEN_ROW_FIXTURE


@pytest.fixture
def assertions_file(tmp_path):
    path = tmp_path / "assertions.tsv"
    path.write_text("\n".join(TEN_ROW_FIXTURE) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def world_files(tmp_path):
    world = build_margin_world(noise_seed=3, refs_per_cat=4)
    return write_world_files(world, tmp_path / "world")


def test_unknown_subcommand_exits_one(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err.lower()


def test_no_subcommand_exits_one(capsys):
    assert main([]) == 1


def test_ingest_writes_snapshot(assertions_file, tmp_path):
    out = tmp_path / "graph.cg"
    code = main(["ingest", "--assertions", str(assertions_file),
                 "--lang", "en", "--out", str(out)])
    assert code == 0
    assert out.exists()
    header = out.read_text().splitlines()[0]
    assert "config_hash" in header


def test_ingest_missing_file_exits_two(tmp_path):
    assert main(["ingest", "--assertions", str(tmp_path / "nope.tsv"),
                 "--out", str(tmp_path / "g.cg")]) == 2


def test_ground_prints_result_json(assertions_file, tmp_path, capsys):
    graph = tmp_path / "graph.cg"
    main(["ingest", "--assertions", str(assertions_file), "--out", str(graph)])

    import numpy as np
    from craft.embeddings import write_store
    rng = np.random.default_rng(0)
    entries = {}
    for label in ("knife", "saw", "scissors", "blade", "kitchen", "bread", "slice"):
        entries[f"text:a photo of a {label}"] = rng.normal(size=8)
    entries["image:a.jpg"] = rng.normal(size=8)
    entries["image:b.jpg"] = rng.normal(size=8)
    store = tmp_path / "emb.cemb"
    write_store(store, entries)

    code = main(["ground", "--verb", "cut", "--candidates", "a.jpg,b.jpg",
                 "--provider", f"file:{store}", "--graph", str(graph)])
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert record["verb"] == "en/cut"
    assert record["selected"] in (0, 1)
    assert record["converged"] in (True, False)
    assert record["config_hash"]
    assert len(record["iterations"]) >= 2


def test_eval_runs_and_writes_report(world_files, tmp_path, capsys):
    out_dir = tmp_path / "run"
    code = main(["eval", "--labels", str(world_files["labels"]),
                 "--images", str(world_files["images"]),
                 "--backend", "oracle-object",
                 "--provider", f"file:{world_files['embeddings']}",
                 "--n", "5", "--n-pos", "1", "--episodes", "4",
                 "--seed", "11", "--jobs", "1", "--out", str(out_dir)])
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text())
    assert report["backend"] == "oracle-object"
    assert report["episode_count"] == 4
    lines = (out_dir / "episodes.jsonl").read_text().splitlines()
    assert len(lines) == 5  # meta record + one row per episode
    assert "config_hash" in lines[0]


def test_eval_requires_provider(world_files, monkeypatch):
    monkeypatch.delenv("CRAFT_SIDECAR_URL", raising=False)
    assert main(["eval", "--labels", str(world_files["labels"]),
                 "--images", str(world_files["images"]),
                 "--backend", "oracle-object", "--episodes", "2"]) == 1


def test_eval_reports_are_byte_identical_across_runs(world_files, tmp_path):
    args = ["eval", "--labels", str(world_files["labels"]),
            "--images", str(world_files["images"]),
            "--backend", "random", "--n", "5", "--episodes", "6",
            "--seed", "3", "--jobs", "2"]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert (out_a / "report.json").read_bytes() == (out_b / "report.json").read_bytes()
    assert (out_a / "episodes.jsonl").read_bytes() == (out_b / "episodes.jsonl").read_bytes()


def test_sweep_emits_csv(world_files, tmp_path, capsys):
    out_dir = tmp_path / "sweep"
    code = main(["sweep", "--labels", str(world_files["labels"]),
                 "--images", str(world_files["images"]),
                 "--backend", "random", "--n", "5,10",
                 "--episodes", "3", "--seed", "2", "--jobs", "1",
                 "--out", str(out_dir)])
    assert code == 0
    csv_text = (out_dir / "sweep.csv").read_text()
    assert csv_text.splitlines()[0] == "n,metric,mean,stderr"
    assert (out_dir / "report_n5.json").exists()
    assert (out_dir / "report_n10.json").exists()


def test_export_traces_and_dot_deterministic(assertions_file, tmp_path):
    graph = tmp_path / "graph.cg"
    main(["ingest", "--assertions", str(assertions_file), "--out", str(graph)])
    outs = []
    for tag in ("one", "two"):
        tr = tmp_path / f"traces_{tag}.json"
        dot = tmp_path / f"ego_{tag}.dot"
        code = main(["export-traces", "--graph", str(graph), "--verb", "cut",
                     "--out", str(tr), "--dot", str(dot)])
        assert code == 0
        outs.append((tr.read_bytes(), dot.read_bytes()))
    assert outs[0] == outs[1]
    doc = json.loads(outs[0][0])
    assert doc["traces"]
    assert doc["config_hash"]


def test_config_file_supplies_defaults(world_files, tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[common]\nseed = 5\n\n[eval]\nn = 5\nn_pos = 1\nepisodes = 2\njobs = 1\n",
        encoding="utf-8")
    code = main(["--config", str(cfg), "eval",
                 "--labels", str(world_files["labels"]),
                 "--images", str(world_files["images"]),
                 "--backend", "random"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["base_seed"] == 5
    assert report["episodes_per_verb"] == 2


def test_flags_override_config_file(world_files, tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[eval]\nepisodes = 2\n", encoding="utf-8")
    code = main(["--config", str(cfg), "eval",
                 "--labels", str(world_files["labels"]),
                 "--images", str(world_files["images"]),
                 "--backend", "random", "--episodes", "3", "--jobs", "1"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["episodes_per_verb"] == 3


def test_env_var_provides_sidecar_default(world_files, monkeypatch):
    # a bogus URL must be attempted (and fail with a transport error -> 3)
    monkeypatch.setenv("CRAFT_SIDECAR_URL", "http://127.0.0.1:1")
    code = main(["eval", "--labels", str(world_files["labels"]),
                 "--images", str(world_files["images"]),
                 "--backend", "oracle-object", "--episodes", "1", "--jobs", "1"])
    assert code == 3


def test_selftest_exits_zero_quickly(capsys):
    import time
    started = time.monotonic()
    code = main(["selftest"])
    elapsed = time.monotonic() - started
    out = capsys.readouterr().out
    assert code == 0
    assert elapsed < 60.0
    assert "PASS selftest:formula-fidelity" in out


def test_ingest_custom_relations(assertions_file, tmp_path):
    out = tmp_path / "graph.cg"
    code = main(["ingest", "--assertions", str(assertions_file),
                 "--relations", "UsedFor", "--out", str(out)])
    assert code == 0
    from craft.graph import load_graph
    graph = load_graph(out)
    assert {e.rel for e in graph.edges} == {"UsedFor"}


def test_ground_with_top_k_and_wordvec(assertions_file, tmp_path, capsys):
    graph = tmp_path / "graph.cg"
    main(["ingest", "--assertions", str(assertions_file), "--out", str(graph)])

    import numpy as np
    from craft.embeddings import write_store
    rng = np.random.default_rng(1)
    entries = {f"text:a photo of a {label}": rng.normal(size=8)
               for label in ("knife", "saw", "scissors", "blade",
                             "kitchen", "bread", "slice")}
    entries["image:x.jpg"] = rng.normal(size=8)
    store = tmp_path / "emb.cemb"
    write_store(store, entries)
    wordvec = tmp_path / "vec.txt"
    wordvec.write_text(
        "cut 1.0 0.0\nknife 0.9 0.1\nsaw 0.7 0.3\nscissors 0.6 0.4\n"
        "blade 0.5 0.5\nkitchen 0.1 0.9\nbread 0.2 0.8\nslice 0.3 0.7\n")

    code = main(["ground", "--verb", "cut", "--candidates", "x.jpg",
                 "--provider", f"file:{store}", "--graph", str(graph),
                 "--top-k", "3", "--wordvec", str(wordvec)])
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert len(record["iterations"][0]["objects"]) == 3
