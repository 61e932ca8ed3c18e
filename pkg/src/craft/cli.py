"""Single entry point wiring ingestion, grounding, evaluation, sweeps and
trace export. Exit codes: 0 ok, 1 usage/config, 2 data, 3 backend/transport."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .backends import GraphPriorSource, LLMPriorSource, make_backend
from .config import RunConfig, load_config_file, resolve
from .embeddings import (FileProvider, HttpProvider, NullSimilarity,
                         WordVecSimilarity, load_store)
from .engine import LoopConfig, ground_iterative
from .errors import ConfigError, CraftError
from .evaluation import (EvalConfig, distractor_sweep, load_affordance_labels,
                         load_image_index, run_benchmark)
from .graph import (IngestConfig, extract_ego_subgraph, ingest_assertions,
                    load_graph, normalize_concept, save_graph)
from .priors import write_prior_dump
from .traces import export_ego_dot, export_traces_json, extract_trace, render_ego

log = logging.getLogger("craft")


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the CLI contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="craft", description=__doc__)
    parser.add_argument("--version", action="version", version=f"craft {__version__}")
    parser.add_argument("--config", help="declarative config file (INI sections per subcommand)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("ingest", help="build a graph snapshot from assertion lines")
    p.add_argument("--assertions", required=True)
    p.add_argument("--lang", default=None)
    p.add_argument("--relations", default=None, help="comma-separated relation vocabulary")
    p.add_argument("--out", required=True)

    p = sub.add_parser("ground", help="ground a verb against candidate images")
    p.add_argument("--verb", required=True)
    p.add_argument("--candidates", required=True, help="comma-separated image refs")
    p.add_argument("--provider", default=None, help="file:<path.cemb> or sidecar URL")
    p.add_argument("--graph", default=None)
    p.add_argument("--prior-source", default=None,
                   choices=["conceptnet", "llm-fixture", "llm-live"])
    p.add_argument("--llm-fixtures", default=None)
    p.add_argument("--llm-url", default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--wordvec", default=None)
    p.add_argument("--template", default=None)
    p.add_argument("--out", default=None, help="artifact directory (result, prior dump)")

    p = sub.add_parser("eval", help="run a benchmark over seeded episodes")
    _add_eval_args(p)
    p.add_argument("--n", type=int, default=None)

    p = sub.add_parser("sweep", help="distractor sweep over candidate-set sizes")
    _add_eval_args(p)
    p.add_argument("--n", default=None, help="comma-separated sizes, e.g. 5,10,15,20")

    p = sub.add_parser("export-traces", help="export reasoning traces and an ego DOT graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--verb", required=True)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--out", required=True, help="traces JSON path")
    p.add_argument("--dot", default=None, help="ego graph DOT path")

    sub.add_parser("selftest", help="run built-in oracle fixtures (exit 0 = healthy)")
    return parser


def _add_eval_args(p) -> None:
    p.add_argument("--labels", required=True)
    p.add_argument("--images", default=None,
                   help="JSON manifest mapping category -> image refs")
    p.add_argument("--backend", required=True)
    p.add_argument("--n-pos", type=int, default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--provider", default=None)
    p.add_argument("--graph", default=None)
    p.add_argument("--prior-source", default=None,
                   choices=["conceptnet", "llm-fixture", "llm-live"])
    p.add_argument("--llm-fixtures", default=None)
    p.add_argument("--llm-url", default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--wordvec", default=None)
    p.add_argument("--template", default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--out", default=None, help="report directory")


def _section(args, name: str) -> dict[str, str]:
    if not getattr(args, "config", None):
        return {}
    sections = load_config_file(args.config)
    merged = dict(sections.get("common", {}))
    merged.update(sections.get(name, {}))
    return merged


def _make_provider(spec: str | None, template_id: str):
    spec = spec or os.environ.get("CRAFT_SIDECAR_URL")
    if not spec:
        raise ConfigError("no embedding provider: pass --provider or set CRAFT_SIDECAR_URL")
    if spec.startswith("file:"):
        return FileProvider(load_store(spec[len("file:"):]), template_id)
    if spec.startswith(("http://", "https://")):
        return HttpProvider(spec, template_id)
    raise ConfigError(f"provider spec {spec!r} must be file:<path> or an http(s) URL")


def _make_run_config(args, cfg_file: dict[str, str]) -> RunConfig:
    return RunConfig(
        graph=resolve(getattr(args, "graph", None), cfg_file, "graph"),
        provider=resolve(getattr(args, "provider", None), cfg_file, "provider"),
        prior_source=resolve(getattr(args, "prior_source", None), cfg_file,
                             "prior_source", "conceptnet"),
        llm_fixtures=resolve(getattr(args, "llm_fixtures", None), cfg_file, "llm_fixtures"),
        llm_url=resolve(getattr(args, "llm_url", None), cfg_file, "llm_url"),
        lam=resolve(getattr(args, "lam", None), cfg_file, "lambda", 1.0, float),
        depth=resolve(getattr(args, "depth", None), cfg_file, "depth", 2, int),
        top_k=resolve(getattr(args, "top_k", None), cfg_file, "top_k", None, int),
        template_id=resolve(getattr(args, "template", None), cfg_file, "template", "photo_of"),
        wordvec=resolve(getattr(args, "wordvec", None), cfg_file, "wordvec"),
        seed=resolve(getattr(args, "seed", None), cfg_file, "seed", 0, int),
        out_dir=resolve(getattr(args, "out", None), cfg_file, "out"),
    )


def _make_prior_source(cfg: RunConfig):
    if cfg.prior_source == "conceptnet":
        if not cfg.graph:
            raise ConfigError("conceptnet prior source needs --graph")
        graph = load_graph(cfg.graph)
        verb_sim = None
        if cfg.top_k is not None:
            verb_sim = WordVecSimilarity(cfg.wordvec) if cfg.wordvec else NullSimilarity()
        return GraphPriorSource(graph, depth=cfg.depth, top_k=cfg.top_k, verb_sim=verb_sim)
    if cfg.prior_source == "llm-fixture":
        from .priors import FixtureLLMClient
        if not cfg.llm_fixtures:
            raise ConfigError("llm-fixture prior source needs --llm-fixtures")
        return LLMPriorSource(FixtureLLMClient(cfg.llm_fixtures), k=cfg.top_k or 10)
    if cfg.prior_source == "llm-live":
        from .priors import HttpLLMClient
        if not cfg.llm_url:
            raise ConfigError("llm-live prior source needs --llm-url")
        return LLMPriorSource(HttpLLMClient(cfg.llm_url), k=cfg.top_k or 10)
    raise ConfigError(f"unknown prior source {cfg.prior_source!r}")


def _cmd_ingest(args) -> int:
    cfg_file = _section(args, "ingest")
    lang = resolve(args.lang, cfg_file, "lang", "en")
    relations_csv = resolve(args.relations, cfg_file, "relations")
    ingest_cfg = (
        IngestConfig(lang=lang, relations=frozenset(relations_csv.split(",")))
        if relations_csv else IngestConfig(lang=lang)
    )
    with open(args.assertions, "r", encoding="utf-8") as fh:
        graph, report = ingest_assertions(fh, ingest_cfg)
    save_graph(graph, args.out)
    log.info("ingested %d nodes / %d edges (kept=%d, malformed=%d, dup=%d)",
             graph.node_count, graph.edge_count, report.kept,
             len(report.malformed), report.duplicates_collapsed)
    for lineno, reason in report.malformed:
        log.warning("line %d skipped: %s", lineno, reason)
    return 0


def _cmd_ground(args) -> int:
    cfg = _make_run_config(args, _section(args, "ground"))
    provider = _make_provider(cfg.provider, cfg.template_id)
    prior_source = _make_prior_source(cfg)
    verb = normalize_concept(args.verb)[0]
    candidates = [c for c in args.candidates.split(",") if c]
    p0 = prior_source(verb)
    result = ground_iterative(p0, candidates, provider,
                              LoopConfig(lam=cfg.lam, max_iters=cfg.max_iters, eps=cfg.eps))
    record = result.to_record(config_hash=cfg.hash(), tool_version=__version__)
    print(json.dumps(record, sort_keys=True, indent=2))
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(
            json.dumps(record, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        write_prior_dump([p0], out / "priors.tsv")
    return 0


def _load_table(args, cfg_file: dict[str, str]):
    images = resolve(getattr(args, "images", None), cfg_file, "images")
    index = load_image_index(images) if images else None
    return load_affordance_labels(args.labels, image_index=index)


def _eval_backend(args, cfg: RunConfig, table):
    provider = None
    prior_source = None
    if args.backend in ("craft", "prior-only", "oracle-object", "oracle-affordance"):
        provider = _make_provider(cfg.provider, cfg.template_id)
    if args.backend in ("craft", "prior-only"):
        prior_source = _make_prior_source(cfg)
    loop = LoopConfig(lam=cfg.lam, max_iters=cfg.max_iters, eps=cfg.eps)
    try:
        return make_backend(args.backend, table=table, provider=provider,
                            prior_source=prior_source, loop=loop)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _cmd_eval(args) -> int:
    cfg_file = _section(args, "eval")
    cfg = _make_run_config(args, cfg_file)
    table = _load_table(args, cfg_file)
    backend = _eval_backend(args, cfg, table)
    eval_cfg = EvalConfig(
        n=resolve(args.n, cfg_file, "n", 5, int),
        n_pos=resolve(args.n_pos, cfg_file, "n_pos", 1, int),
        episodes_per_verb=resolve(args.episodes, cfg_file, "episodes", 100, int),
        base_seed=cfg.seed,
    )
    jobs = resolve(args.jobs, cfg_file, "jobs", os.cpu_count() or 1, int)
    report = run_benchmark(table, backend, eval_cfg, jobs=jobs,
                           config_hash=cfg.hash(), tool_version=__version__)
    if report.failures:
        log.warning("%d episodes failed (first: %s)", len(report.failures),
                    report.failures[0][2])
    if report.episode_count == 0 and report.failures:
        log.error("every episode failed; backend unusable")
        return 3
    print(report.to_json(), end="")
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        with open(out / "episodes.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            meta = {"meta": {"config_hash": cfg.hash(), "tool_version": __version__,
                             "backend": backend.id}}
            fh.write(json.dumps(meta, sort_keys=True) + "\n")
            for row in report.rows:
                fh.write(row.to_json() + "\n")
    log.info("%s: accuracy@1=%.4f mrr=%.4f ndcg=%.4f over %d episodes",
             backend.id, report.aggregate["accuracy_at_1"],
             report.aggregate["mrr"], report.aggregate["ndcg"], report.episode_count)
    return 0


def _cmd_sweep(args) -> int:
    cfg_file = _section(args, "sweep")
    cfg = _make_run_config(args, cfg_file)
    table = _load_table(args, cfg_file)
    backend = _eval_backend(args, cfg, table)
    n_raw = resolve(args.n, cfg_file, "n", "5,10,15,20")
    n_values = [int(x) for x in str(n_raw).split(",")]
    eval_cfg = EvalConfig(
        n_pos=resolve(args.n_pos, cfg_file, "n_pos", 1, int),
        episodes_per_verb=resolve(args.episodes, cfg_file, "episodes", 100, int),
        base_seed=cfg.seed,
    )
    jobs = resolve(args.jobs, cfg_file, "jobs", os.cpu_count() or 1, int)
    sweep = distractor_sweep(table, backend, n_values, eval_cfg, jobs=jobs,
                             config_hash=cfg.hash(), tool_version=__version__)
    print(sweep.to_csv(), end="")
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(sweep.to_csv(), encoding="utf-8")
        for n, report in sweep.reports.items():
            (out / f"report_n{n}.json").write_text(report.to_json(), encoding="utf-8")
    return 0


def _cmd_export_traces(args) -> int:
    cfg_file = _section(args, "export-traces")
    cfg = _make_run_config(args, cfg_file)
    graph = load_graph(args.graph)
    verb = normalize_concept(args.verb)[0]
    ego = extract_ego_subgraph(graph, verb, cfg.depth)
    traces = [extract_trace(ego, obj) for obj in ego.candidate_ids]
    text = export_traces_json(traces, config_hash=cfg.hash(), tool_version=__version__)
    Path(args.out).write_text(text, encoding="utf-8")
    if args.dot:
        dot = export_ego_dot(render_ego(ego),
                             header_comment=f"craft {__version__} config {cfg.hash()}")
        Path(args.dot).write_text(dot, encoding="utf-8")
    log.info("exported %d traces for %s", len(traces), verb)
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest
    return run_selftest()


_HANDLERS = {
    "ingest": _cmd_ingest,
    "ground": _cmd_ground,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "export-traces": _cmd_export_traces,
    "selftest": _cmd_selftest,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            stream=sys.stderr,
            level=logging.DEBUG if getattr(args, "verbose", False) else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if not args.command:
            parser.print_usage(sys.stderr)
            return 1
        return _HANDLERS[args.command](args)
    except ConfigError as err:
        log.error("%s", err)
        return 1
    except CraftError as err:
        log.error("%s", err)
        return err.exit_code
    except OSError as err:
        log.error("%s", err)
        return 2


if __name__ == "__main__":
    sys.exit(main())
