"""Evaluation harness: affordance labels, seeded episode sampling, ranking
metrics and benchmark/sweep drivers.

Everything downstream of (table, config, backend, base_seed) is deterministic:
episode seeds come from a stable hash, and reports reduce per-episode results
in sorted key order regardless of execution order.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .engine import GroundingResult
from .errors import ConfigError, CraftError, LoadError, MetricError, SamplingError
from .graph import normalize_concept

METRIC_NAMES = ("accuracy_at_1", "mrr", "ndcg")


class LabelTable:
    """Verb/category affordance relation plus an image index per category.

    Verbs lacking either an affording or a non-affording category are excluded
    from sampling (kept in ``excluded_verbs`` for reporting).
    """

    def __init__(self, affords: Iterable[tuple[str, str]],
                 image_index: dict[str, Sequence[str]] | None = None,
                 images_per_category: int = 1):
        self.affords = frozenset(affords)
        self.verbs = tuple(sorted({v for v, _ in self.affords}))
        self.categories = tuple(sorted({c for _, c in self.affords}
                                       | set(image_index or {})))
        if image_index is None:
            image_index = {
                c: [f"image:{c}:{k}" for k in range(images_per_category)]
                for c in self.categories
            }
        self.image_index = {c: tuple(refs) for c, refs in sorted(image_index.items())}
        missing = [c for c in self.categories if not self.image_index.get(c)]
        if missing:
            raise LoadError(f"categories without images: {missing[:5]}")
        self._ref_category = {
            ref: c for c, refs in self.image_index.items() for ref in refs
        }
        self._afford_by_verb = {
            v: tuple(sorted(c for vv, c in self.affords if vv == v)) for v in self.verbs
        }
        self.excluded_verbs = tuple(
            v for v in self.verbs
            if not self._afford_by_verb[v] or len(self._afford_by_verb[v]) == len(self.categories)
        )
        self.duplicates_dropped = 0

    @property
    def sampling_verbs(self) -> tuple[str, ...]:
        return tuple(v for v in self.verbs if v not in self.excluded_verbs)

    def affording(self, verb: str) -> tuple[str, ...]:
        return self._afford_by_verb.get(verb, ())

    def non_affording(self, verb: str) -> tuple[str, ...]:
        affording = set(self._afford_by_verb.get(verb, ()))
        return tuple(c for c in self.categories if c not in affording)

    def category_of(self, ref: str) -> str:
        return self._ref_category[ref]

    def refs_for(self, category: str) -> tuple[str, ...]:
        return self.image_index[category]


def load_affordance_labels(path: str | Path, verbs: Iterable[str] | None = None,
                           categories: Iterable[str] | None = None,
                           images_per_category: int = 1,
                           image_index: dict[str, Sequence[str]] | None = None) -> LabelTable:
    """Load ``verb <TAB> category`` pairs under a ``#verbs=N #categories=M``
    header. Derived counts must echo the header. When explicit verb/category
    universes are given, a pair naming an id outside them fails at its line.
    Duplicate pairs are dropped silently with a count on the table. An
    ``image_index`` (category -> refs) supplies user images and may introduce
    distractor-only categories beyond those named in pairs."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise LoadError(f"{path}: empty label file")
    header = lines[0].strip()
    if not header.startswith("#"):
        raise LoadError(f"{path}:1: missing '#verbs=N #categories=M' header")
    try:
        fields = dict(part.lstrip("#").split("=") for part in header.split())
        n_verbs, n_categories = int(fields["verbs"]), int(fields["categories"])
    except (ValueError, KeyError) as err:
        raise LoadError(f"{path}:1: malformed header: {err}") from err

    known_verbs = {normalize_concept(v)[0] for v in verbs} if verbs is not None else None
    known_cats = {normalize_concept(c)[0] for c in categories} if categories is not None else None
    pairs: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    duplicates = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise LoadError(f"{path}:{lineno}: expected 'verb<TAB>category'")
        verb = normalize_concept(cols[0])[0]
        cat = normalize_concept(cols[1])[0]
        if known_verbs is not None and verb not in known_verbs:
            raise LoadError(f"{path}:{lineno}: unknown verb {verb!r}")
        if known_cats is not None and cat not in known_cats:
            raise LoadError(f"{path}:{lineno}: unknown category {cat!r}")
        if (verb, cat) in seen:
            duplicates += 1
            continue
        seen.add((verb, cat))
        pairs.append((verb, cat))

    if image_index is not None:
        normalized_index = {
            normalize_concept(c)[0]: list(refs) for c, refs in image_index.items()
        }
        pair_cats = {c for _, c in pairs}
        for c in pair_cats - set(normalized_index):
            normalized_index[c] = [f"image:{c}:{k}" for k in range(images_per_category)]
        table = LabelTable(pairs, image_index=normalized_index)
    else:
        table = LabelTable(pairs, images_per_category=images_per_category)
    if len(table.verbs) != n_verbs or len(table.categories) != n_categories:
        raise LoadError(
            f"{path}: header claims {n_verbs} verbs/{n_categories} categories, "
            f"found {len(table.verbs)}/{len(table.categories)}")
    table.duplicates_dropped = duplicates
    return table


def load_image_index(path: str | Path) -> dict[str, list[str]]:
    """Read an images manifest: JSON object mapping category -> list of refs."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise LoadError(f"{path}: not valid JSON: {err}") from err
    if not isinstance(data, dict) or not all(
            isinstance(v, list) and all(isinstance(r, str) for r in v)
            for v in data.values()):
        raise LoadError(f"{path}: expected {{category: [image refs]}}")
    return data


@dataclass(frozen=True)
class Episode:
    verb: str
    candidates: tuple[str, ...]
    relevant: frozenset[int]
    seed: int

    @property
    def n(self) -> int:
        return len(self.candidates)


def derive_episode_seed(base_seed: int, verb: str, index: int, n: int, n_pos: int) -> int:
    """Stable per-episode seed, independent of iteration order."""
    blob = f"{base_seed}|{verb}|{index}|{n}|{n_pos}".encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def sample_episode(table: LabelTable, verb: str, n: int, n_pos: int, seed: int) -> Episode:
    """Draw n_pos affordant images from distinct affording categories plus
    n - n_pos distractors from distinct non-affording categories, shuffled.
    Fully determined by (table, verb, n, n_pos, seed)."""
    if n_pos not in (1, 2):
        raise ConfigError(f"n_pos must be 1 or 2, got {n_pos}")
    if n <= n_pos:
        raise ConfigError(f"n={n} leaves no room for distractors with n_pos={n_pos}")
    affording = table.affording(verb)
    distract = table.non_affording(verb)
    if len(affording) < n_pos:
        raise SamplingError(
            f"verb {verb!r} has {len(affording)} affording categories, needs {n_pos}")
    if len(distract) < n - n_pos:
        raise SamplingError(
            f"verb {verb!r} has {len(distract)} non-affording categories, "
            f"needs {n - n_pos}")
    rng = random.Random(seed)
    pos_cats = rng.sample(affording, n_pos)
    neg_cats = rng.sample(distract, n - n_pos)
    items = [(rng.choice(table.refs_for(c)), True) for c in pos_cats]
    items += [(rng.choice(table.refs_for(c)), False) for c in neg_cats]
    rng.shuffle(items)
    return Episode(
        verb=verb,
        candidates=tuple(ref for ref, _ in items),
        relevant=frozenset(i for i, (_, rel) in enumerate(items) if rel),
        seed=seed,
    )


def _check_ranking(ranking: Sequence[int], relevant: Iterable[int]) -> frozenset[int]:
    rel = frozenset(relevant)
    if sorted(ranking) != list(range(len(ranking))):
        raise MetricError(f"ranking {ranking!r} is not a permutation")
    if not rel:
        raise MetricError("empty relevant set")
    if not rel <= set(range(len(ranking))):
        raise MetricError("relevant indices outside ranking range")
    return rel


def mrr(ranking: Sequence[int], relevant: Iterable[int]) -> float:
    """Reciprocal of the 1-based rank of the first relevant candidate."""
    rel = _check_ranking(ranking, relevant)
    for pos, idx in enumerate(ranking, start=1):
        if idx in rel:
            return 1.0 / pos
    raise MetricError("no relevant candidate in ranking")  # unreachable given checks


def ndcg(ranking: Sequence[int], relevant: Iterable[int]) -> float:
    """Binary-gain nDCG with 1/log2(rank+1) discount, ideal-normalized."""
    rel = _check_ranking(ranking, relevant)
    dcg = sum(
        1.0 / math.log2(pos + 1)
        for pos, idx in enumerate(ranking, start=1) if idx in rel
    )
    ideal = sum(1.0 / math.log2(pos + 1) for pos in range(1, len(rel) + 1))
    return dcg / ideal


def accuracy_at_1(results: Iterable[tuple[Sequence[int], Iterable[int]]]) -> float:
    """Mean of [top-ranked candidate is relevant] over (ranking, relevant) pairs."""
    hits = total = 0
    for ranking, relevant in results:
        rel = _check_ranking(ranking, relevant)
        hits += ranking[0] in rel
        total += 1
    if total == 0:
        raise MetricError("no results to score")
    return hits / total


class Backend(Protocol):
    id: str

    def run(self, episode: Episode) -> GroundingResult: ...


@dataclass(frozen=True)
class EvalConfig:
    n: int = 5
    n_pos: int = 1
    episodes_per_verb: int = 100
    base_seed: int = 0


@dataclass
class EpisodeRow:
    verb: str
    index: int
    seed: int
    ranking: tuple[int, ...]
    relevant: tuple[int, ...]
    selected: int
    converged: bool
    metrics: dict[str, float]

    def to_json(self) -> str:
        return json.dumps({
            "verb": self.verb, "index": self.index, "seed": self.seed,
            "ranking": list(self.ranking), "relevant": sorted(self.relevant),
            "selected": self.selected, "converged": self.converged,
            "metrics": self.metrics,
        }, sort_keys=True)


@dataclass
class Report:
    backend: str
    config_hash: str
    n: int
    n_pos: int
    episodes_per_verb: int
    base_seed: int
    per_verb: dict[str, dict[str, float]]
    aggregate: dict[str, float]
    episode_count: int
    failures: tuple[tuple[str, int, str], ...]
    rows: tuple[EpisodeRow, ...] = ()
    tool_version: str = ""

    def metric_values(self, name: str) -> list[float]:
        return [row.metrics[name] for row in self.rows]

    def summary_dict(self) -> dict:
        return {
            "schema_version": 1,
            "tool_version": self.tool_version,
            "backend": self.backend,
            "config_hash": self.config_hash,
            "n": self.n,
            "n_pos": self.n_pos,
            "episodes_per_verb": self.episodes_per_verb,
            "base_seed": self.base_seed,
            "episode_count": self.episode_count,
            "failures": [list(f) for f in self.failures],
            "per_verb": self.per_verb,
            "aggregate": self.aggregate,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary_dict(), sort_keys=True, indent=2) + "\n"

    def content_equal(self, other: "Report") -> bool:
        """Equality of everything except backend/config identity fields."""
        a, b = self.summary_dict(), other.summary_dict()
        for skip in ("backend", "config_hash", "tool_version"):
            a.pop(skip), b.pop(skip)
        return a == b and [r.to_json() for r in self.rows] == [r.to_json() for r in other.rows]


def _episode_metrics(result: GroundingResult, relevant: frozenset[int]) -> dict[str, float]:
    return {
        "accuracy_at_1": float(result.ranking[0] in relevant),
        "mrr": mrr(result.ranking, relevant),
        "ndcg": ndcg(result.ranking, relevant),
    }


def run_benchmark(table: LabelTable, backend: Backend, cfg: EvalConfig,
                  jobs: int = 1, config_hash: str = "", tool_version: str = "") -> Report:
    """Evaluate a backend over seeded episodes for every sampling-eligible verb.

    Per-episode failures are recorded and excluded from the means, never
    silently averaged. Results reduce in sorted (verb, index) order, so the
    report is identical for any jobs level.
    """
    keys = [
        (verb, i)
        for verb in table.sampling_verbs
        for i in range(cfg.episodes_per_verb)
    ]

    def one(key: tuple[str, int]):
        verb, i = key
        seed = derive_episode_seed(cfg.base_seed, verb, i, cfg.n, cfg.n_pos)
        episode = sample_episode(table, verb, cfg.n, cfg.n_pos, seed)
        result = backend.run(episode)
        return EpisodeRow(
            verb=verb, index=i, seed=seed, ranking=result.ranking,
            relevant=tuple(sorted(episode.relevant)), selected=result.selected,
            converged=result.converged,
            metrics=_episode_metrics(result, episode.relevant),
        )

    outcomes: dict[tuple[str, int], EpisodeRow | CraftError] = {}
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            def guarded(key):
                try:
                    return key, one(key)
                except CraftError as err:
                    return key, err
            for key, outcome in pool.map(guarded, keys):
                outcomes[key] = outcome
    else:
        for key in keys:
            try:
                outcomes[key] = one(key)
            except CraftError as err:
                outcomes[key] = err

    rows: list[EpisodeRow] = []
    failures: list[tuple[str, int, str]] = []
    for key in sorted(outcomes):
        outcome = outcomes[key]
        if isinstance(outcome, CraftError):
            failures.append((key[0], key[1], str(outcome)))
        else:
            rows.append(outcome)

    per_verb: dict[str, dict[str, float]] = {}
    for verb in table.sampling_verbs:
        verb_rows = [r for r in rows if r.verb == verb]
        if verb_rows:
            per_verb[verb] = {
                name: sum(r.metrics[name] for r in verb_rows) / len(verb_rows)
                for name in METRIC_NAMES
            }
            per_verb[verb]["episodes"] = float(len(verb_rows))
    aggregate = {
        name: (sum(r.metrics[name] for r in rows) / len(rows)) if rows else 0.0
        for name in METRIC_NAMES
    }
    return Report(
        backend=backend.id, config_hash=config_hash, n=cfg.n, n_pos=cfg.n_pos,
        episodes_per_verb=cfg.episodes_per_verb, base_seed=cfg.base_seed,
        per_verb=per_verb, aggregate=aggregate, episode_count=len(rows),
        failures=tuple(failures), rows=tuple(rows), tool_version=tool_version,
    )


@dataclass
class SweepReport:
    reports: dict[int, Report]
    skipped: tuple[tuple[int, str], ...]  # (n, verb) pairs infeasible at that n

    def to_csv(self) -> str:
        """Plot-ready rows: n, metric, mean, stderr."""
        lines = ["n,metric,mean,stderr"]
        for n in sorted(self.reports):
            report = self.reports[n]
            for name in METRIC_NAMES:
                values = report.metric_values(name)
                mean = sum(values) / len(values) if values else 0.0
                if len(values) > 1:
                    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
                    stderr = math.sqrt(var / len(values))
                else:
                    stderr = 0.0
                lines.append(f"{n},{name},{mean!r},{stderr!r}")
        return "\n".join(lines) + "\n"


def distractor_sweep(table: LabelTable, backend: Backend, n_values: Sequence[int],
                     cfg: EvalConfig, jobs: int = 1, config_hash: str = "",
                     tool_version: str = "") -> SweepReport:
    """Run one benchmark per candidate-set size; verbs infeasible at a given n
    are skipped there and reported."""
    if list(n_values) != sorted(n_values):
        raise ConfigError("n_values must be sorted ascending")
    reports: dict[int, Report] = {}
    skipped: list[tuple[int, str]] = []
    for n in n_values:
        feasible = [
            v for v in table.sampling_verbs
            if len(table.non_affording(v)) >= n - cfg.n_pos
            and len(table.affording(v)) >= cfg.n_pos
        ]
        for v in table.sampling_verbs:
            if v not in feasible:
                skipped.append((n, v))
        sub = _restrict_verbs(table, feasible)
        run_cfg = EvalConfig(n=n, n_pos=cfg.n_pos,
                             episodes_per_verb=cfg.episodes_per_verb,
                             base_seed=cfg.base_seed)
        reports[n] = run_benchmark(sub, backend, run_cfg, jobs=jobs,
                                   config_hash=config_hash, tool_version=tool_version)
    return SweepReport(reports=reports, skipped=tuple(skipped))


def _restrict_verbs(table: LabelTable, verbs: Sequence[str]) -> LabelTable:
    keep = set(verbs)
    pairs = [(v, c) for v, c in table.affords if v in keep]
    return LabelTable(pairs, image_index=dict(table.image_index))
