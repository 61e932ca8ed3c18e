"""Grounding backends evaluated by the harness.

`craft` runs the full iterative loop; `prior-only` is the same energy ranking
frozen at iteration zero (models how plain symbolic/LLM priors were used);
the two oracles score against ground-truth category or affordance prompts;
`random` is a seeded shuffle.
"""

from __future__ import annotations

import random
import threading

from .embeddings import AFFORDANCE_PROMPT, EmbeddingProvider, cosine, render_prompt
from .engine import (GroundingResult, LoopConfig, ground_iterative,
                     result_from_energies)
from .evaluation import Episode, LabelTable
from .graph import AffordanceGraph, ObjectHeuristic, concept_label, extract_ego_subgraph
from .priors import (DEFAULT_MAX_PATHS, PriorSet, PriorSource, llm_prior,
                     score_prior, select_top_k)


class CraftBackend:
    id = "craft"

    def __init__(self, prior_source: PriorSource, provider: EmbeddingProvider,
                 loop: LoopConfig | None = None):
        self.prior_source = prior_source
        self.provider = provider
        self.loop = loop or LoopConfig()

    def run(self, episode: Episode) -> GroundingResult:
        p0 = self.prior_source(episode.verb)
        return ground_iterative(p0, episode.candidates, self.provider, self.loop)


class PriorOnlyBackend:
    """Energy ranking with the initial prior and no feedback; equivalent to
    the craft backend at lambda = 0."""

    id = "prior-only"

    def __init__(self, prior_source: PriorSource, provider: EmbeddingProvider):
        self.prior_source = prior_source
        self.provider = provider
        self._loop = LoopConfig(lam=0.0, max_iters=1)

    def run(self, episode: Episode) -> GroundingResult:
        p0 = self.prior_source(episode.verb)
        return ground_iterative(p0, episode.candidates, self.provider, self._loop)


class OracleObjectBackend:
    """Knows the verb's true affording categories; ranks each image by its best
    cosine against their category prompts."""

    id = "oracle-object"

    def __init__(self, table: LabelTable, provider: EmbeddingProvider):
        self.table = table
        self.provider = provider

    def run(self, episode: Episode) -> GroundingResult:
        cats = self.table.affording(episode.verb)
        text_vecs = [
            self.provider.embed_text(
                render_prompt(self.provider.template_id, concept_label(c),
                              concept_label(episode.verb)))
            for c in cats
        ]
        energies = []
        for ref in episode.candidates:
            img = self.provider.embed_image(ref)
            energies.append(-max(cosine(tv, img) for tv in text_vecs))
        return result_from_energies(episode.verb, episode.candidates, energies)


class OracleAffordanceBackend:
    """Ranks each image by cosine to one affordance-phrased verb prompt."""

    id = "oracle-affordance"

    def __init__(self, table: LabelTable, provider: EmbeddingProvider):
        self.table = table
        self.provider = provider

    def run(self, episode: Episode) -> GroundingResult:
        prompt = AFFORDANCE_PROMPT.format(verb=concept_label(episode.verb))
        text = self.provider.embed_text(prompt)
        energies = [
            -cosine(text, self.provider.embed_image(ref))
            for ref in episode.candidates
        ]
        return result_from_energies(episode.verb, episode.candidates, energies)


class RandomBackend:
    """Seeded shuffle; the per-episode seed keeps reports reproducible."""

    id = "random"

    def __init__(self, salt: int = 0x5EED):
        self.salt = salt

    def run(self, episode: Episode) -> GroundingResult:
        rng = random.Random(episode.seed ^ self.salt)
        order = list(range(episode.n))
        rng.shuffle(order)
        energies = [0.0] * episode.n
        for pos, idx in enumerate(order):
            energies[idx] = (pos + 1 - episode.n) / episode.n  # in [-1, 0], ascending by pos
        return result_from_energies(episode.verb, episode.candidates, energies)


class GraphPriorSource:
    """verb -> PriorSet via ego extraction, path scoring and optional top-k
    truncation. Results are cached per verb (pure function of the graph)."""

    def __init__(self, graph: AffordanceGraph, depth: int = 2,
                 whitelist: frozenset[str] | None = None,
                 top_k: int | None = None, verb_sim=None,
                 heuristic: ObjectHeuristic | None = None,
                 max_paths: int = DEFAULT_MAX_PATHS):
        self.graph = graph
        self.depth = depth
        self.whitelist = whitelist
        self.top_k = top_k
        self.verb_sim = verb_sim
        self.heuristic = heuristic
        self.max_paths = max_paths
        self._cache: dict[str, PriorSet] = {}
        self._lock = threading.Lock()

    def __call__(self, verb: str) -> PriorSet:
        with self._lock:
            if verb in self._cache:
                return self._cache[verb]
        ego = extract_ego_subgraph(self.graph, verb, self.depth, self.whitelist,
                                   self.heuristic)
        p = score_prior(ego, self.max_paths)
        if self.top_k is not None and self.verb_sim is not None:
            p = select_top_k(p, self.top_k, self.verb_sim)
        with self._lock:
            self._cache[verb] = p
        return p


class LLMPriorSource:
    def __init__(self, client, k: int = 10, weighting: str = "reciprocal"):
        self.client = client
        self.k = k
        self.weighting = weighting
        self._cache: dict[str, PriorSet] = {}
        self._lock = threading.Lock()

    def __call__(self, verb: str) -> PriorSet:
        with self._lock:
            if verb in self._cache:
                return self._cache[verb]
        p = llm_prior(verb, self.client, self.k, self.weighting)
        with self._lock:
            self._cache[verb] = p
        return p


BACKEND_IDS = ("craft", "prior-only", "oracle-object", "oracle-affordance", "random")


def make_backend(backend_id: str, *, table: LabelTable | None = None,
                 provider: EmbeddingProvider | None = None,
                 prior_source: PriorSource | None = None,
                 loop: LoopConfig | None = None):
    """Backend factory shared by the CLI and the fixture worlds."""
    if backend_id == "craft":
        if prior_source is None or provider is None:
            raise ValueError("craft backend needs a prior source and a provider")
        return CraftBackend(prior_source, provider, loop)
    if backend_id == "prior-only":
        if prior_source is None or provider is None:
            raise ValueError("prior-only backend needs a prior source and a provider")
        return PriorOnlyBackend(prior_source, provider)
    if backend_id == "oracle-object":
        if table is None or provider is None:
            raise ValueError("oracle-object backend needs a label table and a provider")
        return OracleObjectBackend(table, provider)
    if backend_id == "oracle-affordance":
        if table is None or provider is None:
            raise ValueError("oracle-affordance backend needs a label table and a provider")
        return OracleAffordanceBackend(table, provider)
    if backend_id == "random":
        return RandomBackend()
    raise ValueError(f"unknown backend {backend_id!r}; known: {', '.join(BACKEND_IDS)}")
