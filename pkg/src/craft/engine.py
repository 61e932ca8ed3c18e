"""Grounding engine: energies, candidate selection and the re-ranking loop.

The energy of a candidate image is the negated best prior-weighted similarity
against any object concept; the loop re-weights the prior multiplicatively by
exp(lambda * s(o, x_top)) using the current top-ranked image, renormalizes and
repeats until both the top index and the prior have settled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddingProvider, cosine, render_prompt
from .errors import AlignmentError, ConfigError, CraftError, NumericError
from .graph import concept_label
from .priors import PriorSet


@dataclass(frozen=True)
class LoopConfig:
    lam: float = 1.0
    max_iters: int = 10
    eps: float = 1e-6
    prune_below: float = 0.0  # 0 = soft re-weighting only (default), no hard drops


@dataclass(frozen=True)
class SimMatrix:
    """Cosine similarities, objects (rows) x candidate images (columns)."""

    objects: tuple[str, ...]
    candidates: tuple[str, ...]
    values: np.ndarray  # float64, entries in [-1, 1]


def similarity_matrix(p: PriorSet, candidates: list[str] | tuple[str, ...],
                      provider: EmbeddingProvider) -> SimMatrix:
    """Embed every object prompt and candidate image, fill the matrix row-major.

    Provider errors abort immediately and already carry the offending key.
    """
    verb_label = concept_label(p.verb)
    text_vecs = [
        provider.embed_text(render_prompt(provider.template_id, concept_label(o), verb_label))
        for o in p.objects
    ]
    image_vecs = [provider.embed_image(ref) for ref in candidates]
    values = np.empty((len(text_vecs), len(image_vecs)), dtype=np.float64)
    for i, tv in enumerate(text_vecs):
        for j, iv in enumerate(image_vecs):
            values[i, j] = cosine(tv, iv)
    values.setflags(write=False)
    return SimMatrix(tuple(p.objects), tuple(candidates), values)


def _aligned_rows(p: PriorSet, m: SimMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Prior scores with their matrix row indices. The prior may cover a
    subset of the matrix rows (candidates pruned during iteration) but never
    objects the matrix does not know."""
    index = {o: i for i, o in enumerate(m.objects)}
    missing = [e.object_id for e in p.entries if e.object_id not in index]
    if missing:
        raise AlignmentError(f"prior objects missing from similarity matrix: {missing[:3]}")
    phi = np.asarray([e.score for e in p.entries], dtype=np.float64)
    rows = np.asarray([index[e.object_id] for e in p.entries], dtype=np.intp)
    return phi, rows


def grounding_energy(p: PriorSet, m: SimMatrix) -> np.ndarray:
    """energies[j] = -max_i(phi_i * s_ij)."""
    phi, rows = _aligned_rows(p, m)
    return -np.max(phi[:, None] * m.values[rows, :], axis=0)


def select_best(energies: np.ndarray) -> int:
    """Argmin index; ties break to the lowest candidate index."""
    arr = np.asarray(energies, dtype=np.float64)
    if arr.size == 0:
        raise NumericError("empty energy array")
    if np.any(np.isnan(arr)):
        raise NumericError("NaN in energies")
    return int(np.argmin(arr))


def rerank_step(p: PriorSet, m: SimMatrix, top: int, lam: float) -> PriorSet:
    """Multiply each score by exp(lam * s(o, x_top)), renormalize, bump the
    iteration counter. lam = 0 is the identity."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    if not 0 <= top < len(m.candidates):
        raise AlignmentError(f"top index {top} outside candidate range")
    if lam == 0.0:
        # exp(0 * s) == 1 for every s: the update is the identity, bit for bit
        return PriorSet(p.verb, p.entries, p.provenance, p.iteration + 1)
    column = {o: m.values[i, top] for i, o in enumerate(m.objects)}
    raw = {e.object_id: e.score * float(np.exp(lam * column[e.object_id])) for e in p.entries}
    weights = {e.object_id: e.edge_weight for e in p.entries if e.edge_weight is not None}
    return PriorSet.from_raw(p.verb, raw, p.provenance, p.iteration + 1, weights)


def _prune(p: PriorSet, threshold: float) -> PriorSet:
    """Drop entries below the threshold and renormalize; never empties the set."""
    keep = {e.object_id: e.score for e in p.entries if e.score >= threshold}
    if not keep or len(keep) == len(p.entries):
        return p
    weights = {e.object_id: e.edge_weight for e in p.entries
               if e.object_id in keep and e.edge_weight is not None}
    return PriorSet.from_raw(p.verb, keep, p.provenance, p.iteration, weights)


@dataclass(frozen=True)
class IterationSnapshot:
    prior: PriorSet
    energies: np.ndarray
    top: int


@dataclass(frozen=True)
class GroundingResult:
    verb: str
    candidates: tuple[str, ...]
    energies: np.ndarray  # final iteration
    ranking: tuple[int, ...]  # candidate indices, ascending energy
    selected: int
    iterations: tuple[IterationSnapshot, ...]
    converged: bool
    lam: float

    def to_record(self, config_hash: str = "", tool_version: str = "") -> dict:
        """JSON-ready result record (one per episode)."""
        return {
            "schema_version": 1,
            "tool_version": tool_version,
            "config_hash": config_hash,
            "verb": self.verb,
            "candidates": list(self.candidates),
            "lambda": self.lam,
            "converged": self.converged,
            "selected": self.selected,
            "ranking": list(self.ranking),
            "energies": [float(e) for e in self.energies],
            "iterations": [
                {
                    "t": snap.prior.iteration,
                    "objects": list(snap.prior.objects),
                    "phi": [e.score for e in snap.prior.entries],
                    "energies": [float(x) for x in snap.energies],
                    "top": snap.top,
                }
                for snap in self.iterations
            ],
        }


def _ranking(energies: np.ndarray) -> tuple[int, ...]:
    return tuple(int(i) for i in np.argsort(energies, kind="stable"))


def result_from_energies(verb: str, candidates, energies,
                         iterations=(), converged: bool = True,
                         lam: float = 0.0) -> GroundingResult:
    """Assemble a GroundingResult from a final energy array (used both by the
    iterative loop and by the one-shot / oracle backends)."""
    arr = np.asarray(energies, dtype=np.float64)
    ranking = _ranking(arr)
    return GroundingResult(
        verb=verb,
        candidates=tuple(candidates),
        energies=arr,
        ranking=ranking,
        selected=ranking[0],
        iterations=tuple(iterations),
        converged=converged,
        lam=lam,
    )


def ground_iterative(p0: PriorSet, candidates: list[str] | tuple[str, ...],
                     provider: EmbeddingProvider, cfg: LoopConfig) -> GroundingResult:
    """Run the full loop: one similarity matrix (it has no iteration
    dependence), then energy -> select -> re-weight until (a) the top index is
    stable and the L1 change of the prior is below eps, or (b) max_iters
    updates have run. Convergence means (a) fired."""
    if not candidates:
        raise ConfigError("no candidate images")
    if cfg.lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {cfg.lam}")
    t = 0
    try:
        m = similarity_matrix(p0, candidates, provider)
        energies = grounding_energy(p0, m)
        top = select_best(energies)
        snaps = [IterationSnapshot(p0, energies, top)]
        prior = p0
        converged = False
        if len(candidates) == 1:
            # degenerate episode: the ranking cannot change, settle at t=1
            t = 1
            nxt = rerank_step(prior, m, top, cfg.lam)
            snaps.append(IterationSnapshot(nxt, grounding_energy(nxt, m), top))
            return result_from_energies(
                p0.verb, candidates, snaps[-1].energies, snaps, True, cfg.lam
            )
        for t in range(1, cfg.max_iters + 1):
            nxt = rerank_step(prior, m, top, cfg.lam)
            if cfg.prune_below > 0.0:
                nxt = _prune(nxt, cfg.prune_below)
            energies = grounding_energy(nxt, m)
            new_top = select_best(energies)
            snaps.append(IterationSnapshot(nxt, energies, new_top))
            prev, cur = prior.as_dict(), nxt.as_dict()
            l1 = sum(abs(cur.get(o, 0.0) - prev.get(o, 0.0))
                     for o in set(prev) | set(cur))
            prior, top_was, top = nxt, top, new_top
            if new_top == top_was and l1 < cfg.eps:
                converged = True
                break
    except CraftError as err:
        err.args = (f"iteration {t}: {err.args[0] if err.args else err}",) + err.args[1:]
        raise
    return result_from_energies(
        p0.verb, candidates, snaps[-1].energies, snaps, converged, cfg.lam
    )
