"""Deterministic fixture worlds for desk-scale evaluation.

Two synthetic embedding worlds back the self-test and acceptance runs:

* identity world: every image embedding equals its category's text embedding,
  so a backend aware of the true categories ranks perfectly.
* margin world: affordant images align with the true concept at ``own``;
  every distractor image is a hard negative aligned at ``own - margin`` to the
  same concept and more weakly (``spurious_align``) to one of two spurious
  concepts that carry corrupted prior mass. Feedback from a wrongly selected
  distractor still favors the true concept over the spurious one that promoted
  it, which is what lets the iterative loop undo prior-noise mistakes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .embeddings import (AFFORDANCE_PROMPT, DEFAULT_TEMPLATE, EmbeddingStore,
                         EmbeddingVector, FileProvider, render_prompt, write_store)
from .evaluation import LabelTable
from .graph import concept_label
from .priors import PROVENANCE_CONCEPTNET, PriorSet


@dataclass
class FixtureWorld:
    table: LabelTable
    store: EmbeddingStore
    provider: FileProvider
    prior_source: Callable[[str], PriorSet] | None
    meta: dict


def _ref_rng(seed: int, ref: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}|{ref}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _store_from_arrays(entries: dict[str, np.ndarray]) -> EmbeddingStore:
    return EmbeddingStore({k: EmbeddingVector(v) for k, v in entries.items()})


def build_identity_world(seed: int = 11, n_verbs: int = 10, n_categories: int = 30,
                         afford_per_verb: int = 3, images_per_category: int = 2,
                         dim: int = 64) -> FixtureWorld:
    """World where each image embedding IS its category's text embedding."""
    rng = np.random.default_rng(seed)
    verbs = [f"en/verb{i:02d}" for i in range(n_verbs)]
    cats = [f"en/item{j:02d}" for j in range(n_categories)]
    pairs = []
    for verb in verbs:
        afford = rng.choice(n_categories, size=afford_per_verb, replace=False)
        pairs.extend((verb, cats[int(j)]) for j in afford)

    cat_vecs = {c: _unit(rng.normal(size=dim)) for c in cats}
    entries: dict[str, np.ndarray] = {}
    for c, vec in cat_vecs.items():
        entries[f"text:{render_prompt(DEFAULT_TEMPLATE, concept_label(c))}"] = vec
        for k in range(images_per_category):
            entries[f"image:{c}:{k}"] = vec
    afford_by_verb: dict[str, list[str]] = {}
    for verb, cat in pairs:
        afford_by_verb.setdefault(verb, []).append(cat)
    for verb, afford in afford_by_verb.items():
        prompt = AFFORDANCE_PROMPT.format(verb=concept_label(verb))
        entries[f"text:{prompt}"] = _unit(sum(cat_vecs[c] for c in sorted(afford)))

    # explicit index so categories never named in a pair still exist as distractors
    image_index = {
        c: [f"image:{c}:{k}" for k in range(images_per_category)] for c in cats
    }
    table = LabelTable(pairs, image_index=image_index)
    store = _store_from_arrays(entries)
    return FixtureWorld(
        table=table,
        store=store,
        provider=FileProvider(store),
        prior_source=None,
        meta={"kind": "identity", "seed": seed, "dim": dim},
    )


def build_margin_world(noise_seed: int = 0, geometry_seed: int = 101,
                       n_distractor_cats: int = 25, refs_per_cat: int = 120,
                       dim: int = 256, own: float = 0.80, margin: float = 0.15,
                       spurious_align: float = 0.45, alignment_jitter: float = 0.042,
                       n_concepts: int = 200, clean_spurious_ratio: float = 1.0,
                       sigma: float = 0.5) -> FixtureWorld:
    """Single-verb hard-negative world with a corrupted prior.

    Mean alignments (each gets per-image N(0, alignment_jitter^2) noise):
      relevant image  vs true concept      : own
      distractor image vs true concept     : own - margin
      distractor image vs its spurious pool: spurious_align  (< own - margin,
        so feedback from a wrongly selected distractor always favors the true
        concept over the spurious one that promoted it)
    The prior holds ``n_concepts`` candidates of which 20% are spurious pool
    detectors at ``clean_spurious_ratio`` times the true concept's clean mass;
    the rest are inert fillers. Distractor categories are assigned one
    detector each (round-robin), so detectors beyond the category count stay
    inert. All masses are corrupted with multiplicative exp(sigma * N(0,1))
    noise per draw.
    """
    verb = "en/cut"
    true_cat = "en/knife"
    n_spurious = max(1, n_concepts // 5)
    n_fillers = n_concepts - n_spurious - 1
    distractor_cats = [f"en/object{d:02d}" for d in range(n_distractor_cats)]
    spurious = [f"en/spurious{i}" for i in range(n_spurious)]
    fillers = [f"en/filler{i}" for i in range(n_fillers)]

    rng = np.random.default_rng(geometry_seed)
    n_basis = 1 + n_spurious + n_fillers + 1
    if n_basis > dim:
        raise ValueError(f"dim {dim} too small for {n_basis} basis directions")
    q, _ = np.linalg.qr(rng.normal(size=(dim, n_basis)))
    u_true = q[:, 0]
    anchors = q[:, :1 + n_spurious]  # columns: true concept, then pools
    filler_dirs = {f: q[:, 1 + n_spurious + i] for i, f in enumerate(fillers)}
    aff_dir = _unit(0.95 * u_true + np.sqrt(1 - 0.95 ** 2) * q[:, n_basis - 1])

    entries: dict[str, np.ndarray] = {}
    concept_dirs = {true_cat: u_true,
                    **{s: anchors[:, 1 + i] for i, s in enumerate(spurious)},
                    **filler_dirs}
    for cid, vec in concept_dirs.items():
        entries[f"text:{render_prompt(DEFAULT_TEMPLATE, concept_label(cid))}"] = vec
    entries[f"text:{AFFORDANCE_PROMPT.format(verb=concept_label(verb))}"] = aff_dir

    def image_vec(ref: str, targets: np.ndarray) -> np.ndarray:
        # anchor alignments realized exactly: residual lies outside the anchor span
        ref_rng = _ref_rng(geometry_seed, ref)
        t = targets + alignment_jitter * ref_rng.standard_normal(targets.size)
        w = ref_rng.normal(size=dim)
        w -= anchors @ (anchors.T @ w)
        w = _unit(w)
        return anchors @ t + np.sqrt(max(1.0 - float(t @ t), 1e-9)) * w

    pool_index = {cat: d % n_spurious for d, cat in enumerate(distractor_cats)}
    for k in range(refs_per_cat):
        targets = np.zeros(1 + n_spurious)
        targets[0] = own
        entries[f"image:{true_cat}:{k}"] = image_vec(f"image:{true_cat}:{k}", targets)
    for cat in distractor_cats:
        for k in range(refs_per_cat):
            targets = np.zeros(1 + n_spurious)
            targets[0] = own - margin
            targets[1 + pool_index[cat]] = spurious_align
            entries[f"image:{cat}:{k}"] = image_vec(f"image:{cat}:{k}", targets)

    pairs = [(verb, true_cat)]
    image_index = {
        cat: [f"image:{cat}:{k}" for k in range(refs_per_cat)]
        for cat in [true_cat, *distractor_cats]
    }
    table = LabelTable(pairs, image_index=image_index)
    store = _store_from_arrays(entries)

    # clean masses: true concept and spurious detectors compete, fillers share
    # a diffuse remainder (the long tail a real symbolic prior carries)
    clean = {true_cat: 1.0}
    for s in spurious:
        clean[s] = clean_spurious_ratio
    for f in fillers:
        clean[f] = 0.25
    noise_rng = np.random.default_rng(noise_seed)
    corrupted = {
        cid: mass * float(np.exp(sigma * noise_rng.standard_normal()))
        for cid, mass in sorted(clean.items())
    }
    prior = PriorSet.from_raw(verb, corrupted, PROVENANCE_CONCEPTNET, 0)

    def prior_source(v: str) -> PriorSet:
        if v != verb:
            raise KeyError(f"margin world only knows verb {verb!r}")
        return prior

    return FixtureWorld(
        table=table,
        store=store,
        provider=FileProvider(store),
        prior_source=prior_source,
        meta={
            "kind": "margin", "verb": verb, "true_cat": true_cat,
            "noise_seed": noise_seed, "geometry_seed": geometry_seed,
            "own": own, "margin": margin, "spurious_align": spurious_align,
            "sigma": sigma, "dim": dim,
        },
    )


def write_world_files(world: FixtureWorld, out_dir: str | Path) -> dict[str, Path]:
    """Materialize a world as CLI-consumable files: label table, images
    manifest and CEMB store."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = out / "labels.tsv"
    header = (f"#verbs={len(world.table.verbs)} "
              f"#categories={len(world.table.categories)}")
    lines = [header] + [f"{v}\t{c}" for v, c in sorted(world.table.affords)]
    labels.write_text("\n".join(lines) + "\n", encoding="utf-8")
    images = out / "images.json"
    images.write_text(json.dumps(
        {c: list(refs) for c, refs in world.table.image_index.items()},
        sort_keys=True, indent=2) + "\n", encoding="utf-8")
    cemb = out / "embeddings.cemb"
    write_store(cemb, {k: world.store.get(k).values for k in world.store.keys()})
    return {"labels": labels, "images": images, "embeddings": cemb}
