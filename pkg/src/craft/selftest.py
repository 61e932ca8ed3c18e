"""Built-in oracle suite for `craft selftest`: re-derives the two core
formulas against brute force and spot-checks the fixture worlds."""

from __future__ import annotations

import math
import sys
import time

import numpy as np

from .backends import make_backend
from .engine import LoopConfig, SimMatrix, grounding_energy, rerank_step
from .evaluation import EvalConfig, run_benchmark
from .priors import PriorSet
from .worlds import build_identity_world, build_margin_world


def _brute_energy(phi: list[float], sims: list[list[float]]) -> list[float]:
    # direct transliteration of the energy definition, no numpy
    n = len(sims[0])
    out = []
    for j in range(n):
        out.append(-max(phi[i] * sims[i][j] for i in range(len(phi))))
    return out


def _brute_rerank(phi: list[float], col: list[float], lam: float) -> list[float]:
    updated = [p * math.exp(lam * s) for p, s in zip(phi, col)]
    total = sum(updated)
    return [u / total for u in updated]


def _random_instance(rng: np.random.Generator):
    n_obj = int(rng.integers(1, 9))
    n_cand = int(rng.integers(1, 7))
    phi_raw = rng.random(n_obj) + 1e-6
    phi = phi_raw / phi_raw.sum()
    sims = rng.uniform(-1.0, 1.0, size=(n_obj, n_cand))
    objects = tuple(f"en/o{i}" for i in range(n_obj))
    p = PriorSet.from_raw("en/v", {o: float(s) for o, s in zip(objects, phi)},
                          "conceptnet", 0)
    aligned = np.asarray([p.score_of(o) for o in objects])
    m = SimMatrix(objects, tuple(f"image:c{j}" for j in range(n_cand)), sims)
    return p, m, aligned


def check_formula_fidelity(instances: int = 1000, seed: int = 2024,
                           tol: float = 1e-12) -> float:
    """Max abs deviation of engine energies/updates from brute force."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        p, m, phi = _random_instance(rng)
        energies = grounding_energy(p, m)
        brute = _brute_energy(list(phi), m.values.tolist())
        worst = max(worst, float(np.max(np.abs(energies - np.asarray(brute)))))

        lam = float(rng.uniform(0.0, 3.0))
        top = int(rng.integers(0, len(m.candidates)))
        stepped = rerank_step(p, m, top, lam)
        brute_phi = _brute_rerank(phi.tolist(), m.values[:, top].tolist(), lam)
        for obj, expected in zip(m.objects, brute_phi):
            worst = max(worst, abs(stepped.score_of(obj) - expected))
    if worst > tol:
        raise AssertionError(f"formula deviation {worst} exceeds {tol}")
    return worst


def run_selftest() -> int:
    started = time.time()
    checks: list[tuple[str, bool, str]] = []

    worst = check_formula_fidelity(instances=1000)
    checks.append(("formula-fidelity", True, f"max abs error {worst:.2e}"))

    identity = build_identity_world()
    oracle = make_backend("oracle-object", table=identity.table,
                          provider=identity.provider)
    report = run_benchmark(identity.table, oracle,
                           EvalConfig(n=5, n_pos=1, episodes_per_verb=5, base_seed=3))
    ok = report.aggregate["accuracy_at_1"] == 1.0
    checks.append(("identity-oracle", ok,
                   f"accuracy@1 {report.aggregate['accuracy_at_1']:.4f}"))

    world = build_margin_world(noise_seed=1)
    craft = make_backend("craft", provider=world.provider,
                         prior_source=world.prior_source, loop=LoopConfig(lam=1.0))
    prior_only = make_backend("prior-only", provider=world.provider,
                              prior_source=world.prior_source)
    cfg = EvalConfig(n=5, n_pos=1, episodes_per_verb=50, base_seed=5)
    craft_report = run_benchmark(world.table, craft, cfg)
    prior_report = run_benchmark(world.table, prior_only, cfg)
    ok = (craft_report.aggregate["accuracy_at_1"] >= prior_report.aggregate["accuracy_at_1"]
          and craft_report.aggregate["ndcg"] >= prior_report.aggregate["ndcg"])
    checks.append(("margin-directional", ok,
                   f"craft {craft_report.aggregate['accuracy_at_1']:.3f} vs "
                   f"prior {prior_report.aggregate['accuracy_at_1']:.3f}"))

    rerun = run_benchmark(world.table, prior_only, cfg)
    checks.append(("determinism", rerun.to_json() == prior_report.to_json(),
                   "repeat run byte-identical"))

    failed = 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} selftest:{name} ({detail})")
        failed += not ok
    print(f"selftest finished in {time.time() - started:.1f}s "
          f"({len(checks) - failed}/{len(checks)} passed)")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(run_selftest())
