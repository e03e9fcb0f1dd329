"""Timing benchmarks: entropy sharing vs naive enumeration (per backend),
and pipeline-vs-KNN sweeps over features, subgroups, missingness and budget.

Timing CSVs are the one artifact class excluded from bit-exact
reproducibility.
"""

from __future__ import annotations

import dataclasses
import time
from itertools import combinations

from . import baselines, gnn, kernels, sampler
from ._io import write_csv, write_manifest
from .config import RunConfig
from .data_model import SubgroupData
from .gnn import GnnHyperparams
from .info_theory import build_entropy_store, mi_direct
from .lattice import build_multiplex
from .synthgen import SynthConfig, generate


def _single_subgroup(n_features: int, rows: int, seed: int) -> SubgroupData:
    cfg = SynthConfig(
        n_rows=rows,
        n_relevant=min(4, n_features),
        n_correlated=min(2, max(0, n_features - 4)),
        n_redundant=min(2, max(0, n_features - 6)),
        n_irrelevant=max(0, n_features - 8),
        n_subgroups=1,
        missing_p=None,
        seed=seed,
    )
    _, _, subgroups = generate(cfg)
    return subgroups[0]


def _all_masks(n: int):
    for level in range(1, n + 1):
        for combo in combinations(range(n), level):
            m = 0
            for f in combo:
                m |= 1 << f
            yield m


def bench_entropy_sharing(
    feature_counts=(8, 10, 12), rows: int = 20_000, seed: int = 0
) -> list[dict]:
    """Shared full-lattice construction vs per-subset direct MI enumeration.

    The naive arm re-derives each subset's contingency table from scratch;
    the shared arm reuses parent partitions. Shared timing is reported per
    available kernel backend.
    """
    out = []
    for n in feature_counts:
        sub = _single_subgroup(n, rows, seed)

        t0 = time.perf_counter()
        for mask in _all_masks(n):
            mi_direct(sub.columns_for(mask), sub.y)
        naive_s = time.perf_counter() - t0

        for name in kernels.available_backends():
            backend = kernels.get_backend(name)
            t0 = time.perf_counter()
            store = build_entropy_store(sub, (1, n), backend=backend)
            shared_s = time.perf_counter() - t0
            out.append(
                {
                    "n_features": n,
                    "rows": rows,
                    "backend": name,
                    "subsets": store.subsets_scanned,
                    "shared_seconds": shared_s,
                    "naive_seconds": naive_s,
                    "speedup": naive_s / shared_s if shared_s > 0 else float("inf"),
                }
            )
    return out


def _scenario(n_features: int, n_subgroups: int, p: float, rows: int, seed: int):
    cfg = SynthConfig(
        n_rows=rows,
        n_relevant=min(4, n_features),
        n_correlated=min(2, max(0, n_features - 4)),
        n_redundant=min(1, max(0, n_features - 6)),
        n_irrelevant=max(0, n_features - 7),
        n_subgroups=n_subgroups,
        missing_p=p,
        seed=seed,
    )
    _, _, subgroups = generate(cfg)
    return subgroups


def _time_pipeline(subgroups, budget: float, hp: GnnHyperparams, seed: int) -> float:
    """Sampling + budgeted MI labeling + per-subgroup training + inference."""
    n = subgroups[0].n_features
    bounds = (1, n)
    graph = build_multiplex(n, subgroups, bounds)
    t0 = time.perf_counter()
    labels = {}
    for g in subgroups:
        b = sampler.budget_from_rate(budget, g.present_mask, bounds)
        s = sampler.randwalk_sample(g.present_mask, b, bounds, seed, g.index)
        store = build_entropy_store(g, bounds, masks=s.sorted_masks())
        labels[g.index] = sampler.label_samples(store, s)
        graph.attach_labels(g.index, labels[g.index])
    for g in subgroups:
        model, _ = gnn.train_subgroup(graph, g.index, labels[g.index], hp, seed)
        gnn.forward(model, graph)
    return time.perf_counter() - t0


def _time_knn(subgroups, m: int, k: int = 5) -> float:
    """Imputation plus direct MI for every subset touching a missing feature."""
    t0 = time.perf_counter()
    for g in subgroups:
        completed = baselines.knn_impute(g, subgroups, baselines.KnnConfig(k=k))
        n = g.n_features
        for mask in _all_masks(n):
            if mask & g.missing_mask:
                mi_direct(completed.columns_for(mask), completed.y)
    return time.perf_counter() - t0


def run_bench(cfg: RunConfig) -> None:
    bench = cfg.bench
    out = cfg.out_path / "bench"
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]

    rows = bench.get("rows", 20_000)
    curve = bench_entropy_sharing(
        tuple(bench.get("features", (8, 10, 12))), rows, seed
    )
    write_csv(
        out / "bench_entropy.csv",
        ["n_features", "rows", "backend", "subsets", "shared_seconds",
         "naive_seconds", "speedup"],
        [[r[k] for k in ("n_features", "rows", "backend", "subsets",
                         "shared_seconds", "naive_seconds", "speedup")]
         for r in curve],
    )

    sweep = bench.get("sweep", {})
    sweep_rows = bench.get("sweep_rows", 10_000)
    hp = GnnHyperparams(**bench.get(
        "model", {"hidden": 32, "epochs": 100, "layers": 2}
    ))
    base = {
        "n_features": bench.get("base_features", 8),
        "n_subgroups": bench.get("base_subgroups", 4),
        "p": bench.get("base_p", 0.2),
        "budget": bench.get("base_budget", 0.6),
    }

    def run_case(n_features, n_subgroups, p, budget):
        subgroups = _scenario(n_features, n_subgroups, p, sweep_rows, seed)
        mf = _time_pipeline(subgroups, budget, hp, seed)
        knn = _time_knn(subgroups, cfg.m, cfg.knn_k)
        return mf, knn

    sweeps = {
        "features": sweep.get("features", [6, 8, 10]),
        "subgroups": sweep.get("subgroups", [2, 4, 6]),
        "p": sweep.get("p", [0.2, 0.35, 0.5]),
        "budget": sweep.get("budget", [0.25, 0.5, 0.75, 1.0]),
    }
    for param, values in sweeps.items():
        results = []
        for v in values:
            args = dict(base)
            if param == "features":
                args["n_features"] = v
            elif param == "subgroups":
                args["n_subgroups"] = v
            elif param == "p":
                args["p"] = v
            else:
                args["budget"] = v
            mf, knn = run_case(
                args["n_features"], args["n_subgroups"], args["p"], args["budget"]
            )
            results.append([v, mf, knn])
        write_csv(
            out / f"bench_{param}.csv",
            [param, "pipeline_seconds", "knn_seconds"],
            results,
        )

    write_manifest(out, "bench", cfg.hash(), [seed],
                   extra={"backends": kernels.available_backends()})
