"""Rank-quality and distribution metrics, plus the test-set protocol."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import MultiplexGraph
from .sampler import SampleSet


def ndcg_at_k(ranking, truth, k: int) -> float:
    """Binary-gain nDCG: hits against the ground-truth top set, discounted by
    log2(rank + 1), normalized by the ideal prefix of length k."""
    if k < 1:
        raise ValueError("K must be at least 1")
    truth = set(truth)
    if len(truth) < k:
        raise ValueError(f"truth set has {len(truth)} < K={k} entries")
    ranking = list(ranking)
    if len(ranking) < k:
        raise ValueError(f"ranking has {len(ranking)} < K={k} entries")
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    hits = np.array([1.0 if ranking[i] in truth else 0.0 for i in range(k)])
    return float((hits @ discounts) / discounts.sum())


def precision_at_k(ranking, truth, k: int) -> float:
    if k < 1:
        raise ValueError("K must be at least 1")
    prefix = set(list(ranking)[:k])
    return len(prefix & set(truth)) / k


def tv_distance(sample_values, population_values, n_bins: int = 20) -> float:
    """L1 total variation between histogram densities over a shared binning.

    Bins are equal-width over the combined observed range.
    """
    s = np.asarray(sample_values, dtype=np.float64)
    p = np.asarray(population_values, dtype=np.float64)
    if s.size == 0 or p.size == 0:
        raise ValueError("empty input")
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    lo = min(s.min(), p.min())
    hi = max(s.max(), p.max())
    if hi == lo:
        return 0.0
    edges = np.linspace(lo, hi, n_bins + 1)
    s_hist, _ = np.histogram(s, bins=edges)
    p_hist, _ = np.histogram(p, bins=edges)
    return float(np.abs(s_hist / s.size - p_hist / p.size).sum())


def upward_closure_accuracy(
    scores: dict[int, float], graph: MultiplexGraph, subgroup: int
) -> tuple[float, dict[int, float]]:
    """Fraction of inter-level edges whose superset scores at least as high
    as its subset, overall and grouped by the superset's level."""
    try:
        arr = np.asarray([scores[int(m)] for m in graph.masks], dtype=np.float64)
    except KeyError as err:
        raise ValueError(f"missing score for subset {err.args[0]:#x}") from None
    edges = graph.inter_edges
    if len(edges) == 0:
        return 1.0, {}
    sat = arr[edges[:, 1]] >= arr[edges[:, 0]]
    upper = graph.levels[edges[:, 1]]
    per_level = {
        int(l): float(sat[upper == l].mean()) for l in np.unique(upper)
    }
    return float(sat.mean()), per_level


def build_test_set(
    graph: MultiplexGraph, samples: SampleSet, subgroup: int
) -> list[int]:
    """Subsets touching a missing feature, plus computable-but-unsampled
    ones, within the level bounds."""
    missing = graph.missing_masks[subgroup]
    out = []
    for mask in graph.masks:
        mask = int(mask)
        if mask & missing or mask not in samples.sampled:
            out.append(mask)
    return out


@dataclass
class MetricReport:
    """Per-subgroup and averaged evaluation results for one scenario."""

    seeds: list[int]
    per_seed: list[dict] = field(default_factory=list)

    def add_seed(self, seed: int, methods: dict, tv: dict | None,
                 closure: dict | None) -> None:
        self.per_seed.append(
            {"seed": seed, "methods": methods, "tv": tv, "closure": closure}
        )

    def averaged(self) -> dict:
        """Mean over seeds of the per-subgroup-averaged metric values."""
        agg: dict[str, dict[str, list[float]]] = {}
        for entry in self.per_seed:
            for method, metrics in entry["methods"].items():
                for name, per_subgroup in metrics.items():
                    vals = list(per_subgroup.values())
                    agg.setdefault(method, {}).setdefault(name, []).append(
                        float(np.mean(vals))
                    )
        return {
            method: {name: float(np.mean(v)) for name, v in names.items()}
            for method, names in agg.items()
        }

    def to_json(self) -> dict:
        return {
            "seeds": self.seeds,
            "per_seed": self.per_seed,
            "averaged": self.averaged(),
        }

    def csv_rows(self) -> list[list]:
        rows = []
        for entry in self.per_seed:
            for method, metrics in entry["methods"].items():
                for name, per_subgroup in metrics.items():
                    for sub, value in per_subgroup.items():
                        rows.append([entry["seed"], sub, method, name, value])
        return rows
