"""Top-K feature subsets of size m per subgroup, merging exact and predicted
MI scores.

A labeled node's exact MI always beats a model prediction for the same node;
ties are broken by ascending bitmask so rankings are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import gnn
from .data_model import SubgroupData
from .info_theory import EntropyStore, mi_direct, mi_shared
from .lattice import MultiplexGraph, decode


@dataclass(frozen=True)
class TopKEntry:
    mask: int
    score: float
    provenance: str  # "exact" | "predicted"


@dataclass
class TopKResult:
    subgroup: int
    m: int
    k: int
    entries: list[TopKEntry]

    def masks(self) -> list[int]:
        return [e.mask for e in self.entries]

    def to_json(self, feature_names: list[str] | None = None) -> dict:
        n = len(feature_names) if feature_names else max(
            (e.mask.bit_length() for e in self.entries), default=0
        )
        out = {
            "subgroup": self.subgroup,
            "m": self.m,
            "K": self.k,
            "entries": [],
        }
        for e in self.entries:
            entry = {
                "bitmask": e.mask,
                "score": e.score,
                "provenance": e.provenance,
            }
            if feature_names:
                entry["features"] = [feature_names[f] for f in decode(e.mask, n)]
            out["entries"].append(entry)
        return out


def _sorted_entries(scored: list[TopKEntry], k: int) -> list[TopKEntry]:
    return sorted(scored, key=lambda e: (-e.score, e.mask))[:k]


def topk(
    graph: MultiplexGraph,
    store: EntropyStore | None,
    model: gnn.GnnModel | None,
    subgroup: int,
    m: int,
    k: int,
) -> TopKResult:
    """Rank the level-m nodes of one subgroup.

    Labeled nodes get their exact MI (recomputed from the store when one is
    supplied); all others need a trained model.
    """
    if not graph.level_min <= m <= graph.level_max:
        raise ValueError(
            f"m={m} outside level bounds [{graph.level_min}, {graph.level_max}]"
        )
    if k < 1:
        raise ValueError("K must be at least 1")
    labeled = graph.labels[subgroup]
    sel = np.flatnonzero(graph.levels == m)
    need_pred = [i for i in sel if int(graph.masks[i]) not in labeled]
    preds = None
    if need_pred:
        if model is None or not model.trained:
            raise ValueError(
                f"{len(need_pred)} level-{m} nodes of subgroup {subgroup} have "
                "no exact label; a trained model is required"
            )
        preds = gnn.forward(model, graph)[subgroup]

    scored = []
    for i in sel:
        mask = int(graph.masks[i])
        if mask in labeled:
            score = mi_shared(store, mask) if store is not None else labeled[mask]
            scored.append(TopKEntry(mask, float(score), "exact"))
        else:
            scored.append(TopKEntry(mask, max(float(preds[i]), 0.0), "predicted"))
    return TopKResult(subgroup, m, k, _sorted_entries(scored, k))


def exhaustive_topk(
    columns_for, n_features: int, y: np.ndarray, subgroup: int, m: int, k: int
) -> TopKResult:
    """Brute-force ranking of all C(n, m) subsets from supplied columns."""
    scored = []
    for combo in combinations(range(n_features), m):
        mask = 0
        for f in combo:
            mask |= 1 << f
        scored.append(
            TopKEntry(mask, mi_direct(columns_for(mask), y), "exact")
        )
    return TopKResult(subgroup, m, k, _sorted_entries(scored, k))


def ground_truth_topk(subgroup: SubgroupData, m: int, k: int) -> TopKResult:
    """Exact ranking over the uncorrupted shadow data (evaluation oracle)."""
    if subgroup.shadow is None:
        raise ValueError("no shadow copy: ground truth unavailable")
    if not 1 <= m <= subgroup.n_features:
        raise ValueError(f"m={m} out of range")
    return exhaustive_topk(
        lambda mask: subgroup.columns_for(mask, from_shadow=True),
        subgroup.n_features, subgroup.y, subgroup.index, m, k,
    )
