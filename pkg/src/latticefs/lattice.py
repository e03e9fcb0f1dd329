"""Feature-subset lattices and the multiplex graph over subgroups.

Subsets are bitmasks: bit f set means feature f is in the subset, so the
subset {f0, f2} over four features is 0b0101 and its level is the popcount.
Each subgroup gets a structurally identical lattice (nodes = non-empty
subsets within the level bounds); the multiplex graph adds, implicitly, an
edge between aligned nodes (same bitmask) of every pair of subgroups.

Edge families:
  inter-level  subset-of at level distance one (subsumption)
  intra-level  equal level, overlap of level-1 (and non-empty overlap)
  cross        identical bitmask, different subgroup
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.sparse as sp


def encode(features, n: int) -> int:
    """Bitmask of a non-empty set of feature indices."""
    mask = 0
    for f in features:
        if not 0 <= f < n:
            raise ValueError(f"feature index {f} out of range for {n} features")
        mask |= 1 << f
    if mask == 0:
        raise ValueError("empty feature set")
    return mask


def decode(mask: int, n: int) -> tuple[int, ...]:
    if mask <= 0 or mask >> n:
        raise ValueError(f"mask {mask:#x} invalid for {n} features")
    return tuple(f for f in range(n) if mask >> f & 1)


def subset_level(mask: int) -> int:
    return bin(mask).count("1")


def masks_in_bounds(n: int, level_min: int, level_max: int) -> np.ndarray:
    """All non-empty subset masks with level in bounds, ascending."""
    if not 1 <= level_min <= level_max <= n:
        raise ValueError(f"invalid level bounds ({level_min}, {level_max})")
    all_masks = np.arange(1, 1 << n, dtype=np.int64)
    levels = np.bitwise_count(all_masks)
    return all_masks[(levels >= level_min) & (levels <= level_max)]


def structural_counts(
    n: int, level_bounds: tuple[int, int] | None = None
) -> tuple[int, int, int]:
    """Closed-form (node, inter-level edge, intra-level edge) counts.

    With full bounds these reduce to 2^n - 1 nodes, (n/2)(2^n - 2)
    inter-level edges, and sum over levels of C(n,l) * l * (n-l) / 2
    intra-level edges. Used as an oracle against built graphs.
    """
    if n < 1:
        raise ValueError("n must be positive")
    lo, hi = level_bounds if level_bounds is not None else (1, n)
    if not 1 <= lo <= hi <= n:
        raise ValueError(f"invalid level bounds ({lo}, {hi})")
    nodes = sum(comb(n, l) for l in range(lo, hi + 1))
    inter = sum(comb(n, l) * l for l in range(max(lo + 1, 2), hi + 1))
    intra = sum(
        comb(n, l) * l * (n - l) // 2 for l in range(max(lo, 2), hi + 1)
    )
    return nodes, inter, intra


@dataclass
class MultiplexGraph:
    n_features: int
    n_subgroups: int
    level_min: int
    level_max: int
    masks: np.ndarray                 # ascending bitmasks, shared by lattices
    levels: np.ndarray
    inter_edges: np.ndarray           # (E, 2) indices: (subset, superset)
    intra_edges: np.ndarray           # (E, 2) indices: (smaller mask, larger)
    missing_masks: list[int]
    computable: np.ndarray            # (n_subgroups, n_nodes) bool
    labels: list[dict[int, float]] = field(default_factory=list)
    _index: dict[int, int] = field(default_factory=dict, repr=False)
    _mean_adj: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.labels:
            self.labels = [dict() for _ in range(self.n_subgroups)]
        if not self._index:
            self._index = {int(m): i for i, m in enumerate(self.masks)}

    @property
    def n_lattice_nodes(self) -> int:
        return len(self.masks)

    @property
    def n_nodes(self) -> int:
        return self.n_subgroups * self.n_lattice_nodes

    @property
    def n_cross_edges(self) -> int:
        pairs = self.n_subgroups * (self.n_subgroups - 1) // 2
        return pairs * self.n_lattice_nodes

    def node_index(self, mask: int) -> int:
        try:
            return self._index[mask]
        except KeyError:
            raise KeyError(f"mask {mask:#x} not in graph") from None

    def attach_labels(self, subgroup: int, labeled: dict[int, float]) -> None:
        for mask in labeled:
            self.node_index(mask)
        self.labels[subgroup] = dict(labeled)

    def mean_adjacency(self) -> sp.csr_matrix:
        """Row-normalized pooled intra-lattice adjacency (inter + intra).

        Shared by all lattices since they are structurally identical.
        Zero-degree rows stay zero.
        """
        if self._mean_adj is None:
            v = self.n_lattice_nodes
            edges = np.vstack([self.inter_edges, self.intra_edges])
            rows = np.concatenate([edges[:, 0], edges[:, 1]])
            cols = np.concatenate([edges[:, 1], edges[:, 0]])
            adj = sp.csr_matrix(
                (np.ones(len(rows)), (rows, cols)), shape=(v, v)
            )
            deg = np.asarray(adj.sum(axis=1)).ravel()
            inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
            self._mean_adj = sp.diags(inv) @ adj
        return self._mean_adj


def _lookup(masks: np.ndarray, targets: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(masks, targets)
    ok = (idx < len(masks))
    found = np.where(ok, idx, 0)
    ok &= masks[found] == targets
    if not np.all(ok):
        raise AssertionError("edge endpoint outside the node set")
    return idx


def build_multiplex(
    n: int,
    subgroups,
    level_bounds: tuple[int, int] | None = None,
) -> MultiplexGraph:
    """Build per-subgroup lattices plus the aligned cross-subgroup links.

    `subgroups` is a list of SubgroupData or of plain missing-feature masks.
    Nodes whose subset intersects a subgroup's missing features stay in the
    graph but are marked uncomputable for that subgroup.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not len(subgroups):
        raise ValueError("at least one subgroup required")
    lo, hi = level_bounds if level_bounds is not None else (1, n)
    masks = masks_in_bounds(n, lo, hi)
    levels = np.bitwise_count(masks)

    missing_masks = [
        g if isinstance(g, (int, np.integer)) else g.missing_mask
        for g in subgroups
    ]

    inter_src, inter_dst = [], []
    for b in range(n):
        bit = 1 << b
        has = (masks & bit) > 0
        sel = masks[has & (levels > max(lo, 1))]
        if len(sel) == 0:
            continue
        parents = sel ^ bit
        keep = parents > 0
        src = _lookup(masks, parents[keep])
        dst = _lookup(masks, sel[keep])
        inter_src.append(src)
        inter_dst.append(dst)
    inter = (
        np.stack([np.concatenate(inter_src), np.concatenate(inter_dst)], axis=1)
        if inter_src else np.empty((0, 2), dtype=np.int64)
    )

    intra_u, intra_v = [], []
    for a in range(n):
        for c in range(a + 1, n):
            bit_a, bit_c = 1 << a, 1 << c
            sel = masks[
                ((masks & bit_a) > 0) & ((masks & bit_c) == 0) & (levels >= 2)
            ]
            if len(sel) == 0:
                continue
            partner = (sel ^ bit_a) | bit_c
            intra_u.append(_lookup(masks, sel))
            intra_v.append(_lookup(masks, partner))
    intra = (
        np.stack([np.concatenate(intra_u), np.concatenate(intra_v)], axis=1)
        if intra_u else np.empty((0, 2), dtype=np.int64)
    )

    computable = np.stack([(masks & m) == 0 for m in missing_masks])
    return MultiplexGraph(
        n_features=n,
        n_subgroups=len(subgroups),
        level_min=lo,
        level_max=hi,
        masks=masks,
        levels=levels,
        inter_edges=inter,
        intra_edges=intra,
        missing_masks=missing_masks,
        computable=computable,
    )


def neighbors(graph: MultiplexGraph, node: tuple[int, int], family: str):
    """Neighbor nodes (subgroup, mask) for one edge family.

    Families: inter_down, inter_up, inter, intra, cross. Order is ascending
    bitmask, then subgroup index.
    """
    subgroup, mask = node
    if not 0 <= subgroup < graph.n_subgroups:
        raise KeyError(f"unknown subgroup {subgroup}")
    idx = graph.node_index(mask)

    if family == "cross":
        return [(j, mask) for j in range(graph.n_subgroups) if j != subgroup]

    if family in ("inter_down", "inter_up", "inter"):
        edges = graph.inter_edges
        out = []
        if family in ("inter_down", "inter"):
            out.extend(edges[edges[:, 1] == idx, 0])
        if family in ("inter_up", "inter"):
            out.extend(edges[edges[:, 0] == idx, 1])
    elif family == "intra":
        edges = graph.intra_edges
        out = list(edges[edges[:, 1] == idx, 0])
        out.extend(edges[edges[:, 0] == idx, 1])
    else:
        raise ValueError(f"unknown edge family {family!r}")
    masks = sorted(int(graph.masks[i]) for i in out)
    return [(subgroup, m) for m in masks]


def graph_to_json(graph: MultiplexGraph) -> dict:
    """Debug/baseline export: node list with status flags, edges by family.

    Cross-lattice edges are implicit (every subgroup pair is linked at each
    identical bitmask), so only their count is recorded.
    """
    nodes = []
    for i in range(graph.n_subgroups):
        labeled = graph.labels[i]
        for k, mask in enumerate(graph.masks):
            nodes.append(
                {
                    "subgroup": i,
                    "mask": int(mask),
                    "level": int(graph.levels[k]),
                    "computable": bool(graph.computable[i, k]),
                    "labeled": int(mask) in labeled,
                }
            )
    return {
        "n_features": graph.n_features,
        "n_subgroups": graph.n_subgroups,
        "level_min": graph.level_min,
        "level_max": graph.level_max,
        "missing_masks": [int(m) for m in graph.missing_masks],
        "nodes": nodes,
        "inter_level_edges": graph.inter_edges.tolist(),
        "intra_level_edges": graph.intra_edges.tolist(),
        "cross_edges": "aligned-bitmask cliques across subgroups",
        "n_cross_edges": graph.n_cross_edges,
    }
