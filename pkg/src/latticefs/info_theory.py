"""Exact empirical entropy and mutual information over discrete columns.

Two routes to the same MI value, kept deliberately independent:

* `mi_direct` evaluates the nested-sum definition straight off a contingency
  table built from scratch for the requested columns (the oracle, and the
  naive arm of the precomputation benchmark).
* `build_entropy_store` walks the subset lattice once, refining a row
  partition by one column per step (chain rule of joint entropy), and
  memoizes H(S) and H(S with Y) for every subset; `mi_shared` then reads MI
  as H(S) + H(Y) - H(S,Y) with constant arithmetic per query.

All entropies are in bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data_model import NULL, SubgroupData

MI_TOLERANCE = 1e-12


def _observed_rows(columns: list[np.ndarray]) -> np.ndarray:
    keep = np.ones(len(columns[0]), dtype=bool)
    for col in columns:
        keep &= col != NULL
    return keep


def empirical_entropy(columns: list[np.ndarray]) -> float:
    """Shannon entropy (bits) of the joint empirical distribution.

    Rows containing NULL in any selected column are excluded; only baseline
    paths ever pass such columns.
    """
    if not columns:
        raise ValueError("empty subset")
    keep = _observed_rows(columns)
    n = int(keep.sum())
    if n == 0:
        raise ValueError("zero usable rows")
    stacked = np.stack([c[keep] for c in columns], axis=1)
    _, counts = np.unique(stacked, axis=0, return_counts=True)
    c = counts.astype(np.float64)
    return float(np.log2(n) - (c @ np.log2(c)) / n)


def mi_direct(columns: list[np.ndarray], y: np.ndarray) -> float:
    """Joint MI between the selected columns and the target, by definition.

    Sums p(s,y) * log2(p(s,y) / (p(s) p(y))) over the non-empty cells of the
    empirical joint distribution. Clamped to >= 0.
    """
    if not columns:
        raise ValueError("empty subset")
    keep = _observed_rows(columns + [y])
    n = int(keep.sum())
    if n == 0:
        raise ValueError("zero usable rows")
    stacked = np.stack([c[keep] for c in columns] + [y[keep]], axis=1)
    cells, counts = np.unique(stacked, axis=0, return_counts=True)

    s_keys, s_inv = np.unique(cells[:, :-1], axis=0, return_inverse=True)
    s_counts = np.zeros(len(s_keys))
    np.add.at(s_counts, s_inv, counts)
    y_keys, y_inv = np.unique(cells[:, -1], return_inverse=True)
    y_counts = np.zeros(len(y_keys))
    np.add.at(y_counts, y_inv, counts)

    p_joint = counts / n
    p_s = s_counts[s_inv] / n
    p_y = y_counts[y_inv] / n
    mi = float(p_joint @ np.log2(p_joint / (p_s * p_y)))
    return max(mi, 0.0)


class MissingFeatureError(ValueError):
    """The subset touches a systematically missing feature: predict, don't
    compute."""


@dataclass
class EntropyStore:
    """Memoized joint-entropy tables for one subgroup.

    h[mask] = H(S), hy[mask] = H(S with Y), for every non-empty subset S of
    the present features whose level lies within the bounds.
    """

    subgroup: int
    present_mask: int
    level_min: int
    level_max: int
    h_y: float
    n_rows: int
    h: dict[int, float] = field(default_factory=dict)
    hy: dict[int, float] = field(default_factory=dict)
    subsets_scanned: int = 0

    def mi(self, mask: int) -> float:
        return mi_shared(self, mask)


def build_entropy_store(
    subgroup: SubgroupData,
    level_bounds: tuple[int, int] | None = None,
    masks=None,
    backend=None,
) -> EntropyStore:
    """Materialize H(S) and H(S with Y) for subsets of the present features.

    Each subset is visited exactly once: its row partition is derived from
    the parent subset's partition by refining with a single extra column.
    With `masks=None` the whole lattice up to level_max is covered; otherwise
    only the requested subsets and their chain prefixes are computed, so the
    cost scales with the sampling budget rather than with 2^n.
    """
    if backend is None:
        backend = kernels
    present_bits = [f for f in range(subgroup.n_features)
                    if subgroup.present_mask >> f & 1]
    if not present_bits:
        raise ValueError("subgroup has no present features")
    lo, hi = level_bounds if level_bounds is not None else (1, len(present_bits))
    if hi < 1:
        raise ValueError("level_max must be at least 1")
    if lo < 1 or lo > hi:
        raise ValueError(f"invalid level bounds ({lo}, {hi})")
    hi = min(hi, len(present_bits))

    y = np.ascontiguousarray(subgroup.y, dtype=np.int16)
    dom_y = subgroup.dom_y
    cols = {
        f: np.ascontiguousarray(subgroup.feature_column(f), dtype=np.int16)
        for f in present_bits
    }
    n = subgroup.n_rows
    if n == 0:
        raise ValueError("zero usable rows")

    needed = None
    if masks is not None:
        needed = set()
        for mask in masks:
            mask = int(mask)
            if mask == 0:
                raise ValueError("empty subset requested")
            if mask & ~subgroup.present_mask:
                raise MissingFeatureError(
                    f"subset {mask:#x} touches missing features of subgroup "
                    f"{subgroup.index}"
                )
            prefix = 0
            for f in present_bits:
                if mask >> f & 1:
                    prefix |= 1 << f
                    needed.add(prefix)

    root_ids = np.zeros(n, dtype=np.int32)
    store = EntropyStore(
        subgroup=subgroup.index,
        present_mask=subgroup.present_mask,
        level_min=lo,
        level_max=hi,
        h_y=backend.partition_entropy_with(root_ids, 1, y, dom_y),
        n_rows=n,
    )

    def visit(ids: np.ndarray, n_groups: int, start: int, mask: int, level: int):
        for pos in range(start, len(present_bits)):
            f = present_bits[pos]
            child = mask | 1 << f
            if needed is not None and child not in needed:
                continue
            dom = subgroup.domains[f]
            new_ids, ng, h = backend.refine_partition(ids, n_groups, cols[f], dom)
            store.subsets_scanned += 1
            if level + 1 >= lo:
                store.h[child] = h
                store.hy[child] = backend.partition_entropy_with(
                    new_ids, ng, y, dom_y
                )
            if level + 1 < hi:
                visit(new_ids, ng, pos + 1, child, level + 1)

    visit(root_ids, 1, 0, 0, 0)
    return store


def mi_shared(store: EntropyStore, mask: int) -> float:
    """MI from memoized entropies: H(S) + H(Y) - H(S,Y), clamped to >= 0."""
    if mask == 0:
        raise ValueError("empty subset")
    if mask & ~store.present_mask:
        raise MissingFeatureError(
            f"subset {mask:#x} touches missing features of subgroup "
            f"{store.subgroup}"
        )
    if mask not in store.h:
        level = bin(mask).count("1")
        raise ValueError(
            f"subset level {level} outside store bounds "
            f"[{store.level_min}, {store.level_max}]"
        )
    mi = store.h[mask] + store.h_y - store.hy[mask]
    return max(mi, 0.0)


def verify_upward_closure(
    store: EntropyStore, tolerance: float = MI_TOLERANCE
) -> list[tuple[int, int]]:
    """All (S, T) with S one level below T and MI(S) > MI(T) + tolerance.

    Expected empty: on the empirical distribution the MI gap equals a
    conditional MI, which is non-negative.
    """
    violations = []
    for t_mask in sorted(store.h):
        mi_t = mi_shared(store, t_mask)
        rest = t_mask
        while rest:
            bit = rest & -rest
            rest ^= bit
            s_mask = t_mask ^ bit
            if s_mask and s_mask in store.h:
                if mi_shared(store, s_mask) > mi_t + tolerance:
                    violations.append((s_mask, t_mask))
    return violations


# ---------------------------------------------------------------------------
# persistence


def store_to_json(store: EntropyStore) -> dict:
    return {
        "subgroup": store.subgroup,
        "present_mask": store.present_mask,
        "level_min": store.level_min,
        "level_max": store.level_max,
        "h_y": store.h_y,
        "n_rows": store.n_rows,
        "entries": [
            [mask, store.h[mask], store.hy[mask]] for mask in sorted(store.h)
        ],
    }


def store_from_json(obj: dict) -> EntropyStore:
    store = EntropyStore(
        subgroup=obj["subgroup"],
        present_mask=obj["present_mask"],
        level_min=obj["level_min"],
        level_max=obj["level_max"],
        h_y=obj["h_y"],
        n_rows=obj["n_rows"],
    )
    for mask, h, hy in obj["entries"]:
        store.h[int(mask)] = h
        store.hy[int(mask)] = hy
    return store


def save_store(store: EntropyStore, path) -> None:
    with open(path, "w") as fh:
        json.dump(store_to_json(store), fh, sort_keys=True)
        fh.write("\n")


def load_store(path) -> EntropyStore:
    with open(path) as fh:
        return store_from_json(json.load(fh))
