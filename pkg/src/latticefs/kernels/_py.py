"""Pure-numpy partition-refinement kernels (fallback backend).

A partition of the rows is carried as a dense int32 group-id array. Refining
by one more column costs a single bincount pass, which is what makes
lattice-wide entropy tables cheap: each subset reuses the row grouping of
its parent instead of re-encoding every column from scratch.
"""

import numpy as np

BACKEND = "python"


def _entropy_from_counts(counts: np.ndarray) -> float:
    c = counts[counts > 0].astype(np.float64)
    n = c.sum()
    if n <= 0:
        raise ValueError("entropy of an empty partition")
    return float(np.log2(n) - (c @ np.log2(c)) / n)


def refine_partition(ids, n_groups, col, dom):
    """Split each group of `ids` by the values of `col`.

    Returns (new_ids, new_group_count, joint_entropy_bits). `new_ids` are
    dense in [0, new_group_count).
    """
    raw = ids.astype(np.int64) * dom + col
    counts = np.bincount(raw, minlength=n_groups * dom)
    nz = np.flatnonzero(counts)
    h = _entropy_from_counts(counts[nz])
    remap = np.zeros(n_groups * dom, dtype=np.int32)
    remap[nz] = np.arange(len(nz), dtype=np.int32)
    new_ids = remap[raw]
    return new_ids, int(len(nz)), h


def partition_entropy_with(ids, n_groups, col, dom):
    """Joint entropy of the partition refined by `col`, without the ids."""
    raw = ids.astype(np.int64) * dom + col
    counts = np.bincount(raw, minlength=n_groups * dom)
    return _entropy_from_counts(counts)
