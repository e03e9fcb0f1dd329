"""Small shared pieces for the hand-rolled regressors: initialization,
AdamW-style optimizer, level-stratified validation splits, and a central
finite-difference gradient checker."""

from __future__ import annotations

import numpy as np


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


class Adam:
    """Adam with decoupled weight decay (applied to 2-D weights only)."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.b1**self.t
        bc2 = 1.0 - self.b2**self.t
        for k, p in self.params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and p.ndim == 2:
                update = update + self.weight_decay * p
            p -= self.lr * update


def stratified_split(
    levels: np.ndarray, val_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (train, val), stratified by lattice level.

    Levels with a single member stay in training; the validation set is
    forced non-empty by borrowing from the largest level if rounding left it
    empty.
    """
    n = len(levels)
    if n < 2:
        raise ValueError("need at least 2 labeled nodes to split")
    train, val = [], []
    for level in np.unique(levels):
        idx = np.flatnonzero(levels == level)
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round(val_fraction * len(idx)))
        n_val = min(n_val, len(idx) - 1)
        val.extend(idx[:n_val])
        train.extend(idx[n_val:])
    if not val:
        counts = {int(l): int((levels == l).sum()) for l in np.unique(levels)}
        biggest = max(counts, key=lambda l: (counts[l], l))
        moved = next(i for i in train if levels[i] == biggest)
        train.remove(moved)
        val.append(moved)
    return np.sort(np.asarray(train, dtype=np.int64)), np.sort(
        np.asarray(val, dtype=np.int64)
    )


def finite_difference_max_rel_error(
    loss_fn, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
    epsilon: float = 1e-5, floor: float = 1e-8,
) -> float:
    """Max relative error between analytic grads and central differences.

    Entries where both magnitudes fall below `floor` are skipped (zero-loss
    regions have no meaningful relative error).
    """
    worst = 0.0
    for k, p in params.items():
        flat = p.ravel()
        g = grads[k].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lp = loss_fn()
            flat[i] = orig - epsilon
            lm = loss_fn()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * epsilon)
            scale = max(abs(g[i]), abs(numeric))
            if scale < floor:
                continue
            worst = max(worst, abs(g[i] - numeric) / scale)
    return worst
