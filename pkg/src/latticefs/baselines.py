"""Comparison methods: hamming-KNN imputation feeding exact MI, and an MLP
regressor on the binary subset encodings."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._nn import Adam, finite_difference_max_rel_error, glorot_uniform, stratified_split
from .data_model import NULL, SubgroupData
from .gnn import TrainingDiverged, TrainReport


# ---------------------------------------------------------------------------
# KNN imputation


@dataclass
class KnnConfig:
    k: int = 5
    chunk: int = 512

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


def knn_impute(
    subgroup: SubgroupData,
    all_subgroups: list[SubgroupData],
    config: KnnConfig = KnnConfig(),
) -> SubgroupData:
    """Fill the subgroup's systematically missing cells from donor rows.

    Donors are rows of other subgroups where the feature is observed;
    distance is the hamming count over mutually observed features; the
    imputed value is the mode of the k nearest donors (distance ties broken
    by donor order, mode ties by smallest encoded value). Observed cells are
    never altered.
    """
    if subgroup.missing_mask == 0:
        return replace(subgroup, values=subgroup.values.copy())
    n = subgroup.n_features
    donors = np.vstack(
        [g.values for g in all_subgroups if g.index != subgroup.index]
    )
    m = len(donors)
    completed = subgroup.values.copy()
    missing_feats = [f for f in range(n) if subgroup.missing_mask >> f & 1]
    donor_ok = {f: np.flatnonzero(donors[:, f] != NULL) for f in missing_feats}
    for f, ok in donor_ok.items():
        if len(ok) == 0:
            raise ValueError(
                f"feature {subgroup.feature_names[f]!r} is observed nowhere"
            )

    # hamming distance over mutually observed coordinates, via two BLAS
    # products: dist = (#coords observed in both) - (#matching coords);
    # a NULL cell one-hot-encodes to the zero vector, so it contributes to
    # neither term
    offsets = np.concatenate([[0], np.cumsum(subgroup.domains)])
    width = int(offsets[-1])

    def one_hot(block: np.ndarray) -> np.ndarray:
        out = np.zeros((len(block), width), dtype=np.float32)
        for f in range(n):
            col = block[:, f]
            seen = col != NULL
            out[np.flatnonzero(seen), offsets[f] + col[seen]] = 1.0
        return out

    donors_hot = one_hot(donors)
    donors_obs = (donors != NULL).astype(np.float32)

    q_all = subgroup.values
    for start in range(0, subgroup.n_rows, config.chunk):
        q = q_all[start:start + config.chunk]
        c = len(q)
        q_obs = (q != NULL).astype(np.float32)
        common = q_obs @ donors_obs.T
        common -= one_hot(q) @ donors_hot.T
        dist = np.rint(common).astype(np.int32)
        for f in missing_feats:
            cand = donor_ok[f]
            k = min(config.k, len(cand))
            # composite key makes neighbor selection order-stable under ties
            keys = dist[:, cand] * np.int64(m) + cand[None, :]
            nearest = np.argpartition(keys, k - 1, axis=1)[:, :k]
            vals = donors[cand[nearest], f].astype(np.int64)
            dom = subgroup.domains[f]
            rows = np.arange(c)[:, None] * dom
            counts = np.bincount(
                (rows + vals).ravel(), minlength=c * dom
            ).reshape(c, dom)
            completed[start:start + c, f] = np.argmax(counts, axis=1)

    full_mask = (1 << n) - 1
    return replace(
        subgroup, values=completed, missing_mask=0, present_mask=full_mask
    )


# ---------------------------------------------------------------------------
# MLP on binary subset encodings


@dataclass
class MlpHyperparams:
    hidden: int = 64
    epochs: int = 1000
    lr: float = 1e-3
    weight_decay: float = 5e-4
    val_fraction: float = 0.2


class MlpModel:
    """Two hidden ReLU layers over the subset's indicator vector."""

    def __init__(self, n_features: int, hp: MlpHyperparams, seed: int):
        self.n_features = n_features
        self.hp = hp
        self.seed = seed
        self.trained = False
        rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
        h = hp.hidden
        self.params = {
            "w1": glorot_uniform(rng, h, n_features),
            "b1": np.zeros(h),
            "w2": glorot_uniform(rng, h, h),
            "b2": np.zeros(h),
            "w3": glorot_uniform(rng, 1, h),
            "b3": np.zeros(1),
        }

    def copy_params(self):
        return {k: v.copy() for k, v in self.params.items()}


def _encode_masks(masks, n_features: int) -> np.ndarray:
    arr = np.asarray(list(masks), dtype=np.int64)
    shifts = np.arange(n_features, dtype=np.int64)
    return ((arr[:, None] >> shifts) & 1).astype(np.float64)


def _mlp_forward(model: MlpModel, x: np.ndarray, keep_cache: bool):
    p = model.params
    z1 = x @ p["w1"].T + p["b1"]
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ p["w2"].T + p["b2"]
    h2 = np.maximum(z2, 0.0)
    out = h2 @ p["w3"].T.ravel() + p["b3"][0]
    cache = (x, z1, h1, z2, h2) if keep_cache else None
    return out, cache


def _mlp_loss_and_grads(model: MlpModel, x, targets):
    preds, (x, z1, h1, z2, h2) = _mlp_forward(model, x, keep_cache=True)
    residual = preds - targets
    loss = float(residual @ residual) / len(targets)
    d_out = 2.0 * residual / len(targets)
    p = model.params
    grads = {
        "w3": (d_out @ h2)[None, :],
        "b3": np.array([d_out.sum()]),
    }
    d_h2 = d_out[:, None] * p["w3"]
    d_z2 = d_h2 * (z2 > 0.0)
    grads["w2"] = d_z2.T @ h1
    grads["b2"] = d_z2.sum(axis=0)
    d_h1 = d_z2 @ p["w2"]
    d_z1 = d_h1 * (z1 > 0.0)
    grads["w1"] = d_z1.T @ x
    grads["b1"] = d_z1.sum(axis=0)
    return loss, grads, preds


def train_mlp(
    labels: dict[int, float],
    n_features: int,
    hp: MlpHyperparams,
    seed: int,
    subgroup: int = 0,
) -> tuple[MlpModel, TrainReport]:
    """Same optimizer and validation protocol as the graph model."""
    if len(labels) < 5:
        raise ValueError(f"need at least 5 labeled nodes, got {len(labels)}")
    masks = sorted(labels)
    x = _encode_masks(masks, n_features)
    targets = np.asarray([labels[m] for m in masks])
    levels = np.bitwise_count(np.asarray(masks, dtype=np.int64)).astype(np.int64)

    split_rng = np.random.default_rng(np.random.SeedSequence([seed, subgroup, 3]))
    train_sel, val_sel = stratified_split(levels, hp.val_fraction, split_rng)

    model = MlpModel(n_features, hp, seed)
    opt = Adam(model.params, lr=hp.lr, weight_decay=hp.weight_decay)
    train_losses, val_losses = [], []
    best_val, best_epoch = np.inf, -1
    best_params = model.copy_params()
    x_train, y_train = x[train_sel], targets[train_sel]
    x_val, y_val = x[val_sel], targets[val_sel]
    for epoch in range(hp.epochs):
        loss, grads, _ = _mlp_loss_and_grads(model, x_train, y_train)
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch)
        val_pred, _ = _mlp_forward(model, x_val, keep_cache=False)
        val_res = val_pred - y_val
        val_loss = float(val_res @ val_res) / len(y_val)
        train_losses.append(loss)
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val, best_epoch = val_loss, epoch
            best_params = model.copy_params()
        opt.step(grads)
    model.params = best_params
    model.trained = True
    report = TrainReport(
        subgroup=subgroup,
        train_losses=train_losses,
        val_losses=val_losses,
        selected_epoch=best_epoch,
        n_train=len(train_sel),
        n_val=len(val_sel),
    )
    return model, report


def mlp_predict(model: MlpModel, masks) -> dict[int, float]:
    """Clamped predictions, keyed by bitmask; a pure function of the mask."""
    if not model.trained:
        raise ValueError("model has not been trained")
    masks = list(masks)
    preds, _ = _mlp_forward(model, _encode_masks(masks, model.n_features), False)
    return {int(m): max(float(v), 0.0) for m, v in zip(masks, preds)}


def mlp_gradient_check(
    model: MlpModel, labels: dict[int, float], epsilon: float = 1e-5
) -> float:
    masks = sorted(labels)
    x = _encode_masks(masks, model.n_features)
    targets = np.asarray([labels[m] for m in masks])
    _, grads, _ = _mlp_loss_and_grads(model, x, targets)

    def loss_fn() -> float:
        preds, _ = _mlp_forward(model, x, keep_cache=False)
        residual = preds - targets
        return float(residual @ residual) / len(targets)

    return finite_difference_max_rel_error(loss_fn, model.params, grads, epsilon)
