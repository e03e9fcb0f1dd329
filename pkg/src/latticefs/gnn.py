"""Heterogeneous message-passing regressor over the multiplex graph.

One model carries the full parameter set for every lattice: per layer t and
lattice i, an aggregation matrix applied to the mean of i's pooled in-lattice
neighbors, one cross-lattice matrix per ordered pair (j -> i) applied to the
aligned node of lattice j, and a concatenation matrix mixing the node's
previous representation with the aggregated message through a ReLU. A
per-lattice output row turns final representations into MI predictions.

Training is transductive and per subgroup: every node participates in
message passing, but the MSE loss sees only the labeled nodes of the target
subgroup. The backward pass is written out by hand; `gradient_check`
validates it against central finite differences.

Layer-0 representations are the subsets' binary indicator vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._nn import Adam, finite_difference_max_rel_error, glorot_uniform, stratified_split
from .lattice import MultiplexGraph


@dataclass
class GnnHyperparams:
    layers: int = 2
    hidden: int = 128
    epochs: int = 1000
    lr: float = 1e-3
    weight_decay: float = 5e-4
    val_fraction: float = 0.2

    def to_json(self) -> dict:
        return {
            "layers": self.layers, "hidden": self.hidden, "epochs": self.epochs,
            "lr": self.lr, "weight_decay": self.weight_decay,
            "val_fraction": self.val_fraction,
        }


@dataclass
class TrainReport:
    subgroup: int
    train_losses: list[float]
    val_losses: list[float]
    selected_epoch: int
    n_train: int
    n_val: int

    def to_json(self) -> dict:
        return {
            "subgroup": self.subgroup,
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "selected_epoch": self.selected_epoch,
            "n_train": self.n_train,
            "n_val": self.n_val,
        }


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class GnnModel:
    """Parameter container; see module docstring for the scheme."""

    def __init__(self, n_features: int, n_subgroups: int,
                 hp: GnnHyperparams, seed: int):
        self.n_features = n_features
        self.n_subgroups = n_subgroups
        self.hp = hp
        self.seed = seed
        self.trained = False
        rng = np.random.default_rng(np.random.SeedSequence([seed, n_subgroups]))
        d = hp.hidden
        self.params: dict[str, np.ndarray] = {}
        d_prev = n_features
        for t in range(1, hp.layers + 1):
            for i in range(n_subgroups):
                self.params[f"agg.{t}.{i}"] = glorot_uniform(rng, d, d_prev)
            for i in range(n_subgroups):
                for j in range(n_subgroups):
                    if j != i:
                        self.params[f"cross.{t}.{j}.{i}"] = glorot_uniform(
                            rng, d, d_prev
                        )
            for i in range(n_subgroups):
                self.params[f"conc.{t}.{i}"] = glorot_uniform(rng, d, d_prev + d)
            d_prev = d
        for i in range(n_subgroups):
            self.params[f"out.{i}"] = glorot_uniform(rng, 1, d)
            self.params[f"out_bias.{i}"] = np.zeros(1)

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


def _layer_dims(model: GnnModel) -> list[int]:
    return [model.n_features] + [model.hp.hidden] * model.hp.layers


def _bits_matrix(graph: MultiplexGraph) -> np.ndarray:
    shifts = np.arange(graph.n_features, dtype=np.int64)
    return ((graph.masks[:, None] >> shifts) & 1).astype(np.float64)


def _forward(model: GnnModel, graph: MultiplexGraph, keep_cache: bool):
    if graph.n_subgroups != model.n_subgroups:
        raise ValueError("graph/model subgroup count mismatch")
    if graph.n_features != model.n_features:
        raise ValueError("graph/model feature count mismatch")
    P = model.n_subgroups
    A = graph.mean_adjacency()
    h0 = _bits_matrix(graph)
    hs = [h0 for _ in range(P)]
    cache = []
    for t in range(1, model.hp.layers + 1):
        means = [A @ hs[i] for i in range(P)]
        gs = []
        for i in range(P):
            g = means[i] @ model.params[f"agg.{t}.{i}"].T
            for j in range(P):
                if j != i:
                    g += hs[j] @ model.params[f"cross.{t}.{j}.{i}"].T
            gs.append(g)
        cats = [np.hstack([hs[i], gs[i]]) for i in range(P)]
        zs = [cats[i] @ model.params[f"conc.{t}.{i}"].T for i in range(P)]
        new_hs = [np.maximum(z, 0.0) for z in zs]
        if keep_cache:
            cache.append((hs, means, cats, zs))
        hs = new_hs
    preds = np.stack(
        [
            hs[i] @ model.params[f"out.{i}"].T.ravel()
            + model.params[f"out_bias.{i}"][0]
            for i in range(P)
        ]
    )
    return preds, hs, cache


def forward(model: GnnModel, graph: MultiplexGraph) -> np.ndarray:
    """Predicted MI for every node; shape (n_subgroups, n_lattice_nodes)."""
    preds, _, _ = _forward(model, graph, keep_cache=False)
    return preds


def _backward(model: GnnModel, graph: MultiplexGraph, hs_final, cache, dpreds):
    P = model.n_subgroups
    A = graph.mean_adjacency()
    At = A.T.tocsr()
    dims = _layer_dims(model)
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    d_hs = []
    for i in range(P):
        grads[f"out.{i}"][0] = dpreds[i] @ hs_final[i]
        grads[f"out_bias.{i}"][0] = dpreds[i].sum()
        d_hs.append(dpreds[i][:, None] * model.params[f"out.{i}"])
    for t in range(model.hp.layers, 0, -1):
        hs_prev, means, cats, zs = cache[t - 1]
        d_prev = dims[t - 1]
        new_d = [np.zeros_like(hs_prev[i]) for i in range(P)]
        for i in range(P):
            dz = d_hs[i] * (zs[i] > 0.0)
            grads[f"conc.{t}.{i}"] += dz.T @ cats[i]
            dcat = dz @ model.params[f"conc.{t}.{i}"]
            new_d[i] += dcat[:, :d_prev]
            dg = dcat[:, d_prev:]
            grads[f"agg.{t}.{i}"] += dg.T @ means[i]
            new_d[i] += At @ (dg @ model.params[f"agg.{t}.{i}"])
            for j in range(P):
                if j != i:
                    grads[f"cross.{t}.{j}.{i}"] += dg.T @ hs_prev[j]
                    new_d[j] += dg @ model.params[f"cross.{t}.{j}.{i}"]
        d_hs = new_d
    return grads


def mse_loss_and_grads(
    model: GnnModel, graph: MultiplexGraph, subgroup: int,
    node_idx: np.ndarray, targets: np.ndarray,
):
    """MSE over the given nodes of one subgroup; returns (loss, grads, preds)."""
    preds, hs_final, cache = _forward(model, graph, keep_cache=True)
    residual = preds[subgroup][node_idx] - targets
    loss = float(residual @ residual) / len(targets)
    dpreds = np.zeros_like(preds)
    dpreds[subgroup][node_idx] = 2.0 * residual / len(targets)
    grads = _backward(model, graph, hs_final, cache, dpreds)
    return loss, grads, preds


def train_subgroup(
    graph: MultiplexGraph,
    subgroup: int,
    labels: dict[int, float],
    hp: GnnHyperparams,
    seed: int,
) -> tuple[GnnModel, TrainReport]:
    """Fit one model against the labeled nodes of `subgroup`.

    20% of the labels (level-stratified) are held out; the returned
    parameters are the ones with the best validation loss.
    """
    if len(labels) < 5:
        raise ValueError(f"need at least 5 labeled nodes, got {len(labels)}")
    masks = sorted(labels)
    node_idx = np.asarray([graph.node_index(m) for m in masks], dtype=np.int64)
    targets = np.asarray([labels[m] for m in masks])
    levels = graph.levels[node_idx]

    split_rng = np.random.default_rng(np.random.SeedSequence([seed, subgroup, 1]))
    train_sel, val_sel = stratified_split(levels, hp.val_fraction, split_rng)
    train_idx, val_idx = node_idx[train_sel], node_idx[val_sel]
    train_y, val_y = targets[train_sel], targets[val_sel]

    model = GnnModel(graph.n_features, graph.n_subgroups, hp, seed)
    opt = Adam(model.params, lr=hp.lr, weight_decay=hp.weight_decay)

    train_losses, val_losses = [], []
    best_val = np.inf
    best_epoch = -1
    best_params = model.copy_params()
    for epoch in range(hp.epochs):
        loss, grads, preds = mse_loss_and_grads(
            model, graph, subgroup, train_idx, train_y
        )
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch)
        val_res = preds[subgroup][val_idx] - val_y
        val_loss = float(val_res @ val_res) / len(val_y)
        train_losses.append(loss)
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = model.copy_params()
        opt.step(grads)

    model.params = best_params
    model.trained = True
    report = TrainReport(
        subgroup=subgroup,
        train_losses=train_losses,
        val_losses=val_losses,
        selected_epoch=best_epoch,
        n_train=len(train_idx),
        n_val=len(val_idx),
    )
    return model, report


def predict_missing(
    model: GnnModel, graph: MultiplexGraph, subgroup: int
) -> dict[int, float]:
    """Clamped predictions for every node of `subgroup` without an exact
    label (systematically missing or unsampled)."""
    if not model.trained:
        raise ValueError("model has not been trained")
    preds = forward(model, graph)[subgroup]
    labeled = graph.labels[subgroup]
    return {
        int(mask): max(float(preds[k]), 0.0)
        for k, mask in enumerate(graph.masks)
        if int(mask) not in labeled
    }


def gradient_check(
    model: GnnModel,
    graph: MultiplexGraph,
    subgroup: int,
    labels: dict[int, float],
    epsilon: float = 1e-5,
) -> float:
    """Analytic gradients vs central finite differences (pure MSE loss)."""
    masks = sorted(labels)
    node_idx = np.asarray([graph.node_index(m) for m in masks], dtype=np.int64)
    targets = np.asarray([labels[m] for m in masks])
    _, grads, _ = mse_loss_and_grads(model, graph, subgroup, node_idx, targets)

    def loss_fn() -> float:
        preds, _, _ = _forward(model, graph, keep_cache=False)
        residual = preds[subgroup][node_idx] - targets
        return float(residual @ residual) / len(targets)

    return finite_difference_max_rel_error(
        loss_fn, model.params, grads, epsilon=epsilon
    )


# ---------------------------------------------------------------------------
# checkpoints: JSON header line + raw float64 arrays in declared order
# (zip-based formats embed timestamps, which would break artifact
# reproducibility)


def save_checkpoint(model: GnnModel, path) -> None:
    header = {
        "format": "latticefs-gnn-v1",
        "n_features": model.n_features,
        "n_subgroups": model.n_subgroups,
        "seed": model.seed,
        "trained": model.trained,
        "hyperparams": model.hp.to_json(),
        "arrays": [[k, list(v.shape)] for k, v in model.params.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for v in model.params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path) -> GnnModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != "latticefs-gnn-v1":
            raise ValueError(f"{path} is not a model checkpoint")
        hp = GnnHyperparams(**header["hyperparams"])
        model = GnnModel(
            header["n_features"], header["n_subgroups"], hp, header["seed"]
        )
        for name, shape in header["arrays"]:
            size = int(np.prod(shape)) * 8
            buf = fh.read(size)
            model.params[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        model.trained = header["trained"]
    return model
