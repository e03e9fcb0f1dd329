"""Stage-per-artifact pipeline orchestration.

Each stage reads the previous stage's artifacts from disk and writes its own
under `out/<stage>/seed<k>/`, so sweeps can reuse shared upstream products
and a re-run with identical config + seed reproduces every file bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations
from pathlib import Path

import numpy as np

from . import baselines, gnn, query_rank, sampler
from ._io import dump_json, load_json, write_csv, write_manifest
from .config import RunConfig
from .data_model import (
    Dataset,
    discretize,
    load_dataset,
    load_schema,
    partition_subgroups,
    inject_systematic_missingness,
    save_dataset,
    subgroups_from_sidecar,
    subgroups_to_sidecar,
)
from .info_theory import build_entropy_store, load_store, mi_direct, save_store
from .lattice import build_multiplex, graph_to_json, structural_counts
from .metrics import (
    MetricReport,
    build_test_set,
    ndcg_at_k,
    precision_at_k,
    tv_distance,
    upward_closure_accuracy,
)
from .synthgen import SUBGROUP_COLUMN, generate_complete, plant_check


class MissingArtifact(FileNotFoundError):
    pass


def _seed_dir(cfg: RunConfig, stage: str, seed: int) -> Path:
    d = cfg.out_path / stage / f"seed{seed}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifact(
            f"missing artifact {path}; run the `{producer}` stage first"
        )
    return path


def _map_subgroups(cfg: RunConfig, fn, items):
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------------------
# synth


def stage_synth(cfg: RunConfig) -> None:
    if cfg.synth is None:
        raise MissingArtifact("dataset.synth is not configured; nothing to do")
    for seed in cfg.seeds:
        scfg = dataclasses.replace(cfg.synth, seed=seed)
        dataset = generate_complete(scfg)
        out = _seed_dir(cfg, "synth", seed)
        save_dataset(dataset, out / "data.csv", out / "schema.json")
        dump_json(plant_check(dataset, scfg), out / "plant.json")
    write_manifest(cfg.out_path / "synth", "synth", cfg.hash(), cfg.seeds)


# ---------------------------------------------------------------------------
# prep


def _raw_dataset(cfg: RunConfig, seed: int) -> Dataset:
    if cfg.synth is not None:
        base = cfg.out_path / "synth" / f"seed{seed}"
        csv_path = _require(base / "data.csv", "synth")
        schema_path = base / "schema.json"
    else:
        csv_path = _require(Path(cfg.csv), "dataset.csv (external input)")
        schema_path = Path(cfg.schema)
    dataset = load_dataset(csv_path, load_schema(schema_path))
    for column, n_bins in sorted(cfg.discretize.items()):
        dataset = discretize(dataset, column, n_bins)
    return dataset


def stage_prep(cfg: RunConfig) -> None:
    for seed in cfg.seeds:
        dataset = _raw_dataset(cfg, seed)
        spec, subgroups = partition_subgroups(dataset, cfg.subgroup_features)
        if cfg.missing_p is not None:
            subgroups = inject_systematic_missingness(
                subgroups, cfg.missing_p, seed
            )
        out = _seed_dir(cfg, "prep", seed)
        save_dataset(dataset, out / "data.csv", out / "schema.json")
        dump_json(subgroups_to_sidecar(spec, subgroups), out / "subgroups.json")
    write_manifest(cfg.out_path / "prep", "prep", cfg.hash(), cfg.seeds)


def load_prepared(cfg: RunConfig, seed: int):
    base = cfg.out_path / "prep" / f"seed{seed}"
    csv_path = _require(base / "data.csv", "prep")
    dataset = load_dataset(csv_path, load_schema(base / "schema.json"))
    sidecar = load_json(base / "subgroups.json")
    return subgroups_from_sidecar(dataset, sidecar)


def _graph_for(cfg: RunConfig, subgroups):
    n = subgroups[0].n_features
    return build_multiplex(n, subgroups, cfg.level_bounds(n))


# ---------------------------------------------------------------------------
# lattice


def stage_lattice(cfg: RunConfig) -> None:
    for seed in cfg.seeds:
        _, subgroups = load_prepared(cfg, seed)
        graph = _graph_for(cfg, subgroups)
        n = graph.n_features
        expected = structural_counts(n, (graph.level_min, graph.level_max))
        built = (
            graph.n_lattice_nodes, len(graph.inter_edges), len(graph.intra_edges)
        )
        if built != expected:
            raise RuntimeError(
                f"lattice counts {built} disagree with closed forms {expected}"
            )
        out = _seed_dir(cfg, "lattice", seed)
        dump_json(graph_to_json(graph), out / "graph.json")
        dump_json(
            {
                "n_features": n,
                "level_min": graph.level_min,
                "level_max": graph.level_max,
                "nodes_per_lattice": built[0],
                "inter_level_edges": built[1],
                "intra_level_edges": built[2],
                "cross_edges": graph.n_cross_edges,
            },
            out / "counts.json",
        )
    write_manifest(cfg.out_path / "lattice", "lattice", cfg.hash(), cfg.seeds)


# ---------------------------------------------------------------------------
# sample


def _sample_one(cfg: RunConfig, seed: int, subgroup) -> sampler.SampleSet:
    n = subgroup.n_features
    bounds = cfg.level_bounds(n)
    budget = sampler.budget_from_rate(cfg.budget, subgroup.present_mask, bounds)
    fn = (
        sampler.randwalk_sample
        if cfg.sampling_method == "randwalk"
        else sampler.arbitrary_sample
    )
    return fn(subgroup.present_mask, budget, bounds, seed, subgroup.index)


def stage_sample(cfg: RunConfig) -> None:
    for seed in cfg.seeds:
        _, subgroups = load_prepared(cfg, seed)
        out = _seed_dir(cfg, "sample", seed)
        results = _map_subgroups(
            cfg, lambda g: _sample_one(cfg, seed, g), subgroups
        )
        for samples in results:
            sampler.save_samples(samples, out / f"samples_{samples.subgroup}.json")
    write_manifest(cfg.out_path / "sample", "sample", cfg.hash(), cfg.seeds)


def load_samples_for(cfg: RunConfig, seed: int, subgroups):
    base = cfg.out_path / "sample" / f"seed{seed}"
    return [
        sampler.load_samples(_require(base / f"samples_{g.index}.json", "sample"))
        for g in subgroups
    ]


# ---------------------------------------------------------------------------
# mi


def stage_mi(cfg: RunConfig) -> None:
    for seed in cfg.seeds:
        _, subgroups = load_prepared(cfg, seed)
        samples = load_samples_for(cfg, seed, subgroups)
        out = _seed_dir(cfg, "mi", seed)
        bounds = cfg.level_bounds(subgroups[0].n_features)

        def build(pair):
            g, s = pair
            store = build_entropy_store(g, bounds, masks=s.sorted_masks())
            labels = sampler.label_samples(store, s)
            return store, labels

        results = _map_subgroups(cfg, build, list(zip(subgroups, samples)))
        all_labels = {}
        for g, (store, labels) in zip(subgroups, results):
            save_store(store, out / f"store_{g.index}.json")
            all_labels[g.index] = labels
        dump_json(
            {
                str(i): {str(mask): mi for mask, mi in labels.items()}
                for i, labels in all_labels.items()
            },
            out / "labels.json",
        )
    write_manifest(cfg.out_path / "mi", "mi", cfg.hash(), cfg.seeds)


def load_labels_for(cfg: RunConfig, seed: int) -> dict[int, dict[int, float]]:
    path = _require(cfg.out_path / "mi" / f"seed{seed}" / "labels.json", "mi")
    raw = load_json(path)
    return {
        int(i): {int(mask): mi for mask, mi in labels.items()}
        for i, labels in raw.items()
    }


# ---------------------------------------------------------------------------
# train


def _model_hp(cfg: RunConfig) -> gnn.GnnHyperparams:
    return gnn.GnnHyperparams(**cfg.model)


def _mlp_hp(cfg: RunConfig) -> baselines.MlpHyperparams:
    base = {
        "epochs": _model_hp(cfg).epochs,
        "lr": _model_hp(cfg).lr,
        "weight_decay": _model_hp(cfg).weight_decay,
    }
    base.update(cfg.mlp)
    return baselines.MlpHyperparams(**base)


def stage_train(cfg: RunConfig) -> None:
    hp = _model_hp(cfg)
    for seed in cfg.seeds:
        _, subgroups = load_prepared(cfg, seed)
        labels = load_labels_for(cfg, seed)
        graph = _graph_for(cfg, subgroups)
        for g in subgroups:
            graph.attach_labels(g.index, labels[g.index])
        out = _seed_dir(cfg, "train", seed)
        for g in subgroups:
            model, report = gnn.train_subgroup(
                graph, g.index, labels[g.index], hp, seed
            )
            gnn.save_checkpoint(model, out / f"model_{g.index}.bin")
            dump_json(report.to_json(), out / f"report_{g.index}.json")
        if cfg.mlp_enabled:
            mlp_hp = _mlp_hp(cfg)
            for g in subgroups:
                model, report = baselines.train_mlp(
                    labels[g.index], g.n_features, mlp_hp, seed, g.index
                )
                _save_mlp(model, out / f"mlp_{g.index}.bin")
                dump_json(report.to_json(), out / f"mlp_report_{g.index}.json")
    write_manifest(cfg.out_path / "train", "train", cfg.hash(), cfg.seeds)


def _save_mlp(model: baselines.MlpModel, path: Path) -> None:
    header = {
        "format": "latticefs-mlp-v1",
        "n_features": model.n_features,
        "seed": model.seed,
        "trained": model.trained,
        "hyperparams": dataclasses.asdict(model.hp),
        "arrays": [[k, list(v.shape)] for k, v in model.params.items()],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for v in model.params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def _load_mlp(path: Path) -> baselines.MlpModel:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != "latticefs-mlp-v1":
            raise ValueError(f"{path} is not an MLP checkpoint")
        hp = baselines.MlpHyperparams(**header["hyperparams"])
        model = baselines.MlpModel(header["n_features"], hp, header["seed"])
        for name, shape in header["arrays"]:
            buf = fh.read(int(np.prod(shape)) * 8)
            model.params[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        model.trained = header["trained"]
    return model


# ---------------------------------------------------------------------------
# rank


def stage_rank(cfg: RunConfig) -> None:
    for seed in cfg.seeds:
        _, subgroups = load_prepared(cfg, seed)
        labels = load_labels_for(cfg, seed)
        graph = _graph_for(cfg, subgroups)
        for g in subgroups:
            graph.attach_labels(g.index, labels[g.index])
        out = _seed_dir(cfg, "rank", seed)
        names = subgroups[0].feature_names
        train_dir = cfg.out_path / "train" / f"seed{seed}"
        for g in subgroups:
            level_m = np.flatnonzero(graph.levels == cfg.m)
            needs_model = any(
                int(graph.masks[i]) not in labels[g.index] for i in level_m
            )
            model = None
            if needs_model:
                model = gnn.load_checkpoint(
                    _require(train_dir / f"model_{g.index}.bin", "train")
                )
            result = query_rank.topk(graph, None, model, g.index, cfg.m, cfg.K)
            dump_json(result.to_json(names), out / f"topk_{g.index}.json")

        if cfg.knn_enabled:
            knn_cfg = baselines.KnnConfig(k=cfg.knn_k)
            completed = _map_subgroups(
                cfg,
                lambda g: baselines.knn_impute(g, subgroups, knn_cfg),
                subgroups,
            )
            for g, comp in zip(subgroups, completed):
                full = query_rank.exhaustive_topk(
                    lambda mask: comp.columns_for(mask),
                    comp.n_features, comp.y, g.index, cfg.m,
                    len(list(combinations(range(comp.n_features), cfg.m))),
                )
                dump_json(full.to_json(names), out / f"knn_full_{g.index}.json")
                trimmed = query_rank.TopKResult(
                    g.index, cfg.m, cfg.K, full.entries[: cfg.K]
                )
                dump_json(trimmed.to_json(names), out / f"knn_{g.index}.json")

        if cfg.mlp_enabled:
            for g in subgroups:
                model = _load_mlp(
                    _require(train_dir / f"mlp_{g.index}.bin", "train")
                )
                level_masks = [
                    int(m) for m in graph.masks[graph.levels == cfg.m]
                ]
                preds = baselines.mlp_predict(model, level_masks)
                entries = []
                for mask in level_masks:
                    if mask in labels[g.index]:
                        entries.append(query_rank.TopKEntry(
                            mask, labels[g.index][mask], "exact"
                        ))
                    else:
                        entries.append(query_rank.TopKEntry(
                            mask, preds[mask], "predicted"
                        ))
                result = query_rank.TopKResult(
                    g.index, cfg.m, cfg.K,
                    query_rank._sorted_entries(entries, cfg.K),
                )
                dump_json(result.to_json(names), out / f"mlp_{g.index}.json")
    write_manifest(cfg.out_path / "rank", "rank", cfg.hash(), cfg.seeds)


# ---------------------------------------------------------------------------
# eval


def _ranking_from_json(path: Path) -> list[int]:
    obj = load_json(path)
    return [int(e["bitmask"]) for e in obj["entries"]]


def _test_level_masks(cfg, graph, samples, subgroup) -> list[int]:
    test = set(build_test_set(graph, samples, subgroup.index))
    return [
        int(m) for m in graph.masks[graph.levels == cfg.m] if int(m) in test
    ]


def stage_eval(cfg: RunConfig) -> MetricReport:
    """Rank-quality metrics follow the test-set protocol: each method ranks
    the level-m subsets that needed prediction (missing-feature or
    unsampled), scored against the exact shadow-data ranking of that same
    set. Exactly-labeled nodes are identical across methods and would only
    mask the differences."""
    report = MetricReport(seeds=list(cfg.seeds))
    for seed in cfg.seeds:
        _, subgroups = load_prepared(cfg, seed)
        labels = load_labels_for(cfg, seed)
        graph = _graph_for(cfg, subgroups)
        for g in subgroups:
            graph.attach_labels(g.index, labels[g.index])
        rank_dir = cfg.out_path / "rank" / f"seed{seed}"
        train_dir = cfg.out_path / "train" / f"seed{seed}"
        bounds = cfg.level_bounds(subgroups[0].n_features)
        samples = load_samples_for(cfg, seed, subgroups)

        test_masks = {
            g.index: _test_level_masks(cfg, graph, samples[g.index], g)
            for g in subgroups
        }
        truth: dict[int, set[int]] = {}
        k_used: dict[int, int] = {}
        for g in subgroups:
            masks = test_masks[g.index]
            exact = {
                mask: mi_direct(g.columns_for(mask, from_shadow=True), g.y)
                for mask in masks
            }
            order = sorted(masks, key=lambda m: (-exact[m], m))
            k_used[g.index] = min(cfg.K, len(order))
            truth[g.index] = set(order[: k_used[g.index]])

        gnn_rankings = {}
        for g in subgroups:
            model = gnn.load_checkpoint(
                _require(train_dir / f"model_{g.index}.bin", "train")
            )
            preds = gnn.predict_missing(model, graph, g.index)
            gnn_rankings[g.index] = sorted(
                test_masks[g.index], key=lambda m: (-preds[m], m)
            )

        knn_rankings = {}
        if cfg.knn_enabled:
            for g in subgroups:
                full = _ranking_from_json(
                    _require(rank_dir / f"knn_full_{g.index}.json", "rank")
                )
                test = set(test_masks[g.index])
                knn_rankings[g.index] = [m for m in full if m in test]

        mlp_rankings = {}
        if cfg.mlp_enabled:
            for g in subgroups:
                model = _load_mlp(
                    _require(train_dir / f"mlp_{g.index}.bin", "train")
                )
                preds = baselines.mlp_predict(model, test_masks[g.index])
                mlp_rankings[g.index] = sorted(
                    test_masks[g.index], key=lambda m: (-preds[m], m)
                )

        methods: dict[str, dict] = {}
        rankings = {"gnn": gnn_rankings}
        if cfg.knn_enabled:
            rankings["knn"] = knn_rankings
        if cfg.mlp_enabled:
            rankings["mlp"] = mlp_rankings
        for method, per_sub in rankings.items():
            ndcg, prec = {}, {}
            for g in subgroups:
                k = k_used[g.index]
                if k < 1:
                    continue
                ndcg[g.index] = ndcg_at_k(per_sub[g.index], truth[g.index], k)
                prec[g.index] = precision_at_k(per_sub[g.index], truth[g.index], k)
            methods[method] = {
                f"ndcg@{cfg.K}": ndcg, f"precision@{cfg.K}": prec,
            }

        tv = {}
        for g, s in zip(subgroups, samples):
            population_store = build_entropy_store(g, bounds)
            population = [
                population_store.mi(mask) for mask in sorted(population_store.h)
            ]
            sampled = [labels[g.index][m] for m in sorted(s.sampled)]
            tv[g.index] = tv_distance(sampled, population)
        tv_block = {cfg.sampling_method: tv}

        closure = {"overall": {}, "per_level": {}, "test_set_size": {}}
        for g in subgroups:
            model = gnn.load_checkpoint(
                _require(train_dir / f"model_{g.index}.bin", "train")
            )
            preds = gnn.forward(model, graph)[g.index]
            scores = {
                int(mask): float(preds[k])
                for k, mask in enumerate(graph.masks)
            }
            overall, per_level = upward_closure_accuracy(scores, graph, g.index)
            closure["overall"][g.index] = overall
            closure["per_level"][g.index] = per_level
            closure["test_set_size"][g.index] = len(
                build_test_set(graph, samples[g.index], g.index)
            )

        report.add_seed(seed, methods, tv_block, closure)

    out = cfg.out_path / "eval"
    out.mkdir(parents=True, exist_ok=True)
    dump_json(report.to_json(), out / "metrics.json")
    write_csv(
        out / "metrics.csv",
        ["seed", "subgroup", "method", "metric", "value"],
        report.csv_rows(),
    )
    write_manifest(out, "eval", cfg.hash(), cfg.seeds)
    return report


STAGES = {
    "synth": stage_synth,
    "prep": stage_prep,
    "lattice": stage_lattice,
    "sample": stage_sample,
    "mi": stage_mi,
    "train": stage_train,
    "rank": stage_rank,
    "eval": stage_eval,
}


def run_stages(cfg: RunConfig, stages: list[str]) -> None:
    for stage in stages:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        STAGES[stage](cfg)
