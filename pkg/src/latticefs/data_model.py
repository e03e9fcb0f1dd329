"""Tabular data model: discretized columns, subgroup partitioning, and
systematic missingness.

A dataset is a set of discrete feature columns plus a target column. Cells
are stored as dense integer codes into each column's domain; NULL is the
sentinel -1 (NaN for not-yet-discretized numeric columns). Subgroups are the
horizontal fragments selected by the minterm predicates over the chosen
subgrouping features; a feature is systematically missing in a subgroup when
every one of its cells there is NULL.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

NULL = -1

CATEGORICAL = "categorical"
NUMERIC = "numeric"


@dataclass
class Column:
    name: str
    kind: str
    data: np.ndarray
    domain: list[str] | None = None
    bin_edges: list[float] | None = None

    def __post_init__(self):
        if self.kind not in (CATEGORICAL, NUMERIC):
            raise ValueError(f"unknown column kind {self.kind!r}")
        if self.kind == CATEGORICAL and self.domain is None:
            raise ValueError(f"categorical column {self.name!r} needs a domain")

    @property
    def domain_size(self) -> int:
        return len(self.domain) if self.domain is not None else 0


@dataclass
class Dataset:
    columns: list[Column]
    target: Column

    def __post_init__(self):
        n = len(self.target.data)
        for col in self.columns:
            if len(col.data) != n:
                raise ValueError(
                    f"column {col.name!r} has {len(col.data)} rows, target has {n}"
                )
        if self.target.kind != CATEGORICAL:
            raise ValueError("target column must be categorical")
        if np.any(self.target.data == NULL):
            raise ValueError("NULL in target column")
        for col in self.columns:
            if col.kind == CATEGORICAL:
                bad = (col.data != NULL) & (
                    (col.data < 0) | (col.data >= col.domain_size)
                )
                if np.any(bad):
                    raise ValueError(f"out-of-domain code in column {col.name!r}")

    @property
    def n_rows(self) -> int:
        return len(self.target.data)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass
class SubgroupSpec:
    subgroup_features: list[str]
    predicates: list[dict[str, str]]


@dataclass
class SubgroupData:
    """One horizontal fragment with its present/missing feature masks.

    `values` holds the live view (NULL where a feature is missing here);
    `shadow` keeps the pre-injection values so evaluation oracles can score
    against uncorrupted ground truth.
    """

    index: int
    predicate: dict[str, str]
    row_indices: np.ndarray
    feature_names: list[str]
    domains: list[int]
    values: np.ndarray
    y: np.ndarray
    dom_y: int
    present_mask: int
    missing_mask: int
    shadow: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def selection_feature_count(self) -> int:
        return self.n_features

    def feature_column(self, f: int, from_shadow: bool = False) -> np.ndarray:
        src = self.shadow if from_shadow else self.values
        if src is None:
            raise ValueError("no shadow copy attached")
        return src[:, f]

    def columns_for(self, mask: int, from_shadow: bool = False) -> list[np.ndarray]:
        return [
            self.feature_column(f, from_shadow)
            for f in range(self.n_features)
            if mask >> f & 1
        ]


# ---------------------------------------------------------------------------
# schema + CSV I/O


def load_schema(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _parse_cell(cell: str, spec: dict, colname: str, rownum: int):
    if cell == "":
        return NULL, np.nan
    if spec["kind"] == NUMERIC:
        try:
            return None, float(cell)
        except ValueError:
            raise ValueError(
                f"row {rownum}: cell {cell!r} in numeric column {colname!r} "
                "is not a number"
            ) from None
    try:
        return spec["_index"][cell], None
    except KeyError:
        raise ValueError(
            f"row {rownum}: value {cell!r} outside declared domain of "
            f"column {colname!r}"
        ) from None


def load_dataset(path, schema: dict) -> Dataset:
    """Read a comma-separated file (header row, empty cell = NULL)."""
    specs = {c["name"]: dict(c) for c in schema["columns"]}
    target_spec = dict(schema["target"])
    specs[target_spec["name"]] = target_spec
    target_spec.setdefault("kind", CATEGORICAL)
    for s in specs.values():
        s.setdefault("kind", CATEGORICAL)
        if s["kind"] == CATEGORICAL:
            s["_index"] = {v: i for i, v in enumerate(s["domain"])}

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty file: missing header row") from None
        if sorted(header) != sorted(specs):
            raise ValueError(
                f"header {header} does not match schema columns {sorted(specs)}"
            )
        raw: list[list[str]] = []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"row {rownum}: expected {len(header)} cells, got {len(row)}"
                )
            raw.append(row)

    n = len(raw)
    by_name = {}
    for j, name in enumerate(header):
        spec = specs[name]
        if spec["kind"] == NUMERIC:
            data = np.full(n, np.nan)
            for i, row in enumerate(raw):
                _, v = _parse_cell(row[j], spec, name, i + 2)
                data[i] = v
            by_name[name] = Column(name, NUMERIC, data)
        else:
            data = np.full(n, NULL, dtype=np.int16)
            for i, row in enumerate(raw):
                code, _ = _parse_cell(row[j], spec, name, i + 2)
                data[i] = code
            by_name[name] = Column(
                name, CATEGORICAL, data, domain=list(spec["domain"]),
                bin_edges=spec.get("bin_edges"),
            )

    target_name = schema["target"]["name"]
    if np.any(by_name[target_name].data == NULL):
        raise ValueError("NULL in target column")
    columns = [by_name[c["name"]] for c in schema["columns"]]
    return Dataset(columns=columns, target=by_name[target_name])


def dataset_schema(dataset: Dataset) -> dict:
    def col_schema(c: Column) -> dict:
        out = {"name": c.name, "kind": c.kind}
        if c.domain is not None:
            out["domain"] = list(c.domain)
        if c.bin_edges is not None:
            out["bin_edges"] = list(c.bin_edges)
        return out

    return {
        "columns": [col_schema(c) for c in dataset.columns],
        "target": col_schema(dataset.target),
    }


def save_dataset(dataset: Dataset, csv_path, schema_path=None) -> None:
    names = dataset.column_names + [dataset.target.name]
    cols = dataset.columns + [dataset.target]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(dataset.n_rows):
            row = []
            for c in cols:
                v = c.data[i]
                if c.kind == NUMERIC:
                    row.append("" if np.isnan(v) else repr(float(v)))
                else:
                    row.append("" if v == NULL else c.domain[v])
            writer.writerow(row)
    if schema_path is not None:
        with open(schema_path, "w") as fh:
            json.dump(dataset_schema(dataset), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# discretization


def discretize(dataset: Dataset, column: str, n_bins: int) -> Dataset:
    """Replace a numeric column by equal-width bin indices in [0, n_bins).

    Bins are right-closed, so a value sitting exactly on an interior edge
    falls into the lower bin. NULLs are preserved. Returns a new Dataset.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    if n_bins > 9:
        raise ValueError("n_bins must be at most 9")
    col = dataset.column(column)
    if col.kind == NUMERIC:
        vals = col.data.astype(np.float64)
    else:
        try:
            lookup = np.array([float(v) for v in col.domain])
        except ValueError:
            raise ValueError(f"non-numeric column {column!r}") from None
        vals = np.where(col.data == NULL, np.nan, lookup[np.clip(col.data, 0, None)])
    observed = vals[~np.isnan(vals)]
    if observed.size == 0:
        raise ValueError(f"column {column!r} has no observed values to bin")
    lo, hi = float(observed.min()), float(observed.max())
    edges = np.linspace(lo, hi, n_bins + 1)
    codes = np.full(len(vals), NULL, dtype=np.int16)
    seen = ~np.isnan(vals)
    codes[seen] = np.digitize(vals[seen], edges[1:-1], right=True)
    new_col = Column(
        column, CATEGORICAL, codes,
        domain=[str(i) for i in range(n_bins)],
        bin_edges=[float(e) for e in edges],
    )
    columns = [new_col if c.name == column else c for c in dataset.columns]
    target = new_col if dataset.target.name == column else dataset.target
    return Dataset(columns=columns, target=target)


# ---------------------------------------------------------------------------
# subgroup partitioning


def partition_subgroups(
    dataset: Dataset, subgroup_features: list[str]
) -> tuple[SubgroupSpec, list[SubgroupData]]:
    """Split the dataset by the minterm predicates over `subgroup_features`.

    One SubgroupData per observed value combination, ordered by the encoded
    value tuple. Systematically missing features (all-NULL columns within the
    fragment) are detected and recorded in the missing mask.
    """
    if not subgroup_features:
        raise ValueError("subgroup_features must be non-empty")
    if dataset.target.name in subgroup_features:
        raise ValueError("subgroup feature equals the target column")
    sub_cols = [dataset.column(name) for name in subgroup_features]
    for c in sub_cols:
        if c.kind != CATEGORICAL:
            raise ValueError(f"subgroup feature {c.name!r} is not categorical")
        if np.any(c.data == NULL):
            raise ValueError(f"NULL in subgrouping feature {c.name!r}")

    selection = [c for c in dataset.columns if c.name not in subgroup_features]
    for c in selection:
        if c.kind != CATEGORICAL:
            raise ValueError(
                f"selection feature {c.name!r} is numeric; discretize it first"
            )
    feature_names = [c.name for c in selection]
    domains = [c.domain_size for c in selection]
    full_mask = (1 << len(selection)) - 1

    keys = np.stack([c.data for c in sub_cols], axis=1)
    order = {}
    for i in range(dataset.n_rows):
        order.setdefault(tuple(int(v) for v in keys[i]), []).append(i)

    predicates = []
    subgroups = []
    for idx, key in enumerate(sorted(order)):
        rows = np.asarray(order[key], dtype=np.int64)
        predicate = {
            c.name: c.domain[v] for c, v in zip(sub_cols, key)
        }
        values = np.stack(
            [c.data[rows].astype(np.int16) for c in selection], axis=1
        ) if selection else np.empty((len(rows), 0), dtype=np.int16)
        missing_mask = 0
        for f in range(len(selection)):
            if np.all(values[:, f] == NULL):
                missing_mask |= 1 << f
        subgroups.append(
            SubgroupData(
                index=idx,
                predicate=predicate,
                row_indices=rows,
                feature_names=feature_names,
                domains=domains,
                values=values,
                y=dataset.target.data[rows].astype(np.int16),
                dom_y=dataset.target.domain_size,
                present_mask=full_mask & ~missing_mask,
                missing_mask=missing_mask,
            )
        )
        predicates.append(predicate)
    return SubgroupSpec(list(subgroup_features), predicates), subgroups


# ---------------------------------------------------------------------------
# systematic missingness injection


def inject_systematic_missingness(
    subgroups: list[SubgroupData], p: float, seed: int
) -> list[SubgroupData]:
    """Blank each (subgroup, feature) pair with probability p, then repair.

    Repair, in order: every globally-absent feature is restored in one
    uniformly random subgroup where it was blanked; every subgroup left with
    no missing feature blanks one uniformly random feature that stays present
    elsewhere. Originals are kept in each subgroup's shadow copy.
    """
    if not 0 <= p < 1:
        raise ValueError("p must be in [0, 1)")
    if not subgroups:
        raise ValueError("no subgroups")
    n_features = subgroups[0].n_features
    if n_features < 2:
        raise ValueError("need at least 2 features to satisfy the constraints")
    if len(subgroups) < 2:
        raise ValueError(
            "need at least 2 subgroups: with one, a feature cannot be both "
            "missing there and present elsewhere"
        )

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    intrinsic = [g.missing_mask for g in subgroups]
    missing = []
    for g in subgroups:
        m = g.missing_mask
        for f in range(n_features):
            if not m >> f & 1 and rng.random() < p:
                m |= 1 << f
        missing.append(m)

    def present_count(f: int) -> int:
        return sum(1 for m in missing if not m >> f & 1)

    for f in range(n_features):
        if present_count(f) == 0:
            candidates = [
                i for i, g in enumerate(subgroups)
                if missing[i] >> f & 1 and not intrinsic[i] >> f & 1
            ]
            if not candidates:
                raise ValueError(
                    f"feature {subgroups[0].feature_names[f]!r} is missing in "
                    "every subgroup and cannot be restored"
                )
            keep = candidates[rng.integers(len(candidates))]
            missing[keep] &= ~(1 << f)

    for i in range(len(subgroups)):
        if missing[i] == 0:
            candidates = [
                f for f in range(n_features)
                if not missing[i] >> f & 1 and present_count(f) >= 2
            ]
            if not candidates:
                raise ValueError(
                    f"subgroup {i} cannot receive a missing feature without "
                    "erasing one everywhere"
                )
            missing[i] |= 1 << candidates[rng.integers(len(candidates))]

    full_mask = (1 << n_features) - 1
    out = []
    for i, g in enumerate(subgroups):
        shadow = g.values.copy()
        values = g.values.copy()
        for f in range(n_features):
            if missing[i] >> f & 1:
                values[:, f] = NULL
        out.append(
            replace(
                g,
                values=values,
                shadow=shadow,
                missing_mask=missing[i],
                present_mask=full_mask & ~missing[i],
            )
        )
    return out


# ---------------------------------------------------------------------------
# sidecar persistence (predicates + masks; rows rebuild from the CSV)


def subgroups_to_sidecar(spec: SubgroupSpec, subgroups: list[SubgroupData]) -> dict:
    return {
        "subgroup_features": spec.subgroup_features,
        "feature_names": subgroups[0].feature_names if subgroups else [],
        "subgroups": [
            {
                "index": g.index,
                "predicate": g.predicate,
                "n_rows": g.n_rows,
                "present_mask": g.present_mask,
                "missing_mask": g.missing_mask,
            }
            for g in subgroups
        ],
    }


def subgroups_from_sidecar(
    dataset: Dataset, sidecar: dict
) -> tuple[SubgroupSpec, list[SubgroupData]]:
    """Re-partition the dataset and re-apply recorded missingness masks."""
    spec, subgroups = partition_subgroups(dataset, sidecar["subgroup_features"])
    recorded = sidecar["subgroups"]
    if len(recorded) != len(subgroups):
        raise ValueError("sidecar subgroup count does not match the dataset")
    out = []
    for g, rec in zip(subgroups, recorded):
        if g.predicate != rec["predicate"] or g.n_rows != rec["n_rows"]:
            raise ValueError(f"sidecar mismatch for subgroup {g.index}")
        missing = int(rec["missing_mask"])
        full_mask = (1 << g.n_features) - 1
        shadow = g.values.copy()
        values = g.values.copy()
        for f in range(g.n_features):
            if missing >> f & 1:
                values[:, f] = NULL
        out.append(
            replace(
                g,
                values=values,
                shadow=shadow,
                missing_mask=missing,
                present_mask=full_mask & ~missing,
            )
        )
    return spec, out
