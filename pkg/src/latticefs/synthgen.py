"""Synthetic datasets with planted feature-target structure.

The target is a bitwise logical formula over the relevant features (values
are `bit_width`-bit integers, so e.g. 0b01 XOR 0b11 = 0b10). Correlated
features are noisy copies of the target; redundant ones are logical
functions of the relevant ones; irrelevant ones are independent uniform
draws. Rows are assigned to subgroups uniformly at random, each subgroup
gets its own feature-noise rate, and systematic missingness is injected on
top with the usual repair constraints.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass

import numpy as np

from .data_model import (
    CATEGORICAL,
    Column,
    Dataset,
    SubgroupData,
    SubgroupSpec,
    inject_systematic_missingness,
    partition_subgroups,
)
from .info_theory import mi_direct

SUBGROUP_COLUMN = "grp"
TARGET_COLUMN = "target"


@dataclass
class SynthConfig:
    n_rows: int = 50_000
    n_relevant: int = 4
    n_correlated: int = 2
    n_redundant: int = 2
    n_irrelevant: int = 2
    n_subgroups: int = 4
    bit_width: int = 2
    formula: str = "(r0 ^ r1) | (r2 & r3)"
    correlated_flip_rate: float = 0.1
    noise_mean: float = 0.05
    noise_std: float = 0.02
    noise_per_feature: bool = False
    missing_p: float | None = 0.2
    seed: int = 0

    @property
    def n_features(self) -> int:
        return (self.n_relevant + self.n_correlated + self.n_redundant
                + self.n_irrelevant)

    @property
    def domain(self) -> int:
        return 1 << self.bit_width

    def feature_names(self) -> tuple[list[str], list[str], list[str], list[str]]:
        rel = [f"rel{i}" for i in range(self.n_relevant)]
        cor = [f"cor{i}" for i in range(self.n_correlated)]
        red = [f"red{i}" for i in range(self.n_redundant)]
        irr = [f"irr{i}" for i in range(self.n_irrelevant)]
        return rel, cor, red, irr

    def validate(self) -> None:
        if self.n_rows < 1:
            raise ValueError("n_rows must be positive")
        if self.n_relevant < 1:
            raise ValueError("need at least one relevant feature")
        if self.n_subgroups < 1:
            raise ValueError("need at least one subgroup")
        if not 1 <= self.bit_width <= 3:
            raise ValueError("bit_width must be 1..3 (domain size at most 8)")
        if not 0 <= self.correlated_flip_rate < 1:
            raise ValueError("correlated_flip_rate must be in [0, 1)")
        if self.noise_mean < 0 or self.noise_std < 0:
            raise ValueError("noise parameters must be non-negative")
        _compile_formula(self.formula, self.n_relevant)


_ALLOWED_OPS = {ast.BitXor: np.bitwise_xor, ast.BitAnd: np.bitwise_and,
                ast.BitOr: np.bitwise_or}


def _compile_formula(expr: str, n_relevant: int):
    """Parse a bitwise expression over r0..r{n-1} into an evaluator."""
    tree = ast.parse(expr, mode="eval")

    def check(node) -> None:
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _ALLOWED_OPS:
                raise ValueError(
                    f"formula may only use ^, &, | (got {ast.dump(node.op)})"
                )
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.Name):
            if not node.id.startswith("r"):
                raise ValueError(f"unknown name {node.id!r} in formula")
            idx = int(node.id[1:])
            if idx >= n_relevant:
                raise ValueError(
                    f"formula references r{idx} but only {n_relevant} "
                    "relevant features exist"
                )
        else:
            raise ValueError(f"unsupported formula node {type(node).__name__}")

    check(tree)

    def evaluate(rel_columns: list[np.ndarray]) -> np.ndarray:
        def ev(node):
            if isinstance(node, ast.Expression):
                return ev(node.body)
            if isinstance(node, ast.BinOp):
                return _ALLOWED_OPS[type(node.op)](ev(node.left), ev(node.right))
            return rel_columns[int(node.id[1:])]
        return ev(tree)

    return evaluate


def generate_complete(config: SynthConfig) -> Dataset:
    """The pre-missingness dataset: features + subgroup column + target."""
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 17]))
    n, dom = config.n_rows, config.domain
    rel_names, cor_names, red_names, irr_names = config.feature_names()

    rel = [rng.integers(0, dom, n, dtype=np.int16) for _ in rel_names]
    target = _compile_formula(config.formula, config.n_relevant)(rel)
    target = np.asarray(target, dtype=np.int16) & (dom - 1)

    cor = []
    for _ in cor_names:
        col = target.copy()
        flip = rng.random(n) < config.correlated_flip_rate
        col[flip] = rng.integers(0, dom, int(flip.sum()), dtype=np.int16)
        cor.append(col)

    ops = [np.bitwise_xor, np.bitwise_and, np.bitwise_or]
    red = []
    for k in range(len(red_names)):
        a = rel[k % config.n_relevant]
        b = rel[(k + 1) % config.n_relevant]
        red.append((ops[k % 3](a, b) & (dom - 1)).astype(np.int16))

    irr = [rng.integers(0, dom, n, dtype=np.int16) for _ in irr_names]

    grp = rng.integers(0, config.n_subgroups, n, dtype=np.int16)
    features = rel + cor + red + irr
    # one noise rate per subgroup, or per (subgroup, feature) when roles are
    # meant to differ across subgroups
    shape = (
        (config.n_subgroups, len(features))
        if config.noise_per_feature
        else (config.n_subgroups, 1)
    )
    rates = np.clip(
        rng.normal(config.noise_mean, config.noise_std, shape), 0.0, 0.95
    )
    for g in range(config.n_subgroups):
        rows = np.flatnonzero(grp == g)
        for f, col in enumerate(features):
            rate = rates[g, f if config.noise_per_feature else 0]
            flip = rows[rng.random(len(rows)) < rate]
            col[flip] = rng.integers(0, dom, len(flip), dtype=np.int16)

    domain = [str(v) for v in range(dom)]
    names = rel_names + cor_names + red_names + irr_names
    columns = [
        Column(name, CATEGORICAL, col, domain=list(domain))
        for name, col in zip(names, features)
    ]
    columns.append(
        Column(
            SUBGROUP_COLUMN, CATEGORICAL, grp,
            domain=[str(i) for i in range(config.n_subgroups)],
        )
    )
    target_col = Column(TARGET_COLUMN, CATEGORICAL, target, domain=list(domain))
    return Dataset(columns=columns, target=target_col)


def generate(
    config: SynthConfig,
) -> tuple[Dataset, SubgroupSpec, list[SubgroupData]]:
    """Full chain: complete data, subgroup partition, missingness injection.

    Every returned SubgroupData carries a shadow copy of its pre-injection
    values for the evaluation oracles.
    """
    dataset = generate_complete(config)
    spec, subgroups = partition_subgroups(dataset, [SUBGROUP_COLUMN])
    if config.missing_p is not None:
        subgroups = inject_systematic_missingness(
            subgroups, config.missing_p, config.seed
        )
    else:
        for g in subgroups:
            g.shadow = g.values.copy()
    return dataset, spec, subgroups


def plant_check(dataset: Dataset, config: SynthConfig) -> dict:
    """Level-1 diagnostic: informative (relevant + correlated) features
    should carry more MI with the target than irrelevant ones."""
    rel, cor, red, irr = config.feature_names()
    y = dataset.target.data
    per_feature = {
        name: mi_direct([dataset.column(name).data], y)
        for name in rel + cor + red + irr
    }
    informative = [per_feature[f] for f in rel + cor]
    irrelevant = [per_feature[f] for f in irr]
    mean_inf = float(np.mean(informative)) if informative else None
    mean_irr = float(np.mean(irrelevant)) if irrelevant else None
    separated = (
        mean_inf is not None and mean_irr is not None and mean_inf > mean_irr
    )
    return {
        "per_feature": per_feature,
        "mean_informative": mean_inf,
        "mean_irrelevant": mean_irr,
        "separated": bool(separated),
        "margin": (mean_inf - mean_irr)
        if mean_inf is not None and mean_irr is not None else None,
    }
