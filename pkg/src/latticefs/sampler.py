"""Budgeted selection of subsets that get exact MI labels.

`randwalk_sample` runs a lazy random walk on the hypercube spanned by the
present features: stay with probability 1/2, otherwise flip one uniformly
chosen present bit; a move into an invalid state (the empty set, or a level
outside the bounds) counts as a stay. The walk's transition matrix on valid
states is symmetric, so its stationary distribution is uniform and the
collected distinct states form a uniform sample. `arbitrary_sample` is the
uniform-without-replacement baseline; `level_biased_sample` exists only as a
deliberately skewed contrast for sampling-quality checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb

import numpy as np

from .info_theory import EntropyStore, mi_shared

MAX_WALK_STEPS = 10**7


@dataclass(frozen=True)
class SampleSet:
    subgroup: int
    budget: int
    seed: int
    method: str
    sampled: frozenset[int]

    def sorted_masks(self) -> list[int]:
        return sorted(self.sampled)


def _rng_for(seed: int, subgroup: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, subgroup]))


def _present_bits(present: int) -> list[int]:
    return [f for f in range(present.bit_length()) if present >> f & 1]


def valid_state_count(present: int, level_bounds: tuple[int, int]) -> int:
    k = bin(present).count("1")
    lo, hi = level_bounds
    lo = max(lo, 1)
    hi = min(hi, k)
    return sum(comb(k, l) for l in range(lo, hi + 1))


def budget_from_rate(rate: float, present: int,
                     level_bounds: tuple[int, int]) -> int:
    """Map a budget rate in (0, 1] to a count over the valid states."""
    if not 0 < rate <= 1:
        raise ValueError("budget rate must be in (0, 1]")
    population = valid_state_count(present, level_bounds)
    return int(np.ceil(rate * population))


def _check_budget(present: int, budget: int,
                  level_bounds: tuple[int, int]) -> None:
    if present == 0:
        raise ValueError("no present features to sample from")
    if budget < 1:
        raise ValueError("budget must be at least 1")
    population = valid_state_count(present, level_bounds)
    if budget > population:
        raise ValueError(
            f"budget {budget} exceeds the {population} valid subsets"
        )


def randwalk_sample(
    present: int,
    budget: int,
    level_bounds: tuple[int, int],
    seed: int,
    subgroup: int = 0,
) -> SampleSet:
    """Collect `budget` distinct subsets with the lazy random walk."""
    _check_budget(present, budget, level_bounds)
    bits = _present_bits(present)
    k = len(bits)
    lo, hi = max(level_bounds[0], 1), min(level_bounds[1], k)
    rng = _rng_for(seed, subgroup)

    def valid(mask: int) -> bool:
        return mask != 0 and lo <= bin(mask).count("1") <= hi

    state = 0
    while not valid(state):
        draw = rng.random(k) < 0.5
        state = 0
        for b, on in zip(bits, draw):
            if on:
                state |= 1 << b
    sampled = {state}

    steps = 0
    block = 1024
    while len(sampled) < budget:
        stay = rng.random(block) < 0.5
        flip = rng.integers(0, k, size=block)
        for t in range(block):
            steps += 1
            if steps > MAX_WALK_STEPS:
                raise RuntimeError(
                    f"random walk exceeded {MAX_WALK_STEPS} steps with "
                    f"{len(sampled)}/{budget} samples"
                )
            if stay[t]:
                continue
            nxt = state ^ (1 << bits[flip[t]])
            if not valid(nxt):
                continue
            state = nxt
            if state not in sampled:
                sampled.add(state)
                if len(sampled) == budget:
                    break

    return SampleSet(subgroup, budget, seed, "randwalk", frozenset(sampled))


def _enumerate_valid(present: int, level_bounds: tuple[int, int]) -> np.ndarray:
    from itertools import combinations

    bits = _present_bits(present)
    k = len(bits)
    lo, hi = max(level_bounds[0], 1), min(level_bounds[1], k)
    masks = []
    for l in range(lo, hi + 1):
        for combo in combinations(bits, l):
            m = 0
            for b in combo:
                m |= 1 << b
            masks.append(m)
    return np.sort(np.asarray(masks, dtype=np.int64))


def arbitrary_sample(
    present: int,
    budget: int,
    level_bounds: tuple[int, int],
    seed: int,
    subgroup: int = 0,
) -> SampleSet:
    """Uniform sampling without replacement from the valid subsets."""
    _check_budget(present, budget, level_bounds)
    rng = _rng_for(seed, subgroup)
    masks = _enumerate_valid(present, level_bounds)
    chosen = rng.choice(len(masks), size=budget, replace=False)
    return SampleSet(
        subgroup, budget, seed, "arbitrary",
        frozenset(int(masks[i]) for i in chosen),
    )


def level_biased_sample(
    present: int,
    budget: int,
    level_bounds: tuple[int, int],
    seed: int,
    subgroup: int = 0,
    bias: float = 2.0,
) -> SampleSet:
    """Deliberately level-skewed sampler (weight exp(-bias * level)).

    Contrast arm for total-variation comparisons; not part of the pipeline.
    """
    _check_budget(present, budget, level_bounds)
    rng = _rng_for(seed, subgroup)
    masks = _enumerate_valid(present, level_bounds)
    levels = np.bitwise_count(masks).astype(np.float64)
    keys = rng.gumbel(size=len(masks)) - bias * levels
    top = np.argpartition(-keys, budget - 1)[:budget]
    return SampleSet(
        subgroup, budget, seed, "level_biased",
        frozenset(int(masks[i]) for i in top),
    )


def label_samples(store: EntropyStore, samples: SampleSet) -> dict[int, float]:
    """Exact MI for every sampled subset, keyed by bitmask."""
    return {mask: mi_shared(store, mask) for mask in samples.sorted_masks()}


# ---------------------------------------------------------------------------
# persistence


def samples_to_json(samples: SampleSet) -> dict:
    return {
        "subgroup": samples.subgroup,
        "budget": samples.budget,
        "seed": samples.seed,
        "method": samples.method,
        "masks": samples.sorted_masks(),
    }


def samples_from_json(obj: dict) -> SampleSet:
    return SampleSet(
        subgroup=obj["subgroup"],
        budget=obj["budget"],
        seed=obj["seed"],
        method=obj["method"],
        sampled=frozenset(int(m) for m in obj["masks"]),
    )


def save_samples(samples: SampleSet, path) -> None:
    with open(path, "w") as fh:
        json.dump(samples_to_json(samples), fh, sort_keys=True)
        fh.write("\n")


def load_samples(path) -> SampleSet:
    with open(path) as fh:
        return samples_from_json(json.load(fh))
