"""Statistical runners for direct repair and level-cache repair."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..hash_tree import LookUpTable, calc_poi
from ..repair import update_poi_with_poi


@dataclass(frozen=True)
class DirectRepairStats:
    m: int
    trials: int
    first_fail_rate: float
    first10_fail_rate: float
    fail_rate: float
    avg_tries: float
    avg_tries_stderr: float

    def as_row(self) -> dict:
        return {
            "m": self.m,
            "trials": self.trials,
            "first_fail_rate": self.first_fail_rate,
            "first10_fail_rate": self.first10_fail_rate,
            "fail_rate": self.fail_rate,
            "avg_tries": self.avg_tries,
        }


def _random_leaves(rng: np.random.Generator, count: int) -> list[int]:
    return [int.from_bytes(rng.bytes(32), "big") for _ in range(count)]


def run_direct_repair_analysis(
    tree_leaves: int | LookUpTable,
    m: int,
    trials: int,
    give_up: int = 100,
    seed: int = 0,
    rng: Optional[np.random.Generator] = None,
) -> DirectRepairStats:
    """Repair a stale proof with random fresh peer proofs until it verifies.

    Each trial picks a victim, applies ``m`` random mutations (revocations and
    insertions in equal measure on average) and then blends in proofs of
    random current leaves. The tree is restored after every trial, so one
    tree serves the whole batch. ``tries`` counts peer proofs applied; a
    trial with nothing to repair takes one try and never fails.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    lut = tree_leaves if isinstance(tree_leaves, LookUpTable) else LookUpTable.from_leaves(_random_leaves(rng, tree_leaves))
    leaves = list(lut._leaves)
    if len(leaves) < 2:
        raise ValueError("need at least two leaves")
    first_fail = first10_fail = fail = 0
    tries_list = []
    for _ in range(trials):
        victim = leaves[int(rng.integers(len(leaves)))]
        stale = calc_poi(victim, lut)
        added, removed = [], set()
        for _ in range(m):
            if rng.random() < 0.5 and len(leaves) - len(removed) > 2:
                while True:
                    x = leaves[int(rng.integers(len(leaves)))]
                    if x != victim and x not in removed:
                        break
                lut.remove(x)
                removed.add(x)
            else:
                x = int.from_bytes(rng.bytes(32), "big")
                lut.add(x)
                added.append(x)
        fresh = calc_poi(victim, lut)
        pool = len(leaves) + len(added)
        work = stale
        tries = 0
        while work != fresh and tries < give_up:
            j = int(rng.integers(pool))
            peer = leaves[j] if j < len(leaves) else added[j - len(leaves)]
            if peer == victim or peer in removed:
                continue
            work = update_poi_with_poi(victim, work, peer, calc_poi(peer, lut))
            tries += 1
        ok = work == fresh
        tries = max(tries, 1)
        first_fail += not (ok and tries <= 1)
        first10_fail += not (ok and tries <= 10)
        fail += not ok
        tries_list.append(tries)
        for x in added:
            lut.remove(x)
        for x in removed:
            lut.add(x)
    arr = np.asarray(tries_list, dtype=float)
    return DirectRepairStats(
        m,
        trials,
        first_fail / trials,
        first10_fail / trials,
        fail / trials,
        float(arr.mean()),
        float(arr.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
    )


def lc_fail_probability(clvl: int, m: int) -> float:
    """Chance that one of ``m`` missed changes shares the victim's cache part."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return 1.0 - (1.0 - 2.0 ** -clvl) ** m


def lc_fail_monte_carlo(clvl: int, m: int, trials: int = 100_000, rng: Optional[np.random.Generator] = None, seed: int = 0):
    """Empirical failure rate and its standard error.

    Victim and changes land in uniformly random depth-``clvl`` parts, which is
    where uniformly distributed leaf hashes put them.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    if m == 0:
        return 0.0, 0.0
    parts = 1 << clvl
    victim = rng.integers(0, parts, size=trials)
    fails = np.zeros(trials, dtype=bool)
    chunk = max(1, 4_000_000 // m)
    for lo in range(0, trials, chunk):
        hi = min(trials, lo + chunk)
        changes = rng.integers(0, parts, size=(hi - lo, m))
        fails[lo:hi] = (changes == victim[lo:hi, None]).any(axis=1)
    p = float(fails.mean())
    return p, math.sqrt(max(p * (1 - p), 1e-12) / trials)


def max_missed_updates(clvl: int, target: float) -> int:
    """Largest m whose cache-repair failure probability stays within ``target``."""
    if not 0 <= target < 1:
        raise ValueError("target must lie in [0, 1)")
    q = 1.0 - 2.0 ** -clvl
    m = int(math.floor(math.log1p(-target) / math.log(q)))
    while lc_fail_probability(clvl, m + 1) <= target:
        m += 1
    while m > 0 and lc_fail_probability(clvl, m) > target:
        m -= 1
    return m


def lc_storage_bytes(clvl: int) -> int:
    return 32 << clvl
