"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are written
straight to the terminal (and therefore to any ``tee``'d log).
"""

import math
import random
import time

import numpy as np
import pytest

from oracles import batch_root
from smtforest import wire
from smtforest.authority import Authority
from smtforest.crypto import EcdsaSuite
from smtforest.errors import InconsistentUpdateError, ReplayError
from smtforest.forest import DEFAULT_CONFIG, apply_root_updates, compute_primer
from smtforest.hash_tree import LookUpTable, ProofOfInclusion, calc_poi, to_int, verify_poi
from smtforest.node import CACHER, NodeState, process_ca_update, run_contact, try_direct_repair, try_lc_repair
from smtforest.repair import construct_lvl_cache, update_poi_with_lvl_cache, update_poi_with_poi
from smtforest.sim.analysis import lc_fail_monte_carlo, lc_fail_probability, max_missed_updates, run_direct_repair_analysis
from smtforest.sim.epidemic import SimParams, run_epidemic_sim

W = DEFAULT_CONFIG.epoch_duration


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return emit


def _leaf(r: random.Random) -> bytes:
    return r.getrandbits(256).to_bytes(32, "big")


# -- 1 ---------------------------------------------------------------------------


def _sequence_lengths(r: random.Random, count: int) -> list[int]:
    """Mostly short sequences plus a long tail reaching the 4096 cap."""
    long_tail = 10
    lengths = [4096, 4096] + [int(2 ** r.uniform(8, 12)) for _ in range(long_tail - 2)]
    lengths += [max(1, int(2 ** r.uniform(0, 8))) for _ in range(count - long_tail)]
    r.shuffle(lengths)
    return lengths


def test_criterion_1_oracle_equivalence(report):
    r = random.Random(101)
    start = time.perf_counter()
    mismatches = bad_proofs = ops_total = 0
    lengths = _sequence_lengths(r, 1000)
    for n_ops in lengths:
        p_remove = r.uniform(0.0, 0.5)
        lut = LookUpTable()
        live: list[int] = []
        for _ in range(n_ops):
            if live and r.random() < p_remove:
                lut.remove(live.pop(r.randrange(len(live))))
            else:
                x = r.getrandbits(256)
                lut.add(x)
                live.append(x)
        ops_total += n_ops
        if lut.root != batch_root(live):
            mismatches += 1
        root = lut.root
        bad_proofs += sum(not verify_poi(x, calc_poi(x, lut), root) for x in live)
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and bad_proofs == 0 and max(lengths) <= 4096 and elapsed < 60
    report(
        1,
        ok,
        f"{len(lengths)} sequences, {ops_total} ops (max {max(lengths)}), root mismatches {mismatches}, "
        f"failing member proofs {bad_proofs}, {elapsed:.1f} s (target < 60 s)",
    )


# -- 2 ---------------------------------------------------------------------------


def test_criterion_2_blind_update_completeness(report):
    r = random.Random(202)
    failures = attempts = 0
    for k in range(1, 65):
        leaves = [r.getrandbits(256) for _ in range(1024)]
        lut = LookUpTable.from_leaves(leaves)
        victims = r.sample(leaves, 200)
        stale = {v: calc_poi(v, lut) for v in victims}
        protected = set(victims)
        pool = [x for x in leaves if x not in protected]
        changes = []
        for _ in range(k):
            if r.random() < 0.5:
                x = pool.pop(r.randrange(len(pool)))
                lut.remove(x)
            else:
                x = r.getrandbits(256)
                lut.add(x)
            changes.append(x)
        root = lut.root
        updates = [(x, calc_poi(x, lut), x not in lut) for x in changes]
        for v in victims:
            order = list(updates)
            r.shuffle(order)
            poi = stale[v]
            for x, upoi, absent in order:
                poi = update_poi_with_poi(v, poi, x, upoi, new_absent=absent)
            attempts += 1
            failures += not verify_poi(v, poi, root)
    report(2, failures == 0, f"{attempts} victims over k=1..64, {failures} failed to verify (100% required)")


# -- 3 ---------------------------------------------------------------------------


def test_criterion_3_level_cache_correctness(report):
    """Every tree size up to 64 leaves, several update streams, every victim."""
    r = random.Random(303)
    clvl = 4
    lc_mismatch = wrong_outcome = checked_lc = checked_victims = 0
    streams_per_size = 6
    for size in range(1, 65):
        for _ in range(streams_per_size):
            ca = Authority(now=3000 * W, key_seed=b"c3")
            epoch = ca.base_epoch + 3
            certs = [_leaf(r) for _ in range(size)]
            ca.bulk_load([(c, epoch * W) for c in certs], now=3000 * W + 1)
            cacher_cert = certs[0]
            cacher = NodeState.enroll(ca, cacher_cert, role=CACHER, clvl=clvl)
            stale = {c: ca.poi_for(c) for c in certs}
            alive = set(certs[1:])
            missed: list[int] = []
            now = 3000 * W + 1
            for _ in range(r.randint(1, 6)):
                for _ in range(r.randint(1, 4)):
                    if alive and r.random() < 0.5:
                        x = r.choice(sorted(alive))
                        alive.discard(x)
                        ca.revoke(x)
                    else:
                        x = _leaf(r)
                        ca.issue(x, epoch * W)
                    missed.append(to_int(x))
                now += 10
                process_ca_update(cacher, ca.build_update(now))
                expected = construct_lvl_cache(clvl, ca.luts[epoch], epoch)
                checked_lc += 1
                lc_mismatch += cacher.lcs[epoch].to_bytes() != expected.to_bytes()
            lc = cacher.lcs[epoch]
            root = ca.forest.root_of(epoch)
            for v in sorted(alive | {cacher_cert}):
                part = to_int(v) >> (256 - clvl)
                untouched = all(x >> (256 - clvl) != part for x in missed)
                repaired = update_poi_with_lvl_cache(v, stale[v], lc)
                checked_victims += 1
                wrong_outcome += verify_poi(v, repaired, root) != untouched
    ok = lc_mismatch == 0 and wrong_outcome == 0
    report(
        3,
        ok,
        f"{checked_lc} cache states compared byte-for-byte ({lc_mismatch} mismatches); "
        f"{checked_victims} victims, {wrong_outcome} repair outcomes disagreeing with the part rule",
    )


# -- 4 ---------------------------------------------------------------------------


def test_criterion_4_closed_form(report):
    rng = np.random.default_rng(404)
    worst = 0.0
    outside = []
    for clvl in range(4, 11):
        for m in (1, 2, 4, 8, 16, 32, 64):
            p, se = lc_fail_monte_carlo(clvl, m, 100_000, rng=rng)
            exact = lc_fail_probability(clvl, m)
            sigma = math.sqrt(exact * (1 - exact) / 100_000)
            z = abs(p - exact) / sigma
            worst = max(worst, z)
            if z > 3:
                outside.append((clvl, m, round(z, 2)))
    m13 = max_missed_updates(7, 0.10)
    ok = not outside and m13 == 13
    report(4, ok, f"49 points, worst deviation {worst:.2f} sigma, outside 3 sigma: {outside}; clvl=7 at 10% gives m={m13}")


# -- 5 ---------------------------------------------------------------------------


def _inversions(values, sigmas):
    """Decreases between consecutive points as (drop, allowed sigma)."""
    out = []
    for i in range(len(values) - 1):
        if values[i + 1] < values[i]:
            out.append((values[i] - values[i + 1], max(sigmas[i], sigmas[i + 1])))
    return out


def test_criterion_5_direct_repair_trends(report):
    rng = np.random.default_rng(505)
    lut = LookUpTable.from_leaves(int.from_bytes(rng.bytes(32), "big") for _ in range(10_000))
    ms = [1, 2, 4, 8, 16, 32]
    stats = [run_direct_repair_analysis(lut, m, 1000, rng=rng) for m in ms]
    problems = []
    summary = []
    for name in ("first_fail_rate", "first10_fail_rate", "fail_rate", "avg_tries"):
        values = [getattr(s, name) for s in stats]
        if name == "avg_tries":
            sigmas = [s.avg_tries_stderr for s in stats]
        else:
            sigmas = [math.sqrt(max(v * (1 - v), 1.0 / s.trials) / s.trials) for v, s in zip(values, stats)]
        inv = _inversions(values, sigmas)
        if len(inv) > 1 or any(drop > sigma for drop, sigma in inv):
            problems.append((name, inv))
        summary.append(f"{name}=" + "/".join(f"{v:.3g}" for v in values))
    report(5, not problems, f"m={ms}: " + "; ".join(summary) + f"; violations {problems}")


# -- 6 ---------------------------------------------------------------------------


def test_criterion_6_large_scale_simulation(report):
    rows = []
    slowest = 0.0
    for missing in (0.1, 0.3, 0.5):
        for seed in range(1, 6):
            t0 = time.perf_counter()
            m = run_epidemic_sim(SimParams(node_count=10_000, weeks=4, missing_share=missing, rng_seed=seed))
            slowest = max(slowest, time.perf_counter() - t0)
            rows.append((missing, seed, m))
    fail_50 = max(m.failed_repair_share for miss, _, m in rows if miss == 0.5)
    both_50 = max(m.both_outdated_encounter_share for miss, _, m in rows if miss == 0.5)
    meets = [m.avg_meets_until_repair for _, _, m in rows]
    ok = fail_50 < 0.10 and all(6 <= x <= 13 for x in meets) and both_50 < 0.08 and slowest < 600
    by_share = {
        miss: sum(m.avg_meets_until_repair for s, _, m in rows if s == miss) / 5 for miss in (0.1, 0.3, 0.5)
    }
    report(
        6,
        ok,
        f"worst failed_repair_share at 50% missing {fail_50:.4f} (< 0.10); avg meets range "
        f"[{min(meets):.2f}, {max(meets):.2f}] (means {', '.join(f'{k}: {v:.2f}' for k, v in by_share.items())}); "
        f"worst both-outdated share at 50% {both_50:.5f} (< 0.08); slowest run {slowest:.1f} s",
    )


# -- 7 ---------------------------------------------------------------------------


def test_criterion_7_message_sizes(report):
    r = random.Random(707)
    ca = Authority(now=3000 * W, suite=EcdsaSuite(), key_seed=b"c7")
    near = [_leaf(r) for _ in range(19_230)]
    far = [_leaf(r) for _ in range(300)]
    e_near, e_far = ca.newest_epoch - 1, ca.newest_epoch - 26
    ca.bulk_load([(c, e_near * W) for c in near] + [(c, e_far * W) for c in far], now=3000 * W + 1)
    stale = NodeState.enroll(ca, near[10])
    primer = len(ca.forest.primer.to_bytes())
    contact = len(wire.ContactMessage(ca.forest.primer, ca.forest.primer_sig, stale.rel_epoch).to_bytes())

    # roots change at ages 1 and 26; the stale node learns of it through a fresh peer
    ca.revoke(near[0])
    ca.revoke(far[0])
    upd = ca.build_update(3000 * W + 100)
    fresh = NodeState.enroll(ca, far[5])
    t = run_contact(stale, fresh)
    sizes = {m.kind: m.size for m in t.messages}
    follow_up = sizes.get("ROOT_RESPONSE")

    fallback = max(
        len(wire.encode_ca_poi_response(*ca.answer_poi_request(c))) for c in near[1:400]
    )
    ok = primer == 50 and contact == 115 and follow_up == 466 and fallback < 1024 and stale.vf.primer == upd.primer
    report(
        7,
        ok,
        f"primer {primer} B, contact {contact} B, parity request {sizes.get('PARITY_REQUEST')} B + "
        f"root response {follow_up} B, largest CA fallback response {fallback} B for a 19230-leaf epoch",
    )


# -- 8 ---------------------------------------------------------------------------


def test_criterion_8_ca_update_sizes(report):
    r = random.Random(808)
    now = 3000 * W
    ca = Authority(now=now, key_seed=b"c8")
    population = 1_000_000
    certs = [_leaf(r) for _ in range(population)]
    ca.bulk_load(((c, (ca.base_epoch + i % 52) * W + 7) for i, c in enumerate(certs)), now=now + 1)

    churn = round(population * 0.00056)
    for c in r.sample(certs, churn // 2):
        ca.revoke(c)
    for _ in range(churn - churn // 2):
        ca.issue(_leaf(r), (ca.base_epoch + r.randrange(52)) * W + 9)
    upd = ca.build_update(now + 3600)
    update_kb = wire.ca_update_size(upd) / 1000

    next_week = (ca.base_epoch + 1) * W
    for _ in range(population // 52):
        ca.stage_certificate(_leaf(r), (ca.newest_epoch + 1) * W + 11)
    ecu = ca.epoch_change(next_week)
    epoch_kb = wire.epoch_change_size(ecu) / 1000
    deviation = epoch_kb / 629.8 - 1

    ok = 150 <= update_kb <= 400 and abs(deviation) <= 0.15
    report(
        8,
        ok,
        f"daily update with {churn} changes: {update_kb:.1f} KB unaggregated (window [150, 400] KB; aggregated "
        f"reference 179.3 KB); epoch change with {len(ecu.leaves)} leaves: {epoch_kb:.1f} KB ({deviation:+.1%} vs 629.8 KB)",
    )


# -- 9 ---------------------------------------------------------------------------


def _flip(r: random.Random, data: bytes) -> bytes:
    b = bytearray(data)
    b[r.randrange(len(b))] ^= 1 << r.randrange(8)
    return bytes(b)


def _security_world(r: random.Random):
    ca = Authority(now=3000 * W, key_seed=b"c9")
    epoch = ca.base_epoch + 7
    certs = [_leaf(r) for _ in range(500)]
    ca.bulk_load([(c, epoch * W) for c in certs], now=3000 * W + 1)
    return ca, epoch, certs


def test_criterion_9_security(report):
    attempts = 10_000
    r = random.Random(909)
    ca, epoch, certs = _security_world(r)
    base_vf = ca.forest
    history = [ca.build_update(3000 * W + 2 + i) for i in range(3)]
    ca.revoke(certs[-1])
    history.append(ca.build_update(3000 * W + 10))
    latest = ca.forest
    ident = ca.identity

    # forged epoch roots against a genuine signed primer
    forged_rejected = 0
    for _ in range(attempts):
        roots = list(latest.roots)
        for _ in range(r.randint(1, 3)):
            i = r.randrange(len(roots))
            if r.random() < 0.5:
                b = bytearray(roots[i])
                b[r.randrange(32)] ^= 1 << r.randrange(8)
                roots[i] = bytes(b)
            else:
                roots[i] = _leaf(r)
        updates = [(base_vf.base_epoch + i, root) for i, root in enumerate(roots) if root != latest.roots[i]]
        if not updates:
            updates = [(epoch, _leaf(r))]
        try:
            apply_root_updates(base_vf, updates, latest.primer, latest.primer_sig, ident)
        except InconsistentUpdateError:
            forged_rejected += 1

    # replayed primers: older timestamps, or the current timestamp with other content
    replay_rejected = 0
    for _ in range(attempts):
        old = r.choice(history[:-1])
        if r.random() < 0.8:
            primer, sig, updates = old.primer, old.primer_sig, list(old.changed_roots)
        else:
            roots = list(latest.roots)
            roots[r.randrange(len(roots))] = _leaf(r)
            primer = compute_primer(roots, latest.primer.timestamp)
            sig = ca.suite.sign(ca.keypair.private, primer.to_bytes())
            updates = []
        try:
            apply_root_updates(latest, updates, primer, sig, ident)
        except ReplayError:
            replay_rejected += 1

    # repair proofs from peers and cachers: tampered ones must never be
    # committed, genuine ones may only ever leave a fully verifying proof
    tamper_committed = tamper_tries = half_visible = genuine_tries = partial_seen = 0
    members = set(ca.luts[epoch].leaves())
    while tamper_tries < attempts or genuine_tries < attempts:
        victim = r.choice(sorted(members))
        v = NodeState.enroll(ca, victim)
        stale = v.own_poi
        for _ in range(r.randint(2, 6)):
            if r.random() < 0.5:
                x = r.choice(sorted(members - {victim}))
                ca.revoke(x)
                members.discard(x)
            else:
                x = _leaf(r)
                ca.issue(x, epoch * W)
                members.add(x)
        ca.build_update(ca.forest.primer.timestamp + 1)
        v.vf = ca.forest  # forest synced, proof still stale
        v.try_commit()
        lc = construct_lvl_cache(4, ca.luts[epoch], epoch)
        peers = r.sample(sorted(members - {victim}), 20)
        for peer in peers:
            good = ca.poi_for(peer)
            before = v.own_poi
            kind = r.randrange(4)
            if kind == 0 and good.path:
                path = list(good.path)
                j = r.randrange(len(path))
                path[j] = _flip(r, path[j])
                try_direct_repair(v, ProofOfInclusion(good.leaf_hash, good.path_bitmap, tuple(path)))
            elif kind == 1:
                try_direct_repair(v, ProofOfInclusion(good.leaf_hash, good.path_bitmap ^ (1 << r.randrange(256)), good.path))
            elif kind == 2:
                try_direct_repair(v, ProofOfInclusion(_flip(r, good.leaf_hash), good.path_bitmap, good.path))
            else:
                repaired = update_poi_with_lvl_cache(v.cert_hash, v.working_poi, lc)
                if not repaired.path:
                    continue
                path = list(repaired.path)
                j = r.randrange(len(path))
                path[j] = _flip(r, path[j])
                try_lc_repair(v, ProofOfInclusion(repaired.leaf_hash, repaired.path_bitmap, tuple(path)))
            tamper_tries += 1
            tamper_committed += v.own_poi != before

            try_direct_repair(v, good)
            genuine_tries += 1
            if v.own_poi != stale and not v.poi_valid:
                half_visible += 1
            partial_seen += v.working_poi != v.own_poi
    ok = (
        forged_rejected == attempts
        and replay_rejected == attempts
        and tamper_committed == 0
        and half_visible == 0
        and tamper_tries >= attempts
    )
    report(
        9,
        ok,
        f"forged roots rejected {forged_rejected}/{attempts}; replays rejected {replay_rejected}/{attempts}; "
        f"tampered repairs committed {tamper_committed}/{tamper_tries}; half-repaired commits seen "
        f"{half_visible}/{genuine_tries} genuine repair steps ({partial_seen} left a partial working proof)",
    )
