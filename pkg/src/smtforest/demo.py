"""Scripted protocol walk-through used by ``smtforest demo``.

Issuance, revocation, a missed update, a primer exchange, direct repair,
cache repair and the CA fallback, with the byte size of every message.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import wire
from .authority import Authority
from .crypto import EcdsaSuite, StubSuite
from .forest import DEFAULT_CONFIG
from .hash_tree import common_prefix_bits, to_int
from .node import CACHER, NodeState, process_ca_update, run_contact

CERTS = 2000


def _transcript_lines(t, indent="    ") -> Iterator[str]:
    for msg in t.messages:
        yield f"{indent}{msg.sender:>8} -> {msg.kind:<20} {msg.size:6d} B"


def run_demo(seed: int = 1, ecdsa: bool = True) -> Iterator[str]:
    rng = np.random.default_rng(seed)
    cfg = DEFAULT_CONFIG
    w = cfg.epoch_duration
    now = 3000 * w
    suite = EcdsaSuite() if ecdsa else StubSuite()
    ca = Authority(cfg, now=now, suite=suite, key_seed=seed.to_bytes(8, "big", signed=True))
    yield f"crypto suite: {suite.name}; primer {cfg.primer_size} B, contact {wire.CONTACT_SIZE} B"

    # issuance: one epoch holds every demo node
    epoch = ca.base_epoch + 10
    certs = [rng.bytes(32) for _ in range(CERTS)]
    others = [(c, (ca.base_epoch + int(rng.integers(cfg.epoch_count))) * w) for c in certs[200:]]
    ca.bulk_load([(c, epoch * w + 5) for c in certs[:200]] + others, now=now + 1)
    yield f"issued {CERTS} certificates; demo nodes live in epoch {epoch} (relative {epoch - ca.base_epoch})"

    ints = [to_int(c) for c in certs[:200]]
    victim = ints[0]
    peer = max(ints[1:], key=lambda x: common_prefix_bits(victim, x))
    # a revocation that the victim's nearest neighbour can fix, far enough away
    # that it falls outside the victim's cache part as well
    revoked = next(x for x in ints[1:] if x != peer and common_prefix_bits(victim, x) < 7 and x >> 249 != victim >> 249)
    as_bytes = {to_int(c): c for c in certs}
    v = NodeState.enroll(ca, as_bytes[victim])
    p = NodeState.enroll(ca, as_bytes[peer])
    # spare nodes sit outside the revoked certificate's cache part
    spare = [as_bytes[x] for x in ints[1:] if x not in (peer, revoked) and x >> 249 != revoked >> 249]
    c = NodeState.enroll(ca, spare[0], role=CACHER)
    v2 = NodeState.enroll(ca, spare[1])
    f = NodeState.enroll(ca, spare[2], give_up_threshold=1)
    stranger = NodeState.enroll(ca, certs[-1])  # another epoch, receives the update
    primer_bytes = ca.forest.primer.to_bytes()
    yield f"primer: {len(primer_bytes)} B, signature {len(ca.forest.primer_sig)} B"
    yield f"contact message: {len(wire.ContactMessage(ca.forest.primer, ca.forest.primer_sig, 10).to_bytes())} B"

    # revocation and update
    ca.revoke(as_bytes[revoked])
    update = ca.build_update(now + 3600)
    yield f"revoked 1 certificate; CA update {len(wire.encode_ca_update(update))} B " \
          f"({len(update.changed_roots)} root, {len(update.update_pois)} proof)"
    for node in (p, c, stranger):
        process_ca_update(node, update)
    yield "update delivered to the peer and the cacher; victim, second victim and fallback node missed it"

    yield "contact victim <-> peer (primer exchange, then direct repair):"
    t = run_contact(v, p, names=("victim", "peer"))
    yield from _transcript_lines(t)
    yield f"    synced: {t.synced}, repaired: {t.repaired}, failed: {t.failed}"

    yield "contact second victim <-> cacher (primer exchange, then cache repair):"
    t = run_contact(v2, c, names=("victim2", "cacher"))
    yield from _transcript_lines(t)
    yield f"    synced: {t.synced}, repaired: {t.repaired}, failed: {t.failed}"

    yield "contact fallback node <-> node of another epoch, then CA fallback after giving up:"
    t = run_contact(f, stranger, authority=ca, names=("node", "stranger"))
    yield from _transcript_lines(t)
    yield f"    own proof valid: {f.poi_valid}"

    yield f"all demo proofs valid: {all(n.poi_valid for n in (v, p, c, v2, f, stranger))}"
