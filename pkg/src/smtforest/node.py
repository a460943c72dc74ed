"""Node-side protocol: contact exchange, forest sync, proof repair, fallback.

A node keeps two proofs. ``own_poi`` is the committed proof and verified
against the committed forest when it was committed. ``working_poi`` collects
blind updates and peer repairs; it replaces ``own_poi`` only once it verifies,
so a half-repaired proof is never committed.

:func:`on_contact` decides what a node asks for after seeing a peer's contact
message. :func:`run_contact` plays a whole encounter between two in-memory
nodes through the byte encodings and records every message sent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from . import wire
from .authority import Authority, CAUpdate, EpochChangeUpdate
from .crypto import CaIdentity
from .errors import (
    AuthenticationError,
    CertificateStateError,
    DecodeError,
    InconsistentUpdateError,
    OutOfWindowError,
    ReplayError,
    SmtForestError,
)
from .forest import (
    CLEAN_EPOCH_ROOT,
    ValidationForest,
    apply_root_updates,
    compute_parities,
    forest_prune,
    window_base,
)
from .hash_tree import LookUpTable, ProofOfInclusion, calc_poi, verify_poi
from .repair import (
    ABSENT,
    LevelCache,
    construct_lvl_cache,
    proof_state,
    update_lvl_cache_with_poi,
    update_poi_with_lvl_cache,
    update_poi_with_poi,
)

log = logging.getLogger(__name__)

PLAIN = "plain"
CACHER = "cacher"
DEFAULT_GIVE_UP = 30

_REJECTED = (ReplayError, AuthenticationError, InconsistentUpdateError, OutOfWindowError)


@dataclass
class NodeState:
    cert_hash: bytes
    epoch: int
    own_poi: ProofOfInclusion
    vf: ValidationForest
    ca: CaIdentity
    role: str = PLAIN
    clvl: int = 7
    lcs: dict[int, LevelCache] = field(default_factory=dict)
    working_poi: Optional[ProofOfInclusion] = None
    failed_repair_meets: int = 0
    give_up_threshold: int = DEFAULT_GIVE_UP
    needs_ca: bool = False

    def __post_init__(self):
        if self.working_poi is None:
            self.working_poi = self.own_poi

    @classmethod
    def enroll(cls, authority: Authority, cert_hash, role: str = PLAIN, clvl: int = 7, **kw) -> "NodeState":
        """Fresh node state handed out by the CA at issuance."""
        rec = authority.record(cert_hash)
        if authority.has_pending:
            raise CertificateStateError("CA has unpublished mutations")
        state = cls(rec.cert_hash, rec.epoch, authority.poi_for(rec.cert_hash), authority.forest,
                    authority.identity, role=role, clvl=clvl, **kw)
        if role == CACHER:
            state.lcs = {e: construct_lvl_cache(clvl, authority.luts[e], e) for e in range(
                authority.base_epoch, authority.newest_epoch + 1)}
        return state

    @property
    def is_cacher(self) -> bool:
        return self.role == CACHER

    @property
    def rel_epoch(self) -> int:
        if self.vf.in_window(self.epoch):
            return self.epoch - self.vf.base_epoch
        return wire.NO_EPOCH

    def epoch_root(self) -> Optional[bytes]:
        return self.vf.root_of(self.epoch) if self.vf.in_window(self.epoch) else None

    def proof_ok(self, poi: ProofOfInclusion) -> bool:
        root = self.epoch_root()
        if root is None:
            return False
        return root == CLEAN_EPOCH_ROOT or verify_poi(self.cert_hash, poi, root)

    @property
    def poi_valid(self) -> bool:
        return self.proof_ok(self.own_poi)

    def stale_lc_epochs(self) -> list[int]:
        if not self.is_cacher:
            return []
        out = []
        for i, root in enumerate(self.vf.roots):
            e = self.vf.base_epoch + i
            lc = self.lcs.get(e)
            if root != CLEAN_EPOCH_ROOT and (lc is None or lc.root != root):
                out.append(e)
        return out

    @property
    def lc_fresh(self) -> bool:
        return self.is_cacher and not self.stale_lc_epochs()

    def try_commit(self) -> bool:
        """Promote the working proof if it verifies; reset the give-up counter."""
        if self.working_poi is not None and self.working_poi != self.own_poi and self.proof_ok(self.working_poi):
            self.own_poi = self.working_poi
        if self.poi_valid:
            self.working_poi = self.own_poi
            self.failed_repair_meets = 0
            self.needs_ca = False
            return True
        return False

    def _drop_pruned_caches(self) -> None:
        for e in [e for e in self.lcs if not self.vf.in_window(e)]:
            del self.lcs[e]


# -- contact -------------------------------------------------------------------


def make_contact_message(state: NodeState) -> wire.ContactMessage:
    return wire.ContactMessage(state.vf.primer, state.vf.primer_sig, state.rel_epoch, state.is_cacher, state.lc_fresh)


@dataclass(frozen=True)
class Action:
    """Follow-up a node wants after a contact.

    ``kind`` is one of ``parity_request``, ``lc_repair_request``,
    ``poi_request``, ``lc_request`` or ``ca_request``.
    """

    kind: str
    payload: object = None


def plan_sync(vf: ValidationForest, peer_primer) -> tuple[int, wire.ParityRequest]:
    """Slots to fetch from a fresher peer, after sliding to the peer's window."""
    cfg = vf.cfg
    new_base = max(vf.base_epoch, window_base(peer_primer.timestamp, cfg))
    staged = forest_prune(vf, new_base - vf.base_epoch)
    local = compute_parities(staged.roots, cfg)
    n = cfg.checksum_bytes
    slots = [s for s in range(cfg.parity_count) if local[s * n : (s + 1) * n] != peer_primer.parity(s, cfg)]
    if not slots:
        # parities collide although the forests differ: fetch everything
        slots = list(range(cfg.parity_count))
    return new_base, wire.ParityRequest(tuple(slots))


def repair_actions(state: NodeState, peer_msg: wire.ContactMessage) -> list[Action]:
    """Repair requests towards a peer holding the same primer."""
    actions = []
    if state.is_cacher and peer_msg.has_lc and peer_msg.lc_fresh and state.stale_lc_epochs():
        rel = [e - state.vf.base_epoch for e in state.stale_lc_epochs()]
        actions.append(Action("lc_request", wire.LcRequest(tuple(rel))))
    if state.rel_epoch == wire.NO_EPOCH or state.poi_valid:
        return actions
    if peer_msg.has_lc and peer_msg.lc_fresh:
        actions.append(Action("lc_repair_request", state.working_poi))
    if peer_msg.rel_epoch == state.rel_epoch:
        actions.append(Action("poi_request"))
    return actions


def on_contact(state: NodeState, peer_msg: wire.ContactMessage) -> list[Action]:
    """Follow-up actions after receiving ``peer_msg``.

    Equal primers lead straight to repair; a fresher peer first gets a parity
    request; a staler peer gets nothing until it asks.
    """
    if not state.ca.verify(peer_msg.primer.to_bytes(), peer_msg.sig):
        return []
    mine = state.vf.primer
    actions = []
    if peer_msg.primer == mine:
        actions = repair_actions(state, peer_msg)
    elif peer_msg.primer.timestamp > mine.timestamp:
        actions = [Action("parity_request", plan_sync(state.vf, peer_msg.primer)[1])]
    if state.needs_ca:
        actions.append(Action("ca_request", state.cert_hash))
    return actions


# -- forest sync ---------------------------------------------------------------


def answer_parity_request(vf: ValidationForest, request: wire.ParityRequest) -> wire.RootResponse:
    roots = []
    for slot in request.slots:
        roots.extend(vf.roots[i] for i in vf.cfg.slot_indices(slot))
    return wire.RootResponse(vf.primer, vf.primer_sig, tuple(roots))


def sync_forest(state: NodeState, new_base: int, request: wire.ParityRequest, response: wire.RootResponse) -> bool:
    """Apply a root response; leaves the state untouched on any failure."""
    cfg = state.vf.cfg
    indices = [i for slot in request.slots for i in cfg.slot_indices(slot)]
    if len(indices) != len(response.roots):
        return False
    resp_base = window_base(response.primer.timestamp, cfg)
    if resp_base != new_base:
        return False
    updates = [(new_base + i, root) for i, root in zip(indices, response.roots)]
    try:
        state.vf = apply_root_updates(state.vf, updates, response.primer, response.sig, state.ca, new_base)
    except _REJECTED as exc:
        log.debug("root response rejected: %s", exc)
        return False
    state._drop_pruned_caches()
    state.try_commit()
    return True


# -- CA broadcasts -------------------------------------------------------------


def process_ca_update(state: NodeState, update: CAUpdate) -> bool:
    """Apply a daily update if it extends the forest this node holds."""
    try:
        vf = apply_root_updates(state.vf, update.changed_roots, update.primer, update.primer_sig, state.ca)
    except _REJECTED as exc:
        log.debug("CA update rejected: %s", exc)
        return False
    state.vf = vf
    state._drop_pruned_caches()
    working = state.working_poi
    for epoch, poi in update.update_pois:
        if not vf.in_window(epoch):
            continue
        status = proof_state(poi.leaf_hash, poi, vf.root_of(epoch))
        if status is None:
            continue
        absent = status == ABSENT
        if epoch == state.epoch and poi.leaf_hash != state.cert_hash:
            working = update_poi_with_poi(state.cert_hash, working, poi.leaf_hash, poi, new_absent=absent)
        if state.is_cacher and epoch in state.lcs:
            state.lcs[epoch] = update_lvl_cache_with_poi(state.lcs[epoch], poi.leaf_hash, poi, new_absent=absent)
    state.working_poi = working
    state.try_commit()
    return True


def process_epoch_change(state: NodeState, update: EpochChangeUpdate, lut: Optional[LookUpTable] = None) -> bool:
    """Adopt the new newest tree. ``lut`` may be passed if already built."""
    if lut is None:
        lut = LookUpTable.from_leaves(update.leaves)
    try:
        vf = apply_root_updates(state.vf, [(update.epoch, lut.root)], update.primer, update.primer_sig, state.ca)
    except _REJECTED as exc:
        log.debug("epoch change rejected: %s", exc)
        return False
    state.vf = vf
    state._drop_pruned_caches()
    if state.epoch == update.epoch and state.cert_hash in lut:
        state.working_poi = calc_poi(state.cert_hash, lut)
    if state.is_cacher:
        state.lcs[update.epoch] = construct_lvl_cache(state.clvl, lut, update.epoch)
    state.try_commit()
    return True


# -- repair ----------------------------------------------------------------------


def answer_poi_request(state: NodeState) -> Optional[ProofOfInclusion]:
    """Our own proof, or None when it is not currently valid."""
    return state.own_poi if state.poi_valid and state.epoch_root() != CLEAN_EPOCH_ROOT else None


def try_direct_repair(state: NodeState, peer_poi: Optional[ProofOfInclusion]) -> bool:
    """Blend a same-epoch peer's proof into the working proof."""
    root = state.epoch_root()
    if peer_poi is None or root is None or peer_poi.leaf_hash == state.cert_hash:
        return False
    if not verify_poi(peer_poi.leaf_hash, peer_poi, root):
        return False
    state.working_poi = update_poi_with_poi(state.cert_hash, state.working_poi, peer_poi.leaf_hash, peer_poi)
    return state.try_commit()


def answer_lc_repair(cacher: NodeState, epoch: int, poi: ProofOfInclusion) -> Optional[ProofOfInclusion]:
    """Cacher side of a cache repair; declines when its cache is stale."""
    lc = cacher.lcs.get(epoch)
    if lc is None or not cacher.vf.in_window(epoch) or lc.root != cacher.vf.root_of(epoch):
        return None
    return update_poi_with_lvl_cache(poi.leaf_hash, poi, lc)


def try_lc_repair(state: NodeState, repaired: Optional[ProofOfInclusion]) -> bool:
    """Requester side: commit the cacher's result only if it verifies."""
    if repaired is None or repaired.leaf_hash != state.cert_hash:
        return False
    if not state.proof_ok(repaired):
        return False
    state.working_poi = repaired
    return state.try_commit()


def answer_lc_request(cacher: NodeState, request: wire.LcRequest) -> list[LevelCache]:
    out = []
    for rel in request.rel_epochs:
        e = cacher.vf.base_epoch + rel
        lc = cacher.lcs.get(e)
        if lc is not None and cacher.vf.in_window(e) and lc.root == cacher.vf.root_of(e):
            out.append(lc)
    return out


def install_level_caches(state: NodeState, caches: list[LevelCache]) -> int:
    """Keep caches whose root matches our forest; returns how many were taken."""
    taken = 0
    for lc in caches:
        if state.vf.in_window(lc.epoch) and lc.root == state.vf.root_of(lc.epoch) and lc.clvl == state.clvl:
            state.lcs[lc.epoch] = lc
            taken += 1
    return taken


def record_failed_meeting(state: NodeState) -> None:
    state.failed_repair_meets += 1
    if state.failed_repair_meets >= state.give_up_threshold:
        state.needs_ca = True


def validate_peer_certificate(state: NodeState, peer_cert_hash, peer_poi: ProofOfInclusion, peer_epoch: int) -> bool:
    if not state.vf.in_window(peer_epoch):
        raise OutOfWindowError(f"epoch {peer_epoch} outside the window: certificate expired")
    root = state.vf.root_of(peer_epoch)
    if root == CLEAN_EPOCH_ROOT:
        return True
    return verify_poi(peer_cert_hash, peer_poi, root)


# -- whole encounters ------------------------------------------------------------


@dataclass(frozen=True)
class Message:
    sender: str
    kind: str
    size: int


@dataclass
class Transcript:
    messages: list[Message] = field(default_factory=list)
    synced: list[str] = field(default_factory=list)
    repaired: list[str] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)

    def add(self, sender: str, kind: str, data: bytes) -> bytes:
        self.messages.append(Message(sender, kind, len(data)))
        return data

    @property
    def total_bytes(self) -> int:
        return sum(m.size for m in self.messages)

    def bytes_after_contact(self) -> int:
        return sum(m.size for m in self.messages if m.kind != "CONTACT")


def _sync_step(t: Transcript, names, states, stale: int) -> None:
    fresh = 1 - stale
    s, f = states[stale], states[fresh]
    new_base, req = plan_sync(s.vf, f.vf.primer)
    req_bytes = t.add(names[stale], "PARITY_REQUEST", req.to_bytes())
    resp = answer_parity_request(f.vf, wire.ParityRequest.from_bytes(req_bytes, f.vf.cfg))
    resp_bytes = t.add(names[fresh], "ROOT_RESPONSE", resp.to_bytes())
    if sync_forest(s, new_base, req, wire.RootResponse.from_bytes(resp_bytes, s.vf.cfg)):
        t.synced.append(names[stale])


def _repair_step(t: Transcript, names, states, me: int, peer_msg: wire.ContactMessage) -> None:
    peer = states[1 - me]
    s = states[me]
    was_valid = s.poi_valid
    for action in repair_actions(s, peer_msg):
        if action.kind == "lc_request":
            req = t.add(names[me], "LC_REQUEST", action.payload.to_bytes())
            caches = answer_lc_request(peer, wire.LcRequest.from_bytes(req))
            resp = t.add(names[1 - me], "LC_RESPONSE", wire.encode_lc_response(caches))
            install_level_caches(s, wire.decode_lc_response(resp))
        elif action.kind == "lc_repair_request" and not s.poi_valid:
            req = t.add(names[me], "LC_REPAIR_REQUEST", wire.encode_lc_repair_request(action.payload))
            repaired = answer_lc_repair(peer, s.epoch, wire.decode_lc_repair_request(req))
            resp = t.add(names[1 - me], "LC_REPAIR_RESPONSE", wire.encode_lc_repair_response(repaired))
            try_lc_repair(s, wire.decode_lc_repair_response(resp))
        elif action.kind == "poi_request" and not s.poi_valid:
            t.add(names[me], "POI_REQUEST", wire.POI_REQUEST)
            resp = t.add(names[1 - me], "POI_RESPONSE", wire.encode_poi_response(answer_poi_request(peer)))
            try_direct_repair(s, wire.decode_poi_response(resp))
    if was_valid or s.rel_epoch == wire.NO_EPOCH:
        return
    if s.poi_valid:
        t.repaired.append(names[me])
    else:
        record_failed_meeting(s)
        t.failed.append(names[me])


def run_contact(a: NodeState, b: NodeState, authority: Optional[Authority] = None, names=("A", "B")) -> Transcript:
    """Play one encounter end to end through the wire encodings.

    With ``authority`` given, a node that has given up on peers falls back to
    the CA at the end of the encounter.
    """
    t = Transcript()
    states = (a, b)
    raw = [t.add(names[i], "CONTACT", make_contact_message(states[i]).to_bytes()) for i in range(2)]
    msgs = [wire.ContactMessage.from_bytes(raw[i], states[i].vf.cfg) for i in range(2)]
    for i in range(2):
        if not states[1 - i].ca.verify(msgs[i].primer.to_bytes(), msgs[i].sig):
            return t
    if msgs[0].primer != msgs[1].primer:
        ta, tb = msgs[0].primer.timestamp, msgs[1].primer.timestamp
        if ta != tb:
            _sync_step(t, names, states, 0 if ta < tb else 1)
    if a.vf.primer == b.vf.primer:
        current = [make_contact_message(s) for s in states]
        for i in range(2):
            _repair_step(t, names, states, i, current[1 - i])
    if authority is not None:
        for i in range(2):
            if states[i].needs_ca:
                ca_fallback(states[i], authority, t, names[i])
    return t


def ca_fallback(state: NodeState, authority: Authority, t: Optional[Transcript] = None, name: str = "node") -> bool:
    """Fetch a fresh proof (and the forest if needed) straight from the CA."""
    t = t if t is not None else Transcript()
    if state.vf.primer != authority.forest.primer:
        new_base, req = plan_sync(state.vf, authority.forest.primer)
        t.add(name, "PARITY_REQUEST", req.to_bytes())
        resp = answer_parity_request(authority.forest, req)
        sync_forest(state, new_base, req, wire.RootResponse.from_bytes(t.add("CA", "ROOT_RESPONSE", resp.to_bytes())))
    req = t.add(name, "CA_POI_REQUEST", wire.encode_ca_poi_request(state.cert_hash))
    try:
        poi, primer, sig = authority.answer_poi_request(wire.decode_ca_poi_request(req))
    except SmtForestError as exc:
        log.info("CA refused proof request: %s", exc)
        return False
    data = t.add("CA", "CA_POI_RESPONSE", wire.encode_ca_poi_response(poi, primer, sig))
    try:
        poi, primer, sig = wire.decode_ca_poi_response(data, state.vf.cfg)
    except DecodeError:
        return False
    if primer != state.vf.primer or not state.ca.verify(primer.to_bytes(), sig):
        return False
    state.working_poi = poi
    return state.try_commit()
