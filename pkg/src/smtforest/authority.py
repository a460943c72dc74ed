"""Certificate authority: registry, per-epoch trees, signed updates.

Mutations (issuance into the current window, revocation) touch the epoch
trees immediately but are only published by :meth:`Authority.build_update`,
which signs a new primer and bundles a fresh proof for every changed leaf.
Proofs are taken from the final tree state at build time, so every proof in
one update verifies against the same roots.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from .crypto import CaIdentity, CryptoSuite, KeyPair, StubSuite
from .errors import CertificateStateError, DuplicateCertificateError, OutOfWindowError
from .forest import (
    CLEAN_EPOCH_ROOT,
    DEFAULT_CONFIG,
    UNKNOWN_EPOCH_ROOT,
    EpochConfig,
    Primer,
    ValidationForest,
    compute_primer,
    epoch_of,
    window_base,
)
from .hash_tree import LookUpTable, Position, ProofOfInclusion, calc_poi, to_digest, to_int

log = logging.getLogger(__name__)


class CertStatus(enum.Enum):
    STAGED = "staged"
    ACTIVE = "active"
    REVOKED = "revoked"
    EXPIRED = "expired"


@dataclass
class CertificateRecord:
    cert_hash: bytes
    expiry: int
    epoch: int
    status: CertStatus = CertStatus.ACTIVE


@dataclass(frozen=True)
class CAUpdate:
    primer: Primer
    primer_sig: bytes
    changed_roots: tuple[tuple[int, bytes], ...] = ()
    update_pois: tuple[tuple[int, ProofOfInclusion], ...] = ()

    @property
    def is_heartbeat(self) -> bool:
        return not self.changed_roots and not self.update_pois


@dataclass(frozen=True)
class EpochChangeUpdate:
    primer: Primer
    primer_sig: bytes
    epoch: int
    leaves: tuple[bytes, ...]


class Authority:
    """Single CA holding one tree per epoch of the current window.

    ``publish_clean_epochs`` makes epochs that never saw a revocation publish
    the clean-epoch sentinel root instead of their tree root.
    """

    def __init__(
        self,
        cfg: EpochConfig = DEFAULT_CONFIG,
        *,
        now: int = 0,
        suite: Optional[CryptoSuite] = None,
        keypair: Optional[KeyPair] = None,
        key_seed: bytes = b"",
        publish_clean_epochs: bool = False,
    ):
        self.cfg = cfg
        self.suite = suite if suite is not None else StubSuite()
        self.keypair = keypair if keypair is not None else self.suite.generate_keypair(key_seed)
        self.publish_clean_epochs = publish_clean_epochs
        self.base_epoch = window_base(now, cfg)
        self.luts: dict[int, LookUpTable] = {e: LookUpTable() for e in self._window()}
        self.records: dict[bytes, CertificateRecord] = {}
        self._revoked_in: dict[int, int] = {}
        self._staged: dict[bytes, CertificateRecord] = {}
        self._pending: dict[int, set[int]] = {}
        self._vf = self._sign_forest(now)

    # -- bookkeeping -------------------------------------------------------

    @property
    def identity(self) -> CaIdentity:
        return CaIdentity(self.suite, self.keypair.public)

    @property
    def newest_epoch(self) -> int:
        return self.base_epoch + self.cfg.epoch_count - 1

    @property
    def forest(self) -> ValidationForest:
        """The last published forest (pending mutations excluded)."""
        return self._vf

    @property
    def has_pending(self) -> bool:
        return bool(self._pending)

    def _window(self) -> range:
        return range(self.base_epoch, self.base_epoch + self.cfg.epoch_count)

    def published_root(self, epoch: int) -> bytes:
        lut = self.luts.get(epoch)
        if lut is None:
            return UNKNOWN_EPOCH_ROOT
        if self.publish_clean_epochs and lut.leaf_count and not self._revoked_in.get(epoch):
            return CLEAN_EPOCH_ROOT
        return lut.root

    def _sign_forest(self, now: int) -> ValidationForest:
        roots = tuple(self.published_root(e) for e in self._window())
        primer = compute_primer(roots, now, self.cfg)
        sig = self.suite.sign(self.keypair.private, primer.to_bytes())
        return ValidationForest(self.cfg, self.base_epoch, roots, primer, sig)

    def _check_time(self, now: int) -> None:
        if now <= self._vf.primer.timestamp:
            raise CertificateStateError(f"timestamp {now} not after last primer {self._vf.primer.timestamp}")

    def record(self, cert_hash: Position) -> CertificateRecord:
        rec = self.records.get(to_digest(cert_hash))
        if rec is None:
            raise CertificateStateError("unknown certificate")
        return rec

    # -- certificate lifecycle ------------------------------------------------

    def _new_record(self, cert_hash: Position, expiry: int, lo: int, hi: int) -> CertificateRecord:
        digest = to_digest(cert_hash)
        if digest in self.records or digest in self._staged:
            raise DuplicateCertificateError(digest.hex())
        epoch = epoch_of(expiry, self.cfg)
        if not lo <= epoch <= hi:
            raise OutOfWindowError(f"expiry epoch {epoch} outside [{lo}, {hi}]")
        return CertificateRecord(digest, expiry, epoch)

    def stage_certificate(self, cert_hash: Position, expiry: int) -> CertificateRecord:
        """Queue a certificate; it enters its tree at the next epoch change."""
        rec = self._new_record(cert_hash, expiry, self.base_epoch + 1, self.newest_epoch + 1)
        rec.status = CertStatus.STAGED
        self._staged[rec.cert_hash] = rec
        return rec

    def issue(self, cert_hash: Position, expiry: int) -> CertificateRecord:
        """Insert a certificate into a tree of the current window right away.

        Published with the next :meth:`build_update`.
        """
        rec = self._new_record(cert_hash, expiry, self.base_epoch, self.newest_epoch)
        self._insert(rec)
        return rec

    def _insert(self, rec: CertificateRecord) -> None:
        rec.status = CertStatus.ACTIVE
        self.records[rec.cert_hash] = rec
        self.luts[rec.epoch].add(rec.cert_hash)
        self._pending.setdefault(rec.epoch, set()).add(to_int(rec.cert_hash))

    def revoke(self, cert_hash: Position) -> CertificateRecord:
        rec = self.record(cert_hash)
        if rec.status is not CertStatus.ACTIVE:
            raise CertificateStateError(f"certificate is {rec.status.value}")
        self.luts[rec.epoch].remove(rec.cert_hash)
        rec.status = CertStatus.REVOKED
        self._revoked_in[rec.epoch] = self._revoked_in.get(rec.epoch, 0) + 1
        self._pending.setdefault(rec.epoch, set()).add(to_int(rec.cert_hash))
        return rec

    def bulk_load(self, certs: Iterable[tuple[Position, int]], now: int) -> ValidationForest:
        """Populate empty trees in one pass and publish the result.

        Much faster than repeated :meth:`issue` for large populations.
        """
        if self.records or self._pending:
            raise CertificateStateError("bulk load needs an empty authority")
        by_epoch: dict[int, list[int]] = {}
        for cert_hash, expiry in certs:
            rec = self._new_record(cert_hash, expiry, self.base_epoch, self.newest_epoch)
            self.records[rec.cert_hash] = rec
            by_epoch.setdefault(rec.epoch, []).append(to_int(rec.cert_hash))
        for epoch, leaves in by_epoch.items():
            self.luts[epoch] = LookUpTable.from_leaves(leaves, self.luts[epoch].empties)
        self._check_time(now)
        self._vf = self._sign_forest(now)
        return self._vf

    # -- publication -------------------------------------------------------

    def build_update(self, now: int) -> CAUpdate:
        """Publish every mutation since the previous update, or a heartbeat."""
        self._check_time(now)
        if window_base(now, self.cfg) != self.base_epoch:
            raise CertificateStateError("epoch change due before the next update")
        old_roots = self._vf.roots
        self._vf = self._sign_forest(now)
        changed = tuple(
            (e, self._vf.roots[e - self.base_epoch])
            for e in sorted(self._pending)
            if self._vf.roots[e - self.base_epoch] != old_roots[e - self.base_epoch]
        )
        pois = []
        for epoch in sorted(self._pending):
            if self._vf.roots[epoch - self.base_epoch] == CLEAN_EPOCH_ROOT:
                continue
            lut = self.luts[epoch]
            pois.extend((epoch, calc_poi(leaf, lut)) for leaf in sorted(self._pending[epoch]))
        self._pending = {}
        return CAUpdate(self._vf.primer, self._vf.primer_sig, changed, tuple(pois))

    def epoch_change(self, now: int) -> EpochChangeUpdate:
        """Slide the window to the epoch of ``now`` and publish the new tree.

        Staged certificates for the new newest epoch go out in the returned
        leaf list. Staged certificates for older epochs are inserted after
        signing and published by the next :meth:`build_update`.
        """
        self._check_time(now)
        if self._pending:
            raise CertificateStateError("publish pending mutations before an epoch change")
        new_base = window_base(now, self.cfg)
        if new_base <= self.base_epoch:
            raise CertificateStateError("no epoch boundary crossed")
        for epoch in range(self.base_epoch, new_base):
            lut = self.luts.pop(epoch, None)
            self._revoked_in.pop(epoch, None)
            if lut is not None:
                for leaf in lut.leaves():
                    self.records[leaf].status = CertStatus.EXPIRED
        self.base_epoch = new_base
        for epoch in self._window():
            self.luts.setdefault(epoch, LookUpTable())

        newest = self.newest_epoch
        staged = sorted(self._staged.values(), key=lambda r: r.cert_hash)
        self._staged = {}
        later = []
        fresh = []
        for rec in staged:
            if rec.epoch < self.base_epoch:
                rec.status = CertStatus.EXPIRED
                self.records[rec.cert_hash] = rec
            elif rec.epoch == newest:
                rec.status = CertStatus.ACTIVE
                self.records[rec.cert_hash] = rec
                fresh.append(to_int(rec.cert_hash))
            else:
                later.append(rec)
        if fresh:
            lut = self.luts[newest]
            if lut.leaf_count:
                for leaf in fresh:
                    lut.add(leaf)
            else:
                self.luts[newest] = LookUpTable.from_leaves(fresh, lut.empties)
        self._vf = self._sign_forest(now)
        for rec in later:
            self._insert(rec)
        if later:
            log.info("%d staged certificates deferred to the next update", len(later))
        leaves = tuple(self.luts[newest].leaves())
        return EpochChangeUpdate(self._vf.primer, self._vf.primer_sig, newest, leaves)

    # -- direct requests -----------------------------------------------------

    def poi_for(self, cert_hash: Position) -> ProofOfInclusion:
        """Proof from the live tree, which may include unpublished mutations."""
        rec = self.record(cert_hash)
        return calc_poi(rec.cert_hash, self.luts[rec.epoch])

    def answer_poi_request(self, cert_hash: Position) -> tuple[ProofOfInclusion, Primer, bytes]:
        rec = self.record(cert_hash)
        if rec.status is not CertStatus.ACTIVE:
            raise CertificateStateError(f"certificate is {rec.status.value}")
        if rec.epoch in self._pending:
            raise CertificateStateError("epoch has unpublished mutations")
        return self.poi_for(rec.cert_hash), self._vf.primer, self._vf.primer_sig
