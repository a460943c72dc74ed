"""Validation forest: a sliding window of per-epoch tree roots and its primer.

The window always starts at the epoch containing the primer timestamp, so a
primer alone tells a node which absolute epochs its roots belong to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

from .crypto import CaIdentity
from .errors import (
    AuthenticationError,
    DecodeError,
    InconsistentUpdateError,
    OutOfWindowError,
    ReplayError,
)
from .hash_tree import DIGEST_SIZE, EMPTY_LEAF, EMPTY_ROOT, sha256

TIMESTAMP_SIZE = 4

# Root of an epoch whose tree is not known yet.
UNKNOWN_EPOCH_ROOT = EMPTY_ROOT
# Root the CA may publish for an epoch without revocations.
CLEAN_EPOCH_ROOT = EMPTY_LEAF


@dataclass(frozen=True)
class EpochConfig:
    epoch_count: int = 52
    epoch_duration: int = 7 * 24 * 3600
    main_checksums: int = 2
    roots_per_aggregate: int = 10
    checksum_bytes: int = 2

    def __post_init__(self):
        if not 0 <= self.main_checksums <= self.epoch_count:
            raise ValueError("main_checksums must lie within [0, epoch_count]")
        if self.roots_per_aggregate < 1 or self.checksum_bytes < 1 or self.epoch_duration < 1:
            raise ValueError("aggregate size, checksum size and epoch duration must be positive")
        if self.epoch_count > 63:
            # the contact message carries the relative epoch in 6 bits
            raise ValueError("at most 63 epochs fit the contact message")

    @property
    def aggregate_count(self) -> int:
        return math.ceil((self.epoch_count - self.main_checksums) / self.roots_per_aggregate)

    @property
    def parity_count(self) -> int:
        return self.main_checksums + self.aggregate_count

    @property
    def parity_size(self) -> int:
        return self.parity_count * self.checksum_bytes

    @property
    def primer_size(self) -> int:
        return DIGEST_SIZE + self.parity_size + TIMESTAMP_SIZE

    def slot_ages(self, slot: int) -> range:
        """Ages (0 = newest epoch) covered by a parity slot."""
        if not 0 <= slot < self.parity_count:
            raise IndexError(slot)
        if slot < self.main_checksums:
            return range(slot, slot + 1)
        start = self.main_checksums + (slot - self.main_checksums) * self.roots_per_aggregate
        return range(start, min(start + self.roots_per_aggregate, self.epoch_count))

    def slot_of_age(self, age: int) -> int:
        if age < self.main_checksums:
            return age
        return self.main_checksums + (age - self.main_checksums) // self.roots_per_aggregate

    def slot_indices(self, slot: int) -> list[int]:
        """Window indices (0 = oldest) covered by a slot, newest first."""
        return [self.epoch_count - 1 - age for age in self.slot_ages(slot)]


DEFAULT_CONFIG = EpochConfig()


@dataclass(frozen=True)
class Primer:
    root: bytes
    parities: bytes
    timestamp: int

    def to_bytes(self) -> bytes:
        return self.root + self.parities + self.timestamp.to_bytes(TIMESTAMP_SIZE, "big")

    @classmethod
    def from_bytes(cls, data: bytes, cfg: EpochConfig = DEFAULT_CONFIG) -> "Primer":
        if len(data) != cfg.primer_size:
            raise DecodeError(f"primer must be {cfg.primer_size} bytes, got {len(data)}", min(len(data), cfg.primer_size))
        p = DIGEST_SIZE + cfg.parity_size
        return cls(bytes(data[:DIGEST_SIZE]), bytes(data[DIGEST_SIZE:p]), int.from_bytes(data[p:], "big"))

    def parity(self, slot: int, cfg: EpochConfig = DEFAULT_CONFIG) -> bytes:
        n = cfg.checksum_bytes
        return self.parities[slot * n : (slot + 1) * n]


@dataclass(frozen=True)
class ValidationForest:
    cfg: EpochConfig
    base_epoch: int
    roots: tuple[bytes, ...]
    primer: Primer
    primer_sig: bytes

    def __post_init__(self):
        if len(self.roots) != self.cfg.epoch_count:
            raise ValueError(f"forest needs {self.cfg.epoch_count} roots, got {len(self.roots)}")

    @property
    def newest_epoch(self) -> int:
        return self.base_epoch + self.cfg.epoch_count - 1

    def in_window(self, epoch: int) -> bool:
        return self.base_epoch <= epoch <= self.newest_epoch

    def root_of(self, epoch: int) -> bytes:
        if not self.in_window(epoch):
            raise OutOfWindowError(f"epoch {epoch} outside window starting at {self.base_epoch}")
        return self.roots[epoch - self.base_epoch]

    def local_primer(self) -> Primer:
        """Primer recomputed from the roots held, keeping the signed timestamp."""
        return compute_primer(self.roots, self.primer.timestamp, self.cfg)

    def is_consistent(self) -> bool:
        return self.local_primer() == self.primer


def epoch_of(expiry: int, cfg: EpochConfig = DEFAULT_CONFIG, base_epoch: Optional[int] = None) -> int:
    """Absolute epoch of a timestamp; checked against the window when given one."""
    if expiry < 0:
        raise OutOfWindowError("negative timestamp")
    epoch = expiry // cfg.epoch_duration
    if base_epoch is not None and not base_epoch <= epoch < base_epoch + cfg.epoch_count:
        raise OutOfWindowError(
            f"expiry epoch {epoch} outside [{base_epoch}, {base_epoch + cfg.epoch_count}); lifetime exceeds maximum"
        )
    return epoch


def compute_parities(roots: Sequence[bytes], cfg: EpochConfig = DEFAULT_CONFIG) -> bytes:
    if len(roots) != cfg.epoch_count:
        raise ValueError(f"expected {cfg.epoch_count} roots")
    newest_first = roots[::-1]
    n = cfg.checksum_bytes
    out = []
    for slot in range(cfg.parity_count):
        ages = cfg.slot_ages(slot)
        out.append(sha256(b"".join(newest_first[ages.start : ages.stop]))[:n])
    return b"".join(out)


def compute_primer(roots: Sequence[bytes], timestamp: int, cfg: EpochConfig = DEFAULT_CONFIG) -> Primer:
    if len(roots) != cfg.epoch_count:
        raise ValueError(f"expected {cfg.epoch_count} roots")
    if not 0 <= timestamp < 1 << (8 * TIMESTAMP_SIZE):
        raise ValueError("timestamp does not fit 4 bytes")
    return Primer(sha256(b"".join(roots)), compute_parities(roots, cfg), timestamp)


def diff_parities(local: Primer, remote: Primer, cfg: EpochConfig = DEFAULT_CONFIG) -> set[int]:
    """Slots whose checksums differ.

    An empty result with differing roots means a checksum collision; the
    caller then has to fetch every root.
    """
    n = cfg.checksum_bytes
    return {
        slot
        for slot in range(cfg.parity_count)
        if local.parities[slot * n : (slot + 1) * n] != remote.parities[slot * n : (slot + 1) * n]
    }


def window_base(timestamp: int, cfg: EpochConfig = DEFAULT_CONFIG) -> int:
    return timestamp // cfg.epoch_duration


def forest_prune(vf: ValidationForest, count: int = 1) -> ValidationForest:
    """Drop the ``count`` oldest roots; new newest slots start as unknown."""
    if count <= 0:
        return vf
    e = vf.cfg.epoch_count
    kept = vf.roots[count:] if count < e else ()
    roots = kept + (UNKNOWN_EPOCH_ROOT,) * (e - len(kept))
    return replace(vf, base_epoch=vf.base_epoch + count, roots=roots)


def apply_root_updates(
    vf: ValidationForest,
    updates: Iterable[tuple[int, bytes]],
    new_primer: Primer,
    new_sig: bytes,
    ca: CaIdentity,
    new_base_epoch: Optional[int] = None,
) -> ValidationForest:
    """Return the forest with ``updates`` applied, or raise and change nothing.

    ``updates`` are ``(absolute epoch, root)`` pairs. The window moves to
    ``new_base_epoch`` (default: the epoch of the primer timestamp) first.
    """
    cfg = vf.cfg
    if new_primer.timestamp < vf.primer.timestamp or (
        new_primer.timestamp == vf.primer.timestamp and new_primer != vf.primer
    ):
        raise ReplayError(f"primer timestamp {new_primer.timestamp} not newer than {vf.primer.timestamp}")
    if not ca.verify(new_primer.to_bytes(), new_sig):
        raise AuthenticationError("primer signature does not verify")
    if new_base_epoch is None:
        new_base_epoch = max(vf.base_epoch, window_base(new_primer.timestamp, cfg))
    if new_base_epoch < vf.base_epoch:
        raise InconsistentUpdateError("update moves the window backwards")
    staged = forest_prune(vf, new_base_epoch - vf.base_epoch)
    roots = list(staged.roots)
    for epoch, root in updates:
        if not staged.in_window(epoch):
            raise InconsistentUpdateError(f"root for epoch {epoch} outside window")
        if len(root) != DIGEST_SIZE:
            raise InconsistentUpdateError("root has wrong length")
        roots[epoch - staged.base_epoch] = root
    recomputed = compute_primer(roots, new_primer.timestamp, cfg)
    if recomputed.to_bytes() != new_primer.to_bytes():
        raise InconsistentUpdateError("roots do not reproduce the signed primer")
    return replace(staged, roots=tuple(roots), primer=new_primer, primer_sig=new_sig)
