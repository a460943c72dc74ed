"""Byte layouts for every structure and protocol message.

All integers are big-endian. Decoders accept exactly one encoded value and
raise :class:`DecodeError` (with the offending offset) on truncated, over-long
or otherwise malformed input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, TypeVar

from .authority import CAUpdate, EpochChangeUpdate
from .crypto import SIGNATURE_SIZE
from .errors import DecodeError
from .forest import DEFAULT_CONFIG, EpochConfig, Primer
from .hash_tree import DIGEST_SIZE, ProofOfInclusion
from .repair import LevelCache

T = TypeVar("T")

NO_EPOCH = 63  # relative epoch value meaning "no certificate in the window"
CONTACT_SIZE = DEFAULT_CONFIG.primer_size + SIGNATURE_SIZE + 1


class Reader:
    """Cursor over a buffer that reports offsets in its errors."""

    def __init__(self, data: bytes, offset: int = 0):
        self.data = bytes(data)
        self.pos = offset

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int, what: str = "field") -> bytes:
        if n < 0 or self.remaining < n:
            raise DecodeError(f"truncated {what}: need {n} bytes, have {self.remaining}", len(self.data))
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def uint(self, n: int, what: str = "integer") -> int:
        return int.from_bytes(self.take(n, what), "big")

    def primer(self, cfg: EpochConfig) -> Primer:
        return Primer.from_bytes(self.take(cfg.primer_size, "primer"), cfg)

    def poi(self) -> ProofOfInclusion:
        poi, self.pos = ProofOfInclusion.from_bytes(self.data, self.pos)
        return poi

    def finish(self) -> None:
        if self.remaining:
            raise DecodeError(f"{self.remaining} trailing bytes", self.pos)


def _whole(data: bytes, parse: Callable[[Reader], T]) -> T:
    r = Reader(data)
    value = parse(r)
    r.finish()
    return value


# -- contact -----------------------------------------------------------------


@dataclass(frozen=True)
class ContactMessage:
    primer: Primer
    sig: bytes
    rel_epoch: int = NO_EPOCH
    has_lc: bool = False
    lc_fresh: bool = False

    def __post_init__(self):
        if not 0 <= self.rel_epoch <= NO_EPOCH:
            raise ValueError("relative epoch must fit 6 bits")

    @property
    def info(self) -> int:
        return (self.rel_epoch << 2) | (int(self.has_lc) << 1) | int(self.lc_fresh)

    def to_bytes(self) -> bytes:
        return self.primer.to_bytes() + self.sig + bytes([self.info])

    @classmethod
    def from_bytes(cls, data: bytes, cfg: EpochConfig = DEFAULT_CONFIG) -> "ContactMessage":
        def parse(r: Reader):
            primer = r.primer(cfg)
            sig = r.take(SIGNATURE_SIZE, "signature")
            info = r.uint(1, "info byte")
            return cls(primer, sig, info >> 2, bool(info & 2), bool(info & 1))

        return _whole(data, parse)


# -- forest synchronisation ----------------------------------------------------


@dataclass(frozen=True)
class ParityRequest:
    slots: tuple[int, ...]

    def to_bytes(self) -> bytes:
        return bytes([len(self.slots), *self.slots])

    @classmethod
    def from_bytes(cls, data: bytes, cfg: EpochConfig = DEFAULT_CONFIG) -> "ParityRequest":
        def parse(r: Reader):
            count = r.uint(1, "slot count")
            slots = tuple(r.take(count, "slot list"))
            for i, s in enumerate(slots):
                if s >= cfg.parity_count:
                    raise DecodeError(f"slot {s} out of range", 1 + i)
            return cls(slots)

        return _whole(data, parse)


@dataclass(frozen=True)
class RootResponse:
    """Signed primer plus the roots of the requested slots.

    Roots follow the request's slot order, newest first inside a slot, so the
    receiver maps them back without per-root headers. Requesting every slot
    yields the whole forest.
    """

    primer: Primer
    sig: bytes
    roots: tuple[bytes, ...]

    def to_bytes(self) -> bytes:
        return self.primer.to_bytes() + self.sig + b"".join(self.roots)

    @classmethod
    def from_bytes(cls, data: bytes, cfg: EpochConfig = DEFAULT_CONFIG) -> "RootResponse":
        def parse(r: Reader):
            primer = r.primer(cfg)
            sig = r.take(SIGNATURE_SIZE, "signature")
            if r.remaining % DIGEST_SIZE:
                raise DecodeError("root list is not a whole number of digests", r.pos)
            roots = tuple(r.take(DIGEST_SIZE, "root") for _ in range(r.remaining // DIGEST_SIZE))
            return cls(primer, sig, roots)

        return _whole(data, parse)


# -- repair messages -----------------------------------------------------------


def encode_poi(poi: ProofOfInclusion) -> bytes:
    return poi.to_bytes()


def decode_poi(data: bytes) -> ProofOfInclusion:
    return _whole(data, Reader.poi)


POI_REQUEST = b""


def encode_poi_response(poi: ProofOfInclusion | None) -> bytes:
    """Empty payload means the peer declines."""
    return b"" if poi is None else poi.to_bytes()


def decode_poi_response(data: bytes) -> ProofOfInclusion | None:
    return None if not data else decode_poi(data)


encode_lc_repair_request = encode_poi
decode_lc_repair_request = decode_poi
encode_lc_repair_response = encode_poi_response
decode_lc_repair_response = decode_poi_response


@dataclass(frozen=True)
class LcRequest:
    """Cacher asking a fresher cacher for the caches of some epochs."""

    rel_epochs: tuple[int, ...]

    def to_bytes(self) -> bytes:
        return bytes([len(self.rel_epochs), *self.rel_epochs])

    @classmethod
    def from_bytes(cls, data: bytes) -> "LcRequest":
        def parse(r: Reader):
            count = r.uint(1, "epoch count")
            return cls(tuple(r.take(count, "epoch list")))

        return _whole(data, parse)


def encode_lc_response(caches: list[LevelCache]) -> bytes:
    return bytes([len(caches)]) + b"".join(lc.to_bytes() for lc in caches)


def decode_lc_response(data: bytes) -> list[LevelCache]:
    def parse(r: Reader):
        out = []
        for _ in range(r.uint(1, "cache count")):
            lc, r.pos = LevelCache.from_bytes(r.data, r.pos)
            out.append(lc)
        return out

    return _whole(data, parse)


def encode_ca_poi_request(cert_hash: bytes) -> bytes:
    if len(cert_hash) != DIGEST_SIZE:
        raise ValueError("certificate hash must be 32 bytes")
    return bytes(cert_hash)


def decode_ca_poi_request(data: bytes) -> bytes:
    return _whole(data, lambda r: r.take(DIGEST_SIZE, "certificate hash"))


def encode_ca_poi_response(poi: ProofOfInclusion, primer: Primer, sig: bytes) -> bytes:
    return poi.to_bytes() + primer.to_bytes() + sig


def decode_ca_poi_response(data: bytes, cfg: EpochConfig = DEFAULT_CONFIG) -> tuple[ProofOfInclusion, Primer, bytes]:
    return _whole(data, lambda r: (r.poi(), r.primer(cfg), r.take(SIGNATURE_SIZE, "signature")))


# -- CA broadcasts -------------------------------------------------------------


def encode_ca_update(update: CAUpdate) -> bytes:
    parts = [update.primer.to_bytes(), update.primer_sig, len(update.changed_roots).to_bytes(2, "big")]
    for epoch, root in update.changed_roots:
        parts += [epoch.to_bytes(2, "big"), root]
    parts.append(len(update.update_pois).to_bytes(2, "big"))
    for epoch, poi in update.update_pois:
        parts += [epoch.to_bytes(2, "big"), poi.to_bytes()]
    return b"".join(parts)


def decode_ca_update(data: bytes, cfg: EpochConfig = DEFAULT_CONFIG) -> CAUpdate:
    def parse(r: Reader):
        primer = r.primer(cfg)
        sig = r.take(SIGNATURE_SIZE, "signature")
        roots = tuple((r.uint(2, "epoch"), r.take(DIGEST_SIZE, "root")) for _ in range(r.uint(2, "root count")))
        pois = tuple((r.uint(2, "epoch"), r.poi()) for _ in range(r.uint(2, "proof count")))
        return CAUpdate(primer, sig, roots, pois)

    return _whole(data, parse)


def ca_update_size(update: CAUpdate) -> int:
    """Encoded length without building the buffer."""
    size = len(update.primer.to_bytes()) + SIGNATURE_SIZE + 2 + 34 * len(update.changed_roots) + 2
    return size + sum(2 + poi.encoded_size for _, poi in update.update_pois)


def encode_epoch_change(update: EpochChangeUpdate) -> bytes:
    return b"".join(
        (
            update.primer.to_bytes(),
            update.primer_sig,
            update.epoch.to_bytes(2, "big"),
            len(update.leaves).to_bytes(4, "big"),
            *update.leaves,
        )
    )


def decode_epoch_change(data: bytes, cfg: EpochConfig = DEFAULT_CONFIG) -> EpochChangeUpdate:
    def parse(r: Reader):
        primer = r.primer(cfg)
        sig = r.take(SIGNATURE_SIZE, "signature")
        epoch = r.uint(2, "epoch")
        count = r.uint(4, "leaf count")
        if count * DIGEST_SIZE > r.remaining:
            raise DecodeError("leaf count exceeds buffer", r.pos - 4)
        leaves = tuple(r.take(DIGEST_SIZE, "leaf") for _ in range(count))
        return EpochChangeUpdate(primer, sig, epoch, leaves)

    return _whole(data, parse)


def epoch_change_size(update: EpochChangeUpdate) -> int:
    return len(update.primer.to_bytes()) + SIGNATURE_SIZE + 2 + 4 + DIGEST_SIZE * len(update.leaves)


def encode_level_cache(lc: LevelCache) -> bytes:
    return lc.to_bytes()


def decode_level_cache(data: bytes) -> LevelCache:
    def parse(r: Reader):
        lc, r.pos = LevelCache.from_bytes(r.data, r.pos)
        return lc

    return _whole(data, parse)
