"""Proof repair: blending in a peer's fresh proof, and level-cache maintenance.

Proofs are handled through their depth-keyed sibling view (``{depth: hash}``,
absent depth = empty sibling), which keeps the algorithms independent of the
bottom-up list layout used on the wire.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import DecodeError, DegenerateUpdateError
from .hash_tree import (
    DEFAULT_EMPTIES,
    DIGEST_SIZE,
    HASH_BITS,
    EmptyHashes,
    LookUpTable,
    Position,
    ProofOfInclusion,
    to_int,
    verify_poi,
)

MAX_CLVL = 16

MEMBER = "member"
ABSENT = "absent"


def proof_state(leaf: Position, poi: ProofOfInclusion, root: bytes, empties: EmptyHashes = DEFAULT_EMPTIES) -> Optional[str]:
    """Whether ``poi`` proves ``leaf`` present, absent, or nothing, under ``root``."""
    if verify_poi(leaf, poi, root, empties=empties):
        return MEMBER
    if verify_poi(leaf, poi, root, absent=True, empties=empties):
        return ABSENT
    return None


def update_poi_with_poi(
    my_leaf: Position,
    my_poi: ProofOfInclusion,
    new_leaf: Position,
    new_poi: ProofOfInclusion,
    *,
    new_absent: bool = False,
    empties: EmptyHashes = DEFAULT_EMPTIES,
) -> ProofOfInclusion:
    """Blend a fresh proof for ``new_leaf`` into a possibly stale proof.

    Both leaves share their path down to the split depth ``t``, so every
    sibling at depth <= t is copied from ``new_poi``. The sibling at ``t+1`` is
    the fresh subtree containing ``new_leaf``. Deeper siblings are left alone.
    Set ``new_absent`` when ``new_poi`` authenticates a revoked position.

    The caller must have verified ``new_poi`` against the current root.
    """
    mine = to_int(my_leaf)
    other = to_int(new_leaf)
    if mine == other:
        raise DegenerateUpdateError("update proof is for the leaf being updated")
    t = HASH_BITS - (mine ^ other).bit_length()

    result = {d: v for d, v in my_poi.siblings().items() if d > t + 1}
    result.update((d, v) for d, v in new_poi.siblings().items() if d <= t)
    subtree = new_poi.node_at(t + 1, new_absent, empties)
    if subtree != empties.levels[t + 1]:
        result[t + 1] = subtree
    return ProofOfInclusion.from_siblings(my_poi.leaf_hash, result)


@dataclass(frozen=True)
class LevelCache:
    """Every depth-``clvl`` node of one epoch tree, left to right."""

    clvl: int
    entries: tuple[bytes, ...]
    epoch: int = 0
    empties: EmptyHashes = field(default=DEFAULT_EMPTIES, compare=False, repr=False)
    _pyramid: list = field(default_factory=list, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if not 1 <= self.clvl <= MAX_CLVL:
            raise ValueError(f"clvl must be within [1, {MAX_CLVL}]")
        if not isinstance(self.entries, tuple):
            object.__setattr__(self, "entries", tuple(self.entries))
        if len(self.entries) != 1 << self.clvl:
            raise ValueError(f"level cache needs {1 << self.clvl} entries")

    def pyramid(self) -> list[tuple[bytes, ...]]:
        """``pyramid()[d]`` holds the 2**d nodes at depth d, for d in 0..clvl."""
        if not self._pyramid:
            h = self.empties.hash
            layers = [self.entries]
            row = self.entries
            for _ in range(self.clvl):
                row = tuple(h(row[i] + row[i + 1]) for i in range(0, len(row), 2))
                layers.append(row)
            self._pyramid.extend(reversed(layers))
        return self._pyramid

    @property
    def root(self) -> bytes:
        return self.pyramid()[0][0]

    def is_fresh(self, root: bytes) -> bool:
        return self.root == root

    @property
    def storage_bytes(self) -> int:
        return len(self.entries) * DIGEST_SIZE

    def to_bytes(self) -> bytes:
        return bytes([self.clvl]) + self.epoch.to_bytes(2, "big") + b"".join(self.entries)

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0, empties: EmptyHashes = DEFAULT_EMPTIES) -> tuple["LevelCache", int]:
        if len(data) - offset < 3:
            raise DecodeError("truncated level cache header", len(data))
        clvl = data[offset]
        if not 1 <= clvl <= MAX_CLVL:
            raise DecodeError(f"level cache depth {clvl} unsupported", offset)
        epoch = int.from_bytes(data[offset + 1 : offset + 3], "big")
        start = offset + 3
        end = start + (DIGEST_SIZE << clvl)
        if end > len(data):
            raise DecodeError("truncated level cache entries", len(data))
        entries = tuple(bytes(data[p : p + DIGEST_SIZE]) for p in range(start, end, DIGEST_SIZE))
        return cls(clvl, entries, epoch, empties), end


def construct_lvl_cache(clvl: int, lut: LookUpTable, epoch: int = 0) -> LevelCache:
    if not 1 <= clvl <= MAX_CLVL:
        raise ValueError(f"clvl must be within [1, {MAX_CLVL}]")
    shift = HASH_BITS - clvl
    entries = tuple(lut.get(i << shift, clvl) for i in range(1 << clvl))
    return LevelCache(clvl, entries, epoch, lut.empties)


def update_lvl_cache_with_poi(
    lc: LevelCache,
    new_leaf: Position,
    new_poi: ProofOfInclusion,
    *,
    new_absent: bool = False,
) -> LevelCache:
    """Refresh the one cache entry above ``new_leaf`` from its verified proof."""
    part = to_int(new_leaf) >> (HASH_BITS - lc.clvl)
    value = new_poi.node_at(lc.clvl, new_absent, lc.empties)
    if lc.entries[part] == value:
        return lc
    entries = list(lc.entries)
    entries[part] = value
    return LevelCache(lc.clvl, tuple(entries), lc.epoch, lc.empties)


def calc_pos_in_lc(position: Position, depth: int, lc: LevelCache) -> bytes:
    """Value of the depth-``depth`` node over ``position``, folded from the cache."""
    if not 0 <= depth <= lc.clvl:
        raise ValueError(f"depth must be within [0, {lc.clvl}]")
    return lc.pyramid()[depth][to_int(position) >> (HASH_BITS - depth)]


def update_poi_with_lvl_cache(my_leaf: Position, my_poi: ProofOfInclusion, lc: LevelCache) -> ProofOfInclusion:
    """Rewrite the siblings at depths 1..clvl from a fresh level cache.

    Changes inside the leaf's own depth-``clvl`` part cannot be repaired this
    way; the result then still fails verification.
    """
    pos = to_int(my_leaf)
    levels = lc.empties.levels
    pyramid = lc.pyramid()
    sibs = my_poi.siblings()
    for d in range(1, lc.clvl + 1):
        value = pyramid[d][(pos >> (HASH_BITS - d)) ^ 1]
        if value == levels[d]:
            sibs.pop(d, None)
        else:
            sibs[d] = value
    return ProofOfInclusion.from_siblings(my_poi.leaf_hash, sibs)
