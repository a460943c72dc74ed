"""Incremental sparse Merkle tree over the full 256-bit digest space.

A certificate's SHA-256 digest is both its leaf value and its position: bit 0
(the most significant bit) picks the branch below the root, bit 255 the branch
just above the leaf. Depth 0 is the root, depth 256 the leaves.

The look-up table keeps only *anchor* nodes: the root, the leaves, every
branching node (both children non-empty) and every child of a branching node.
All other non-empty nodes sit on single-leaf chains and are recomputed on
demand by folding the anchor below them with empty siblings. This keeps memory
at roughly three entries per leaf instead of 257 while answering the same
``(position, depth)`` queries.
"""

from __future__ import annotations

import bisect
import hashlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Union

from sortedcontainers import SortedList

from .errors import DecodeError, MalformedProofError

HASH_BITS = 256
DIGEST_SIZE = 32

Digest = bytes
Position = Union[int, bytes]

_sha256 = hashlib.sha256


def sha256(data: bytes) -> bytes:
    return _sha256(data).digest()


def to_int(value: Position) -> int:
    if isinstance(value, int):
        return value
    return int.from_bytes(value, "big")


def to_digest(value: Position) -> bytes:
    if isinstance(value, bytes):
        return value
    return value.to_bytes(DIGEST_SIZE, "big")


def common_prefix_bits(a: int, b: int) -> int:
    """Number of leading bits shared by two positions."""
    return HASH_BITS - (a ^ b).bit_length()


class EmptyHashes:
    """Hashes of fully empty subtrees, ``levels[d]`` rooted at depth ``d``.

    ``levels[256]`` is the hash of the empty string, i.e. an unassigned leaf,
    and ``levels[0]`` is the root of a tree with no leaves at all.
    """

    def __init__(self, hash_function: Callable[[bytes], bytes] = sha256):
        self.hash = hash_function
        levels = [b""] * (HASH_BITS + 1)
        levels[HASH_BITS] = hash_function(b"")
        for d in range(HASH_BITS - 1, -1, -1):
            levels[d] = hash_function(levels[d + 1] + levels[d + 1])
        self.levels: tuple[bytes, ...] = tuple(levels)

    def __getitem__(self, depth: int) -> bytes:
        return self.levels[depth]

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def leaf(self) -> bytes:
        return self.levels[HASH_BITS]

    @property
    def root(self) -> bytes:
        return self.levels[0]


def compute_empty_hashes(hash_function: Callable[[bytes], bytes] = sha256) -> EmptyHashes:
    return EmptyHashes(hash_function)


DEFAULT_EMPTIES = EmptyHashes()
EMPTY_LEAF = DEFAULT_EMPTIES.leaf
EMPTY_ROOT = DEFAULT_EMPTIES.root


@dataclass(frozen=True)
class ProofOfInclusion:
    """Sibling hashes on a leaf's path, empty siblings omitted.

    ``path`` runs bottom-up. Bit ``i`` of ``path_bitmap`` (least significant
    first) is set when the sibling at depth ``256 - i`` is non-empty and
    therefore present in ``path``.
    """

    leaf_hash: bytes
    path_bitmap: int
    path: tuple[bytes, ...]
    _ladders: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if not isinstance(self.path, tuple):
            object.__setattr__(self, "path", tuple(self.path))

    @property
    def position(self) -> int:
        return int.from_bytes(self.leaf_hash, "big")

    def is_well_formed(self) -> bool:
        return (
            len(self.leaf_hash) == DIGEST_SIZE
            and 0 <= self.path_bitmap < (1 << HASH_BITS)
            and self.path_bitmap.bit_count() == len(self.path)
        )

    def siblings(self) -> dict[int, bytes]:
        """Map depth -> non-empty sibling hash."""
        if not self.is_well_formed():
            raise MalformedProofError("bitmap popcount does not match path length")
        out = {}
        it = iter(self.path)
        bitmap = self.path_bitmap
        while bitmap:
            low = bitmap & -bitmap
            out[HASH_BITS - (low.bit_length() - 1)] = next(it)
            bitmap ^= low
        return out

    @classmethod
    def from_siblings(cls, leaf_hash: bytes, siblings: Mapping[int, bytes]) -> "ProofOfInclusion":
        bitmap = 0
        path = []
        for depth in sorted(siblings, reverse=True):
            bitmap |= 1 << (HASH_BITS - depth)
            path.append(siblings[depth])
        return cls(leaf_hash, bitmap, tuple(path))

    def ladder(self, absent: bool = False, empties: EmptyHashes = DEFAULT_EMPTIES) -> tuple[bytes, ...]:
        """All 257 ancestor values implied by this proof, indexed by depth.

        Cached per leaf interpretation; the proof itself is immutable.
        """
        key = (absent, id(empties))
        cached = self._ladders.get(key)
        if cached is None:
            values = [b""] * (HASH_BITS + 1)
            result = empties.leaf if absent else self.leaf_hash
            values[HASH_BITS] = result
            pos = self.position
            bitmap = self.path_bitmap
            if bitmap.bit_count() != len(self.path):
                raise MalformedProofError("bitmap popcount does not match path length")
            it = iter(self.path)
            h = empties.hash
            levels = empties.levels
            for i in range(HASH_BITS):
                sib = next(it) if (bitmap >> i) & 1 else levels[HASH_BITS - i]
                if (pos >> i) & 1:
                    result = h(sib + result)
                else:
                    result = h(result + sib)
                values[HASH_BITS - 1 - i] = result
            cached = tuple(values)
            self._ladders[key] = cached
        return cached

    def node_at(self, depth: int, absent: bool = False, empties: EmptyHashes = DEFAULT_EMPTIES) -> bytes:
        return self.ladder(absent, empties)[depth]

    def to_bytes(self) -> bytes:
        if not self.is_well_formed():
            raise MalformedProofError("cannot encode a malformed proof")
        return b"".join(
            (
                self.leaf_hash,
                self.path_bitmap.to_bytes(DIGEST_SIZE, "big"),
                len(self.path).to_bytes(2, "big"),
                *self.path,
            )
        )

    @property
    def encoded_size(self) -> int:
        return 2 * DIGEST_SIZE + 2 + DIGEST_SIZE * len(self.path)

    @classmethod
    def from_bytes(cls, data: bytes, offset: int = 0) -> tuple["ProofOfInclusion", int]:
        """Decode one proof starting at ``offset``; returns it and the end offset."""
        mv = memoryview(data)
        header = 2 * DIGEST_SIZE + 2
        if len(mv) - offset < header:
            raise DecodeError("truncated proof header", len(mv))
        leaf = bytes(mv[offset : offset + DIGEST_SIZE])
        bitmap = int.from_bytes(mv[offset + DIGEST_SIZE : offset + 2 * DIGEST_SIZE], "big")
        count = int.from_bytes(mv[offset + 2 * DIGEST_SIZE : offset + header], "big")
        if bitmap.bit_count() != count:
            raise DecodeError("bitmap popcount does not match element count", offset + 2 * DIGEST_SIZE)
        start = offset + header
        end = start + count * DIGEST_SIZE
        if end > len(mv):
            raise DecodeError("truncated proof path", len(mv))
        path = tuple(bytes(mv[p : p + DIGEST_SIZE]) for p in range(start, end, DIGEST_SIZE))
        return cls(leaf, bitmap, path), end


class LookUpTable:
    """Sparse store of tree nodes keyed by ``(position, depth)``.

    Keys are normalised to the first ``depth`` bits of the position, so depth 0
    always addresses the root and depth 256 a leaf. Anything not present is the
    empty hash for its depth.
    """

    def __init__(self, empties: EmptyHashes = DEFAULT_EMPTIES):
        self.empties = empties
        self._nodes: dict[tuple[int, int], bytes] = {}
        self._leaves = SortedList()

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, leaf: Position) -> bool:
        return to_int(leaf) in self._leaves

    def __getitem__(self, key: tuple[Position, int]) -> bytes:
        return self.get(*key)

    @property
    def leaf_count(self) -> int:
        return len(self._leaves)

    def leaves(self) -> list[bytes]:
        return [to_digest(p) for p in self._leaves]

    def stored_nodes(self) -> Mapping[tuple[int, int], bytes]:
        """Anchor nodes as ``(prefix, depth) -> digest`` (prefix = first depth bits)."""
        return self._nodes

    @property
    def root(self) -> bytes:
        return self._nodes.get((0, 0), self.empties.root)

    def get(self, position: Position, depth: int) -> bytes:
        pos = to_int(position)
        shift = HASH_BITS - depth
        prefix = pos >> shift
        value = self._nodes.get((prefix, depth))
        if value is not None:
            return value
        lo = prefix << shift
        leaves = self._leaves
        i = leaves.bisect_left(lo)
        j = leaves.bisect_left(lo + (1 << shift))
        if i == j:
            return self.empties.levels[depth]
        first, last = leaves[i], leaves[j - 1]
        top = HASH_BITS if first == last else common_prefix_bits(first, last)
        return self._fold_up(first, self._nodes[(first >> (HASH_BITS - top), top)], top, depth)

    def is_empty_at(self, position: Position, depth: int) -> bool:
        pos = to_int(position)
        shift = HASH_BITS - depth
        lo = (pos >> shift) << shift
        return self._leaves.bisect_left(lo) == self._leaves.bisect_left(lo + (1 << shift))

    def _fold_up(self, pos: int, value: bytes, from_depth: int, to_depth: int) -> bytes:
        h = self.empties.hash
        levels = self.empties.levels
        for d in range(from_depth, to_depth, -1):
            if (pos >> (HASH_BITS - d)) & 1:
                value = h(levels[d] + value)
            else:
                value = h(value + levels[d])
        return value

    def _split_depth(self, pos: int, present: bool) -> int:
        """Deepest depth shared with any *other* leaf, -1 if there is none."""
        leaves = self._leaves
        i = leaves.bisect_left(pos)
        s = -1
        if i > 0:
            s = common_prefix_bits(pos, leaves[i - 1])
        j = i + 1 if present else i
        if j < len(leaves):
            s = max(s, common_prefix_bits(pos, leaves[j]))
        return s

    # -- mutation ----------------------------------------------------------

    def add(self, leaf: Position) -> bytes:
        pos = to_int(leaf)
        if pos in self._leaves:
            return self.root
        self._leaves.add(pos)
        self._rewrite_path(pos, present=True)
        return self.root

    def remove(self, leaf: Position) -> bytes:
        pos = to_int(leaf)
        if pos not in self._leaves:
            return self.root
        self._leaves.remove(pos)
        self._rewrite_path(pos, present=False)
        return self.root

    def _rewrite_path(self, pos: int, present: bool) -> None:
        nodes = self._nodes
        h = self.empties.hash
        levels = self.empties.levels
        s = self._split_depth(pos, present)

        # Lone part of the path, depths s+1..256, holds at most this leaf.
        if present:
            val = pos.to_bytes(DIGEST_SIZE, "big")
            nodes[(pos, HASH_BITS)] = val
            for d in range(HASH_BITS, s + 1, -1):
                if (pos >> (HASH_BITS - d)) & 1:
                    val = h(levels[d] + val)
                else:
                    val = h(val + levels[d])
            if s < 0:
                nodes[(0, 0)] = val
                return
            nodes[(pos >> (HASH_BITS - 1 - s), s + 1)] = val
        else:
            nodes.pop((pos, HASH_BITS), None)
            if s < 0:
                nodes.clear()
                return
            nodes.pop((pos >> (HASH_BITS - 1 - s), s + 1), None)
            val = levels[s + 1]

        # The other child of the split node always contains leaves.
        other_key = ((pos >> (HASH_BITS - 1 - s)) ^ 1, s + 1)
        other = nodes.get(other_key)
        if other is None:
            other = self.get(other_key[0] << (HASH_BITS - 1 - s), s + 1)
        if present:
            nodes[other_key] = other
        elif not self._is_anchor_below(other_key):
            nodes.pop(other_key, None)

        if (pos >> (HASH_BITS - 1 - s)) & 1:
            cur = h(other + val)
        else:
            cur = h(val + other)

        branching = present
        for d in range(s, 0, -1):
            shift = HASH_BITS - d
            prefix = pos >> shift
            sib = nodes.get((prefix ^ 1, d))
            if branching or sib is not None:
                nodes[(prefix, d)] = cur
            else:
                nodes.pop((prefix, d), None)
            if sib is None:
                sib = levels[d]
                branching = False
            else:
                branching = True
            if prefix & 1:
                cur = h(sib + cur)
            else:
                cur = h(cur + sib)
        nodes[(0, 0)] = cur

    def _is_anchor_below(self, key: tuple[int, int]) -> bool:
        """Whether a node is a leaf or a branching node (ignoring its parent)."""
        prefix, depth = key
        if depth == HASH_BITS:
            return True
        shift = HASH_BITS - depth
        leaves = self._leaves
        i = leaves.bisect_left(prefix << shift)
        j = leaves.bisect_left((prefix + 1) << shift)
        if j - i < 2:
            return False
        return common_prefix_bits(leaves[i], leaves[j - 1]) == depth

    # -- bulk construction ---------------------------------------------------

    @classmethod
    def from_leaves(cls, leaves: Iterable[Position], empties: EmptyHashes = DEFAULT_EMPTIES) -> "LookUpTable":
        """Build the table for a leaf set in one pass, hashing every node once."""
        lut = cls(empties)
        positions = sorted({to_int(p) for p in leaves})
        if not positions:
            return lut
        lut._leaves = SortedList(positions)
        nodes = lut._nodes
        h = empties.hash
        levels = empties.levels
        bisect_left = bisect.bisect_left

        def chain(pos: int, value: bytes, from_depth: int, to_depth: int) -> bytes:
            for d in range(from_depth, to_depth, -1):
                if (pos >> (HASH_BITS - d)) & 1:
                    value = h(levels[d] + value)
                else:
                    value = h(value + levels[d])
            return value

        def build(lo: int, hi: int, depth: int) -> bytes:
            first = positions[lo]
            if hi - lo == 1:
                leaf = first.to_bytes(DIGEST_SIZE, "big")
                nodes[(first, HASH_BITS)] = leaf
                return chain(first, leaf, HASH_BITS, depth)
            c = common_prefix_bits(first, positions[hi - 1])
            shift = HASH_BITS - 1 - c
            prefix = first >> shift  # prefix of the left child at depth c+1
            mid = bisect_left(positions, (prefix | 1) << shift, lo, hi)
            left = build(lo, mid, c + 1)
            right = build(mid, hi, c + 1)
            nodes[(prefix, c + 1)] = left
            nodes[(prefix | 1, c + 1)] = right
            value = h(left + right)
            nodes[(prefix >> 1, c)] = value
            return chain(first, value, c, depth)

        nodes[(0, 0)] = build(0, len(positions), 0)
        return lut


# -- module-level operations -------------------------------------------------


def add_leaf(leaf_hash: Position, lut: LookUpTable) -> tuple[bytes, LookUpTable]:
    return lut.add(leaf_hash), lut


def remove_leaf(leaf_hash: Position, lut: LookUpTable) -> tuple[bytes, LookUpTable]:
    return lut.remove(leaf_hash), lut


def calc_poi(leaf_hash: Position, lut: LookUpTable) -> ProofOfInclusion:
    """Proof for ``leaf_hash`` against the table's current root.

    Works for absent positions too; the result then authenticates the empty
    leaf at that position.
    """
    pos = to_int(leaf_hash)
    present = pos in lut._leaves
    s = lut._split_depth(pos, present)
    nodes = lut._nodes
    bitmap = 0
    path = []
    if s >= 0:
        # Sibling at s+1 may sit mid-chain after a removal, so use the full lookup.
        sib = lut.get(((pos >> (HASH_BITS - 1 - s)) ^ 1) << (HASH_BITS - 1 - s), s + 1)
        bitmap |= 1 << (HASH_BITS - 1 - s)
        path.append(sib)
        for d in range(s, 0, -1):
            sib = nodes.get(((pos >> (HASH_BITS - d)) ^ 1, d))
            if sib is not None:
                bitmap |= 1 << (HASH_BITS - d)
                path.append(sib)
    return ProofOfInclusion(to_digest(leaf_hash), bitmap, tuple(path))


def calc_path_root(
    leaf_hash: Position,
    path: Iterable[bytes],
    path_bitmap: int,
    lvl: int = 0,
    *,
    leaf_value: Optional[bytes] = None,
    empties: EmptyHashes = DEFAULT_EMPTIES,
) -> bytes:
    """Fold a leaf upward through its proof, stopping at depth ``lvl``.

    ``leaf_value`` overrides the starting value (the empty leaf for a revoked
    position); by default the leaf hash is its own value.
    """
    path = tuple(path)
    if path_bitmap.bit_count() != len(path):
        raise MalformedProofError("bitmap popcount does not match path length")
    if not 0 <= lvl <= HASH_BITS:
        raise ValueError(f"lvl must be within [0, {HASH_BITS}]")
    pos = to_int(leaf_hash)
    result = to_digest(leaf_hash) if leaf_value is None else leaf_value
    h = empties.hash
    levels = empties.levels
    it = iter(path)
    for i in range(HASH_BITS - lvl):
        sib = next(it) if (path_bitmap >> i) & 1 else levels[HASH_BITS - i]
        if (pos >> i) & 1:
            result = h(sib + result)
        else:
            result = h(result + sib)
    return result


def verify_poi(
    leaf_hash: Position,
    poi: ProofOfInclusion,
    expected_root: bytes,
    *,
    absent: bool = False,
    empties: EmptyHashes = DEFAULT_EMPTIES,
) -> bool:
    """True iff ``poi`` proves ``leaf_hash`` against ``expected_root``.

    With ``absent=True`` the position is checked as holding the empty leaf.
    """
    if poi.leaf_hash != to_digest(leaf_hash):
        return False
    try:
        root = calc_path_root(
            leaf_hash,
            poi.path,
            poi.path_bitmap,
            leaf_value=empties.leaf if absent else None,
            empties=empties,
        )
    except (MalformedProofError, ValueError):
        return False
    return root == expected_root
