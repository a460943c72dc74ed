import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import EMPTY, batch_root, node_value
from smtforest.errors import DecodeError, MalformedProofError
from smtforest.hash_tree import (
    EMPTY_LEAF,
    EMPTY_ROOT,
    LookUpTable,
    ProofOfInclusion,
    add_leaf,
    calc_path_root,
    calc_poi,
    common_prefix_bits,
    compute_empty_hashes,
    remove_leaf,
    verify_poi,
)

digests = st.binary(min_size=32, max_size=32)


def test_empty_hashes_match_oracle():
    empties = compute_empty_hashes()
    assert empties.leaf == EMPTY[256] == EMPTY_LEAF
    assert empties.root == EMPTY[0] == EMPTY_ROOT
    for d in (0, 1, 100, 255, 256):
        assert empties.levels[d] == EMPTY[d]


def test_empty_table_root():
    assert LookUpTable().root == EMPTY_ROOT
    assert LookUpTable().leaf_count == 0


@pytest.mark.parametrize("a,b,expected", [(0, 0, 256), (0, 1, 255), (0, 1 << 255, 0), (3 << 254, 2 << 254, 1)])
def test_common_prefix_bits(a, b, expected):
    assert common_prefix_bits(a, b) == expected


def test_single_leaf_root():
    leaf = bytes(range(32))
    lut = LookUpTable()
    root = lut.add(leaf)
    assert root == batch_root([leaf])
    poi = calc_poi(leaf, lut)
    # a lone leaf has only empty siblings
    assert poi.path_bitmap == 0 and poi.path == ()
    assert verify_poi(leaf, poi, root)


@settings(max_examples=40, deadline=None)
@given(st.lists(digests, min_size=1, max_size=40, unique=True), st.data())
def test_incremental_matches_batch(leaves, data):
    lut = LookUpTable()
    for leaf in leaves:
        add_leaf(leaf, lut)
    assert lut.root == batch_root(leaves)
    gone = data.draw(st.lists(st.sampled_from(leaves), unique=True))
    for leaf in gone:
        remove_leaf(leaf, lut)
    kept = [x for x in leaves if x not in gone]
    assert lut.root == batch_root(kept)
    for leaf in kept:
        assert verify_poi(leaf, calc_poi(leaf, lut), lut.root)
    for leaf in gone:
        assert not verify_poi(leaf, calc_poi(leaf, lut), lut.root)
        assert verify_poi(leaf, calc_poi(leaf, lut), lut.root, absent=True)


@settings(max_examples=25, deadline=None)
@given(st.lists(digests, min_size=2, max_size=30, unique=True))
def test_from_leaves_matches_incremental(leaves):
    a = LookUpTable.from_leaves(leaves)
    b = LookUpTable()
    for leaf in leaves:
        b.add(leaf)
    assert a.root == b.root == batch_root(leaves)
    assert dict(a.stored_nodes()) == dict(b.stored_nodes())


def test_get_matches_oracle_node_values(rng):
    leaves = [rng.getrandbits(256) for _ in range(50)]
    lut = LookUpTable.from_leaves(leaves)
    for depth in (0, 1, 3, 6, 9, 40, 256):
        for pos in leaves[:10] + [rng.getrandbits(256)]:
            assert lut.get(pos, depth) == node_value(leaves, pos, depth)


def test_poi_node_at_matches_oracle(rng):
    leaves = [rng.getrandbits(256) for _ in range(64)]
    lut = LookUpTable.from_leaves(leaves)
    poi = calc_poi(leaves[3], lut)
    for depth in (0, 2, 5, 8, 200, 256):
        assert poi.node_at(depth) == node_value(leaves, leaves[3], depth)


def test_add_and_remove_are_idempotent():
    lut = LookUpTable()
    root = lut.add(b"\x01" * 32)
    assert lut.add(b"\x01" * 32) == root
    assert lut.remove(b"\x02" * 32) == root
    assert lut.leaf_count == 1


def test_proof_fails_against_wrong_root(rng):
    leaves = [rng.getrandbits(256) for _ in range(20)]
    lut = LookUpTable.from_leaves(leaves)
    poi = calc_poi(leaves[0], lut)
    assert not verify_poi(leaves[0], poi, EMPTY_ROOT)
    assert not verify_poi(leaves[1], poi, lut.root)


def test_tampered_sibling_is_rejected(rng):
    leaves = [rng.getrandbits(256) for _ in range(20)]
    lut = LookUpTable.from_leaves(leaves)
    poi = calc_poi(leaves[0], lut)
    bad = ProofOfInclusion(poi.leaf_hash, poi.path_bitmap, (bytes(32),) + poi.path[1:])
    assert not verify_poi(leaves[0], bad, lut.root)


def test_malformed_bitmap():
    poi = ProofOfInclusion(bytes(32), 0b11, (bytes(32),))
    assert not poi.is_well_formed()
    with pytest.raises(MalformedProofError):
        poi.siblings()
    with pytest.raises(MalformedProofError):
        calc_path_root(bytes(32), poi.path, poi.path_bitmap)
    assert not verify_poi(bytes(32), poi, EMPTY_ROOT)


def test_calc_path_root_partial_level(rng):
    leaves = [rng.getrandbits(256) for _ in range(30)]
    lut = LookUpTable.from_leaves(leaves)
    poi = calc_poi(leaves[0], lut)
    assert calc_path_root(leaves[0], poi.path, poi.path_bitmap, lvl=7) == lut.get(leaves[0], 7)
    with pytest.raises(ValueError):
        calc_path_root(leaves[0], poi.path, poi.path_bitmap, lvl=300)


@settings(max_examples=30, deadline=None)
@given(st.lists(digests, min_size=1, max_size=25, unique=True))
def test_poi_encoding_round_trip(leaves):
    lut = LookUpTable.from_leaves(leaves)
    for leaf in leaves:
        poi = calc_poi(leaf, lut)
        data = poi.to_bytes()
        assert len(data) == poi.encoded_size == 66 + 32 * len(poi.path)
        back, end = ProofOfInclusion.from_bytes(data)
        assert back == poi and end == len(data)


def test_poi_decode_errors():
    with pytest.raises(DecodeError):
        ProofOfInclusion.from_bytes(b"\x00" * 10)
    header = bytes(32) + (1).to_bytes(32, "big") + (2).to_bytes(2, "big")
    with pytest.raises(DecodeError):
        ProofOfInclusion.from_bytes(header)
    header = bytes(32) + (1).to_bytes(32, "big") + (1).to_bytes(2, "big")
    with pytest.raises(DecodeError):
        ProofOfInclusion.from_bytes(header + bytes(31))


def test_sibling_map_round_trip(rng):
    leaves = [rng.getrandbits(256) for _ in range(100)]
    lut = LookUpTable.from_leaves(leaves)
    poi = calc_poi(leaves[10], lut)
    assert ProofOfInclusion.from_siblings(poi.leaf_hash, poi.siblings()) == poi


def test_average_path_length_for_1000_leaves():
    r = random.Random(99)
    leaves = [r.getrandbits(256) for _ in range(1000)]
    lut = LookUpTable.from_leaves(leaves)
    avg = sum(len(calc_poi(x, lut).path) for x in leaves) / len(leaves)
    # roughly log2(1000) plus a small constant
    assert 7 <= avg <= 13


def test_leaf_positions_are_uniform_over_top_bits():
    r = random.Random(5)
    counts = [0] * 16
    for _ in range(16000):
        counts[r.getrandbits(256) >> 252] += 1
    chi2 = sum((c - 1000) ** 2 / 1000 for c in counts)
    assert chi2 < 40  # 15 dof, far beyond p=0.001


def test_custom_hash_function():
    import hashlib

    empties = compute_empty_hashes(lambda d: hashlib.sha3_256(d).digest())
    lut = LookUpTable(empties)
    leaf = b"\x42" * 32
    root = lut.add(leaf)
    assert root != LookUpTable().add(leaf)
    assert verify_poi(leaf, calc_poi(leaf, lut), root, empties=empties)
