"""Certificate validation with per-epoch sparse Merkle trees.

A CA keeps one sparse Merkle tree of active certificates per epoch. Nodes hold
only the epoch roots (the validation forest) plus a proof for their own
certificate, keep the forest fresh through a signed 50-byte primer exchanged
on contact, and repair stale proofs from peers.
"""

from .errors import (
    AuthenticationError,
    CertificateStateError,
    DecodeError,
    DegenerateUpdateError,
    DuplicateCertificateError,
    InconsistentUpdateError,
    MalformedProofError,
    OutOfWindowError,
    ReplayError,
    SmtForestError,
)
from .hash_tree import (
    EMPTY_LEAF,
    EMPTY_ROOT,
    EmptyHashes,
    LookUpTable,
    ProofOfInclusion,
    add_leaf,
    calc_path_root,
    calc_poi,
    compute_empty_hashes,
    remove_leaf,
    verify_poi,
)
from .forest import (
    EpochConfig,
    Primer,
    ValidationForest,
    apply_root_updates,
    compute_parities,
    compute_primer,
    diff_parities,
    epoch_of,
    forest_prune,
)
from .repair import (
    LevelCache,
    calc_pos_in_lc,
    construct_lvl_cache,
    update_lvl_cache_with_poi,
    update_poi_with_lvl_cache,
    update_poi_with_poi,
)
from .authority import Authority, CAUpdate, CertificateRecord, EpochChangeUpdate
from .crypto import CaIdentity, EcdsaSuite, StubSuite

__version__ = "0.1.0"

__all__ = [
    "AuthenticationError",
    "Authority",
    "CAUpdate",
    "CaIdentity",
    "CertificateRecord",
    "CertificateStateError",
    "DecodeError",
    "DegenerateUpdateError",
    "DuplicateCertificateError",
    "EMPTY_LEAF",
    "EMPTY_ROOT",
    "EcdsaSuite",
    "EmptyHashes",
    "EpochChangeUpdate",
    "EpochConfig",
    "InconsistentUpdateError",
    "LevelCache",
    "LookUpTable",
    "MalformedProofError",
    "OutOfWindowError",
    "Primer",
    "ProofOfInclusion",
    "ReplayError",
    "SmtForestError",
    "StubSuite",
    "ValidationForest",
    "add_leaf",
    "apply_root_updates",
    "calc_path_root",
    "calc_poi",
    "calc_pos_in_lc",
    "compute_empty_hashes",
    "compute_parities",
    "compute_primer",
    "construct_lvl_cache",
    "diff_parities",
    "epoch_of",
    "forest_prune",
    "remove_leaf",
    "update_lvl_cache_with_poi",
    "update_poi_with_lvl_cache",
    "update_poi_with_poi",
    "verify_poi",
]
