import random

import pytest

from smtforest.authority import Authority
from smtforest.forest import DEFAULT_CONFIG


@pytest.fixture
def rng():
    return random.Random(1234)


def rand_leaf(r: random.Random) -> bytes:
    return r.getrandbits(256).to_bytes(32, "big")


@pytest.fixture
def populated_ca():
    """Authority with 300 certificates spread over three epochs."""
    r = random.Random(7)
    w = DEFAULT_CONFIG.epoch_duration
    now = 3000 * w
    ca = Authority(now=now, key_seed=b"fixture")
    certs = [rand_leaf(r) for _ in range(300)]
    epochs = [ca.base_epoch + 5, ca.base_epoch + 20, ca.newest_epoch]
    ca.bulk_load([(c, epochs[i % 3] * w + 10) for i, c in enumerate(certs)], now=now + 1)
    return ca, certs, now + 1
