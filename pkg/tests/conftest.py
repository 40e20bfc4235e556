import numpy as np
import pytest

import pqfl.pqc as pqc

requires_native = pytest.mark.skipif(
    not pqc.native_available(),
    reason="native signature backend not built (cargo build --release in native/)",
)


@pytest.fixture(scope="session")
def mock_keypair():
    return pqc.keygen("mock", seed=1234)


@pytest.fixture(scope="session")
def real_keypairs():
    """One keypair per real scheme, shared session-wide (falcon keygen is slow)."""
    if not pqc.native_available():
        pytest.skip("native signature backend not built")
    return {scheme: pqc.keygen(scheme) for scheme in pqc.real_scheme_ids()}


def flip_bit(data: bytes, bit_index: int) -> bytes:
    out = bytearray(data)
    out[bit_index // 8] ^= 1 << (bit_index % 8)
    return bytes(out)


def random_params(rng: np.random.Generator, max_len: int = 32) -> np.ndarray:
    n = int(rng.integers(0, max_len + 1))
    return rng.standard_normal(n) * 10.0
