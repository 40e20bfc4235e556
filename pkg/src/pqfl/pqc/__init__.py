"""Pluggable post-quantum signature schemes.

Three real schemes (dilithium2, falcon512, sphincsplus-sha2-128f) are backed
by PQClean through the compiled bridge in ``native/``; the ``mock`` scheme is
a deterministic keyed-hash test double with no security claim. The registry
order is stable and part of the interface.
"""

from __future__ import annotations

import hashlib
import hmac
import os
from dataclasses import dataclass

from ..errors import SchemeError
from . import _native
from .timing import TimingReport, timing_probe

__all__ = [
    "SchemeDescriptor",
    "KeyPair",
    "registry",
    "descriptor",
    "real_scheme_ids",
    "keygen",
    "sign",
    "verify",
    "native_available",
    "TimingReport",
    "timing_probe",
]


@dataclass(frozen=True)
class SchemeDescriptor:
    """Identity and size card for a registered signature scheme.

    ``security_level`` is the claimed NIST category; ``signature_len_max`` is
    an upper bound (falcon emits variable-length signatures).
    """

    scheme_id: str
    security_level: int
    public_key_len: int
    signature_len_max: int
    post_quantum: bool


class KeyPair:
    """Signing handle. The secret key has no accessor; only :meth:`sign`
    touches it."""

    __slots__ = ("scheme_id", "public_key", "__secret")

    def __init__(self, scheme_id: str, public_key: bytes, secret_key: bytes):
        self.scheme_id = scheme_id
        self.public_key = public_key
        self.__secret = secret_key

    def sign(self, message: bytes) -> bytes:
        backend = _backend(self.scheme_id)
        return backend.sign(self.__secret, message)

    def __repr__(self) -> str:
        return f"KeyPair(scheme_id={self.scheme_id!r}, public_key=<{len(self.public_key)} bytes>)"


class _MockBackend:
    """Keyed-hash test double: the 'public key' doubles as the MAC key, so a
    verifier can recompute the tag. Trivially forgeable, flagged non-PQ."""

    descriptor = SchemeDescriptor(
        scheme_id="mock",
        security_level=1,
        public_key_len=32,
        signature_len_max=32,
        post_quantum=False,
    )

    def keygen(self, seed: int | None = None) -> tuple[bytes, bytes]:
        if seed is None:
            key = os.urandom(32)
        else:
            material = b"pqfl-mock-keygen" + int(seed).to_bytes(8, "little", signed=False)
            key = hashlib.sha256(material).digest()
        return key, key

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        return hmac.new(secret_key, message, hashlib.sha256).digest()

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        if len(public_key) != 32:
            return False
        expected = hmac.new(public_key, message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)


class _NativeBackend:
    """PQClean scheme accessed through the ctypes bridge. Key generation uses
    the OS RNG; seeds are accepted and ignored (fixtures store keys instead)."""

    def __init__(self, desc: SchemeDescriptor):
        self.descriptor = desc
        self._number = _native.NativeLibrary.scheme_numbers[desc.scheme_id]

    def keygen(self, seed: int | None = None) -> tuple[bytes, bytes]:
        lib = _native.require_native()
        return lib.keypair(self._number)

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        lib = _native.require_native()
        try:
            return lib.sign(self._number, secret_key, message)
        except SchemeError as exc:
            raise SchemeError(str(exc), scheme_id=self.descriptor.scheme_id) from exc

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        lib = _native.load_native()
        if lib is None:
            raise SchemeError(_native.BUILD_HINT, scheme_id=self.descriptor.scheme_id)
        return lib.verify(self._number, public_key, message, signature)


# Sizes match PQClean as bundled by pqcrypto-{dilithium 0.5.0, falcon 0.4.1,
# sphincsplus 0.7.2}; a test cross-checks them against the built bridge.
_BACKENDS: dict[str, _MockBackend | _NativeBackend] = {
    "dilithium2": _NativeBackend(
        SchemeDescriptor("dilithium2", security_level=2, public_key_len=1312,
                         signature_len_max=2420, post_quantum=True)
    ),
    "falcon512": _NativeBackend(
        SchemeDescriptor("falcon512", security_level=1, public_key_len=897,
                         signature_len_max=752, post_quantum=True)
    ),
    "sphincsplus-sha2-128f": _NativeBackend(
        SchemeDescriptor("sphincsplus-sha2-128f", security_level=1, public_key_len=32,
                         signature_len_max=17088, post_quantum=True)
    ),
    "mock": _MockBackend(),
}


def _backend(scheme_id: str):
    try:
        return _BACKENDS[scheme_id]
    except KeyError:
        raise SchemeError(f"unknown scheme {scheme_id!r}", scheme_id=scheme_id) from None


def registry() -> list[SchemeDescriptor]:
    """All registered schemes, in stable order (real schemes first)."""
    return [b.descriptor for b in _BACKENDS.values()]


def descriptor(scheme_id: str) -> SchemeDescriptor:
    return _backend(scheme_id).descriptor


def real_scheme_ids() -> list[str]:
    """Scheme ids of the post-quantum backends (mock excluded)."""
    return [d.scheme_id for d in registry() if d.post_quantum]


def is_registered(scheme_id: str) -> bool:
    return scheme_id in _BACKENDS


def keygen(scheme_id: str, seed: int | None = None) -> KeyPair:
    """New signing handle. ``seed`` makes the mock scheme deterministic and is
    ignored by the real backends."""
    backend = _backend(scheme_id)
    public_key, secret_key = backend.keygen(seed)
    return KeyPair(scheme_id, public_key, secret_key)


def sign(keypair: KeyPair, message: bytes) -> bytes:
    return keypair.sign(message)


def verify(scheme_id: str, public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is valid over ``message`` under ``public_key``.
    Garbage key or signature bytes return False rather than raising."""
    return _backend(scheme_id).verify(public_key, message, signature)


def native_available() -> bool:
    return _native.load_native() is not None
