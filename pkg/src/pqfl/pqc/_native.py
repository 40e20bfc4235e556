"""ctypes loader for the PQClean signature bridge built from ``native/``.

The shared library is looked up in this order:

1. the path in the ``PQFL_NATIVE_LIB`` environment variable,
2. a ``_lib/`` directory next to this module (wheel installs),
3. ``native/target/release/`` walking up from the package (source checkouts).

Real schemes are unavailable until ``cargo build --release`` has been run in
``native/``; the mock scheme never needs the library.
"""

from __future__ import annotations

import ctypes
import os
from ctypes import POINTER, c_int32, c_size_t, c_ubyte, c_uint32
from pathlib import Path

from ..errors import SchemeError

_LIB_BASENAMES = ("libpqfl_native.so", "libpqfl_native.dylib", "pqfl_native.dll")

BUILD_HINT = (
    "native signature backend not built; run "
    "`cargo build --release` inside the `native/` directory "
    "or point PQFL_NATIVE_LIB at the compiled library"
)

RC_OK = 0
RC_INVALID = 1


def _candidate_paths():
    env = os.environ.get("PQFL_NATIVE_LIB")
    if env:
        yield Path(env)
    here = Path(__file__).resolve().parent
    for name in _LIB_BASENAMES:
        yield here / "_lib" / name
    for parent in here.parents[:5]:
        for name in _LIB_BASENAMES:
            yield parent / "native" / "target" / "release" / name


class NativeLibrary:
    """Thin typed wrapper over the C ABI; one instance per process."""

    scheme_numbers = {
        "dilithium2": 0,
        "falcon512": 1,
        "sphincsplus-sha2-128f": 2,
    }

    def __init__(self, path: Path):
        self.path = path
        lib = ctypes.CDLL(str(path))
        u8p = POINTER(c_ubyte)
        lib.pqfl_lengths.argtypes = [
            c_uint32,
            POINTER(c_size_t),
            POINTER(c_size_t),
            POINTER(c_size_t),
        ]
        lib.pqfl_lengths.restype = c_int32
        lib.pqfl_keypair.argtypes = [c_uint32, u8p, u8p]
        lib.pqfl_keypair.restype = c_int32
        lib.pqfl_sign.argtypes = [c_uint32, u8p, c_size_t, u8p, c_size_t, u8p, POINTER(c_size_t)]
        lib.pqfl_sign.restype = c_int32
        lib.pqfl_verify.argtypes = [c_uint32, u8p, c_size_t, u8p, c_size_t, u8p, c_size_t]
        lib.pqfl_verify.restype = c_int32
        self._lib = lib

    @staticmethod
    def _inbuf(data: bytes):
        # ctypes rejects zero-length from_buffer_copy targets pointing nowhere;
        # a one-byte scratch keeps the pointer valid while len says 0.
        if not data:
            return (c_ubyte * 1)()
        return (c_ubyte * len(data)).from_buffer_copy(data)

    def lengths(self, scheme: int) -> tuple[int, int, int]:
        pk, sk, sig = c_size_t(), c_size_t(), c_size_t()
        rc = self._lib.pqfl_lengths(scheme, pk, sk, sig)
        if rc != RC_OK:
            raise SchemeError(f"native backend rejected scheme number {scheme} (rc={rc})")
        return pk.value, sk.value, sig.value

    def keypair(self, scheme: int) -> tuple[bytes, bytes]:
        pk_len, sk_len, _ = self.lengths(scheme)
        pk = (c_ubyte * pk_len)()
        sk = (c_ubyte * sk_len)()
        rc = self._lib.pqfl_keypair(scheme, pk, sk)
        if rc != RC_OK:
            raise SchemeError(f"native key generation failed (rc={rc})")
        return bytes(pk), bytes(sk)

    def sign(self, scheme: int, secret_key: bytes, message: bytes) -> bytes:
        _, _, sig_max = self.lengths(scheme)
        sig = (c_ubyte * sig_max)()
        sig_len = c_size_t()
        rc = self._lib.pqfl_sign(
            scheme,
            self._inbuf(message),
            len(message),
            self._inbuf(secret_key),
            len(secret_key),
            sig,
            sig_len,
        )
        if rc != RC_OK:
            raise SchemeError(f"native signing failed (rc={rc})")
        return bytes(sig[: sig_len.value])

    def verify(self, scheme: int, public_key: bytes, message: bytes, signature: bytes) -> bool:
        rc = self._lib.pqfl_verify(
            scheme,
            self._inbuf(message),
            len(message),
            self._inbuf(signature),
            len(signature),
            self._inbuf(public_key),
            len(public_key),
        )
        return rc == RC_OK


_loaded: NativeLibrary | None = None
_load_attempted = False


def load_native() -> NativeLibrary | None:
    """Returns the loaded bridge, or None when it is not built/locatable."""
    global _loaded, _load_attempted
    if _load_attempted:
        return _loaded
    _load_attempted = True
    for path in _candidate_paths():
        if path.is_file():
            try:
                _loaded = NativeLibrary(path)
            except OSError:
                continue
            return _loaded
    return None


def require_native() -> NativeLibrary:
    lib = load_native()
    if lib is None:
        raise SchemeError(BUILD_HINT)
    return lib
