"""Canonical serialization, signing, verification, filtering, and FedAvg
aggregation of model updates.

A device's parameter vector travels as an :class:`UpdateEnvelope` carrying the
signature over the canonical encoding of (round, device_id, scheme_id, params).
Binding the full header into the signed bytes blocks replay of a valid update
in another round, under another identity, or under another scheme.

Wire layout (bit-exact):

    0x01 | round u64 LE | len(device_id) u8 | device_id utf-8
         | len(scheme_id) u8 | scheme_id utf-8 | count u32 LE
         | params f64 LE each
"""

from __future__ import annotations

import base64
import enum
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import pqc
from .errors import AggregationError, EncodingError, SchemeError

PROTOCOL_VERSION = 1
_VERSION_BYTE = b"\x01"
_MAX_ROUND = 2**64 - 1


class RejectionReason(str, enum.Enum):
    BAD_SIGNATURE = "bad_signature"
    UNKNOWN_SCHEME = "unknown_scheme"
    MALFORMED = "malformed"
    STALE_ROUND = "stale_round"
    DUPLICATE = "duplicate"

    def __str__(self) -> str:  # keeps CSV/JSON output free of enum noise
        return self.value


def as_param_vector(values) -> np.ndarray:
    """Validated, read-only float64 copy of a parameter sequence."""
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("params must be finite (no NaN or infinities)")
    arr.flags.writeable = False
    return arr


def canonical_encode(round_: int, device_id: str, scheme_id: str, params) -> bytes:
    """Deterministic byte string signed by devices and verified by the server.

    Injective on its inputs thanks to the length-prefix framing; identical
    inputs always produce identical bytes on every platform.
    """
    if not 0 <= round_ <= _MAX_ROUND:
        raise ValueError(f"round must fit in an unsigned 64-bit integer, got {round_}")
    device = device_id.encode("utf-8")
    scheme = scheme_id.encode("utf-8")
    if not device:
        raise EncodingError("device_id must be non-empty")
    if len(device) > 255:
        raise EncodingError(f"device_id exceeds 255 utf-8 bytes ({len(device)})")
    if not scheme:
        raise EncodingError("scheme_id must be non-empty")
    if len(scheme) > 255:
        raise EncodingError(f"scheme_id exceeds 255 utf-8 bytes ({len(scheme)})")
    arr = np.asarray(params, dtype=np.float64).reshape(-1)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("params must be finite (no NaN or infinities)")

    return b"".join(
        (
            _VERSION_BYTE,
            struct.pack("<Q", round_),
            bytes([len(device)]),
            device,
            bytes([len(scheme)]),
            scheme,
            struct.pack("<I", arr.size),
            arr.astype("<f8").tobytes(),
        )
    )


@dataclass(frozen=True)
class UpdateEnvelope:
    """A signed model update: the {signature, params, public key} triple plus
    the round metadata that the signature binds."""

    round: int
    device_id: str
    scheme_id: str
    params: np.ndarray
    public_key: bytes
    signature: bytes
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self):
        object.__setattr__(self, "params", as_param_vector(self.params))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, UpdateEnvelope):
            return NotImplemented
        return (
            self.round == other.round
            and self.device_id == other.device_id
            and self.scheme_id == other.scheme_id
            and np.array_equal(self.params, other.params)
            and self.public_key == other.public_key
            and self.signature == other.signature
            and self.protocol_version == other.protocol_version
        )

    def message(self) -> bytes:
        return canonical_encode(self.round, self.device_id, self.scheme_id, self.params)

    def wire_size(self) -> int:
        """Bytes this envelope occupies in transit (message + key + signature)."""
        return len(self.message()) + len(self.public_key) + len(self.signature)

    def to_json(self) -> str:
        return json.dumps(
            {
                "version": self.protocol_version,
                "round": self.round,
                "device_id": self.device_id,
                "scheme_id": self.scheme_id,
                "params": self.params.tolist(),
                "public_key": base64.b64encode(self.public_key).decode("ascii"),
                "signature": base64.b64encode(self.signature).decode("ascii"),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "UpdateEnvelope":
        obj = json.loads(text)
        if obj.get("version") != PROTOCOL_VERSION:
            raise ValueError(f"unsupported envelope version {obj.get('version')!r}")
        return cls(
            round=int(obj["round"]),
            device_id=obj["device_id"],
            scheme_id=obj["scheme_id"],
            params=obj["params"],
            public_key=base64.b64decode(obj["public_key"]),
            signature=base64.b64decode(obj["signature"]),
        )


@dataclass(frozen=True)
class FilterReport:
    """Verification outcome for one round's batch: every input envelope lands
    in exactly one of accepted / rejected."""

    accepted: list[str]
    rejected: list[tuple[str, RejectionReason]]
    accepted_params: list[np.ndarray] = field(repr=False)

    def rejection_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for _, reason in self.rejected:
            counts[reason.value] = counts.get(reason.value, 0) + 1
        return counts


def sign_update(params, round_: int, device_id: str, keypair: pqc.KeyPair) -> UpdateEnvelope:
    """Sign a local update under the device's keypair."""
    vector = as_param_vector(params)
    message = canonical_encode(round_, device_id, keypair.scheme_id, vector)
    try:
        signature = keypair.sign(message)
    except SchemeError:
        raise
    except Exception as exc:
        raise SchemeError(f"signing failed: {exc}", scheme_id=keypair.scheme_id) from exc
    return UpdateEnvelope(
        round=round_,
        device_id=device_id,
        scheme_id=keypair.scheme_id,
        params=vector,
        public_key=keypair.public_key,
        signature=signature,
    )


def verify_update(envelope: UpdateEnvelope) -> RejectionReason | None:
    """None when the envelope's signature verifies over its own canonical
    encoding; otherwise the rejection reason. Adversarial inputs never raise.
    """
    if not pqc.is_registered(envelope.scheme_id):
        return RejectionReason.UNKNOWN_SCHEME
    try:
        message = envelope.message()
    except (EncodingError, ValueError, TypeError):
        return RejectionReason.MALFORMED
    try:
        ok = pqc.verify(envelope.scheme_id, envelope.public_key, message, envelope.signature)
    except SchemeError:
        raise  # backend unavailable is an operator problem, not a bad envelope
    except Exception:
        return RejectionReason.MALFORMED
    return None if ok else RejectionReason.BAD_SIGNATURE


def filter_updates(envelopes, expected_round: int) -> FilterReport:
    """Partition a batch into accepted and rejected envelopes.

    Beyond signature verification this rejects wrong-round envelopes
    (stale_round) and duplicates: the first *verified* envelope claims its
    device_id and later same-id envelopes are rejected, so a forged or
    tampered envelope can never censor a device's genuine update. Accepted
    params keep input order.
    """
    accepted: list[str] = []
    rejected: list[tuple[str, RejectionReason]] = []
    accepted_params: list[np.ndarray] = []
    seen: set[str] = set()
    for env in envelopes:
        if env.round != expected_round:
            rejected.append((env.device_id, RejectionReason.STALE_ROUND))
            continue
        if env.device_id in seen:
            rejected.append((env.device_id, RejectionReason.DUPLICATE))
            continue
        reason = verify_update(env)
        if reason is None:
            seen.add(env.device_id)
            accepted.append(env.device_id)
            accepted_params.append(env.params)
        else:
            rejected.append((env.device_id, reason))
    return FilterReport(accepted=accepted, rejected=rejected, accepted_params=accepted_params)


def fed_avg(param_vectors) -> np.ndarray:
    """Element-wise unweighted mean of parameter vectors.

    Summation is left-to-right in input order so repeated runs aggregate
    bit-identically. Raises AggregationError on an empty list (a round in
    which every update was rejected).
    """
    vectors = [np.asarray(v, dtype=np.float64).reshape(-1) for v in param_vectors]
    if not vectors:
        raise AggregationError("no accepted updates to aggregate")
    length = vectors[0].size
    for i, v in enumerate(vectors):
        if v.size != length:
            raise ValueError(f"param vector {i} has length {v.size}, expected {length}")
    total = np.zeros(length, dtype=np.float64)
    for v in vectors:
        total += v
    mean = total / len(vectors)
    if mean.size and not np.all(np.isfinite(mean)):
        raise ValueError("aggregated parameters are not finite")
    return mean
