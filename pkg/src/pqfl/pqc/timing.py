"""Key-generation / signing / verification timing probe.

Methodology: monotonic clock (perf_counter_ns), 3 untimed warm-up iterations,
then per trial one keygen, one sign, and one verify on a fresh random message
of the requested length. Summaries are min / median / p95 (nearest-rank,
rounding up), which resist scheduler noise better than means.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass
from typing import IO, Iterable

import numpy as np

from ..errors import ProbeError

CSV_HEADER = [
    "scheme_id",
    "message_len",
    "trials",
    "key_ns_med",
    "sign_ns_med",
    "verify_ns_med",
    "sign_ns_p95",
    "verify_ns_p95",
]


@dataclass(frozen=True)
class DurationSummary:
    """min / median / p95 of a batch of durations, nanoseconds."""

    min_ns: float
    median_ns: float
    p95_ns: float

    @classmethod
    def of(cls, samples: list[int]) -> "DurationSummary":
        arr = np.asarray(samples, dtype=np.int64)
        return cls(
            min_ns=float(arr.min()),
            median_ns=float(np.median(arr)),
            p95_ns=float(np.percentile(arr, 95, method="higher")),
        )


@dataclass(frozen=True)
class TimingReport:
    scheme_id: str
    message_len: int
    trials: int
    key_gen_ns: DurationSummary
    sign_ns: DurationSummary
    verify_ns: DurationSummary

    def csv_row(self) -> list:
        return [
            self.scheme_id,
            self.message_len,
            self.trials,
            int(round(self.key_gen_ns.median_ns)),
            int(round(self.sign_ns.median_ns)),
            int(round(self.verify_ns.median_ns)),
            int(round(self.sign_ns.p95_ns)),
            int(round(self.verify_ns.p95_ns)),
        ]


def timing_probe(scheme_id: str, message_len: int, trials: int) -> TimingReport:
    """Measure keygen/sign/verify for one scheme at one message size."""
    from . import _backend  # late import: timing is imported by the package root

    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if message_len < 0:
        raise ValueError(f"message_len must be >= 0, got {message_len}")
    backend = _backend(scheme_id)

    for _ in range(3):  # warm-up, untimed
        pk, sk = backend.keygen()
        sig = backend.sign(sk, b"\x00" * min(message_len, 64))
        backend.verify(pk, b"\x00" * min(message_len, 64), sig)

    key_ns: list[int] = []
    sign_ns: list[int] = []
    verify_ns: list[int] = []
    try:
        for _ in range(trials):
            message = os.urandom(message_len)

            t0 = time.perf_counter_ns()
            pk, sk = backend.keygen()
            t1 = time.perf_counter_ns()
            sig = backend.sign(sk, message)
            t2 = time.perf_counter_ns()
            ok = backend.verify(pk, message, sig)
            t3 = time.perf_counter_ns()

            if not ok:
                raise ProbeError(f"{scheme_id}: probe signature failed to verify")
            key_ns.append(t1 - t0)
            sign_ns.append(t2 - t1)
            verify_ns.append(t3 - t2)
    except ProbeError:
        raise
    except Exception as exc:
        raise ProbeError(f"{scheme_id}: backend failed mid-probe: {exc}") from exc

    return TimingReport(
        scheme_id=scheme_id,
        message_len=message_len,
        trials=trials,
        key_gen_ns=DurationSummary.of(key_ns),
        sign_ns=DurationSummary.of(sign_ns),
        verify_ns=DurationSummary.of(verify_ns),
    )


def write_bench_csv(reports: Iterable[TimingReport], stream: IO[str]) -> None:
    writer = csv.writer(stream)
    writer.writerow(CSV_HEADER)
    for report in reports:
        writer.writerow(report.csv_row())
