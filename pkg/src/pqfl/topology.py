"""Dynamic server selection and the committed-adversary harness.

The resilience claim under test: an adversary that must commit to a target
before a round's server is revealed hits a fixed server with probability 1
but a uniformly selected server with probability 1/n.

All randomness is counter-based: each draw seeds a fresh generator from
(domain, seed, counter) so outcomes depend only on those values, never on
how many draws other modules have consumed. Domains keep the selection and
adversary streams independent even when they share a seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .envelope import FilterReport

_DOMAIN_SELECTION = 1
_DOMAIN_ADVERSARY = 2

POLICY_KINDS = ("fixed", "uniform_random", "reputation_weighted")
ADVERSARY_KINDS = ("guess_fixed", "guess_uniform", "guess_last_server")


@dataclass(frozen=True)
class SelectionPolicy:
    kind: str
    device_id: str | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"kind must be one of {POLICY_KINDS}")
        if self.kind == "fixed" and not self.device_id:
            raise ValueError("fixed policy needs a device_id")

    @classmethod
    def fixed(cls, device_id: str) -> "SelectionPolicy":
        return cls(kind="fixed", device_id=device_id)

    @classmethod
    def uniform(cls, rng_seed: int = 0) -> "SelectionPolicy":
        return cls(kind="uniform_random", rng_seed=rng_seed)

    @classmethod
    def reputation(cls, rng_seed: int = 0) -> "SelectionPolicy":
        return cls(kind="reputation_weighted", rng_seed=rng_seed)


@dataclass(frozen=True)
class ReputationTable:
    """Per-device selection weight. Scores stay strictly positive: rejections
    halve a score but never push it below the 0.01 floor."""

    scores: dict

    def __post_init__(self):
        if not self.scores:
            raise ValueError("reputation table must not be empty")
        for device, score in self.scores.items():
            if not (np.isfinite(score) and score >= 0):
                raise ValueError(f"bad score for {device!r}: {score}")
        if not any(score > 0 for score in self.scores.values()):
            raise ValueError("at least one reputation score must be positive")

    @classmethod
    def initial(cls, device_ids) -> "ReputationTable":
        return cls({device: 1.0 for device in device_ids})

    def score(self, device_id: str) -> float:
        return self.scores[device_id]


@dataclass(frozen=True)
class AdversaryStrategy:
    """Target-commitment rule. ``guess_last_server`` attacks the previous
    round's server (first round: the lowest-index device, having observed
    nothing yet)."""

    kind: str
    target: str | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"kind must be one of {ADVERSARY_KINDS}")
        if self.kind == "guess_fixed" and not self.target:
            raise ValueError("guess_fixed needs a target")


@dataclass(frozen=True)
class AttackOutcome:
    policy: str
    adversary: str
    n: int
    trials: int
    hits: int

    def __post_init__(self):
        if not 0 <= self.hits <= self.trials:
            raise ValueError("hits must lie in [0, trials]")

    @property
    def hit_rate(self) -> float:
        return self.hits / self.trials

    def to_json(self) -> str:
        return json.dumps(
            {
                "policy": self.policy,
                "adversary": self.adversary,
                "n": self.n,
                "trials": self.trials,
                "hits": self.hits,
                "hit_rate": self.hit_rate,
            }
        )


def select_server(
    round_: int,
    devices: list[str],
    policy: SelectionPolicy,
    reputation: ReputationTable | None = None,
) -> str:
    """Pick the round's server. Deterministic given (policy seed, round)."""
    if not devices:
        raise ValueError("device list is empty")
    if policy.kind == "fixed":
        if policy.device_id not in devices:
            raise ValueError(f"fixed server {policy.device_id!r} not in device list")
        return policy.device_id

    rng = np.random.default_rng([_DOMAIN_SELECTION, policy.rng_seed, round_])
    if policy.kind == "uniform_random":
        return devices[int(rng.integers(len(devices)))]

    # reputation_weighted
    if reputation is None:
        raise ValueError("reputation_weighted policy needs a reputation table")
    weights = np.array([reputation.score(device) for device in devices])
    return devices[int(rng.choice(len(devices), p=weights / weights.sum()))]


def commit_target(
    strategy: AdversaryStrategy, trial: int, devices: list[str], last_server: str | None
) -> str:
    """The adversary's committed guess for this trial/round, chosen without
    knowledge of the upcoming selection."""
    if strategy.kind == "guess_fixed":
        return strategy.target
    if strategy.kind == "guess_uniform":
        rng = np.random.default_rng([_DOMAIN_ADVERSARY, strategy.rng_seed, trial])
        return devices[int(rng.integers(len(devices)))]
    return last_server if last_server is not None else devices[0]


def simulate_attack(
    policy: SelectionPolicy,
    n_devices: int,
    adversary: AdversaryStrategy,
    trials: int,
) -> AttackOutcome:
    """Monte Carlo estimate of P(adversary hits the server).

    Each trial: the adversary commits to a target, then the policy reveals
    the server; a hit means they coincide. Commitment strictly precedes the
    reveal — a post-hoc adversary would trivially hit any policy.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if n_devices < 1:
        raise ValueError("n_devices must be >= 1")
    devices = [f"d{i}" for i in range(n_devices)]
    reputation = ReputationTable.initial(devices)

    hits = 0
    last_server: str | None = None
    for trial in range(trials):
        target = commit_target(adversary, trial, devices, last_server)
        server = select_server(trial, devices, policy, reputation)
        if target == server:
            hits += 1
        last_server = server
    return AttackOutcome(
        policy=policy.kind,
        adversary=adversary.kind,
        n=n_devices,
        trials=trials,
        hits=hits,
    )


def update_reputation(table: ReputationTable, report: FilterReport) -> ReputationTable:
    """Post-round bookkeeping: +1 for each accepted update, halve (floored at
    0.01) for each rejection. Acceptances apply before rejections. This rule
    is artifact plumbing — the resilience guarantee does not depend on it.
    """
    scores = dict(table.scores)
    for device in report.accepted:
        if device not in scores:
            raise ValueError(f"unknown device {device!r}")
        scores[device] += 1.0
    for device, _reason in report.rejected:
        if device not in scores:
            raise ValueError(f"unknown device {device!r}")
        scores[device] = max(scores[device] * 0.5, 0.01)
    return ReputationTable(scores)
