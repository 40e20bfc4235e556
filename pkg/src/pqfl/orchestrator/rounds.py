"""The federated round loop.

Per round: select a server, every device (server included) trains locally
from the current global params, signs its update, the adversary mutates
envelopes in transit, the server filters by signature and aggregates the
survivors. If every update is rejected the round is degenerate: the global
model is retained unchanged.

Determinism: every random draw is counter-based — a fresh generator seeded
from (domain, experiment seed, round, device) — so results depend only on
the config, never on scheduling. Real signature schemes add nondeterministic
signature bytes, but those never reach the logs; with the mock scheme entire
runs are reproducible byte-for-byte apart from measured wall times.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import pqc
from ..envelope import (
    UpdateEnvelope,
    canonical_encode,
    fed_avg,
    filter_updates,
    sign_update,
)
from ..errors import FitError
from ..learning import (
    ConvergenceReport,
    Dataset,
    SGDConfig,
    cycle_m_partition,
    evaluate,
    fit_convergence,
    init_params,
    load_idx,
    local_sgd,
    make_synthetic,
    sgd_with_diagnostics,
    smoothness_ratios,
)
from ..topology import (
    AttackOutcome,
    ReputationTable,
    commit_target,
    select_server,
    update_reputation,
)
from .config import TEST_FRACTION, ExperimentConfig, IdxSource, SyntheticSource

# RNG stream domains; topology owns 1 and 2.
_DOMAIN_TRAIN = 3
_DOMAIN_ADV_PICK = 4
_DOMAIN_SPLIT = 5
_DOMAIN_KEYGEN = 6
_DOMAIN_DATA = 7
_DOMAIN_REFERENCE = 8

ROUNDS_CSV_HEADER = [
    "round",
    "server_id",
    "accepted",
    "rejected",
    "reasons",
    "train_ns",
    "sign_ns",
    "transfer_ns",
    "verify_ns",
    "aggregate_ns",
    "total_ns",
    "overhead_fraction",
    "digest",
    "train_loss",
    "train_acc",
    "test_loss",
    "test_acc",
    "attack_hit",
]

# Measured wall times (and the fraction derived from them). Everything else
# in rounds.csv — including the byte-derived simulated transfer time — is
# deterministic under the mock scheme.
WALL_TIME_COLUMNS = (
    "train_ns",
    "sign_ns",
    "verify_ns",
    "aggregate_ns",
    "total_ns",
    "overhead_fraction",
)


def _derive_seed(*words: int) -> int:
    return int(np.random.SeedSequence(list(words)).generate_state(1)[0])


@dataclass(frozen=True)
class RoundLog:
    round: int
    server_id: str
    accepted: int
    rejected: int
    reasons: dict
    train_ns: int
    sign_ns: int
    transfer_ns: int
    verify_ns: int
    aggregate_ns: int
    total_ns: int
    overhead_fraction: float
    digest: str
    train_loss: float
    train_acc: float
    test_loss: float
    test_acc: float
    attack_hit: bool | None

    def csv_row(self) -> list[str]:
        reasons = "|".join(f"{k}:{v}" for k, v in sorted(self.reasons.items()))
        attack = "" if self.attack_hit is None else str(int(self.attack_hit))
        return [
            str(self.round),
            self.server_id,
            str(self.accepted),
            str(self.rejected),
            reasons,
            str(self.train_ns),
            str(self.sign_ns),
            str(self.transfer_ns),
            str(self.verify_ns),
            str(self.aggregate_ns),
            str(self.total_ns),
            repr(self.overhead_fraction),
            self.digest,
            repr(self.train_loss),
            repr(self.train_acc),
            repr(self.test_loss),
            repr(self.test_acc),
            attack,
        ]

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "server_id": self.server_id,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "reasons": dict(self.reasons),
            "train_ns": self.train_ns,
            "sign_ns": self.sign_ns,
            "transfer_ns": self.transfer_ns,
            "verify_ns": self.verify_ns,
            "aggregate_ns": self.aggregate_ns,
            "total_ns": self.total_ns,
            "overhead_fraction": self.overhead_fraction,
            "digest": self.digest,
            "train_loss": self.train_loss,
            "train_acc": self.train_acc,
            "test_loss": self.test_loss,
            "test_acc": self.test_acc,
            "attack_hit": self.attack_hit,
        }


@dataclass(frozen=True)
class RunSetup:
    """Everything static for one experiment: config, data splits, keys."""

    config: ExperimentConfig
    device_ids: tuple
    keypairs: dict
    adversary_keypair: pqc.KeyPair
    train_set: Dataset
    test_set: Dataset
    shards: tuple  # per-device Dataset


@dataclass
class ExperimentState:
    global_params: np.ndarray
    reputation: ReputationTable
    last_server: str | None = None
    max_grad_norm: float = 0.0


def _load_dataset(config: ExperimentConfig) -> Dataset:
    source = config.dataset
    if isinstance(source, SyntheticSource):
        return make_synthetic(
            _derive_seed(_DOMAIN_DATA, config.seed),
            source.n_samples,
            source.n_classes,
            source.dim,
            source.class_separation,
        )
    assert isinstance(source, IdxSource)
    return load_idx(source.images, source.labels)


def build_setup(config: ExperimentConfig) -> RunSetup:
    """Load data, split, partition, and generate device keys."""
    dataset = _load_dataset(config)
    rng = np.random.default_rng([_DOMAIN_SPLIT, config.seed])
    perm = rng.permutation(dataset.n_samples)
    n_test = int(dataset.n_samples * TEST_FRACTION)
    if n_test == 0 or dataset.n_samples - n_test < dataset.n_classes:
        raise ValueError("dataset too small for an 80/20 split")
    test_set = dataset.take(perm[:n_test])
    train_set = dataset.take(perm[n_test:])
    if np.any(train_set.class_counts() == 0):
        raise ValueError("train split lost a class; use more samples")

    m = config.m if config.m is not None else dataset.n_classes
    partition = cycle_m_partition(train_set, config.n_devices, m)
    shards = tuple(partition.shard(train_set, i) for i in range(config.n_devices))
    for i, shard in enumerate(shards):
        if shard.n_samples == 0:
            raise ValueError(
                f"device {i} received an empty shard; increase n_samples or "
                f"lower n_devices"
            )

    device_ids = tuple(f"d{i}" for i in range(config.n_devices))
    keypairs = {
        device: pqc.keygen(config.scheme_id, seed=_derive_seed(_DOMAIN_KEYGEN, config.seed, i))
        for i, device in enumerate(device_ids)
    }
    adversary_keypair = pqc.keygen(
        config.scheme_id, seed=_derive_seed(_DOMAIN_KEYGEN, config.seed, 0xFFFF)
    )
    return RunSetup(
        config=config,
        device_ids=device_ids,
        keypairs=keypairs,
        adversary_keypair=adversary_keypair,
        train_set=train_set,
        test_set=test_set,
        shards=shards,
    )


def initial_state(setup: RunSetup) -> ExperimentState:
    dataset = setup.train_set
    return ExperimentState(
        global_params=init_params(dataset.dim, dataset.n_classes),
        reputation=ReputationTable.initial(setup.device_ids),
    )


def _apply_adversary(
    setup: RunSetup, round_: int, envelopes: list[UpdateEnvelope]
) -> list[UpdateEnvelope]:
    spec = setup.config.adversary
    if spec.kind not in ("tamper", "forge"):
        return envelopes
    rng = np.random.default_rng([_DOMAIN_ADV_PICK, setup.config.seed, round_])
    victims = set(rng.choice(len(envelopes), size=spec.k, replace=False).tolist())
    mutated = []
    for i, env in enumerate(envelopes):
        if i not in victims:
            mutated.append(env)
        elif spec.kind == "tamper":
            poked = env.params.copy()
            poked[0] += 1.0
            mutated.append(dataclasses.replace(env, params=poked))
        else:  # forge: adversary's signature, victim's identity and true key
            forged = sign_update(
                env.params + 1.0, round_, env.device_id, setup.adversary_keypair
            )
            mutated.append(dataclasses.replace(forged, public_key=env.public_key))
    return mutated


def _digest(scheme_id: str, params: np.ndarray) -> str:
    # state-only digest: the round number is pinned to zero so identical
    # params give identical digests in any round
    return hashlib.sha256(canonical_encode(0, "global", scheme_id, params)).hexdigest()


def run_round(
    state: ExperimentState, setup: RunSetup, round_: int
) -> tuple[ExperimentState, RoundLog]:
    config = setup.config

    # adversary commits before the selection is revealed
    attack_hit: bool | None = None
    target: str | None = None
    if config.adversary.kind == "server_attack":
        target = commit_target(
            config.adversary.strategy, round_, list(setup.device_ids), state.last_server
        )

    reputation = state.reputation if config.selection.kind == "reputation_weighted" else None
    server_id = select_server(round_, list(setup.device_ids), config.selection, reputation)
    if target is not None:
        attack_hit = target == server_id

    train_ns = 0
    sign_ns = 0
    envelopes = []
    max_grad = state.max_grad_norm
    for i, device in enumerate(setup.device_ids):
        sgd = dataclasses.replace(
            config.sgd, seed=_derive_seed(_DOMAIN_TRAIN, config.seed, round_, i)
        )
        t0 = time.perf_counter_ns()
        params, _trace, grad_norms = sgd_with_diagnostics(
            state.global_params, setup.shards[i], sgd
        )
        train_ns += time.perf_counter_ns() - t0
        max_grad = max(max_grad, float(grad_norms.max()))

        t0 = time.perf_counter_ns()
        envelopes.append(sign_update(params, round_, device, setup.keypairs[device]))
        sign_ns += time.perf_counter_ns() - t0

    envelopes = _apply_adversary(setup, round_, envelopes)

    t0 = time.perf_counter_ns()
    report = filter_updates(envelopes, expected_round=round_)
    verify_ns = time.perf_counter_ns() - t0

    t0 = time.perf_counter_ns()
    if report.accepted_params:
        global_params = fed_avg(report.accepted_params)
    else:
        global_params = state.global_params  # degenerate round: keep the model
    aggregate_ns = time.perf_counter_ns() - t0

    uplink = sum(env.wire_size() for env in envelopes)
    broadcast = len(canonical_encode(round_, "global", config.scheme_id, global_params))
    total_bytes = uplink + broadcast * (config.n_devices - 1)
    transfer_ns = int(total_bytes / config.bandwidth_bytes_per_sec * 1e9)

    total_ns = train_ns + sign_ns + transfer_ns + verify_ns + aggregate_ns
    train_loss, train_acc = evaluate(global_params, setup.train_set)
    test_loss, test_acc = evaluate(global_params, setup.test_set)

    assert len(report.accepted) + len(report.rejected) == config.n_devices

    log = RoundLog(
        round=round_,
        server_id=server_id,
        accepted=len(report.accepted),
        rejected=len(report.rejected),
        reasons=report.rejection_counts(),
        train_ns=train_ns,
        sign_ns=sign_ns,
        transfer_ns=transfer_ns,
        verify_ns=verify_ns,
        aggregate_ns=aggregate_ns,
        total_ns=total_ns,
        overhead_fraction=(sign_ns + verify_ns) / total_ns if total_ns else 0.0,
        digest=_digest(config.scheme_id, global_params),
        train_loss=train_loss,
        train_acc=train_acc,
        test_loss=test_loss,
        test_acc=test_acc,
        attack_hit=attack_hit,
    )
    new_state = ExperimentState(
        global_params=global_params,
        reputation=update_reputation(state.reputation, report),
        last_server=server_id,
        max_grad_norm=max_grad,
    )
    return new_state, log


@dataclass(frozen=True)
class ExperimentReport:
    config: ExperimentConfig
    rounds: list
    convergence: ConvergenceReport | None
    convergence_note: str | None
    attack: AttackOutcome | None

    def to_dict(self) -> dict:
        def clean(x: float) -> float | None:
            return float(x) if np.isfinite(x) else None

        convergence = None
        if self.convergence is not None:
            convergence = {
                "fitted_exponent": clean(self.convergence.fitted_exponent),
                "gradient_bound_B": clean(self.convergence.gradient_bound_B),
                "smoothness_estimate_L": clean(self.convergence.smoothness_estimate_L),
                "fit_window": list(self.convergence.fit_window),
            }
        return {
            "config": self.config.to_dict(),
            "rounds": [log.to_dict() for log in self.rounds],
            "convergence": convergence,
            "convergence_note": self.convergence_note,
            "attack": json.loads(self.attack.to_json()) if self.attack else None,
        }


def _fit_experiment_convergence(setup, state, logs):
    """Fit the round-wise train-loss decay against a long centralized
    reference run's optimum. Returns (report | None, note | None)."""
    trace = np.array([log.train_loss for log in logs])
    if trace.size < 64:
        return None, "needs >= 64 rounds to fit a convergence exponent"
    config = setup.config
    reference_cfg = dataclasses.replace(
        config.sgd,
        steps=max(16 * config.rounds, 2048),
        seed=_derive_seed(_DOMAIN_REFERENCE, config.seed),
    )
    _, ref_trace = local_sgd(
        init_params(setup.train_set.dim, setup.train_set.n_classes),
        setup.train_set,
        reference_cfg,
    )
    try:
        report = fit_convergence(
            trace,
            float(ref_trace.min()),
            grad_norms=[state.max_grad_norm],
            smoothness_ratios=smoothness_ratios(setup.train_set, seed=config.seed),
        )
        return report, None
    except FitError as exc:
        return None, str(exc)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run R rounds, streaming rounds.csv row by row, then write report.json.

    Output lands in ``config.out_dir`` (default ``pqfl-out``). Partial CSV
    rows survive an abort because every row is flushed as it is produced.
    """
    setup = build_setup(config)
    state = initial_state(setup)
    out_dir = Path(config.out_dir or "pqfl-out")
    out_dir.mkdir(parents=True, exist_ok=True)

    logs = []
    hits = 0
    with open(out_dir / "rounds.csv", "w") as fh:
        fh.write(",".join(ROUNDS_CSV_HEADER) + "\n")
        fh.flush()
        for round_ in range(config.rounds):
            state, log = run_round(state, setup, round_)
            logs.append(log)
            if log.attack_hit:
                hits += 1
            fh.write(",".join(log.csv_row()) + "\n")
            fh.flush()

    attack = None
    if config.adversary.kind == "server_attack":
        attack = AttackOutcome(
            policy=config.selection.kind,
            adversary=config.adversary.strategy.kind,
            n=config.n_devices,
            trials=config.rounds,
            hits=hits,
        )

    convergence, note = _fit_experiment_convergence(setup, state, logs)
    report = ExperimentReport(
        config=config,
        rounds=logs,
        convergence=convergence,
        convergence_note=note,
        attack=attack,
    )
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
    return report
