"""Experiment configuration: defaults, JSON loading, and CLI overrides.

A config file is a JSON object mirroring :class:`ExperimentConfig`; every
field is optional and falls back to the defaults below. ``load_config``
layers three sources, later winning: defaults < file < overrides.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import pqc
from ..learning import SGDConfig
from ..topology import AdversaryStrategy, SelectionPolicy

TEST_FRACTION = 0.2  # 80/20 train/test split, held by the server role

ADVERSARY_KINDS = ("none", "tamper", "forge", "server_attack")


@dataclass(frozen=True)
class SyntheticSource:
    n_samples: int = 1000
    n_classes: int = 10
    dim: int = 10
    class_separation: float = 3.0

    def to_dict(self) -> dict:
        return {
            "source": "synthetic",
            "n_samples": self.n_samples,
            "n_classes": self.n_classes,
            "dim": self.dim,
            "class_separation": self.class_separation,
        }


@dataclass(frozen=True)
class IdxSource:
    images: str
    labels: str

    def to_dict(self) -> dict:
        return {"source": "idx", "images": self.images, "labels": self.labels}


def _source_from_dict(raw: dict):
    kind = raw.get("source", "synthetic")
    body = {k: v for k, v in raw.items() if k != "source"}
    if kind == "synthetic":
        return SyntheticSource(**body)
    if kind == "idx":
        return IdxSource(**body)
    raise ValueError(f"unknown dataset source {kind!r}")


@dataclass(frozen=True)
class AdversarySpec:
    """What the adversary does in transit.

    ``tamper``: flips the params of k envelopes per round (signatures no
    longer match). ``forge``: replaces k envelopes with ones signed by the
    adversary's own key while claiming the victim's identity and public key.
    ``server_attack``: mounts no envelope attack but commits to a server
    guess each round; hits are recorded, nothing is disrupted.
    """

    kind: str = "none"
    k: int = 0
    strategy: AdversaryStrategy | None = None

    def __post_init__(self):
        if self.kind not in ADVERSARY_KINDS:
            raise ValueError(f"adversary kind must be one of {ADVERSARY_KINDS}")
        if self.kind in ("tamper", "forge") and self.k < 1:
            raise ValueError(f"{self.kind} adversary needs k >= 1")
        if self.kind == "server_attack" and self.strategy is None:
            raise ValueError("server_attack needs a strategy")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind in ("tamper", "forge"):
            out["k"] = self.k
        if self.strategy is not None:
            out["strategy"] = self.strategy.kind
            if self.strategy.target:
                out["target"] = self.strategy.target
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "AdversarySpec":
        kind = raw.get("kind", "none")
        strategy = None
        if "strategy" in raw:
            strategy = AdversaryStrategy(raw["strategy"], target=raw.get("target"))
        return cls(kind=kind, k=raw.get("k", 0), strategy=strategy)


@dataclass(frozen=True)
class ExperimentConfig:
    n_devices: int = 4
    rounds: int = 10
    scheme_id: str = "mock"
    selection: SelectionPolicy = field(default_factory=SelectionPolicy.uniform)
    dataset: SyntheticSource | IdxSource = field(default_factory=SyntheticSource)
    m: int | None = None  # classes per client; None means all (IID-like)
    sgd: SGDConfig = field(default_factory=SGDConfig)
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    seed: int = 0
    bandwidth_bytes_per_sec: float = 1e7
    out_dir: str | None = None

    def __post_init__(self):
        if self.n_devices < 2:
            raise ValueError("n_devices must be >= 2")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not pqc.is_registered(self.scheme_id):
            raise ValueError(f"unknown scheme {self.scheme_id!r}")
        if self.adversary.kind in ("tamper", "forge") and self.adversary.k > self.n_devices:
            raise ValueError("adversary k must be <= n_devices")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1")
        if not self.bandwidth_bytes_per_sec > 0:
            raise ValueError("bandwidth must be positive")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")

    def to_dict(self) -> dict:
        sel: dict = {"kind": self.selection.kind, "rng_seed": self.selection.rng_seed}
        if self.selection.device_id:
            sel["device_id"] = self.selection.device_id
        return {
            "n_devices": self.n_devices,
            "rounds": self.rounds,
            "scheme_id": self.scheme_id,
            "selection": sel,
            "dataset": self.dataset.to_dict(),
            "m": self.m,
            "sgd": {
                "steps": self.sgd.steps,
                "learning_rate": self.sgd.learning_rate,
                "schedule": self.sgd.schedule,
                "batch_size": self.sgd.batch_size,
            },
            "adversary": self.adversary.to_dict(),
            "seed": self.seed,
            "bandwidth_bytes_per_sec": self.bandwidth_bytes_per_sec,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kwargs: dict = dict(raw)
        if "selection" in kwargs:
            sel = kwargs["selection"]
            kwargs["selection"] = SelectionPolicy(
                kind=sel.get("kind", "uniform_random"),
                device_id=sel.get("device_id"),
                rng_seed=sel.get("rng_seed", 0),
            )
        if "dataset" in kwargs:
            kwargs["dataset"] = _source_from_dict(kwargs["dataset"])
        if "sgd" in kwargs:
            body = dict(kwargs["sgd"])
            body.pop("seed", None)  # per-device seeds are derived at run time
            kwargs["sgd"] = SGDConfig(**body)
        if "adversary" in kwargs:
            kwargs["adversary"] = AdversarySpec.from_dict(kwargs["adversary"])
        return cls(**kwargs)


def load_config(path: str | Path | None, overrides: dict | None = None) -> ExperimentConfig:
    """Build a config from an optional JSON file plus override fields.

    Overrides use the same keys as the JSON document and win over the file.
    """
    raw: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ValueError("config file must hold a JSON object")
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    return ExperimentConfig.from_dict(raw)
