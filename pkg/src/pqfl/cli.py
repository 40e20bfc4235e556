"""Command-line front end.

Subcommands: run, bench-schemes, attack-sim, partition-stats, make-fixtures.
Exit codes: 0 success, 1 usage error, 2 runtime error. The PQFL_OUT
environment variable overrides the configured output directory (an explicit
--out flag still wins).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import pqc
from .envelope import sign_update
from .errors import PqflError
from .learning import cycle_m_partition, make_synthetic, write_idx
from .orchestrator import load_config, run_experiment
from .pqc.timing import timing_probe, write_bench_csv
from .topology import AdversaryStrategy, SelectionPolicy, simulate_attack

BENCH_SIZES = (1024, 8192, 65536)  # 1 KiB, 8 KiB, 64 KiB

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this artifact reserves 2 for runtime
    failures, so usage errors exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_policy(text: str) -> SelectionPolicy:
    if text == "uniform":
        return SelectionPolicy.uniform()
    if text == "reputation":
        return SelectionPolicy.reputation()
    if text.startswith("fixed:"):
        return SelectionPolicy.fixed(text.split(":", 1)[1])
    raise ValueError(f"policy must be uniform, reputation, or fixed:<id>, got {text!r}")


def _parse_adversary_strategy(text: str) -> AdversaryStrategy:
    if text == "uniform":
        return AdversaryStrategy("guess_uniform")
    if text == "last-server":
        return AdversaryStrategy("guess_last_server")
    if text.startswith("fixed:"):
        return AdversaryStrategy("guess_fixed", target=text.split(":", 1)[1])
    raise ValueError(
        f"adversary must be uniform, last-server, or fixed:<id>, got {text!r}"
    )


def _parse_run_adversary(text: str) -> dict:
    """Adversary spec for `run`: none | tamper:<k> | forge:<k> |
    server-attack:<strategy>[:<target>]."""
    if text == "none":
        return {"kind": "none"}
    head, _, rest = text.partition(":")
    if head in ("tamper", "forge"):
        if not rest:
            raise ValueError(f"{head} needs a count, e.g. {head}:2")
        return {"kind": head, "k": int(rest)}
    if head == "server-attack":
        strategy, _, target = rest.partition(":")
        mapping = {
            "uniform": "guess_uniform",
            "last-server": "guess_last_server",
            "fixed": "guess_fixed",
        }
        if strategy not in mapping:
            raise ValueError(f"unknown server-attack strategy {strategy!r}")
        spec = {"kind": "server_attack", "strategy": mapping[strategy]}
        if target:
            spec["target"] = target
        return spec
    raise ValueError(f"unknown adversary {text!r}")


def _cmd_run(args) -> int:
    overrides: dict = {
        "n_devices": args.devices,
        "rounds": args.rounds,
        "scheme_id": args.scheme,
        "m": args.m,
        "seed": args.seed,
    }
    if args.adversary is not None:
        overrides["adversary"] = _parse_run_adversary(args.adversary)
    out_dir = args.out or os.environ.get("PQFL_OUT")
    if out_dir:
        overrides["out_dir"] = out_dir
    config = load_config(args.config, overrides)

    report = run_experiment(config)
    final = report.rounds[-1]
    for log in report.rounds:
        print(
            f"round {log.round:>4}  server {log.server_id:<4} "
            f"accepted {log.accepted}/{log.accepted + log.rejected}  "
            f"test_acc {log.test_acc:.4f}"
        )
    print(
        f"done: {config.rounds} rounds, final test accuracy {final.test_acc:.4f}, "
        f"outputs in {config.out_dir or 'pqfl-out'}/"
    )
    return EXIT_OK


def _cmd_bench_schemes(args) -> int:
    schemes = args.schemes.split(",") if args.schemes else pqc.real_scheme_ids()
    reports = []
    for scheme in schemes:
        for size in BENCH_SIZES:
            reports.append(timing_probe(scheme, message_len=size, trials=args.trials))
            print(f"probed {scheme} at {size} B", file=sys.stderr)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_bench_csv(reports, fh)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        write_bench_csv(reports, sys.stdout)
    return EXIT_OK


def _cmd_attack_sim(args) -> int:
    policy = _parse_policy(args.policy)
    if policy.kind != "fixed":
        policy = type(policy)(kind=policy.kind, rng_seed=args.seed)
    adversary = _parse_adversary_strategy(args.adversary)
    if adversary.kind == "guess_uniform":
        # keep the two streams on different seeds by construction
        adversary = AdversaryStrategy(adversary.kind, rng_seed=args.seed + 1)
    outcome = simulate_attack(policy, args.n, adversary, args.trials)
    payload = outcome.to_json()
    print(payload)
    if args.out:
        Path(args.out).write_text(payload + "\n")
    return EXIT_OK


def _cmd_partition_stats(args) -> int:
    data = make_synthetic(args.seed, args.samples, args.classes, args.dim, args.sep)
    part = cycle_m_partition(data, args.devices, args.m)
    hist = part.class_histogram(data)
    width = max(5, len(str(hist.max())))
    print("client  " + " ".join(f"c{c:<{width - 1}}" for c in range(args.classes)))
    for i in range(args.devices):
        row = " ".join(f"{hist[i, c]:<{width}}" for c in range(args.classes))
        print(f"d{i:<6} {row}")
    print(f"assigned {hist.sum()} of {data.n_samples} samples")
    return EXIT_OK


def _cmd_make_fixtures(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    data = make_synthetic(args.seed, 16, 4, 49, 4.0)
    squashed = (data.features - data.features.min()) / (
        data.features.max() - data.features.min()
    )
    write_idx(
        type(data)(squashed, data.labels, data.n_classes),
        out / "images.idx",
        out / "labels.idx",
    )

    keypair = pqc.keygen("mock", seed=args.seed)
    envelope = sign_update([1.0, -2.0, 3.5], 0, "fixture-device", keypair)
    (out / "envelope-valid.json").write_text(envelope.to_json())
    tampered = json.loads(envelope.to_json())
    tampered["params"][0] += 1.0
    (out / "envelope-tampered.json").write_text(json.dumps(tampered))

    for name in ("images.idx", "labels.idx", "envelope-valid.json", "envelope-tampered.json"):
        print(f"wrote {out / name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pqfl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a federated experiment")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--devices", type=int, help="number of devices")
    run.add_argument("--rounds", type=int, help="communication rounds")
    run.add_argument("--scheme", help="signature scheme id")
    run.add_argument("--m", type=int, help="classes per client (cycle-m)")
    run.add_argument(
        "--adversary",
        help="none | tamper:<k> | forge:<k> | server-attack:<strategy>[:<target>]",
    )
    run.add_argument("--seed", type=int, help="experiment seed")
    run.add_argument("--out", help="output directory")
    run.set_defaults(func=_cmd_run)

    bench = sub.add_parser("bench-schemes", help="time keygen/sign/verify")
    bench.add_argument("--trials", type=int, default=30)
    bench.add_argument("--schemes", help="comma-separated ids (default: real schemes)")
    bench.add_argument("--out", help="CSV path (default: stdout)")
    bench.set_defaults(func=_cmd_bench_schemes)

    attack = sub.add_parser("attack-sim", help="Monte Carlo server-attack simulation")
    attack.add_argument("--n", type=int, default=10, help="device count")
    attack.add_argument("--trials", type=int, default=10000)
    attack.add_argument("--policy", default="uniform", help="uniform | reputation | fixed:<id>")
    attack.add_argument(
        "--adversary", default="fixed:d0", help="uniform | last-server | fixed:<id>"
    )
    attack.add_argument("--seed", type=int, default=0)
    attack.add_argument("--out", help="also write the JSON here")
    attack.set_defaults(func=_cmd_attack_sim)

    stats = sub.add_parser("partition-stats", help="per-client class histogram")
    stats.add_argument("--devices", type=int, default=10)
    stats.add_argument("--m", type=int, default=2)
    stats.add_argument("--samples", type=int, default=1000)
    stats.add_argument("--classes", type=int, default=10)
    stats.add_argument("--dim", type=int, default=10)
    stats.add_argument("--sep", type=float, default=3.0)
    stats.add_argument("--seed", type=int, default=0)
    stats.set_defaults(func=_cmd_partition_stats)

    fixtures = sub.add_parser("make-fixtures", help="write IDX and envelope fixtures")
    fixtures.add_argument("--out", default="fixtures")
    fixtures.add_argument("--seed", type=int, default=0)
    fixtures.set_defaults(func=_cmd_make_fixtures)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (PqflError, ValueError, OSError) as exc:
        print(f"pqfl: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
