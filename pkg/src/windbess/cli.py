"""Command line interface: batch experiment driver.

Subcommands: train (full run), evaluate (no training, optional checkpoint),
compare (side-by-side report comparison), generate-data (synthetic market
CSVs), grad-check (finite-difference gradient verification). Spec fields come
from an optional JSON config file with individual flags overriding; the
WINDBESS_OUTPUT_ROOT environment variable sets the default output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import SystemConfig
from .harness import (
    AGENT_KINDS,
    OUTPUT_ROOT_ENV,
    SCENARIOS,
    ExperimentSpec,
    build_ticks,
    compare_reports,
    gradient_report,
    run_experiment,
)
from .market_data import write_agc_csv, write_market_csv


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with ExperimentSpec fields; flags override it")
    p.add_argument("--name", help="run name (directory under the output root)")
    p.add_argument("--agent", choices=AGENT_KINDS)
    p.add_argument("--scenario", choices=tuple(SCENARIOS))
    coupling = p.add_mutually_exclusive_group()
    coupling.add_argument("--coupled", dest="coupled", action="store_true", default=None)
    coupling.add_argument("--uncoupled", dest="coupled", action="store_false", default=None)
    p.add_argument("--seeds", help="comma-separated seed list, e.g. 0,1,2")
    p.add_argument("--train-steps", type=int, dest="train_steps")
    p.add_argument("--episode-len", type=int, dest="episode_len")
    p.add_argument("--eval-len", type=int, dest="eval_len")
    p.add_argument("--train-ratio", type=float, dest="train_ratio")
    p.add_argument("--outdir", help="output root (default: $WINDBESS_OUTPUT_ROOT or ./runs)")
    p.add_argument("--data", help="JSON object describing the data source")
    p.add_argument("--td3", help="JSON object of learner overrides")
    p.add_argument("--po", help="JSON object of planner overrides")
    p.add_argument("--system", help="JSON object of system config overrides")


_SIMPLE_FLAGS = (
    "name",
    "agent",
    "scenario",
    "coupled",
    "train_steps",
    "episode_len",
    "eval_len",
    "train_ratio",
    "outdir",
)

_JSON_FLAGS = ("data", "td3", "po", "system")


def _resolve_spec(args: argparse.Namespace, force: dict | None = None) -> ExperimentSpec:
    raw: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        raw.update(loaded)
    for key in _SIMPLE_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "seeds", None) is not None:
        raw["seeds"] = [int(s) for s in args.seeds.split(",") if s.strip()]
    for key in _JSON_FLAGS:
        text = getattr(args, key, None)
        if text is not None:
            value = json.loads(text)
            if not isinstance(value, dict):
                raise ValueError(f"--{key} must be a JSON object")
            raw[key] = value
    if "outdir" not in raw:
        raw["outdir"] = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    raw.update(force or {})
    return ExperimentSpec.from_dict(raw)


def _print_report_summary(report: dict, path: str) -> None:
    print(f"report: {path}")
    for key, value in sorted(report["aggregate"].items()):
        print(f"{key}: {value}")


def _cmd_train(args: argparse.Namespace) -> int:
    spec = _resolve_spec(args)
    report, path = run_experiment(spec)
    _print_report_summary(report, path)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    force: dict = {"train_steps": 0}
    if args.checkpoint:
        force["checkpoint"] = args.checkpoint
    spec = _resolve_spec(args, force)
    report, path = run_experiment(spec)
    _print_report_summary(report, path)
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    reports = []
    for path in args.reports:
        with open(path, encoding="utf-8") as fh:
            reports.append(json.load(fh))
    result = compare_reports(reports)
    print(result["table"])
    if args.out:
        payload = {k: v for k, v in result.items() if k != "table"}
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, sort_keys=True, indent=2))
            fh.write("\n")
        print(f"comparison: {args.out}")
    return 0


def _cmd_generate_data(args: argparse.Namespace) -> int:
    cfg = SystemConfig()
    data = {
        "kind": "synthetic",
        "profile": args.profile,
        "n": args.n,
        "seed": args.seed,
        "start": args.start,
    }
    if args.price_params:
        data["price_params"] = json.loads(args.price_params)
    if args.wind_params:
        data["wind_params"] = json.loads(args.wind_params)
    ticks = build_ticks(data, cfg)
    write_market_csv(ticks, args.out)
    print(f"market data: {args.out} ({len(ticks)} intervals)")
    if args.agc_out:
        write_agc_csv([t.agc for t in ticks], args.agc_out, cfg)
        print(f"agc traces: {args.agc_out}")
    return 0


def _cmd_grad_check(args: argparse.Namespace) -> int:
    result = gradient_report(n_instances=args.instances, seed=args.seed)
    for key, value in sorted(result.items()):
        print(f"{key}: {value}")
    ok = (
        result["max_actor_rel_err"] <= args.tol
        and result["max_critic_rel_err"] <= args.tol
    )
    print(f"gradient check: {'PASS' if ok else 'FAIL'} (tolerance {args.tol})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="windbess",
        description="Joint spot + regulation FCAS bidding laboratory for a wind farm with a co-located battery.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train an agent and evaluate it on the held-out window")
    _add_spec_flags(p_train)
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("evaluate", help="evaluate without training (optionally from a checkpoint)")
    _add_spec_flags(p_eval)
    p_eval.add_argument("--checkpoint", help="directory holding wind_agent.npz and bess_agent.npz")
    p_eval.set_defaults(fn=_cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="compare completed run reports (first is the baseline)")
    p_cmp.add_argument("reports", nargs="+", help="report.json paths")
    p_cmp.add_argument("--out", help="also write the comparison as JSON")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_gen = sub.add_parser("generate-data", help="write synthetic market data CSVs")
    p_gen.add_argument("--profile", default="mean-reverting", help="constant | square-wave | mean-reverting")
    p_gen.add_argument("--n", type=int, default=1440, help="number of dispatch intervals")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--start", default="2025-01-01T00:00:00", help="first interval timestamp (ISO)")
    p_gen.add_argument("--price-params", dest="price_params", help="JSON object of profile parameters")
    p_gen.add_argument("--wind-params", dest="wind_params", help="JSON object of wind trace parameters")
    p_gen.add_argument("--out", required=True, help="market CSV path")
    p_gen.add_argument("--agc-out", dest="agc_out", help="also write the AGC trace CSV here")
    p_gen.set_defaults(fn=_cmd_generate_data)

    p_grad = sub.add_parser("grad-check", help="verify analytic gradients against finite differences")
    p_grad.add_argument("--instances", type=int, default=100)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--tol", type=float, default=1e-4)
    p_grad.set_defaults(fn=_cmd_grad_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
