"""Command-line entry point.

Every command writes its output plus a run manifest (``<out>.manifest.json``,
or ``manifest.json`` inside the pipeline output directory).  The manifest
embeds all resolved inputs, so ``wlansandbox rerun MANIFEST`` repeats the run
without the original files.

Exit codes: 0 success, 2 input error, 3 pipeline exhausted, 4 oracle cap exceeded.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import shutil
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .bandits import POLICY_NAMES, policy_from_spec, run_learning_episode
from .oracle import DEFAULT_CAP, OracleCapExceeded, exhaustive_search, rows_to_csv
from .sandbox.marketplace import Marketplace, ModelDescriptor
from .sandbox.pipeline import PipelineConfig, PipelineExhausted, run_pipeline
from .sandbox.sweep import stability_sweep, sweep_to_csv
from .sandbox.underlay import EstimationError, UnderlayHandle, load_underlay
from .sim import PRNG_NAME, derive_seed, seconds
from .wlan.dcf import ENGINES, simulate_scenario
from .wlan.scenario import (Scenario, ScenarioError, canonical_scenario, load_scenario,
                            scenario_from_dict, scenario_to_dict)

EXIT_OK, EXIT_INPUT, EXIT_EXHAUSTED, EXIT_CAP = 0, 2, 3, 4
MANIFEST_VERSION = 1

log = logging.getLogger("wlansandbox")


class InputError(Exception):
    pass


# -- helpers ---------------------------------------------------------------------------

def _read_scenario(path: str) -> Scenario:
    return canonical_scenario() if path == "canonical" else load_scenario(path)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _manifest(command: str, config: dict, outputs: list[str]) -> str:
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "config": config,
        "seed": config["seed"],
        "engine_version": __version__,
        "prng": PRNG_NAME,
        "outputs": outputs,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _positive(kind):
    def parse(text: str):
        value = kind(text)
        if not value > 0 or (kind is float and not math.isfinite(value)):
            raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
        return value
    return parse


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text!r}")
    return value


def _durations(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated seconds, got {text!r}") from None
    if not values or any(not (v > 0 and math.isfinite(v)) for v in values):
        raise argparse.ArgumentTypeError("durations must be positive")
    if values != sorted(values):
        raise argparse.ArgumentTypeError("durations must be ascending")
    return values


# -- runners: resolved config in, files out ---------------------------------------------------

def run_simulate(cfg: dict, out: Path) -> int:
    s = scenario_from_dict(cfg["scenario"])
    trace_path = out.with_name(out.name + ".trace.csv") if cfg["trace"] else None
    outputs = [str(out)]
    if trace_path is not None:
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        with open(trace_path, "w", newline="\n") as fh:
            fh.write("time_us,seq,kind,detail\n")
            report = simulate_scenario(s, seconds(cfg["duration_s"]), cfg["seed"], trace=fh)
        outputs.append(str(trace_path))
    else:
        report = simulate_scenario(s, seconds(cfg["duration_s"]), cfg["seed"], engine=cfg["engine"])
    _write(out, report.to_csv())
    _write(out.with_name(out.name + ".manifest.json"), _manifest("simulate", cfg, outputs))
    print(f"aggregate {report.aggregate:.3f} Mbps -> {out}")
    return EXIT_OK


def run_learn(cfg: dict, out: Path) -> int:
    s = scenario_from_dict(cfg["scenario"])
    policy = policy_from_spec(cfg["policy"], cfg["policy_params"])
    trace = run_learning_episode(s, policy, cfg["iterations"], seconds(cfg["iter_duration_s"]),
                                 cfg["seed"], arms=cfg["arms"], reward=cfg["reward"])
    _write(out, trace.to_csv())
    _write(out.with_name(out.name + ".manifest.json"), _manifest("learn", cfg, [str(out)]))
    if cfg["iterations"]:
        config, share = trace.modal_config()
        shown = ", ".join(f"{b}={p:g} dBm ({share[b]:.0%})" for b, p in config.items())
        print(f"modal final configuration: {shown}")
    return EXIT_OK


def run_sweep(cfg: dict, out: Path) -> int:
    s = scenario_from_dict(cfg["scenario"])
    rows = stability_sweep(s, cfg["durations"], cfg["seeds"], cfg["seed"])
    _write(out, sweep_to_csv(rows))
    _write(out.with_name(out.name + ".manifest.json"), _manifest("sweep", cfg, [str(out)]))
    for r in rows:
        print(f"{r.duration_s:g} s: {r.mean_exec_ms:.2f} ms, CoV {r.cov:.5f}")
    return EXIT_OK


def run_oracle(cfg: dict, out: Path, jobs: int = 1) -> int:
    s = scenario_from_dict(cfg["scenario"])
    seeds = [derive_seed(cfg["seed"], f"oracle.{k}") for k in range(cfg["seeds"])]
    rows = exhaustive_search(s, seeds, seconds(cfg["duration_s"]), cap=cfg["cap"], jobs=jobs)
    _write(out, rows_to_csv(s, rows))
    _write(out.with_name(out.name + ".manifest.json"), _manifest("oracle", cfg, [str(out)]))
    best = rows[0]
    print(f"best {'/'.join(f'{p:g}' for p in best.powers)} dBm: {best.mean_aggregate:.3f} Mbps")
    return EXIT_OK


def run_pipeline_cmd(cfg: dict, out_dir: Path, marketplace_dir: Path, jobs: int = 1) -> int:
    und = cfg["underlay"]
    u = UnderlayHandle(scenario_from_dict(und["scenario"]), seed=und["seed"],
                       exponent_jitter=und["exponent_jitter"], traffic_jitter=und["traffic_jitter"])
    m = Marketplace.load(marketplace_dir)
    pc = PipelineConfig.from_dict(cfg["pipeline"])
    attempts: list = []
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [str(out_dir / "sandbox_reports.json")]
    code = EXIT_OK
    try:
        rep, mon = run_pipeline(u, m, pc, registry_dir=marketplace_dir, jobs=jobs, attempts=attempts)
    except PipelineExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_EXHAUSTED
    else:
        _write(out_dir / "sandbox_report.json", rep.to_json())
        _write(out_dir / "monitoring_report.json", mon.to_json())
        _write(out_dir / "monitoring.csv", mon.to_csv())
        outputs += [str(out_dir / n) for n in ("sandbox_report.json", "monitoring_report.json",
                                                "monitoring.csv")]
        powers = ", ".join(f"{b}={p:g} dBm" for b, p in rep.config.items())
        print(f"deployed {rep.model_id}: {powers}; monitored improvement {mon.improvement_pct:.1f}%")
    _write(out_dir / "sandbox_reports.json",
           json.dumps([asdict(r) for r in attempts], indent=2, sort_keys=True) + "\n")
    outputs.append(str(marketplace_dir))
    _write(out_dir / "manifest.json", _manifest("pipeline", cfg, outputs))
    return code


# -- argument handling -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = {"scenario": scenario_to_dict(_read_scenario(args.scenario)), "duration_s": args.duration,
           "seed": args.seed, "engine": args.engine, "trace": args.trace}
    return run_simulate(cfg, Path(args.out or "throughput.csv"))


def cmd_learn(args) -> int:
    s = _read_scenario(args.scenario)
    arms = None
    if args.arms:
        try:
            arms = [float(a) for a in args.arms.split(",")]
        except ValueError:
            raise InputError(f"--arms expects comma-separated dBm values, got {args.arms!r}") from None
    cfg = {"scenario": scenario_to_dict(s), "policy": args.policy, "policy_params": {},
           "iterations": args.iterations, "iter_duration_s": args.iter_duration,
           "reward": args.reward, "arms": arms, "seed": args.seed}
    return run_learn(cfg, Path(args.out or "learning_trace.csv"))


def cmd_sweep(args) -> int:
    cfg = {"scenario": scenario_to_dict(_read_scenario(args.scenario)), "durations": args.durations,
           "seeds": args.seeds, "seed": args.seed}
    return run_sweep(cfg, Path(args.out or "sweep.csv"))


def cmd_oracle(args) -> int:
    cfg = {"scenario": scenario_to_dict(_read_scenario(args.scenario)), "seeds": args.seeds,
           "duration_s": args.duration, "cap": args.cap, "seed": args.seed}
    return run_oracle(cfg, Path(args.out or "oracle.csv"), args.jobs)


def cmd_pipeline(args) -> int:
    u = load_underlay(args.underlay)
    pc = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed_given:
        pc.seed = args.seed
    mdir = Path(args.marketplace)
    if not mdir.is_dir():
        raise InputError(f"marketplace directory {mdir} does not exist")
    cfg = {
        "underlay": {"scenario": scenario_to_dict(u.base), "seed": u.seed,
                     "exponent_jitter": u.exponent_jitter, "traffic_jitter": u.traffic_jitter},
        "marketplace": [asdict(d) for d in Marketplace.load(mdir)],
        "pipeline": pc.to_dict(),
        "seed": pc.seed,
    }
    return run_pipeline_cmd(cfg, Path(args.out or "pipeline_out"), mdir, args.jobs)


def cmd_rerun(args) -> int:
    """Repeat a run from its manifest alone, writing to ``--out``."""
    try:
        doc = json.loads(Path(args.manifest).read_text())
        command, cfg = doc["command"], doc["config"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{args.manifest}: not a run manifest ({exc})") from None
    if command == "pipeline":
        out_dir = Path(args.out or "rerun_out")
        mdir = out_dir / "marketplace"
        if mdir.exists():
            shutil.rmtree(mdir)
        Marketplace([ModelDescriptor(**d) for d in cfg["marketplace"]]).save(mdir)
        return run_pipeline_cmd(cfg, out_dir, mdir, args.jobs)
    runners = {"simulate": run_simulate, "learn": run_learn, "sweep": run_sweep}
    out = Path(args.out or f"rerun_{command}.csv")
    if command == "oracle":
        return run_oracle(cfg, out, args.jobs)
    if command not in runners:
        raise InputError(f"unknown command {command!r} in manifest")
    return runners[command](cfg, out)


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    common.add_argument("--jobs", type=_positive(int), default=argparse.SUPPRESS,
                        help="worker processes for independent simulations (default 1)")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="output file (output directory for pipeline/rerun)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="wlansandbox", parents=[common],
                                description="WLAN transmit-power ML sandbox")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[common], help="one fixed-configuration run")
    sp.add_argument("scenario", help="scenario JSON file, or 'canonical'")
    sp.add_argument("--duration", type=_positive(float), default=10.0, help="seconds (default 10)")
    sp.add_argument("--engine", choices=ENGINES, default="fast")
    sp.add_argument("--trace", action="store_true", help="also write <out>.trace.csv (events engine)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("learn", parents=[common], help="decentralized bandit power learning")
    sp.add_argument("scenario")
    sp.add_argument("--policy", choices=sorted(POLICY_NAMES), default="eps-greedy")
    sp.add_argument("--iterations", type=_non_negative_int, default=200)
    sp.add_argument("--iter-duration", type=_positive(float), default=5.0, help="seconds per iteration")
    sp.add_argument("--reward", choices=("network", "own"), default="network")
    sp.add_argument("--arms", help="comma-separated dBm subset of the power levels")
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("pipeline", parents=[common], help="sandbox -> deploy -> monitor workflow")
    sp.add_argument("underlay", help="underlay JSON file")
    sp.add_argument("marketplace", help="model registry directory (updated in place)")
    sp.add_argument("config", nargs="?", help="pipeline config JSON (defaults if omitted)")
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("sweep", parents=[common], help="execution time vs. variability")
    sp.add_argument("scenario")
    sp.add_argument("--durations", type=_durations, default=[1.0, 5.0, 10.0, 50.0, 100.0],
                    help="ascending seconds, comma separated (default 1,5,10,50,100)")
    sp.add_argument("--seeds", type=_positive(int), default=10, help="runs per duration")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle", parents=[common], help="exhaustive joint power search")
    sp.add_argument("scenario")
    sp.add_argument("--seeds", type=_positive(int), default=10)
    sp.add_argument("--duration", type=_positive(float), default=10.0)
    sp.add_argument("--cap", type=_positive(int), default=DEFAULT_CAP,
                    help=f"max joint configurations (default {DEFAULT_CAP})")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("rerun", parents=[common], help="repeat a run from its manifest")
    sp.add_argument("manifest")
    sp.set_defaults(func=cmd_rerun)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    args.seed_given = hasattr(args, "seed")
    for name, default in (("seed", 0), ("jobs", 1), ("out", None), ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OracleCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ScenarioError, EstimationError, InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
