"""Command line entry point (``dpd``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..slow_pathway.schema import PLANNING_STATE_SCHEMA
from ..world import ScenarioError, load_scenario
from .calibrate import calibrate_thresholds
from .config import ConfigError, load_config
from .metrics import compute_collision_rate, episode_report
from .report import export_report
from .runner import EpisodeLog, Mode, run_episode
from .suite import bundled_root, write_bundle

log = logging.getLogger("dpd")


def _scenario_paths(target: str) -> list[Path]:
    path = Path(target)
    if path.is_dir():
        paths = sorted(p for p in path.glob("*.json"))
        if not paths:
            raise ScenarioError(f"{path}: no *.json scenarios")
        return paths
    if not path.exists():
        raise ScenarioError(f"{path}: no such file or directory")
    return [path]


def cmd_run(args) -> int:
    config = load_config(args.config)
    # load everything first so bad inputs fail before any episode starts
    scenarios = [load_scenario(p) for p in _scenario_paths(args.scenario)]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timing = {}
    for scenario in scenarios:
        episode = run_episode(scenario, config, args.mode, args.seed)
        path = episode.write(out / f"{scenario.name}.{episode.mode}.seed{args.seed}.jsonl")
        timing[scenario.name] = episode.wall_time
        s = episode.summary
        print(f"{scenario.name}: ticks={s['ticks']} slow={s['slow_ticks']} "
              f"collisions={s['collision_events']} red_light={s['red_light_violations']} -> {path}")
    (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_eval(args) -> int:
    paths = sorted(Path(args.logs).glob("*.jsonl"))
    if not paths:
        print(f"no *.jsonl logs under {args.logs}", file=sys.stderr)
        return 2
    logs = [EpisodeLog.read(p) for p in paths]
    reports = [episode_report(lg) for lg in logs]
    json_path, csv_path = export_report(reports, args.out)
    for mode in sorted({lg.mode for lg in logs}):
        group = [lg for lg in logs if lg.mode == mode]
        rate = compute_collision_rate(group)
        reps = [r for r in reports if r.mode == mode]
        ds = sum(r.driving_score for r in reps) / len(reps)
        print(f"{mode}: episodes={len(group)} collision_rate_avg={rate['avg']:.3f} mean_DS={ds:.3f}")
    print(f"wrote {json_path} and {csv_path}")
    return 0


def _fmt(x, spec=".3f"):
    return "-" if x is None else format(x, spec)


def cmd_inspect(args) -> int:
    episode = EpisodeLog.read(args.log)
    h = episode.header
    print(f"scenario={h['scenario']} mode={h['mode']} seed={h['seed']} config={h['config_digest']}")
    records = episode.records
    if args.tick is not None:
        if not 0 <= args.tick < len(records):
            print(f"tick {args.tick} out of range 0..{len(records) - 1}", file=sys.stderr)
            return 2
        records = [records[args.tick]]
    for r in records:
        line = (f"t={r['tick']:3d} {r['pathway']:4s} {r['reason']:25s} best={_fmt(r['best_reward'])} "
                f"U={_fmt(r['uncertainty'])} v={r['ego'][-1]:.2f}")
        if r["meta_actions"] is not None:
            bits = "".join(str(r["planning_state"][k]) for k in PLANNING_STATE_SCHEMA)
            line += f" bits={bits} actions={','.join(r['meta_actions'])} src={r['reasoner_source']}"
        if r["collisions"]:
            line += f" COLLISION{r['collisions']}"
        if r["red_light_violations"]:
            line += " RED_LIGHT"
        print(line)
        if args.tick is not None and r["justification"]:
            print(f"      {r['justification']}")
    if episode.summary is not None and args.tick is None:
        print("summary: " + json.dumps(episode.summary, sort_keys=True))
    return 0


def cmd_calibrate(args) -> int:
    config = load_config(args.config)
    scenarios = [load_scenario(p) for p in _scenario_paths(args.scenario)]
    tau_r, tau_u = calibrate_thresholds(scenarios, config, args.seed)
    print(f"[arbitration]\ntau_reward = {tau_r!r}\ntau_uncertainty = {tau_u!r}")
    return 0


def cmd_generate(args) -> int:
    for p in write_bundle(args.out):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpd", description="Dual-pathway planner episodes and metrics.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log reasoner fallbacks")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run closed-loop episodes")
    run.add_argument("--scenario", required=True, help="scenario file or directory of *.json")
    run.add_argument("--config", default=None, help="TOML/JSON config (default: $DPD_CONFIG or built-in)")
    run.add_argument("--mode", type=Mode.parse, default=Mode.DUAL, choices=list(Mode),
                     metavar="{dual,fast-only}")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="directory for the JSONL logs")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="compute metrics from a log directory")
    ev.add_argument("--logs", required=True)
    ev.add_argument("--out", required=True, help="report path; .json and .csv are written")
    ev.set_defaults(func=cmd_eval)

    ins = sub.add_parser("inspect", help="print the per-tick decision trace of a log")
    ins.add_argument("--log", required=True)
    ins.add_argument("--tick", type=int, default=None)
    ins.set_defaults(func=cmd_inspect)

    cal = sub.add_parser("calibrate", help="derive switch thresholds from fast-only runs")
    cal.add_argument("--scenario", default=str(bundled_root() / "hazard"))
    cal.add_argument("--config", default=None)
    cal.add_argument("--seed", type=int, default=0)
    cal.set_defaults(func=cmd_calibrate)

    gen = sub.add_parser("generate-suite", help="write the bundled scenarios to a directory")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
