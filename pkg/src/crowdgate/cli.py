"""Operator entry point: run simulations, serve the API, replay logs, emit
reports.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import signal
import sys
from dataclasses import replace
from pathlib import Path

from . import config as configmod
from .config import ConfigError
from .eventlog import LogError, read_log_file
from .pipeline import MODE_SERVICE, ModerationEngine
from .service import ModerationService
from .sim import build_report, format_summary, preset, run_simulation, write_report_files

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _load_sim_inputs(args) -> tuple:
    if args.preset:
        config, scenario = preset(args.preset, seed=args.seed)
        return config, scenario
    if not args.config:
        raise ConfigError("simulate needs --config FILE or --preset NAME")
    doc = configmod.load_config_doc(args.config)
    config = configmod.pipeline_config_from_doc(doc)
    bank = configmod.gold_bank_from_doc(doc)
    scenario = configmod.scenario_from_doc(doc, bank)
    return config, scenario


def cmd_simulate(args) -> int:
    config, scenario = _load_sim_inputs(args)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = replace(config, log_path=str(out / "events.log"))
    report, _engine, _truth = run_simulation(config, scenario, seed=args.seed, output_dir=out, csv_only=args.csv_only)
    print(f"wrote {out / 'events.log'}")
    if not args.csv_only:
        print(f"wrote {out / 'summary.txt'}")
    print(
        f"videos={report.videos_total} segments={report.segments_total} "
        f"votes={report.votes_accepted} seed={report.seed}"
    )
    rejected = ", ".join(f"{k}={v}" for k, v in sorted(report.votes_rejected.items())) or "none"
    print(
        f"simulator-side: late_votes={report.late_votes} "
        f"declined_dispatches={report.declined_dispatches} rejected: {rejected}"
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    doc = configmod.load_config_doc(args.config)
    config = configmod.pipeline_config_from_doc(doc)
    if config.mode != MODE_SERVICE:
        raise ConfigError("serve needs a config with mode: service")
    bank = configmod.gold_bank_from_doc(doc)
    options = configmod.service_options_from_doc(doc)
    if args.port is not None:
        options["port"] = args.port

    from .pipeline import open_engine

    engine = open_engine(config, seed=args.seed, gold_bank=bank)
    try:
        service = ModerationService(
            engine, host=options["host"], port=options["port"], tick_interval=options["tick_interval"]
        )
    except OSError as exc:
        print(f"cannot bind {options['host']}:{options['port']}: {exc}", file=sys.stderr)
        engine.log.close()
        return EXIT_RUNTIME

    def on_signal(_sig, _frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, on_signal)
    print(f"serving on http://{options['host']}:{service.port} (log: {config.log_path})")
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.shutdown()
        engine.log.close()
        print("log flushed, bye")
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.log)
    if not path.exists():
        print(f"log not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    if path.stat().st_size == 0:
        print("empty log: no events, empty state")
        return EXIT_OK
    with path.open("r", encoding="utf-8") as fh:
        engine, warnings = ModerationEngine.replay(fh, tolerate_torn_tail=True)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    m = engine.metrics()
    print(f"events replayed: {m['events']}")
    print(f"workers: {m['workers']}")
    print("videos by status: " + (", ".join(f"{k}={v}" for k, v in sorted(m["videos"].items())) or "none"))
    print("segments by verdict: " + (", ".join(f"{k}={v}" for k, v in sorted(m["segments"].items())) or "none"))
    print("gold tasks by verdict: " + (", ".join(f"{k}={v}" for k, v in sorted(m["gold_tasks"].items())) or "none"))
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.log)
    if not path.exists():
        print(f"log not found: {path}", file=sys.stderr)
        return EXIT_USAGE
    if path.stat().st_size == 0:
        print("empty log: nothing to report")
        return EXIT_OK
    with path.open("r", encoding="utf-8") as fh:
        engine, warnings = ModerationEngine.replay(fh, tolerate_torn_tail=True)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)

    header, _events, _ = read_log_file(path, tolerate_torn_tail=True)
    truth: dict[str, str] = {}
    truth_path = args.truth or (path.parent / "truth.csv")
    if Path(truth_path).exists():
        import csv

        with Path(truth_path).open("r", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                truth[row["segment_id"]] = row["truth"]

    report = build_report(engine, truth, seed=header.get("seed") or 0)
    if args.output_dir:
        out = Path(args.output_dir)
        write_report_files(out, report, engine, truth, csv_only=args.csv_only)
        print(f"wrote report files to {out}")
    if not args.csv_only:
        print(format_summary(report), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdgate",
        description="Crowd-sourced video moderation: simulate, serve, replay, report.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="run a simulation and write log + report")
    p.add_argument("--config", help="YAML config file (see configs/desk.yaml)")
    p.add_argument("--preset", choices=["desk", "survey", "youtube-scale"], help="built-in scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default="out")
    p.add_argument("--csv-only", action="store_true", help="skip the plain-text summary")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--port", type=int, help="override the config's port")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="rebuild state from a log and summarize it")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="recompute metrics from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--truth", help="truth.csv sidecar (default: alongside the log)")
    p.add_argument("--output-dir")
    p.add_argument("--csv-only", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LogError as exc:
        print(f"log error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
