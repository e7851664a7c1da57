"""Command line entry point: run scenarios, serve live sessions, self-check.

Exit codes are a stable contract: 0 success, 1 scenario validation failure,
2 numerical divergence, 3 conformance failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import conformance
from .engine import Engine
from .plant import DivergenceError
from .scenario import (ScenarioError, bundled_scenario_names,
                       load_bundled_scenario, load_scenario_file)
from .telemetry import FrameLog, StreamServer


def _resolve_scenario(arg: str):
    if os.path.exists(arg):
        return load_scenario_file(arg)
    if arg in bundled_scenario_names():
        return load_bundled_scenario(arg)
    raise ScenarioError("scenario", f"{arg!r} is neither a file nor one of "
                                    f"{bundled_scenario_names()}")


def _cmd_run(args) -> int:
    try:
        scenario = _resolve_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    if args.frame_rate:
        scenario.frame_rate = args.frame_rate
    log = FrameLog()
    engine = Engine(scenario, sinks=[log.record])
    try:
        report = engine.run()
    except DivergenceError as exc:
        print(f"diverged: {exc}; last state {vars(exc.last_state)}",
              file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "frames.csv")
    rows = log.export_csv(csv_path)
    report_path = os.path.join(args.out, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(report.summary())
    print(f"wrote {rows} frames to {csv_path}")
    print(f"wrote report to {report_path}")
    return 0


def _cmd_serve(args) -> int:
    import threading

    try:
        scenario = _resolve_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    if args.frame_rate:
        scenario.frame_rate = args.frame_rate
    log = FrameLog()
    engine_holder = {}
    server = StreamServer(args.port,
                          command_sink=lambda c: engine_holder["e"].post_command(c),
                          decimation=args.frame_decimation,
                          static_dir=args.ui)
    engine = Engine(scenario, sinks=[log.record, server.publish])
    engine_holder["e"] = engine
    try:
        server.start()
    except OSError as exc:
        print(f"cannot serve on port {args.port}: {exc}", file=sys.stderr)
        return 1
    print(f"serving telemetry on ws://127.0.0.1:{args.port}/stream "
          f"(realtime factor {args.realtime})")
    if args.ui:
        print(f"dashboard at http://127.0.0.1:{args.port}/")
    worker = threading.Thread(target=engine.run,
                              kwargs={"pace": args.realtime}, daemon=True)
    worker.start()
    try:
        while worker.is_alive():
            worker.join(timeout=0.5)
        print("scenario finished")
    except KeyboardInterrupt:
        engine.request_stop()
        worker.join(timeout=5)
    finally:
        server.stop()
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        log.export_csv(os.path.join(args.out, "frames.csv"))
        print(f"wrote frames to {args.out}/frames.csv")
    return 0


def _cmd_conformance(args) -> int:
    results = conformance.run_all(pwm_configs=args.pwm_configs,
                                  qep_edges=args.qep_edges, seed=args.seed)
    ok = True
    for res in results:
        print(res.summary())
        ok = ok and res.passed
    return 0 if ok else 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="drivebench",
        description="virtual induction-motor drive testbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and export results")
    p_run.add_argument("--scenario", required=True,
                       help="scenario file or bundled name "
                            f"({', '.join(bundled_scenario_names())})")
    p_run.add_argument("--out", default="results",
                       help="output directory (frames.csv, report.json)")
    p_run.add_argument("--frame-rate", choices=("speed", "isr"), default=None,
                       help="override the telemetry cadence")
    p_run.set_defaults(func=_cmd_run)

    p_serve = sub.add_parser("serve", help="run live with the stream server")
    p_serve.add_argument("--scenario", required=True)
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--realtime", type=float, default=1.0,
                         help="realtime factor; 0 = as fast as possible")
    p_serve.add_argument("--frame-decimation", type=int, default=10,
                         help="broadcast every Nth frame")
    p_serve.add_argument("--ui", default=None,
                         help="serve a built dashboard from this directory")
    p_serve.add_argument("--frame-rate", choices=("speed", "isr"),
                         default=None)
    p_serve.add_argument("--out", default=None,
                         help="export frames here when the run ends")
    p_serve.set_defaults(func=_cmd_serve)

    p_conf = sub.add_parser("conformance",
                            help="peripheral models vs per-tick oracles")
    p_conf.add_argument("--pwm-configs", type=int, default=200)
    p_conf.add_argument("--qep-edges", type=int, default=100_000)
    p_conf.add_argument("--seed", type=int, default=20260810)
    p_conf.set_defaults(func=_cmd_conformance)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
