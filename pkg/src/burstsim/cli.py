"""``burstsim`` command line: run, compare, replay, validate, serve.

Exit codes: 0 success, 1 configuration error, 2 runtime invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import metrics
from .engine import EventLog
from .errors import BurstSimError, ConfigError, CorruptLog, InvariantViolation
from .router import Policy
from .scenario import Scenario
from .simulation import Simulation

log = logging.getLogger("burstsim")

OUT_FILES = ("events.jsonl", "records.csv", "wait_bins.csv", "summary.json")


def write_outputs(out: Path, event_log: EventLog, records, summary: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    event_log.write(out / "events.jsonl")
    (out / "records.csv").write_text(metrics.records_csv(records))
    (out / "wait_bins.csv").write_text(metrics.binned_wait_report(records).to_csv())
    (out / "summary.json").write_text(metrics.summary_json(summary))


def _policy(args) -> Policy | None:
    return Policy.parse(args.policy) if getattr(args, "policy", None) else None


def cmd_run(args) -> int:
    scenario = Scenario.load(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    sim = Simulation.from_scenario(scenario, policy=_policy(args), strict=not args.no_check)
    result = sim.run()
    write_outputs(Path(args.out), result.log, result.records, result.summary)
    print(metrics.summary_json(result.summary), end="")
    return 0


def _parse_policies(raw: list[str]) -> list[Policy]:
    names = [p for item in raw for p in item.split(",") if p.strip()]
    if len(names) < 2:
        raise ConfigError("compare needs at least two policies")
    return [Policy.parse(n) for n in names]


def cmd_compare(args) -> int:
    scenario = Scenario.load(args.scenario)
    policies = _parse_policies(args.policies)
    trace = scenario.build_trace()  # one realisation shared by every policy
    rows = []
    for policy in policies:
        sim = Simulation.from_scenario(scenario, trace=trace, policy=policy, strict=not args.no_check)
        result = sim.run()
        rows.append((policy.name, result))
        if args.out:
            write_outputs(Path(args.out) / policy.name, result.log, result.records, result.summary)
    print(f"{'policy':<22} {'median_tts':>12} {'mean_wait_s':>12} {'bursted':>8} {'vm_hours':>9}")
    for name, result in rows:
        s = result.summary
        tts = "-" if s["median_tts_s"] is None else metrics.hms(s["median_tts_s"])
        wait = "-" if s["mean_wait_s"] is None else f"{s['mean_wait_s']:.1f}"
        print(f"{name:<22} {tts:>12} {wait:>12} {s['jobs_bursted']:>8} {s['vm_hours']:>9.2f}")
    if args.out:
        doc = {name: result.summary for name, result in rows}
        (Path(args.out) / "compare.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def cmd_replay(args) -> int:
    try:
        event_log = EventLog.read(args.log)
    except OSError as exc:
        raise ConfigError(f"cannot read log: {exc}") from exc
    records = metrics.collect(event_log)
    print(metrics.summary_json(metrics.summary(records, event_log)), end="")
    return 0


def cmd_validate(args) -> int:
    scenario = Scenario.load(args.scenario)
    trace = scenario.build_trace()
    print(f"ok: {scenario.name}, {len(trace)} jobs, policy {scenario.policy.name}")
    return 0


def cmd_serve(args) -> int:
    from .gateway import GatewayService, make_server
    from .workload import Trace

    scenario = Scenario.load(args.scenario)
    sim = Simulation.from_scenario(scenario, trace=Trace([]), strict=True)
    service = GatewayService(sim, blocking=not args.stepped)
    service.register_defaults()
    server = make_server(service, args.host, args.port)
    print(f"serving on http://{args.host}:{server.server_address[1]}/v1", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="burstsim", description="Simulate HPC jobs bursting to a cloud cluster.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write outputs")
    p.add_argument("--scenario", required=True, help="scenario YAML, or 'default' / 'overload'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--policy", help="override the scenario policy, e.g. CostModel or WaitThreshold:3600")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--no-check", action="store_true", help="skip per-instant invariant checks")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run one scenario under several policies on the same trace")
    p.add_argument("--scenario", required=True)
    p.add_argument("--policies", required=True, nargs="+", help="comma or space separated policy names")
    p.add_argument("--out", help="optional directory for per-policy outputs")
    p.add_argument("--no-check", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replay", help="recompute the summary from an event log")
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("validate", help="check a scenario without running it")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("serve", help="serve the jobs API over HTTP")
    p.add_argument("--scenario", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--stepped", action="store_true", help="never block on submit; time moves only via X-Sim-Time")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, CorruptLog) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BurstSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
