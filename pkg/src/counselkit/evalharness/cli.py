"""Evaluation CLI: run-sim, score, aggregate, and report subcommands."""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from ..config import default_config, load_config
from ..eligibility import load_rule_fixture
from ..profiles import load_redaction_policy
from .actors import generate_actors, load_personas
from .checks import (
    auto_safety_checks,
    load_quality_annotations,
    load_rubric,
    load_safety_annotations,
    save_safety_annotations,
)
from .report import aggregate, load_report, render_table, save_report
from .simulate import EngineClient, HttpClient, load_transcripts, run_simulation, save_transcript


def _fixed_clock():
    # Harness runs are reproducible: a constant timestamp keeps persisted
    # snapshots and summaries byte-identical across runs.
    return datetime(2025, 1, 1, tzinfo=timezone.utc)


def _sequential_ids():
    counter = {"n": 0}

    def factory() -> str:
        counter["n"] += 1
        return f"sim-{counter['n']:04d}"

    return factory


def _build_client(args, config):
    if args.endpoint:
        return HttpClient(args.endpoint)
    from ..service import build_engine

    engine = build_engine(
        config,
        clock=_fixed_clock,
        id_factory=_sequential_ids(),
        suppress_slots=tuple(args.suppress_slot or ()),
    )
    return EngineClient(engine)


def cmd_run_sim(args) -> int:
    config = load_config(args.config) if args.config else default_config()
    if args.mode:
        config = config.with_overrides(engine_mode=args.mode)
    policy = load_redaction_policy(config.redaction_policy_path)
    if args.personas:
        actors = load_personas(args.personas)
    else:
        fixture = load_rule_fixture(config.rules_path)
        actors = generate_actors(args.actors, args.seed, fixture.condition_ids)
    client = _build_client(args, config)
    out_dir = Path(args.out)
    for actor in actors:
        record = run_simulation(actor, client, policy, engine_mode=config.engine_mode)
        path = save_transcript(record, out_dir)
        status = "complete" if record.completed else f"incomplete ({record.incomplete_reason})"
        print(f"{record.transcript_id}: {status} -> {path}")
    return 0


def cmd_score(args) -> int:
    fixture = load_rule_fixture(args.rules)
    transcripts = load_transcripts(args.transcripts)
    if not transcripts:
        print(f"no transcripts found in {args.transcripts}", file=sys.stderr)
        return 1
    annotations = [auto_safety_checks(t, fixture) for t in transcripts]
    skipped = [a.transcript_id for a in annotations if not a.evaluable]
    if skipped:
        print(f"not evaluable (no recommendation turn): {', '.join(skipped)}",
              file=sys.stderr)
    save_safety_annotations(annotations, args.out)
    passed = sum(1 for a in annotations if a.evaluable and a.passed)
    evaluable = sum(1 for a in annotations if a.evaluable)
    print(f"scored {len(annotations)} transcripts "
          f"({passed}/{evaluable} evaluable passed) -> {args.out}")
    return 0


def cmd_aggregate(args) -> int:
    safety = [a for a in load_safety_annotations(args.safety) if a.evaluable]
    rubric = load_rubric(args.rubric) if args.rubric else None
    quality = load_quality_annotations(args.quality, rubric)
    report = aggregate(safety, quality)
    save_report(report, args.out)
    print(f"aggregated {report.n} transcripts -> {args.out}")
    return 0


def cmd_report(args) -> int:
    report = load_report(args.report)
    if args.format == "json":
        print(json.dumps(report.to_dict(), sort_keys=True, indent=2))
    else:
        print(render_table(report, title=args.title))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="counsel-eval",
        description="Simulate counseling sessions, score safety, and build reports.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_sim = sub.add_parser("run-sim", help="drive scripted actors and save transcripts")
    run_sim.add_argument("--config", help="service config YAML (defaults to packaged fixtures)")
    run_sim.add_argument("--personas", help="persona file or directory")
    run_sim.add_argument("--actors", type=int, default=10,
                         help="number of generated actors when no personas given")
    run_sim.add_argument("--seed", type=int, default=7)
    run_sim.add_argument("--endpoint", help="base URL of a running service (default: in-process)")
    run_sim.add_argument("--mode", choices=["guided", "naive"],
                         help="override engine mode for A/B runs")
    run_sim.add_argument("--suppress-slot", action="append",
                         help="fault injection: drop a required slot (in-process only)")
    run_sim.add_argument("--out", required=True, help="transcript output directory")
    run_sim.set_defaults(func=cmd_run_sim)

    score = sub.add_parser("score", help="run machine safety checks over transcripts")
    score.add_argument("--transcripts", required=True)
    score.add_argument("--rules", required=True, help="eligibility rule fixture")
    score.add_argument("--out", required=True, help="safety annotations JSON output")
    score.set_defaults(func=cmd_score)

    agg = sub.add_parser("aggregate", help="combine safety and quality annotations")
    agg.add_argument("--safety", required=True, help="safety annotations JSON")
    agg.add_argument("--quality", required=True, help="quality annotations JSON")
    agg.add_argument("--rubric", help="rubric YAML for item-score thresholds")
    agg.add_argument("--out", required=True, help="report JSON output")
    agg.set_defaults(func=cmd_aggregate)

    rep = sub.add_parser("report", help="print a saved report")
    rep.add_argument("--report", required=True)
    rep.add_argument("--format", choices=["table", "json"], default="table")
    rep.add_argument("--title", default="System performance")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
