"""Command-line entry point.

Subcommands: serve | tasks validate | validate | export |
analyze {stats,graph,match,adherence} | code | audit | simulate.

Analysis runs never need the service to be up; they work directly on
corpus files (| "-" for stdin). Exit codes: 0 ok, 1 usage, 2 data error,
3 backend error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analytics, audit as audit_mod, coding, corpus as corpus_mod, simulate
from .config import load_config
from .model import InvalidCategorySet
from .tasks import TaskFileError, load_task_catalog

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_DATA):
        super().__init__(message)
        self.exit_code = exit_code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _read_corpus_lines(path: str) -> list:
    if path == "-":
        return sys.stdin.read().splitlines()
    p = Path(path)
    if not p.exists():
        raise CliError(f"corpus file not found: {path}")
    return p.read_text(encoding="utf-8").splitlines()


def _load_sessions(path: str) -> dict:
    lines = _read_corpus_lines(path)
    report = corpus_mod.validate_corpus(lines)
    if not report.ok:
        first = report.violations[0]
        raise CliError(
            f"corpus {path} is invalid ({len(report.violations)} violations; first: {first})"
        )
    events = []
    for _, event, err in corpus_mod.iter_events(lines):
        if event is not None:
            events.append(event)
    return corpus_mod.build_sessions(events)


def _sidecar(path: str, suffix: str):
    if path == "-":
        return None
    candidate = Path(path).with_suffix("").with_suffix("")  # strip .jsonl
    candidate = candidate.parent / (candidate.name + suffix)
    return candidate if candidate.exists() else None


def _load_coded(args, sessions) -> coding.CodedCorpus:
    gold = None
    codes_path = getattr(args, "codes", None) or _sidecar(args.infile, ".codes.jsonl")
    if codes_path:
        try:
            gold = coding.load_gold_codes(codes_path)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise CliError(f"cannot read codes file {codes_path}: {exc}")
    try:
        return coding.code_corpus(sessions, gold=gold)
    except (InvalidCategorySet, ValueError) as exc:
        raise CliError(f"coding failed: {exc}")


def _emit(args, payload_json: dict, text: str) -> None:
    out = json.dumps(payload_json, indent=2, sort_keys=True) if getattr(args, "json", False) else text
    outfile = getattr(args, "out", None)
    if outfile and outfile != "-":
        Path(outfile).write_text(out + "\n", encoding="utf-8")
    else:
        print(out)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_serve(args) -> int:
    import uvicorn

    from .service import TutorService, create_app

    cfg = load_config(args.config, {
        "backend_url": args.backend_url,
        "enforce_guardrails": True if args.enforce_guardrails else None,
        "tasks_dir": args.tasks,
        "corpus_path": args.corpus,
    })
    service = TutorService(cfg)
    app = create_app(service)
    static_dir = args.static or _default_static_dir()
    if static_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def _default_static_dir():
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


def cmd_tasks_validate(args) -> int:
    try:
        catalog = load_task_catalog(args.directory)
    except TaskFileError as exc:
        raise CliError(str(exc))
    payload = {"tasks": sorted(catalog), "count": len(catalog)}
    _emit(args, payload, f"ok: {len(catalog)} task(s): {', '.join(sorted(catalog))}")
    return EXIT_OK


def cmd_validate(args) -> int:
    lines = _read_corpus_lines(args.infile)
    task_ids = None
    if args.tasks:
        task_ids = set(load_task_catalog(args.tasks))
    report = corpus_mod.validate_corpus(lines, task_ids)
    payload = {"ok": report.ok, "violations": [str(v) for v in report.violations]}
    text = "ok: corpus valid" if report.ok else "\n".join(str(v) for v in report.violations)
    _emit(args, payload, text)
    return EXIT_OK if report.ok else EXIT_DATA


def cmd_export(args) -> int:
    sessions = _load_sessions(args.infile)
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w", encoding="utf-8")
    try:
        for session_id in sorted(sessions):
            session = sessions[session_id]
            if args.task_id and session.task_id != args.task_id:
                continue
            if args.date_from and session.started_at < args.date_from:
                continue
            if args.date_to and session.started_at > args.date_to:
                continue
            for event in corpus_mod.session_to_events(session):
                out.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_code(args) -> int:
    sessions = _load_sessions(args.infile)
    coded = _load_coded(args, sessions)
    rows = [
        {
            "turn_id": t.turn_id,
            "prompt_codes": t.prompt_codes.names(),
            "response_codes": t.response_codes.names(),
            "classifier_source": t.classifier_source,
            "rule_hits": list(t.rule_hits),
        }
        for t in coded.ordered()
    ]
    text = "\n".join(json.dumps(r, ensure_ascii=False) for r in rows)
    payload = {"rule_version": coded.rule_version, "turns": rows}
    _emit(args, payload, text)
    return EXIT_OK


def cmd_audit(args) -> int:
    sessions = _load_sessions(args.infile)
    tasks = load_task_catalog(args.tasks)
    missing = {s.task_id for s in sessions.values()} - set(tasks)
    if missing:
        raise CliError(f"corpus references tasks missing from catalog: {sorted(missing)}")
    records = audit_mod.audit_corpus(sessions, tasks)
    rows = [records[k].to_dict() for k in sorted(records)]
    text = "\n".join(json.dumps(r, ensure_ascii=False) for r in rows)
    _emit(args, {"records": rows}, text)
    return EXIT_OK


def cmd_analyze(args) -> int:
    sessions = _load_sessions(args.infile)

    if args.what == "stats":
        stats = analytics.descriptive_stats(sessions, sd_mode=args.sd_mode)
        text = json.dumps(stats, indent=2, sort_keys=True)
        _emit(args, stats, text)
        return EXIT_OK

    coded = _load_coded(args, sessions)

    if args.what == "match":
        report = analytics.match_report(coded)
        _emit(args, report.to_dict(), report.to_text())
        return EXIT_OK

    if args.what == "graph":
        graph = analytics.build_interaction_graph(sessions, coded, threshold=args.threshold)
        if args.dot:
            Path(args.dot).write_text(graph.to_dot(rendered=True) + "\n", encoding="utf-8")
        payload = json.loads(graph.to_json())
        _emit(args, payload, graph.to_json())
        return EXIT_OK

    if args.what == "adherence":
        tasks = load_task_catalog(args.tasks)
        missing = {s.task_id for s in sessions.values()} - set(tasks)
        if missing:
            raise CliError(f"corpus references tasks missing from catalog: {sorted(missing)}")
        records = audit_mod.audit_corpus(sessions, tasks)
        annotations = {}
        annot_path = args.annotations or _sidecar(args.infile, ".correctness.jsonl")
        if annot_path:
            try:
                annotations = audit_mod.load_correctness_annotations(annot_path)
            except (OSError, ValueError, KeyError) as exc:
                raise CliError(f"cannot read annotations {annot_path}: {exc}")
        report = analytics.adherence_report(records, coded, annotations)
        _emit(args, report.to_dict(), report.to_text())
        return EXIT_OK

    raise CliError(f"unknown analyze target {args.what!r}", EXIT_USAGE)


def cmd_simulate(args) -> int:
    model = simulate.load_behavior_model(args.weights)
    try:
        summary = simulate.regression_suite(
            model, n=args.episodes, enforce=args.enforce, seed=args.seed, task_id=args.task
        )
    except simulate.BehaviorModelError as exc:
        raise CliError(str(exc))
    if summary.aborted_episodes == summary.episodes:
        raise CliError("every episode aborted: backend unreachable", EXIT_BACKEND)
    if args.export:
        # Re-run deterministically to export the transcript of the same batch.
        service = simulate.make_sim_service(seed=args.seed, enforce=args.enforce)
        for episode in range(args.episodes):
            simulate.run_episode(model, service, seed=args.seed * 10_000 + episode,
                                 task_id=args.task)
        Path(args.export).write_bytes(simulate.transcript_bytes(service))
    payload = summary.to_dict()
    _emit(args, payload, json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="tutorkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the tutoring service")
    p.add_argument("--config", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--backend-url", default=None)
    p.add_argument("--enforce-guardrails", action="store_true")
    p.add_argument("--tasks", default=None)
    p.add_argument("--corpus", default=None)
    p.add_argument("--static", default=None, help="directory of built web client assets")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("tasks", help="task catalog utilities")
    tasks_sub = p.add_subparsers(dest="tasks_command", required=True)
    tv = tasks_sub.add_parser("validate", help="validate a task directory")
    tv.add_argument("directory")
    tv.add_argument("--json", action="store_true")
    tv.add_argument("--out", default=None)
    tv.set_defaults(func=cmd_tasks_validate)

    p = sub.add_parser("validate", help="validate a corpus event log")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tasks", default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export", help="filter/re-serialize a corpus event log")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--task-id", default=None)
    p.add_argument("--date-from", dest="date_from", default=None)
    p.add_argument("--date-to", dest="date_to", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("code", help="run the category coder over a corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--codes", default=None, help="gold annotation overrides (JSONL)")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_code)

    p = sub.add_parser("audit", help="compute adherence records for a corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tasks", default="tasks")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("analyze", help="corpus analytics")
    p.add_argument("what", choices=["stats", "graph", "match", "adherence"])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--codes", default=None, help="gold annotation overrides (JSONL)")
    p.add_argument("--annotations", default=None, help="correctness annotations (CSV/JSONL)")
    p.add_argument("--tasks", default="tasks")
    p.add_argument("--threshold", type=int, default=10)
    p.add_argument("--dot", default=None, help="write the rendered graph as DOT here")
    p.add_argument("--sd-mode", dest="sd_mode", choices=["sample", "population"], default="sample")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run simulated student episodes")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--enforce", action="store_true")
    p.add_argument("--weights", default=None)
    p.add_argument("--task", default="happy_strings")
    p.add_argument("--export", default=None, help="write the batch transcript here")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except TaskFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
