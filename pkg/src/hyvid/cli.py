"""Command-line interface: validation, conversion, diff/merge/grade, serving.

Machine-readable output is canonical JSON written as exact bytes on stdout,
byte-identical to what the HTTP API returns for the same computation. Exit
codes: 0 ok, 1 validation or domain error, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .collab import (
    DiffError,
    GradeError,
    MajorityPolicy,
    ManualPolicy,
    MergeError,
    MergePolicy,
    RevisionError,
    UnionPolicy,
    diff_pair,
    grade,
    merge,
    replay,
)
from .interchange import (
    InterchangeError,
    canonical_json_bytes,
    annotation_to_json,
    diff_report_to_json,
    export_csv,
    export_set_json,
    export_webvtt,
    grade_report_to_json,
    import_log_json,
    import_set_json,
    merge_result_to_json,
)
from .model import sort_timeline

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _read_file(path: str) -> bytes:
    return Path(path).read_bytes()


def _emit(data: bytes | str) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    sys.stdout.buffer.write(data)
    sys.stdout.buffer.flush()


def _load_set(path: str):
    imported = import_set_json(_read_file(path))
    return imported.set, imported.video


# -- subcommands -------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        imported = import_set_json(_read_file(args.set))
    except InterchangeError as exc:
        if exc.violations:
            for violation in exc.violations:
                print(str(violation), file=sys.stderr)
        else:
            print(str(exc), file=sys.stderr)
        return EXIT_DOMAIN
    if imported.reordered:
        print("note: annotations were not in timeline order; import re-sorts them", file=sys.stderr)
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    s, video = _load_set(args.set)
    if args.format == "json":
        _emit(export_set_json(s, video, pretty=args.pretty))
    elif args.format == "webvtt":
        _emit(export_webvtt(s, video, args.point_padding_ms))
    else:
        _emit(export_csv(s, video))
    return EXIT_OK


def cmd_diff(args: argparse.Namespace) -> int:
    set_a, _ = _load_set(args.a)
    set_b, _ = _load_set(args.b)
    report = diff_pair(set_a, set_b, args.tolerance_ms)
    if args.format == "json":
        _emit(canonical_json_bytes(diff_report_to_json(report)))
        return EXIT_OK
    lines = [
        f"agreements: {len(report.agreements)}",
        f"disagreements: {len(report.disagreements)}",
        f"unique to {args.a}: {len(report.unique_a)}",
        f"unique to {args.b}: {len(report.unique_b)}",
    ]
    for x in report.agreements:
        lines.append(f"  = {x.resource_id} @ {x.a.fragment.begin_ms}ms / {x.b.fragment.begin_ms}ms")
    for x in report.disagreements:
        lines.append(
            f"  ! {x.resource_id} delta_begin={x.delta_begin_ms}ms delta_end={x.delta_end_ms}ms"
        )
    _emit("\n".join(lines) + "\n")
    return EXIT_OK


def parse_policy_arg(text: str) -> MergePolicy:
    if text == "union":
        return UnionPolicy()
    if text.startswith("majority:"):
        try:
            return MajorityPolicy(int(text.split(":", 1)[1]))
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad majority quorum: {exc}") from None
    if text.startswith("manual:"):
        selection_path = text.split(":", 1)[1]
        try:
            doc = json.loads(_read_file(selection_path))
        except OSError as exc:
            raise argparse.ArgumentTypeError(f"cannot read selection file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise argparse.ArgumentTypeError(f"selection file is not JSON: {exc}") from None
        selected = doc.get("selected") if isinstance(doc, dict) else None
        if not isinstance(selected, list):
            raise argparse.ArgumentTypeError('selection file must look like {"selected": [...]}')
        try:
            pairs = tuple((item["set_id"], item["annotation_id"]) for item in selected)
        except (TypeError, KeyError):
            raise argparse.ArgumentTypeError(
                "selection entries need set_id and annotation_id"
            ) from None
        return ManualPolicy(pairs)
    raise argparse.ArgumentTypeError(
        f"policy must be union, majority:<q> or manual:<selection.json>, got {text!r}"
    )


def cmd_merge(args: argparse.Namespace) -> int:
    sets = [_load_set(path)[0] for path in args.inputs]
    result = merge(sets, args.policy)
    data = canonical_json_bytes(merge_result_to_json(result))
    if args.out:
        Path(args.out).write_bytes(data)
    _emit(data)
    return EXIT_OK


def cmd_grade(args: argparse.Namespace) -> int:
    learner, _ = _load_set(args.learner)
    key, _ = _load_set(args.key)
    report = grade(learner, key, args.tolerance_ms)
    _emit(canonical_json_bytes(grade_report_to_json(report)))
    return EXIT_OK


def cmd_history(args: argparse.Namespace) -> int:
    log = import_log_json(_read_file(args.log))
    upto = len(log.entries) if args.at is None else args.at
    state = replay(log, upto)
    ordered = sorted(state.values(), key=lambda a: (a.fragment.begin_ms, a.fragment.end_ms, a.id))
    _emit(canonical_json_bytes({
        "set_id": log.set_id,
        "upto": upto,
        "annotations": [annotation_to_json(a) for a in ordered],
    }))
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app
    from .store import open_store

    data_dir = args.data_dir or os.environ.get("HYVID_DATA_DIR")
    if not data_dir:
        print("serve needs --data-dir or HYVID_DATA_DIR", file=sys.stderr)
        return EXIT_USAGE
    webapp_dir = os.environ.get("HYVID_WEBAPP_DIR")
    if webapp_dir is None and Path("frontend/dist").is_dir():
        webapp_dir = "frontend/dist"
    store = open_store(data_dir)
    if store.read_only:
        for set_id, reason in sorted(store.corruption.items()):
            print(f"corrupt set {set_id}: {reason} (store is read-only)", file=sys.stderr)
    app = create_app(store, private_sets=args.private_sets,
                     webapp_dir=Path(webapp_dir) if webapp_dir else None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyvid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an annotation-set file; violations go to stderr")
    p.add_argument("set")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("export", help="convert a set file to json, webvtt or csv on stdout")
    p.add_argument("set")
    p.add_argument("--format", choices=["json", "webvtt", "csv"], default="json")
    p.add_argument("--pretty", action="store_true", help="indent JSON output (not canonical)")
    p.add_argument("--point-padding-ms", type=int, default=1000)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("diff", help="align two set files per resource")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--tolerance-ms", type=int, default=2000)
    p.add_argument("--format", choices=["json", "text"], default="json")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("merge", help="consolidate set files into one timeline")
    p.add_argument("inputs", nargs="+", metavar="set.json")
    p.add_argument("--policy", type=parse_policy_arg, default=UnionPolicy(),
                   help="union | majority:<q> | manual:<selection.json>")
    p.add_argument("--out", help="also write the merge result to this file")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("grade", help="score a learner set against a teacher key")
    p.add_argument("learner")
    p.add_argument("key")
    p.add_argument("--tolerance-ms", type=int, default=2000)
    p.set_defaults(func=cmd_grade)

    p = sub.add_parser("history", help="replay a revision-log file")
    p.add_argument("log")
    p.add_argument("--at", type=int, default=None, help="replay only the first N entries")
    p.set_defaults(func=cmd_history)

    p = sub.add_parser("serve", help="run the HTTP API (and webapp, when built)")
    p.add_argument("--port", type=int, default=int(os.environ.get("HYVID_PORT", "8675")))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--private-sets", action="store_true",
                   help="annotation sets are readable only by their owner and teachers")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InterchangeError, DiffError, MergeError, GradeError, RevisionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
