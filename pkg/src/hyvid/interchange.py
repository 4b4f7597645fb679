"""Interchange formats for annotation sets.

Canonical JSON is the authoritative format: UTF-8, one line, no
insignificant whitespace, deterministic key order (envelope `format` and
`version` first, everything else lexicographic), integer milliseconds and
RFC 3339 'Z' timestamps. Equal sets serialize to identical bytes, which
makes exports diffable and hashable. WebVTT and CSV are lossy exports.
"""

from __future__ import annotations

import csv
import io
import json
from typing import Any, NamedTuple

from .collab import (
    DiffReport,
    GradeReport,
    MergeResult,
    RevisionEntry,
    RevisionError,
    RevisionLog,
)
from .model import (
    Annotation,
    AnnotationSet,
    Comment,
    Overlay,
    Resource,
    ResourceLink,
    SpatialRegion,
    TimeFragment,
    VideoReference,
    Violation,
    format_timestamp,
    parse_timestamp,
    sort_timeline,
    validate_set,
)

__all__ = [
    "InterchangeError",
    "FORMAT_TAG",
    "FORMAT_VERSION",
    "LOG_FORMAT_TAG",
    "ImportedSet",
    "canonical_json_bytes",
    "export_set_json",
    "import_set_json",
    "export_webvtt",
    "export_csv",
    "export_log_json",
    "import_log_json",
    "annotation_to_json",
    "annotation_from_json",
    "video_to_json",
    "video_from_json",
    "resource_to_json",
    "resource_from_json",
    "revision_entry_to_json",
    "revision_entry_from_json",
    "diff_report_to_json",
    "merge_result_to_json",
    "grade_report_to_json",
]

FORMAT_TAG = "hyvid-annotations"
FORMAT_VERSION = 1
LOG_FORMAT_TAG = "hyvid-revlog"


class InterchangeError(ValueError):
    """Import/export failure, addressable by a field path when known."""

    def __init__(self, message: str, path: str = "", violations: tuple[Violation, ...] = ()):
        super().__init__(f"{path}: {message}" if path else message)
        self.message = message
        self.path = path
        self.violations = violations


def _sorted_keys(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _sorted_keys(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_sorted_keys(v) for v in obj]
    return obj


def canonical_json_bytes(obj: Any, first_keys: tuple[str, ...] = ()) -> bytes:
    """Deterministic single-line UTF-8 JSON; `first_keys` are hoisted at the top level."""
    normalized = _sorted_keys(obj)
    if first_keys and isinstance(normalized, dict):
        head = {k: normalized.pop(k) for k in first_keys if k in normalized}
        normalized = {**head, **normalized}
    return json.dumps(normalized, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


# ---------------------------------------------------------------------------
# value <-> plain-JSON conversion


def _region_to_json(r: SpatialRegion) -> dict:
    return {"unit": r.unit, "x": r.x, "y": r.y, "w": r.w, "h": r.h}


def _body_to_json(body) -> dict:
    if isinstance(body, Comment):
        return {"type": "comment", "text": body.text}
    if isinstance(body, ResourceLink):
        out = {"type": "resource-link", "resource_id": body.resource_id}
        if body.note is not None:
            out["note"] = body.note
        return out
    return {"type": "overlay", "text": body.text, "region": _region_to_json(body.region)}


def annotation_to_json(a: Annotation) -> dict:
    return {
        "id": a.id,
        "author": a.author,
        "created": format_timestamp(a.created),
        "modified": format_timestamp(a.modified),
        "fragment": {"begin_ms": a.fragment.begin_ms, "end_ms": a.fragment.end_ms},
        "body": _body_to_json(a.body),
        "tags": list(a.tags),
    }


def video_to_json(v: VideoReference) -> dict:
    return {"id": v.id, "uri": v.uri, "duration_ms": v.duration_ms, "title": v.title}


def _need(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise InterchangeError(f"missing field {key!r}", path)
    return obj[key]


def _check_keys(obj: Any, allowed: set[str], path: str) -> dict:
    if not isinstance(obj, dict):
        raise InterchangeError("expected an object", path)
    unknown = set(obj) - allowed
    if unknown:
        raise InterchangeError(f"unknown field {sorted(unknown)[0]!r}", path)
    return obj


def _as_str(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise InterchangeError("expected a string", path)
    return value


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InterchangeError("expected an integer", path)
    return value


def _as_number(value: Any, path: str) -> int | float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InterchangeError("expected a number", path)
    return value


def _timestamp(value: Any, path: str):
    try:
        return parse_timestamp(_as_str(value, path))
    except ValueError as exc:
        raise InterchangeError(str(exc), path) from None


def _region_from_json(obj: Any, path: str) -> SpatialRegion:
    _check_keys(obj, {"unit", "x", "y", "w", "h"}, path)
    try:
        return SpatialRegion(
            _as_str(_need(obj, "unit", path), f"{path}.unit"),
            _as_number(_need(obj, "x", path), f"{path}.x"),
            _as_number(_need(obj, "y", path), f"{path}.y"),
            _as_number(_need(obj, "w", path), f"{path}.w"),
            _as_number(_need(obj, "h", path), f"{path}.h"),
        )
    except InterchangeError:
        raise
    except ValueError as exc:
        raise InterchangeError(str(exc), path) from None


def _body_from_json(obj: Any, path: str):
    if not isinstance(obj, dict):
        raise InterchangeError("expected an object", path)
    kind = _as_str(_need(obj, "type", path), f"{path}.type")
    try:
        if kind == "comment":
            _check_keys(obj, {"type", "text"}, path)
            return Comment(_as_str(_need(obj, "text", path), f"{path}.text"))
        if kind == "resource-link":
            _check_keys(obj, {"type", "resource_id", "note"}, path)
            note = obj.get("note")
            if note is not None:
                note = _as_str(note, f"{path}.note")
            return ResourceLink(_as_str(_need(obj, "resource_id", path), f"{path}.resource_id"), note)
        if kind == "overlay":
            _check_keys(obj, {"type", "text", "region"}, path)
            return Overlay(
                _as_str(_need(obj, "text", path), f"{path}.text"),
                _region_from_json(_need(obj, "region", path), f"{path}.region"),
            )
    except InterchangeError:
        raise
    except ValueError as exc:
        raise InterchangeError(str(exc), path) from None
    raise InterchangeError(f"unknown body type {kind!r}", f"{path}.type")


def annotation_from_json(obj: Any, path: str) -> Annotation:
    _check_keys(obj, {"id", "author", "created", "modified", "fragment", "body", "tags"}, path)
    frag_obj = _check_keys(_need(obj, "fragment", path), {"begin_ms", "end_ms"}, f"{path}.fragment")
    fragment = TimeFragment(
        _as_int(_need(frag_obj, "begin_ms", f"{path}.fragment"), f"{path}.fragment.begin_ms"),
        _as_int(_need(frag_obj, "end_ms", f"{path}.fragment"), f"{path}.fragment.end_ms"),
    )
    tags = _need(obj, "tags", path)
    if not isinstance(tags, list):
        raise InterchangeError("expected a list", f"{path}.tags")
    try:
        return Annotation(
            id=_as_str(_need(obj, "id", path), f"{path}.id"),
            author=_as_str(_need(obj, "author", path), f"{path}.author"),
            created=_timestamp(_need(obj, "created", path), f"{path}.created"),
            modified=_timestamp(_need(obj, "modified", path), f"{path}.modified"),
            fragment=fragment,
            body=_body_from_json(_need(obj, "body", path), f"{path}.body"),
            tags=tuple(_as_str(t, f"{path}.tags[{i}]") for i, t in enumerate(tags)),
        )
    except InterchangeError:
        raise
    except ValueError as exc:
        raise InterchangeError(str(exc), path) from None


def video_from_json(obj: Any, path: str = "video") -> VideoReference:
    _check_keys(obj, {"id", "uri", "duration_ms", "title"}, path)
    try:
        return VideoReference(
            id=_as_str(_need(obj, "id", path), f"{path}.id"),
            uri=_as_str(_need(obj, "uri", path), f"{path}.uri"),
            duration_ms=_as_int(_need(obj, "duration_ms", path), f"{path}.duration_ms"),
            title=_as_str(_need(obj, "title", path), f"{path}.title"),
        )
    except InterchangeError:
        raise
    except ValueError as exc:
        raise InterchangeError(str(exc), path) from None


# ---------------------------------------------------------------------------
# canonical JSON documents


def set_document(s: AnnotationSet, video: VideoReference) -> dict:
    return {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "id": s.id,
        "owner": s.owner,
        "revision": s.revision,
        "video": video_to_json(video),
        "annotations": [annotation_to_json(a) for a in sort_timeline(s)],
    }


def export_set_json(s: AnnotationSet, video: VideoReference, pretty: bool = False) -> bytes:
    """Canonical bytes of a set; equal sets always produce identical output."""
    violations = validate_set(s, video)
    if violations:
        raise InterchangeError("invalid annotation set", violations[0].path, tuple(violations))
    doc = set_document(s, video)
    if pretty:
        return json.dumps(_sorted_keys(doc), ensure_ascii=False, indent=2).encode("utf-8")
    return canonical_json_bytes(doc, first_keys=("format", "version"))


class ImportedSet(NamedTuple):
    set: AnnotationSet
    video: VideoReference
    reordered: bool  # true when the input's annotation order was not timeline order


def import_set_json(data: bytes | str) -> ImportedSet:
    """Parse and fully validate a canonical set document.

    Annotations are re-sorted into timeline order; ``reordered`` reports
    whether that changed anything. ``import_set_json(export_set_json(s))``
    reproduces ``s`` exactly.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InterchangeError(f"invalid UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InterchangeError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InterchangeError("document must be a JSON object")
    if doc.get("format") != FORMAT_TAG:
        raise InterchangeError(f"unknown format {doc.get('format')!r}", "format")
    if doc.get("version") != FORMAT_VERSION:
        raise InterchangeError(f"unsupported version {doc.get('version')!r}", "version")
    _check_keys(doc, {"format", "version", "id", "owner", "revision", "video", "annotations"}, "")

    video = video_from_json(_need(doc, "video", ""), "video")
    raw_annotations = _need(doc, "annotations", "")
    if not isinstance(raw_annotations, list):
        raise InterchangeError("expected a list", "annotations")
    annotations = [annotation_from_json(a, f"annotations[{i}]") for i, a in enumerate(raw_annotations)]
    try:
        imported = AnnotationSet(
            id=_as_str(_need(doc, "id", ""), "id"),
            video_id=video.id,
            owner=_as_str(_need(doc, "owner", ""), "owner"),
            annotations=tuple(annotations),
            revision=_as_int(_need(doc, "revision", ""), "revision"),
        )
    except InterchangeError:
        raise
    except ValueError as exc:
        raise InterchangeError(str(exc)) from None

    violations = validate_set(imported, video)
    if violations:
        raise InterchangeError(violations[0].code, violations[0].path, tuple(violations))

    ordered = sort_timeline(imported)
    reordered = list(imported.annotations) != ordered
    return ImportedSet(imported.with_annotations(ordered), video, reordered)


# ---------------------------------------------------------------------------
# resources, revision logs and engine reports


def resource_to_json(r: Resource) -> dict:
    out = {"id": r.id, "title": r.title, "kind": r.kind, "url": r.url}
    if r.description is not None:
        out["description"] = r.description
    return out


def resource_from_json(obj: Any, path: str = "") -> Resource:
    _check_keys(obj, {"id", "title", "kind", "url", "description"}, path)
    description = obj.get("description")
    if description is not None:
        description = _as_str(description, f"{path}.description")
    try:
        return Resource(
            id=_as_str(_need(obj, "id", path), f"{path}.id"),
            title=_as_str(_need(obj, "title", path), f"{path}.title"),
            kind=_as_str(_need(obj, "kind", path), f"{path}.kind"),
            url=_as_str(_need(obj, "url", path), f"{path}.url"),
            description=description,
        )
    except InterchangeError:
        raise
    except ValueError as exc:
        raise InterchangeError(str(exc), path) from None


def revision_entry_to_json(e: RevisionEntry) -> dict:
    out = {
        "seq": e.seq,
        "actor": e.actor,
        "at": format_timestamp(e.at),
        "op": e.op,
        "annotation_id": e.annotation_id,
    }
    if e.before is not None:
        out["before"] = annotation_to_json(e.before)
    if e.after is not None:
        out["after"] = annotation_to_json(e.after)
    return out


def revision_entry_from_json(obj: Any, path: str) -> RevisionEntry:
    _check_keys(obj, {"seq", "actor", "at", "op", "annotation_id", "before", "after"}, path)
    before = obj.get("before")
    after = obj.get("after")
    try:
        return RevisionEntry(
            seq=_as_int(_need(obj, "seq", path), f"{path}.seq"),
            actor=_as_str(_need(obj, "actor", path), f"{path}.actor"),
            at=_timestamp(_need(obj, "at", path), f"{path}.at"),
            op=_as_str(_need(obj, "op", path), f"{path}.op"),
            annotation_id=_as_str(_need(obj, "annotation_id", path), f"{path}.annotation_id"),
            before=None if before is None else annotation_from_json(before, f"{path}.before"),
            after=None if after is None else annotation_from_json(after, f"{path}.after"),
        )
    except InterchangeError:
        raise
    except RevisionError as exc:
        raise InterchangeError(str(exc), path) from None


def export_log_json(log: RevisionLog) -> bytes:
    doc = {
        "format": LOG_FORMAT_TAG,
        "version": FORMAT_VERSION,
        "set_id": log.set_id,
        "entries": [revision_entry_to_json(e) for e in log.entries],
    }
    return canonical_json_bytes(doc, first_keys=("format", "version"))


def import_log_json(data: bytes | str) -> RevisionLog:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InterchangeError(f"invalid UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InterchangeError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InterchangeError("document must be a JSON object")
    if doc.get("format") != LOG_FORMAT_TAG:
        raise InterchangeError(f"unknown format {doc.get('format')!r}", "format")
    if doc.get("version") != FORMAT_VERSION:
        raise InterchangeError(f"unsupported version {doc.get('version')!r}", "version")
    _check_keys(doc, {"format", "version", "set_id", "entries"}, "")
    entries_raw = _need(doc, "entries", "")
    if not isinstance(entries_raw, list):
        raise InterchangeError("expected a list", "entries")
    entries = [revision_entry_from_json(e, f"entries[{i}]") for i, e in enumerate(entries_raw)]
    try:
        return RevisionLog(_as_str(_need(doc, "set_id", ""), "set_id"), tuple(entries))
    except RevisionError as exc:
        raise InterchangeError(str(exc), "entries") from None


def diff_report_to_json(report: DiffReport) -> dict:
    return {
        "agreements": [
            {"resource_id": x.resource_id, "a": annotation_to_json(x.a), "b": annotation_to_json(x.b)}
            for x in report.agreements
        ],
        "disagreements": [
            {
                "resource_id": x.resource_id,
                "a": annotation_to_json(x.a),
                "b": annotation_to_json(x.b),
                "delta_begin_ms": x.delta_begin_ms,
                "delta_end_ms": x.delta_end_ms,
            }
            for x in report.disagreements
        ],
        "unique_a": [annotation_to_json(a) for a in report.unique_a],
        "unique_b": [annotation_to_json(a) for a in report.unique_b],
    }


def merge_result_to_json(result: MergeResult) -> dict:
    return {
        "merged": [annotation_to_json(a) for a in result.merged],
        "provenance": {
            merged_id: [{"set_id": s, "annotation_id": a} for s, a in sources]
            for merged_id, sources in result.provenance.items()
        },
        "dropped": [
            {"set_id": s, "annotation_id": a, "reason": reason} for s, a, reason in result.dropped
        ],
    }


def grade_report_to_json(report: GradeReport) -> dict:
    return {
        "total": report.total,
        "correct": report.correct,
        "missing": list(report.missing),
        "misplaced": [{"resource_id": r, "delta_begin_ms": d} for r, d in report.misplaced],
        "score": report.score,
    }


# ---------------------------------------------------------------------------
# WebVTT export


def format_vtt_timestamp(t_ms: int) -> str:
    hours, rest = divmod(t_ms, 3_600_000)
    minutes, rest = divmod(rest, 60_000)
    seconds, ms = divmod(rest, 1_000)
    return f"{hours:02d}:{minutes:02d}:{seconds:02d}.{ms:03d}"


def _vtt_safe(text: str) -> str:
    # cue payloads may not contain "-->" or blank lines
    lines = [line for line in text.replace("-->", "==>").splitlines() if line.strip()]
    return "\n".join(lines) if lines else "-"


def _cue_text(a: Annotation) -> str:
    if isinstance(a.body, Comment):
        return a.body.text
    if isinstance(a.body, ResourceLink):
        text = f"[resource] {a.body.resource_id}"
        return f"{text} {a.body.note}" if a.body.note else text
    return a.body.text


def export_webvtt(s: AnnotationSet, video: VideoReference, point_padding_ms: int = 1000) -> str:
    """One cue per annotation; point annotations are padded so end > start.

    The padded end is clamped to the video duration; a point sitting exactly
    at the duration still gets a 1 ms cue, since zero-length cues are not
    representable in WebVTT.
    """
    if point_padding_ms <= 0:
        raise ValueError("point_padding_ms must be > 0")
    violations = validate_set(s, video)
    if violations:
        raise InterchangeError("invalid annotation set", violations[0].path, tuple(violations))
    out = ["WEBVTT", ""]
    for a in sort_timeline(s):
        begin = a.fragment.begin_ms
        end = a.fragment.end_ms
        if end == begin:
            end = min(begin + point_padding_ms, video.duration_ms)
            if end <= begin:
                end = begin + 1
        out.append(_vtt_safe(a.id))
        out.append(f"{format_vtt_timestamp(begin)} --> {format_vtt_timestamp(end)}")
        out.append(_vtt_safe(_cue_text(a)))
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# CSV export (teacher-side spreadsheet review; lossy by design)

CSV_HEADER = ["id", "begin_ms", "end_ms", "author", "kind", "content", "tags"]

_BODY_KIND = {Comment: "comment", ResourceLink: "resource-link", Overlay: "overlay"}


def export_csv(s: AnnotationSet, video: VideoReference) -> str:
    violations = validate_set(s, video)
    if violations:
        raise InterchangeError("invalid annotation set", violations[0].path, tuple(violations))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_HEADER)
    for a in sort_timeline(s):
        writer.writerow([
            a.id,
            a.fragment.begin_ms,
            a.fragment.end_ms,
            a.author,
            _BODY_KIND[type(a.body)],
            _cue_text(a),
            ";".join(a.tags),
        ])
    return buf.getvalue()
