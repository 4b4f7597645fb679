"""Alignment, consolidation, grading and revision history for annotation sets.

Matching works per resource: resource identity is unambiguous, time
placement is the contested quantity, so links to the same resource are
compared by their begin/end timecodes under a tolerance. Free-text comments
and overlays are never auto-matched; they flow through union and manual
merges only.

Everything here is deterministic: merge mints ids as a pure function of its
input, so the HTTP API and the CLI produce byte-identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime
from typing import Optional, Sequence, Union as TUnion

from .model import Annotation, AnnotationSet, Comment, Overlay, ResourceLink, TimeFragment, timeline_key

__all__ = [
    "DiffError",
    "MergeError",
    "GradeError",
    "RevisionError",
    "Agreement",
    "Disagreement",
    "DiffReport",
    "UnionPolicy",
    "MajorityPolicy",
    "ManualPolicy",
    "MergePolicy",
    "MergeResult",
    "GradeReport",
    "RevisionEntry",
    "RevisionLog",
    "diff_pair",
    "median_fragment",
    "merge",
    "grade",
    "append_revision",
    "replay",
]


class DiffError(ValueError):
    pass


class MergeError(ValueError):
    pass


class GradeError(ValueError):
    pass


class RevisionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# diff


@dataclass(frozen=True)
class Agreement:
    resource_id: str
    a: Annotation
    b: Annotation


@dataclass(frozen=True)
class Disagreement:
    resource_id: str
    a: Annotation
    b: Annotation
    delta_begin_ms: int  # b minus a
    delta_end_ms: int


@dataclass(frozen=True)
class DiffReport:
    agreements: tuple[Agreement, ...]
    disagreements: tuple[Disagreement, ...]
    unique_a: tuple[Annotation, ...]
    unique_b: tuple[Annotation, ...]


def _links_by_resource(s: AnnotationSet) -> dict[str, list[Annotation]]:
    """ResourceLink annotations grouped by target, each group in timeline order."""
    groups: dict[str, list[Annotation]] = {}
    for a in sorted(s.annotations, key=timeline_key):
        if isinstance(a.body, ResourceLink):
            groups.setdefault(a.body.resource_id, []).append(a)
    return groups


def diff_pair(a: AnnotationSet, b: AnnotationSet, tolerance_ms: int) -> DiffReport:
    """Align two sets per resource; earliest-begin links are the representatives.

    Comments, overlays, surplus links beyond the paired representative and
    links to resources only one side knows all land in the unique lists, so
    every annotation of either input appears in exactly one category.
    """
    if a.video_id != b.video_id:
        raise DiffError(f"sets annotate different videos: {a.video_id!r} vs {b.video_id!r}")
    if tolerance_ms < 0:
        raise ValueError("tolerance_ms must be >= 0")
    links_a, links_b = _links_by_resource(a), _links_by_resource(b)
    agreements: list[Agreement] = []
    disagreements: list[Disagreement] = []
    paired_a: set[str] = set()
    paired_b: set[str] = set()
    for resource_id in sorted(set(links_a) & set(links_b)):
        rep_a, rep_b = links_a[resource_id][0], links_b[resource_id][0]
        paired_a.add(rep_a.id)
        paired_b.add(rep_b.id)
        delta_begin = rep_b.fragment.begin_ms - rep_a.fragment.begin_ms
        delta_end = rep_b.fragment.end_ms - rep_a.fragment.end_ms
        if abs(delta_begin) <= tolerance_ms and abs(delta_end) <= tolerance_ms:
            agreements.append(Agreement(resource_id, rep_a, rep_b))
        else:
            disagreements.append(Disagreement(resource_id, rep_a, rep_b, delta_begin, delta_end))
    unique_a = tuple(x for x in sorted(a.annotations, key=timeline_key) if x.id not in paired_a)
    unique_b = tuple(x for x in sorted(b.annotations, key=timeline_key) if x.id not in paired_b)
    return DiffReport(tuple(agreements), tuple(disagreements), unique_a, unique_b)


# ---------------------------------------------------------------------------
# merge


@dataclass(frozen=True)
class UnionPolicy:
    """Everything from every set; identical (body, fragment) pairs collapse."""


@dataclass(frozen=True)
class MajorityPolicy:
    """Resource links endorsed by at least `quorum` sets, at median timecodes."""

    quorum: int

    def __post_init__(self) -> None:
        if isinstance(self.quorum, bool) or not isinstance(self.quorum, int) or self.quorum < 1:
            raise ValueError("quorum must be an integer >= 1")


@dataclass(frozen=True)
class ManualPolicy:
    """Exactly the hand-picked (set_id, annotation_id) selections."""

    selected: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "selected", tuple((str(s), str(a)) for s, a in self.selected))


MergePolicy = TUnion[UnionPolicy, MajorityPolicy, ManualPolicy]


@dataclass(frozen=True)
class MergeResult:
    merged: tuple[Annotation, ...]  # timeline order, freshly minted ids
    provenance: dict[str, tuple[tuple[str, str], ...]]  # merged id -> (set_id, annotation_id)
    dropped: tuple[tuple[str, str, str], ...]  # (set_id, annotation_id, reason)


def median_fragment(fragments: Sequence[TimeFragment]) -> TimeFragment:
    """Componentwise median; even counts take the half-up mean of the middle two."""
    if not fragments:
        raise ValueError("median_fragment needs at least one fragment")

    def median(values: list[int]) -> int:
        values = sorted(values)
        n = len(values)
        if n % 2:
            return values[n // 2]
        return (values[n // 2 - 1] + values[n // 2] + 1) // 2

    begin = median([f.begin_ms for f in fragments])
    end = median([f.end_ms for f in fragments])
    if begin > end:  # unreachable for valid inputs, kept as a guard
        end = begin
    return TimeFragment(begin, end)


def _body_sort_key(body) -> tuple:
    if isinstance(body, Comment):
        return (0, body.text)
    if isinstance(body, ResourceLink):
        return (1, body.resource_id, body.note or "")
    return (2, body.text, body.region.unit, float(body.region.x), float(body.region.y),
            float(body.region.w), float(body.region.h))


def _mint_ids(entries: list[tuple[Annotation, tuple[tuple[str, str], ...]]]) -> tuple[tuple[Annotation, ...], dict]:
    """Sort candidates canonically and assign fresh zero-padded ids.

    Zero padding keeps lexicographic id order equal to mint order, so the
    returned list is already in timeline order.
    """
    entries.sort(key=lambda e: (e[0].fragment.begin_ms, e[0].fragment.end_ms,
                                _body_sort_key(e[0].body), e[1]))
    width = max(1, len(str(len(entries))))
    merged: list[Annotation] = []
    provenance: dict[str, tuple[tuple[str, str], ...]] = {}
    for i, (annotation, sources) in enumerate(entries, start=1):
        fresh = f"m{i:0{width}d}"
        merged.append(replace(annotation, id=fresh))
        provenance[fresh] = sources
    return tuple(merged), provenance


def _metadata_rank(set_id: str, a: Annotation) -> tuple:
    return (a.created, set_id, a.id)


def merge(sets: Sequence[AnnotationSet], policy: MergePolicy) -> MergeResult:
    """Consolidate learner sets into one main timeline under a policy.

    Every input annotation is accounted for: it backs a merged annotation
    (via provenance) or appears in `dropped` with a reason. Ids are freshly
    minted; merged metadata (author, timestamps, tags) comes from the
    earliest-created source annotation, which keeps the result a pure
    function of its input.
    """
    if not sets:
        raise MergeError("merge needs at least one input set")
    video_ids = {s.video_id for s in sets}
    if len(video_ids) > 1:
        raise MergeError(f"sets annotate different videos: {sorted(video_ids)}")

    if isinstance(policy, UnionPolicy):
        return _merge_union(sets)
    if isinstance(policy, MajorityPolicy):
        return _merge_majority(sets, policy.quorum)
    if isinstance(policy, ManualPolicy):
        return _merge_manual(sets, policy.selected)
    raise MergeError(f"unknown merge policy {policy!r}")


def _merge_union(sets: Sequence[AnnotationSet]) -> MergeResult:
    groups: dict[tuple, list[tuple[str, Annotation]]] = {}
    for s in sets:
        for a in sorted(s.annotations, key=timeline_key):
            key = (a.fragment, _body_sort_key(a.body))
            groups.setdefault(key, []).append((s.id, a))
    entries = []
    for members in groups.values():
        rep = min(members, key=lambda m: _metadata_rank(m[0], m[1]))[1]
        sources = tuple(sorted((set_id, a.id) for set_id, a in members))
        entries.append((rep, sources))
    merged, provenance = _mint_ids(entries)
    return MergeResult(merged, provenance, ())


def _merge_majority(sets: Sequence[AnnotationSet], quorum: int) -> MergeResult:
    if quorum > len(sets):
        raise MergeError(f"quorum {quorum} exceeds the {len(sets)} input sets")
    per_set_links = [_links_by_resource(s) for s in sets]
    all_resources = sorted({r for links in per_set_links for r in links})
    entries = []
    dropped: list[tuple[str, str, str]] = []
    merged_resources: set[str] = set()
    for resource_id in all_resources:
        contributing = [
            (s.id, links[resource_id])
            for s, links in zip(sets, per_set_links)
            if resource_id in links
        ]
        if len(contributing) >= quorum:
            merged_resources.add(resource_id)
            reps = [(set_id, group[0]) for set_id, group in contributing]
            fragment = median_fragment([a.fragment for _, a in reps])
            meta = min(reps, key=lambda m: _metadata_rank(m[0], m[1]))[1]
            consensus = replace(meta, fragment=fragment, body=ResourceLink(resource_id))
            sources = tuple(sorted((set_id, a.id) for set_id, a in reps))
            entries.append((consensus, sources))
    for s, links in zip(sets, per_set_links):
        for a in sorted(s.annotations, key=timeline_key):
            if not isinstance(a.body, ResourceLink):
                dropped.append((s.id, a.id, "not subject to majority"))
            elif a.body.resource_id not in merged_resources:
                dropped.append((s.id, a.id, "below quorum"))
            elif links[a.body.resource_id][0].id != a.id:
                dropped.append((s.id, a.id, "surplus link"))
    merged, provenance = _mint_ids(entries)
    return MergeResult(merged, provenance, tuple(dropped))


def _merge_manual(sets: Sequence[AnnotationSet], selected: tuple[tuple[str, str], ...]) -> MergeResult:
    by_set: dict[str, dict[str, Annotation]] = {}
    for s in sets:
        bucket = by_set.setdefault(s.id, {})
        for a in s.annotations:
            bucket.setdefault(a.id, a)
    chosen: dict[tuple[str, str], Annotation] = {}
    for set_id, annotation_id in selected:
        if set_id not in by_set or annotation_id not in by_set[set_id]:
            raise MergeError(f"unknown selection ({set_id!r}, {annotation_id!r})")
        chosen.setdefault((set_id, annotation_id), by_set[set_id][annotation_id])
    entries = [(a, ((set_id, ann_id),)) for (set_id, ann_id), a in chosen.items()]
    merged, provenance = _mint_ids(entries)
    dropped = tuple(
        (s.id, a.id, "not selected")
        for s in sets
        for a in sorted(s.annotations, key=timeline_key)
        if (s.id, a.id) not in chosen
    )
    return MergeResult(merged, provenance, dropped)


# ---------------------------------------------------------------------------
# grading


@dataclass(frozen=True)
class GradeReport:
    total: int
    correct: int
    missing: tuple[str, ...]
    misplaced: tuple[tuple[str, int], ...]  # (resource_id, delta_begin_ms)
    score: float


def grade(learner: AnnotationSet, key: AnnotationSet, tolerance_ms: int) -> GradeReport:
    """Score a learner's resource placements against the teacher key.

    A key resource is correct when the learner's earliest-begin link to it
    sits within tolerance of the key's begin; ends are informational only.
    """
    if learner.video_id != key.video_id:
        raise GradeError(f"sets annotate different videos: {learner.video_id!r} vs {key.video_id!r}")
    if tolerance_ms < 0:
        raise ValueError("tolerance_ms must be >= 0")
    non_links = [a.id for a in key.annotations if not isinstance(a.body, ResourceLink)]
    if non_links:
        raise GradeError(f"key must contain only resource links; offending ids: {non_links}")
    key_links = _links_by_resource(key)
    learner_links = _links_by_resource(learner)
    correct = 0
    missing: list[str] = []
    misplaced: list[tuple[str, int]] = []
    for resource_id in sorted(key_links, key=lambda r: (timeline_key(key_links[r][0]), r)):
        key_begin = key_links[resource_id][0].fragment.begin_ms
        if resource_id not in learner_links:
            missing.append(resource_id)
            continue
        delta = learner_links[resource_id][0].fragment.begin_ms - key_begin
        if abs(delta) <= tolerance_ms:
            correct += 1
        else:
            misplaced.append((resource_id, delta))
    total = len(key_links)
    score = 1.0 if total == 0 else correct / total
    return GradeReport(total, correct, tuple(missing), tuple(misplaced), score)


# ---------------------------------------------------------------------------
# revision log


REVISION_OPS = ("add", "update", "remove")


@dataclass(frozen=True)
class RevisionEntry:
    seq: int
    actor: str
    at: datetime
    op: str
    annotation_id: str
    before: Optional[Annotation] = None
    after: Optional[Annotation] = None

    def __post_init__(self) -> None:
        if isinstance(self.seq, bool) or not isinstance(self.seq, int) or self.seq < 1:
            raise RevisionError("seq must be an integer >= 1")
        if not isinstance(self.actor, str) or not self.actor:
            raise RevisionError("actor must be a non-empty string")
        if not isinstance(self.at, datetime) or self.at.tzinfo is None:
            raise RevisionError("at must be a timezone-aware datetime")
        if self.op not in REVISION_OPS:
            raise RevisionError(f"op must be one of {REVISION_OPS}, got {self.op!r}")
        if self.op == "add" and not (self.before is None and self.after is not None):
            raise RevisionError("add entries carry after only")
        if self.op == "remove" and not (self.before is not None and self.after is None):
            raise RevisionError("remove entries carry before only")
        if self.op == "update":
            if self.before is None or self.after is None:
                raise RevisionError("update entries carry both before and after")
            if self.before.id != self.after.id:
                raise RevisionError("update must keep the annotation id")
        for ann in (self.before, self.after):
            if ann is not None and ann.id != self.annotation_id:
                raise RevisionError("annotation_id must match the carried annotation")


@dataclass(frozen=True)
class RevisionLog:
    set_id: str
    entries: tuple[RevisionEntry, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        for i, entry in enumerate(self.entries, start=1):
            if entry.seq != i:
                raise RevisionError(f"entry {i} carries seq {entry.seq}; log seqs must be 1..n")

    def __len__(self) -> int:
        return len(self.entries)


def replay(log: RevisionLog, upto: Optional[int] = None) -> dict[str, Annotation]:
    """Fold entries 1..upto from the empty set; upto=None means the full log."""
    if upto is None:
        upto = len(log.entries)
    if not (0 <= upto <= len(log.entries)):
        raise RevisionError(f"upto must be in [0, {len(log.entries)}], got {upto}")
    state: dict[str, Annotation] = {}
    for entry in log.entries[:upto]:
        if entry.op == "add":
            if entry.annotation_id in state:
                raise RevisionError(f"entry {entry.seq} adds duplicate id {entry.annotation_id!r}")
            state[entry.annotation_id] = entry.after
        elif entry.op == "update":
            if entry.annotation_id not in state:
                raise RevisionError(f"entry {entry.seq} updates unknown id {entry.annotation_id!r}")
            state[entry.annotation_id] = entry.after
        else:
            if entry.annotation_id not in state:
                raise RevisionError(f"entry {entry.seq} removes unknown id {entry.annotation_id!r}")
            del state[entry.annotation_id]
    return state


def append_revision(
    log: RevisionLog,
    actor: str,
    at: datetime,
    op: str,
    before: Optional[Annotation] = None,
    after: Optional[Annotation] = None,
) -> RevisionLog:
    """Return a new log with one validated entry; the input log is never mutated."""
    target = after if after is not None else before
    if target is None:
        raise RevisionError("entry needs a before or after annotation")
    entry = RevisionEntry(
        seq=len(log.entries) + 1,
        actor=actor,
        at=at,
        op=op,
        annotation_id=target.id,
        before=before,
        after=after,
    )
    state = replay(log)
    if op == "add" and entry.annotation_id in state:
        raise RevisionError(f"cannot add duplicate id {entry.annotation_id!r}")
    if op in ("update", "remove") and entry.annotation_id not in state:
        raise RevisionError(f"cannot {op} unknown id {entry.annotation_id!r}")
    return RevisionLog(log.set_id, log.entries + (entry,))
