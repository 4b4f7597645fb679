"""Domain model and fragment algebra for hypervideo annotation.

Everything here is an immutable value; every operation is a pure function.
Validation is split in two layers: constructors reject structurally broken
values (wrong types, empty text, degenerate regions), while ``validate_*``
functions report rule violations as data so callers can surface them with
field paths instead of catching exceptions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Iterable, Optional, Union
from urllib.parse import urlparse

__all__ = [
    "TimeFragment",
    "SpatialRegion",
    "Comment",
    "ResourceLink",
    "Overlay",
    "Body",
    "Annotation",
    "Resource",
    "VideoReference",
    "AnnotationSet",
    "Violation",
    "normalize_tags",
    "parse_timestamp",
    "format_timestamp",
    "validate_fragment",
    "overlap_ms",
    "jaccard",
    "sort_timeline",
    "annotations_at",
    "validate_set",
]

RESOURCE_KINDS = ("image", "text", "audio", "video", "web")


def _require_int(value: object, what: str) -> int:
    # bool is an int subclass; never a valid millisecond or coordinate
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{what} must be an integer, got {value!r}")
    return value


def _require_str(value: object, what: str, *, non_empty: bool = False) -> str:
    if not isinstance(value, str):
        raise ValueError(f"{what} must be a string, got {value!r}")
    if non_empty and not value:
        raise ValueError(f"{what} must be non-empty")
    return value


def _require_absolute_uri(value: object, what: str) -> str:
    s = _require_str(value, what, non_empty=True)
    if not urlparse(s).scheme:
        raise ValueError(f"{what} must be an absolute URI, got {s!r}")
    return s


@dataclass(frozen=True)
class TimeFragment:
    """Closed interval [begin_ms, end_ms] of video time; a point iff equal.

    Ordering and sign are deliberately not enforced here so that
    :func:`validate_fragment` can report them as violations.
    """

    begin_ms: int
    end_ms: int

    def __post_init__(self) -> None:
        _require_int(self.begin_ms, "begin_ms")
        _require_int(self.end_ms, "end_ms")

    @property
    def is_point(self) -> bool:
        return self.begin_ms == self.end_ms

    @property
    def length_ms(self) -> int:
        return self.end_ms - self.begin_ms


@dataclass(frozen=True)
class SpatialRegion:
    """Rectangular overlay region, in pixels or percent of the video box."""

    unit: str  # "pixel" | "percent"
    x: Union[int, float]
    y: Union[int, float]
    w: Union[int, float]
    h: Union[int, float]

    def __post_init__(self) -> None:
        if self.unit not in ("pixel", "percent"):
            raise ValueError(f"region unit must be 'pixel' or 'percent', got {self.unit!r}")
        for name in ("x", "y", "w", "h"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"region {name} must be a number, got {value!r}")
            if value != value or value in (float("inf"), float("-inf")):
                raise ValueError(f"region {name} must be finite")
            if value < 0:
                raise ValueError(f"region {name} must be non-negative")
            # keep equal values identical across construction paths (10.0 -> 10)
            if isinstance(value, float):
                if self.unit == "percent":
                    if abs(value * 100 - round(value * 100)) > 1e-9:
                        raise ValueError(
                            f"percent region {name} allows at most 2 fractional digits, got {value!r}"
                        )
                    if value == int(value):
                        object.__setattr__(self, name, int(value))
                else:
                    if value != int(value):
                        raise ValueError(f"pixel region {name} must be an integer, got {value!r}")
                    object.__setattr__(self, name, int(value))
        if self.w <= 0 or self.h <= 0:
            raise ValueError("region w and h must be > 0")
        if self.unit == "percent":
            if self.x + self.w > 100 or self.y + self.h > 100:
                raise ValueError("percent region must fit within 100x100")


@dataclass(frozen=True)
class Comment:
    """Free-text note anchored to a fragment."""

    text: str

    def __post_init__(self) -> None:
        _require_str(self.text, "comment text", non_empty=True)


@dataclass(frozen=True)
class ResourceLink:
    """Link from a fragment to a resource in the video's catalog."""

    resource_id: str
    note: Optional[str] = None

    def __post_init__(self) -> None:
        _require_str(self.resource_id, "resource_id", non_empty=True)
        if self.note is not None:
            _require_str(self.note, "note")


@dataclass(frozen=True)
class Overlay:
    """Text rendered over a region of the video for the fragment's duration."""

    text: str
    region: SpatialRegion

    def __post_init__(self) -> None:
        _require_str(self.text, "overlay text", non_empty=True)
        if not isinstance(self.region, SpatialRegion):
            raise ValueError("overlay region must be a SpatialRegion")


Body = Union[Comment, ResourceLink, Overlay]


def normalize_tags(tags: Iterable[str]) -> tuple[str, ...]:
    """Lowercase, drop empties, deduplicate keeping first occurrence."""
    seen: set[str] = set()
    out: list[str] = []
    for tag in tags:
        low = _require_str(tag, "tag").lower()
        if low and low not in seen:
            seen.add(low)
            out.append(low)
    return tuple(out)


_TS_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,6}))?Z$")


def parse_timestamp(s: str) -> datetime:
    """Parse an RFC 3339 UTC timestamp with a literal 'Z' suffix."""
    m = _TS_RE.match(s) if isinstance(s, str) else None
    if m is None:
        raise ValueError(f"timestamp must look like 2014-01-01T12:00:00Z, got {s!r}")
    micro = int(m.group(7).ljust(6, "0")) if m.group(7) else 0
    try:
        return datetime(
            int(m.group(1)), int(m.group(2)), int(m.group(3)),
            int(m.group(4)), int(m.group(5)), int(m.group(6)),
            micro, tzinfo=timezone.utc,
        )
    except ValueError as exc:
        raise ValueError(f"invalid timestamp {s!r}: {exc}") from None


def format_timestamp(dt: datetime) -> str:
    """Canonical RFC 3339 UTC: seconds, fractional digits only when nonzero."""
    if dt.tzinfo is None or dt.utcoffset() != timezone.utc.utcoffset(None):
        raise ValueError("timestamp must be timezone-aware UTC")
    base = dt.strftime("%Y-%m-%dT%H:%M:%S")
    if dt.microsecond:
        base += f".{dt.microsecond:06d}".rstrip("0")
    return base + "Z"


@dataclass(frozen=True)
class Annotation:
    """One time-anchored body with authorship metadata.

    ``created <= modified`` and tag normalization are reported by
    :func:`validate_set`, not enforced on construction, so that imported
    data can be diagnosed with field paths.
    """

    id: str
    author: str
    created: datetime
    modified: datetime
    fragment: TimeFragment
    body: Body
    tags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        _require_str(self.id, "annotation id", non_empty=True)
        _require_str(self.author, "author", non_empty=True)
        for name in ("created", "modified"):
            value = getattr(self, name)
            if not isinstance(value, datetime) or value.tzinfo is None:
                raise ValueError(f"{name} must be a timezone-aware datetime")
            if value.utcoffset().total_seconds() != 0:
                raise ValueError(f"{name} must be UTC")
        if not isinstance(self.fragment, TimeFragment):
            raise ValueError("fragment must be a TimeFragment")
        if not isinstance(self.body, (Comment, ResourceLink, Overlay)):
            raise ValueError("body must be a Comment, ResourceLink or Overlay")
        object.__setattr__(self, "tags", tuple(_require_str(t, "tag") for t in self.tags))


@dataclass(frozen=True)
class Resource:
    """Catalog entry a teacher provisions alongside a video."""

    id: str
    title: str
    kind: str
    url: str
    description: Optional[str] = None

    def __post_init__(self) -> None:
        _require_str(self.id, "resource id", non_empty=True)
        _require_str(self.title, "resource title", non_empty=True)
        if self.kind not in RESOURCE_KINDS:
            raise ValueError(f"resource kind must be one of {RESOURCE_KINDS}, got {self.kind!r}")
        _require_absolute_uri(self.url, "resource url")
        if self.description is not None:
            _require_str(self.description, "resource description")


@dataclass(frozen=True)
class VideoReference:
    """Pointer to a hosted video; the system never touches the media itself."""

    id: str
    uri: str
    duration_ms: int
    title: str = ""

    def __post_init__(self) -> None:
        _require_str(self.id, "video id", non_empty=True)
        _require_absolute_uri(self.uri, "video uri")
        if _require_int(self.duration_ms, "duration_ms") <= 0:
            raise ValueError("duration_ms must be > 0")
        _require_str(self.title, "video title")


@dataclass(frozen=True)
class AnnotationSet:
    """One user's annotations over one video.

    ``revision`` counts applied revision-log entries (see the revision log
    machinery); id uniqueness is a :func:`validate_set` concern.
    """

    id: str
    video_id: str
    owner: str
    annotations: tuple[Annotation, ...] = ()
    revision: int = 0

    def __post_init__(self) -> None:
        _require_str(self.id, "set id", non_empty=True)
        _require_str(self.video_id, "video_id", non_empty=True)
        _require_str(self.owner, "owner", non_empty=True)
        object.__setattr__(self, "annotations", tuple(self.annotations))
        for a in self.annotations:
            if not isinstance(a, Annotation):
                raise ValueError("annotations must be Annotation values")
        if _require_int(self.revision, "revision") < 0:
            raise ValueError("revision must be >= 0")

    def with_annotations(self, annotations: Iterable[Annotation], revision: int | None = None) -> "AnnotationSet":
        return replace(
            self,
            annotations=tuple(annotations),
            revision=self.revision if revision is None else revision,
        )


@dataclass(frozen=True)
class Violation:
    """One failed validation clause, addressable by field path."""

    path: str
    code: str
    message: str = ""

    def __str__(self) -> str:
        text = f"{self.path}: {self.code}" if self.path else self.code
        return f"{text} ({self.message})" if self.message else text


def validate_fragment(f: TimeFragment, duration_ms: int, path: str = "fragment") -> list[Violation]:
    """Check 0 <= begin <= end <= duration; empty list means ok."""
    if duration_ms <= 0:
        raise ValueError("duration_ms must be > 0")
    violations = []
    if f.begin_ms < 0:
        violations.append(Violation(path, "begin<0", f"begin_ms {f.begin_ms} is negative"))
    if f.begin_ms > f.end_ms:
        violations.append(Violation(path, "begin>end", f"begin_ms {f.begin_ms} > end_ms {f.end_ms}"))
    if f.end_ms > duration_ms:
        violations.append(Violation(path, "end>duration", f"end_ms {f.end_ms} > duration {duration_ms}"))
    return violations


def overlap_ms(a: TimeFragment, b: TimeFragment) -> int:
    """Length of the intersection; touching intervals overlap by 0."""
    return max(0, min(a.end_ms, b.end_ms) - max(a.begin_ms, b.begin_ms))


def jaccard(a: TimeFragment, b: TimeFragment) -> float:
    """Overlap over union length; two equal points are 1.0, distinct ones 0.0."""
    union = max(a.end_ms, b.end_ms) - min(a.begin_ms, b.begin_ms)
    if union == 0:
        return 1.0 if a == b else 0.0
    return overlap_ms(a, b) / union


def timeline_key(a: Annotation) -> tuple[int, int, str]:
    return (a.fragment.begin_ms, a.fragment.end_ms, a.id)


def sort_timeline(s: AnnotationSet) -> list[Annotation]:
    """Total timeline order: (begin, end, id); stable and deterministic."""
    return sorted(s.annotations, key=timeline_key)


def annotations_at(s: AnnotationSet, t_ms: int) -> list[Annotation]:
    """Annotations active at instant t (closed-interval membership)."""
    return [a for a in sort_timeline(s) if a.fragment.begin_ms <= t_ms <= a.fragment.end_ms]


def validate_set(
    s: AnnotationSet,
    video: VideoReference,
    catalog: Optional[Iterable[Resource]] = None,
) -> list[Violation]:
    """Check a whole set against its video and resource catalog.

    Covers id uniqueness, fragment validity against the video duration,
    resource-link targets, tag normalization and timestamp ordering.
    ``catalog=None`` skips the resource-existence check (catalogs travel
    separately from exported sets).
    """
    violations: list[Violation] = []
    if s.video_id != video.id:
        violations.append(Violation(
            "video_id", "video mismatch",
            f"set references video {s.video_id!r}, validated against {video.id!r}",
        ))
    known = None if catalog is None else {r.id for r in catalog}
    seen_ids: set[str] = set()
    for i, a in enumerate(s.annotations):
        prefix = f"annotations[{i}]"
        if a.id in seen_ids:
            violations.append(Violation(f"{prefix}.id", "duplicate id", f"annotation id {a.id!r} repeats"))
        seen_ids.add(a.id)
        violations.extend(validate_fragment(a.fragment, video.duration_ms, f"{prefix}.fragment"))
        if known is not None and isinstance(a.body, ResourceLink) and a.body.resource_id not in known:
            violations.append(Violation(
                f"{prefix}.body.resource_id", f"unknown resource {a.body.resource_id}",
                "resource is not in the video's catalog",
            ))
        if a.tags != normalize_tags(a.tags):
            violations.append(Violation(
                f"{prefix}.tags", "tags not normalized",
                "tags must be lowercase, non-empty and deduplicated",
            ))
        if a.created > a.modified:
            violations.append(Violation(
                f"{prefix}.created", "created>modified",
                f"{format_timestamp(a.created)} is after {format_timestamp(a.modified)}",
            ))
    return violations
