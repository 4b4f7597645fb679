"""Media-fragment directives appended to video URIs: temporal NPT + spatial xywh.

The accepted grammar is a strict subset of the common web media-fragment
syntax: `t=A,B` / `t=A` / `t=,B` with normal-play-time values, and
`xywh=pixel:...` / `xywh=percent:...` with a mandatory unit prefix.
Serialization is canonical, so parse(serialize(d)) == d and
serialize(parse(s)) is a fixed point for every accepted s.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .model import Annotation, Overlay, SpatialRegion, TimeFragment, VideoReference

__all__ = [
    "FragmentSyntaxError",
    "TemporalSpan",
    "FragmentDirective",
    "parse_npt_time",
    "format_npt_time",
    "parse_fragment_string",
    "serialize_fragment",
    "annotation_fragment_uri",
]


class FragmentSyntaxError(ValueError):
    """A fragment string (or one of its directives) is not in the grammar."""


_NPT_SEC_RE = re.compile(r"^(\d+)(?:\.(\d*))?$")
_NPT_MMSS_RE = re.compile(r"^(\d{1,2}):(\d{1,2})(?:\.(\d*))?$")
_NPT_HHMMSS_RE = re.compile(r"^(\d+):(\d{1,2}):(\d{1,2})(?:\.(\d*))?$")


def _fraction_ms(frac: Optional[str]) -> int:
    """Whole milliseconds from a decimal-fraction digit string, half-up."""
    if not frac:
        return 0
    n = int(frac)
    d = 10 ** len(frac)
    return (n * 1000 * 2 + d) // (2 * d)


def parse_npt_time(s: str) -> int:
    """Parse a normal-play-time value into integer milliseconds.

    Accepts `SS`, `SS.fff...`, `MM:SS(.fff...)` and `HH:MM:SS(.fff...)`,
    optionally prefixed with `npt:`. Minutes and seconds must stay below 60
    in the colon forms. Fractions of any length round half-up to 1 ms.
    """
    if not isinstance(s, str) or not s:
        raise FragmentSyntaxError("empty time value")
    if s.startswith("npt:"):
        s = s[4:]
    m = _NPT_SEC_RE.match(s)
    if m:
        return int(m.group(1)) * 1000 + _fraction_ms(m.group(2))
    m = _NPT_MMSS_RE.match(s)
    if m:
        minutes, seconds = int(m.group(1)), int(m.group(2))
        if minutes >= 60 or seconds >= 60:
            raise FragmentSyntaxError(f"minutes and seconds must be < 60 in {s!r}")
        return (minutes * 60 + seconds) * 1000 + _fraction_ms(m.group(3))
    m = _NPT_HHMMSS_RE.match(s)
    if m:
        hours, minutes, seconds = int(m.group(1)), int(m.group(2)), int(m.group(3))
        if minutes >= 60 or seconds >= 60:
            raise FragmentSyntaxError(f"minutes and seconds must be < 60 in {s!r}")
        return (hours * 3600 + minutes * 60 + seconds) * 1000 + _fraction_ms(m.group(4))
    raise FragmentSyntaxError(f"malformed npt time {s!r}")


def format_npt_time(t_ms: int) -> str:
    """Canonical NPT: integer seconds, then up to 3 fractional digits if any."""
    if t_ms < 0:
        raise ValueError("t_ms must be >= 0")
    seconds, ms = divmod(t_ms, 1000)
    if ms == 0:
        return str(seconds)
    return f"{seconds}.{ms:03d}".rstrip("0")


@dataclass(frozen=True)
class TemporalSpan:
    """Temporal directive; end_ms None means 'to end of video' (`t=A` form)."""

    begin_ms: int
    end_ms: Optional[int]

    def __post_init__(self) -> None:
        if isinstance(self.begin_ms, bool) or not isinstance(self.begin_ms, int):
            raise ValueError("begin_ms must be an integer")
        if self.begin_ms < 0:
            raise ValueError("begin_ms must be >= 0")
        if self.end_ms is not None:
            if isinstance(self.end_ms, bool) or not isinstance(self.end_ms, int):
                raise ValueError("end_ms must be an integer or None")
            if self.end_ms < self.begin_ms:
                raise ValueError("end_ms must be >= begin_ms")

    @classmethod
    def of(cls, fragment: TimeFragment) -> "TemporalSpan":
        return cls(fragment.begin_ms, fragment.end_ms)

    def resolve(self, duration_ms: int) -> TimeFragment:
        """Pin an open end to the video duration."""
        return TimeFragment(self.begin_ms, duration_ms if self.end_ms is None else self.end_ms)


@dataclass(frozen=True)
class FragmentDirective:
    """Parsed fragment: temporal and/or spatial, at least one present."""

    temporal: Optional[TemporalSpan] = None
    spatial: Optional[SpatialRegion] = None

    def __post_init__(self) -> None:
        if self.temporal is None and self.spatial is None:
            raise ValueError("directive needs a temporal or spatial part")


def _parse_t_value(value: str) -> TemporalSpan:
    if not value:
        raise FragmentSyntaxError("empty t directive")
    if "," in value:
        begin_s, _, end_s = value.partition(",")
        if "," in end_s:
            raise FragmentSyntaxError(f"malformed t directive {value!r}")
        if not end_s:
            raise FragmentSyntaxError(f"malformed t directive {value!r}")
        begin = parse_npt_time(begin_s) if begin_s else 0
        end = parse_npt_time(end_s)
        if begin > end:
            raise FragmentSyntaxError(f"begin>end in t directive {value!r}")
        return TemporalSpan(begin, end)
    return TemporalSpan(parse_npt_time(value), None)


_PIXEL_COORD_RE = re.compile(r"^\d+$")
_PERCENT_COORD_RE = re.compile(r"^\d+(?:\.\d{1,2})?$")


def _parse_xywh_value(value: str) -> SpatialRegion:
    unit, sep, coords = value.partition(":")
    if not sep or unit not in ("pixel", "percent"):
        raise FragmentSyntaxError(f"xywh requires a pixel: or percent: prefix, got {value!r}")
    parts = coords.split(",")
    if len(parts) != 4:
        raise FragmentSyntaxError(f"xywh needs exactly x,y,w,h, got {value!r}")
    numbers: list[int | float] = []
    for part in parts:
        if unit == "pixel":
            if not _PIXEL_COORD_RE.match(part):
                raise FragmentSyntaxError(f"pixel coordinate must be a non-negative integer, got {part!r}")
            numbers.append(int(part))
        else:
            if not _PERCENT_COORD_RE.match(part):
                raise FragmentSyntaxError(f"percent coordinate allows at most 2 decimals, got {part!r}")
            numbers.append(float(part) if "." in part else int(part))
    try:
        return SpatialRegion(unit, *numbers)
    except ValueError as exc:
        raise FragmentSyntaxError(str(exc)) from None


def parse_fragment_string(s: str) -> FragmentDirective:
    """Parse the fragment part of a URI (without the leading '#').

    Unknown keys are ignored for forward compatibility; a duplicate `t` or
    `xywh` is an error, as is a string with no recognized directive at all.
    """
    if not isinstance(s, str) or not s:
        raise FragmentSyntaxError("empty fragment string")
    temporal: Optional[TemporalSpan] = None
    spatial: Optional[SpatialRegion] = None
    for pair in s.split("&"):
        key, sep, value = pair.partition("=")
        if not sep:
            raise FragmentSyntaxError(f"malformed pair {pair!r} (missing '=')")
        if key == "t":
            if temporal is not None:
                raise FragmentSyntaxError("duplicate t directive")
            temporal = _parse_t_value(value)
        elif key == "xywh":
            if spatial is not None:
                raise FragmentSyntaxError("duplicate xywh directive")
            spatial = _parse_xywh_value(value)
        # anything else is ignored
    if temporal is None and spatial is None:
        raise FragmentSyntaxError("fragment has no t or xywh directive")
    return FragmentDirective(temporal=temporal, spatial=spatial)


def _format_coord(value: int | float) -> str:
    if isinstance(value, int):
        return str(value)
    return f"{value:.2f}".rstrip("0").rstrip(".")


def serialize_fragment(d: FragmentDirective) -> str:
    """Canonical form: `t=` first, then `xywh=`; points as `t=B,B`."""
    parts: list[str] = []
    if d.temporal is not None:
        begin = format_npt_time(d.temporal.begin_ms)
        if d.temporal.end_ms is None:
            parts.append(f"t={begin}")
        else:
            parts.append(f"t={begin},{format_npt_time(d.temporal.end_ms)}")
    if d.spatial is not None:
        r = d.spatial
        coords = ",".join(_format_coord(v) for v in (r.x, r.y, r.w, r.h))
        parts.append(f"xywh={r.unit}:{coords}")
    return "&".join(parts)


def annotation_fragment_uri(video: VideoReference, a: Annotation) -> str:
    """Address an annotation's fragment on its video as `<uri>#t=...`."""
    if "#" in video.uri:
        raise ValueError(f"video uri already carries a fragment: {video.uri!r}")
    directive = FragmentDirective(
        temporal=TemporalSpan.of(a.fragment),
        spatial=a.body.region if isinstance(a.body, Overlay) else None,
    )
    return f"{video.uri}#{serialize_fragment(directive)}"
