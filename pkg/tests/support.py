"""Shared builders and randomized generators for the test suite.

Generators produce *valid* domain values by construction; tests that need
broken input build it explicitly.
"""

from __future__ import annotations

import random
import string
from datetime import datetime, timedelta, timezone

from hyvid.fragments import FragmentDirective, TemporalSpan
from hyvid.model import (
    Annotation,
    AnnotationSet,
    Comment,
    Overlay,
    Resource,
    ResourceLink,
    SpatialRegion,
    TimeFragment,
    VideoReference,
)

EPOCH = datetime(2014, 3, 1, 12, 0, 0, tzinfo=timezone.utc)

VIDEO = VideoReference(
    id="vid-lecture-1",
    uri="http://media.example.org/lectures/science-history.mp4",
    duration_ms=600_000,
    title="Science history, lecture 1",
)

CATALOG = (
    Resource(id="r1", title="Portrait of Lavoisier", kind="image", url="http://res.example.org/lavoisier.png"),
    Resource(id="r2", title="Entropy, a primer", kind="text", url="http://res.example.org/entropy.html"),
    Resource(id="r3", title="Original 1789 paper", kind="web", url="http://res.example.org/1789"),
    Resource(id="r4", title="Interview excerpt", kind="audio", url="http://res.example.org/interview.ogg"),
    Resource(id="r5", title="Lab footage", kind="video", url="http://res.example.org/lab.webm"),
)


def ts(offset_s: int = 0) -> datetime:
    return EPOCH + timedelta(seconds=offset_s)


def make_annotation(
    id: str = "a1",
    begin: int = 10_000,
    end: int | None = None,
    body=None,
    author: str = "learner-1",
    created: datetime | None = None,
    modified: datetime | None = None,
    tags: tuple[str, ...] = (),
) -> Annotation:
    created = created or ts(0)
    return Annotation(
        id=id,
        author=author,
        created=created,
        modified=modified or created,
        fragment=TimeFragment(begin, begin if end is None else end),
        body=body or Comment("What is entropy?"),
        tags=tags,
    )


def make_set(annotations=(), id: str = "set-1", owner: str = "learner-1", revision: int = 0) -> AnnotationSet:
    return AnnotationSet(id=id, video_id=VIDEO.id, owner=owner, annotations=tuple(annotations), revision=revision)


def random_word(rng: random.Random, n: int = 8) -> str:
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(n))


def random_region(rng: random.Random) -> SpatialRegion:
    if rng.random() < 0.5:
        w = rng.randint(1, 640)
        h = rng.randint(1, 480)
        return SpatialRegion("pixel", rng.randint(0, 1920), rng.randint(0, 1080), w, h)
    # percent coordinates on a 0.01 grid, kept inside the unit square
    x = rng.randint(0, 9000) / 100
    y = rng.randint(0, 9000) / 100
    w = rng.randint(1, int((100 - x) * 100)) / 100
    h = rng.randint(1, int((100 - y) * 100)) / 100
    return SpatialRegion("percent", x, y, w, h)


def random_fragment(rng: random.Random, duration_ms: int = VIDEO.duration_ms) -> TimeFragment:
    begin = rng.randint(0, duration_ms)
    if rng.random() < 0.25:
        return TimeFragment(begin, begin)
    return TimeFragment(begin, rng.randint(begin, duration_ms))


def random_body(rng: random.Random, catalog=CATALOG):
    roll = rng.random()
    if roll < 0.45:
        return Comment(" ".join(random_word(rng, rng.randint(2, 9)) for _ in range(rng.randint(1, 6))))
    if roll < 0.85:
        note = random_word(rng) if rng.random() < 0.4 else None
        return ResourceLink(rng.choice(catalog).id, note)
    return Overlay(random_word(rng), random_region(rng))


def random_annotation(rng: random.Random, id: str, duration_ms: int = VIDEO.duration_ms, catalog=CATALOG) -> Annotation:
    created = ts(rng.randint(0, 10_000))
    return Annotation(
        id=id,
        author=f"user-{rng.randint(1, 5)}",
        created=created,
        modified=created + timedelta(seconds=rng.randint(0, 5000), microseconds=rng.choice([0, 0, 500000, 123456])),
        fragment=random_fragment(rng, duration_ms),
        body=random_body(rng, catalog),
        tags=tuple(dict.fromkeys(random_word(rng, 4) for _ in range(rng.randint(0, 3)))),
    )


def random_set(rng: random.Random, max_annotations: int = 12, id: str | None = None, owner: str | None = None) -> AnnotationSet:
    n = rng.randint(0, max_annotations)
    annotations = [random_annotation(rng, f"a{i}-{random_word(rng, 4)}") for i in range(n)]
    annotations.sort(key=lambda a: (a.fragment.begin_ms, a.fragment.end_ms, a.id))
    return AnnotationSet(
        id=id or f"set-{random_word(rng, 6)}",
        video_id=VIDEO.id,
        owner=owner or f"user-{rng.randint(1, 5)}",
        annotations=tuple(annotations),
        revision=0,
    )


def random_directive(rng: random.Random) -> FragmentDirective:
    has_temporal = rng.random() < 0.8
    has_spatial = (not has_temporal) or rng.random() < 0.4
    temporal = None
    if has_temporal:
        begin = rng.randint(0, 10_000_000)
        if rng.random() < 0.2:
            temporal = TemporalSpan(begin, None)
        else:
            temporal = TemporalSpan(begin, begin + rng.choice([0, 1, 17, 500, 1000, 99_999]))
    spatial = random_region(rng) if has_spatial else None
    return FragmentDirective(temporal=temporal, spatial=spatial)
