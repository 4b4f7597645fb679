from __future__ import annotations

import random

import pytest
from hypothesis import given, strategies as st

from hyvid.model import (
    Annotation,
    AnnotationSet,
    Comment,
    Overlay,
    ResourceLink,
    SpatialRegion,
    TimeFragment,
    annotations_at,
    format_timestamp,
    jaccard,
    normalize_tags,
    overlap_ms,
    parse_timestamp,
    sort_timeline,
    validate_fragment,
    validate_set,
)

from support import CATALOG, VIDEO, make_annotation, make_set, ts


def grid_overlap(a: TimeFragment, b: TimeFragment) -> int:
    """Brute-force oracle: count 1 ms cells covered by both intervals."""
    lo = min(a.begin_ms, b.begin_ms)
    hi = max(a.end_ms, b.end_ms)
    return sum(
        1
        for t in range(lo, hi)
        if a.begin_ms <= t < a.end_ms and b.begin_ms <= t < b.end_ms
    )


fragments_small = st.builds(
    lambda b, l: TimeFragment(b, b + l),
    st.integers(min_value=0, max_value=120),
    st.integers(min_value=0, max_value=120),
)


class TestValidateFragment:
    def test_point_at_origin_ok(self):
        assert validate_fragment(TimeFragment(0, 0), 100) == []

    def test_begin_after_end(self):
        violations = validate_fragment(TimeFragment(20, 10), 100)
        assert [v.code for v in violations] == ["begin>end"]

    def test_end_beyond_duration(self):
        violations = validate_fragment(TimeFragment(10, 200), 100)
        assert [v.code for v in violations] == ["end>duration"]

    def test_negative_begin(self):
        assert "begin<0" in [v.code for v in validate_fragment(TimeFragment(-1, 5), 100)]

    def test_exhaustive_grid(self):
        # accepts exactly {(b, e): 0 <= b <= e <= D} for D = 50
        duration = 50
        for b in range(-2, duration + 3):
            for e in range(-2, duration + 3):
                ok = validate_fragment(TimeFragment(b, e), duration) == []
                assert ok == (0 <= b <= e <= duration), (b, e)


class TestOverlap:
    def test_identity(self):
        assert overlap_ms(TimeFragment(10, 20), TimeFragment(10, 20)) == 10

    def test_touching_is_zero(self):
        assert overlap_ms(TimeFragment(0, 10), TimeFragment(10, 20)) == 0

    def test_partial_against_grid_oracle(self):
        a, b = TimeFragment(0, 15), TimeFragment(10, 30)
        assert grid_overlap(a, b) == 5
        assert overlap_ms(a, b) == 5

    @given(fragments_small, fragments_small)
    def test_matches_grid_oracle(self, a, b):
        assert overlap_ms(a, b) == grid_overlap(a, b)

    @given(fragments_small, fragments_small)
    def test_symmetric_and_bounded(self, a, b):
        assert overlap_ms(a, b) == overlap_ms(b, a)
        assert overlap_ms(a, b) <= min(a.length_ms, b.length_ms)

    @given(fragments_small, st.integers(min_value=0, max_value=50), st.integers(min_value=0, max_value=50))
    def test_subset_gives_full_length(self, a, pre, post):
        containing = TimeFragment(max(0, a.begin_ms - pre), a.end_ms + post)
        assert overlap_ms(a, containing) == a.length_ms


class TestJaccard:
    def test_equal_points(self):
        assert jaccard(TimeFragment(5, 5), TimeFragment(5, 5)) == 1.0

    def test_distinct_points(self):
        assert jaccard(TimeFragment(5, 5), TimeFragment(6, 6)) == 0.0

    def test_partial_against_grid_oracle(self):
        a, b = TimeFragment(0, 10), TimeFragment(5, 15)
        union = sum(
            1 for t in range(0, 15) if a.begin_ms <= t < a.end_ms or b.begin_ms <= t < b.end_ms
        )
        assert grid_overlap(a, b) / union == pytest.approx(1 / 3)
        assert jaccard(a, b) == pytest.approx(1 / 3)

    @given(fragments_small, fragments_small)
    def test_symmetric_in_range_one_iff_equal(self, a, b):
        j = jaccard(a, b)
        assert jaccard(b, a) == j
        assert 0.0 <= j <= 1.0
        assert (j == 1.0) == (a == b)


class TestTimeline:
    def test_empty(self):
        assert sort_timeline(make_set()) == []

    def test_lexicographic_tiebreak(self):
        s = make_set([make_annotation("b", 10, 20), make_annotation("a", 10, 20)])
        assert [a.id for a in sort_timeline(s)] == ["a", "b"]

    def test_orders_by_begin(self):
        s = make_set([make_annotation(f"x{i}", b, b + 5) for i, b in enumerate([30, 10, 20])])
        assert [a.fragment.begin_ms for a in sort_timeline(s)] == [10, 20, 30]

    def test_idempotent_permutation(self):
        rng = random.Random(7)
        anns = [make_annotation(f"a{i}", rng.randint(0, 100), rng.randint(100, 200)) for i in range(30)]
        ordered = sort_timeline(make_set(anns))
        assert sorted(a.id for a in ordered) == sorted(a.id for a in anns)
        assert sort_timeline(make_set(ordered)) == ordered


class TestAnnotationsAt:
    def test_point_active_at_instant(self):
        s = make_set([make_annotation("p", 10, 10)])
        assert [a.id for a in annotations_at(s, 10)] == ["p"]
        assert annotations_at(s, 11) == []

    def test_brute_force_example(self):
        s = make_set(
            [make_annotation("a", 0, 10), make_annotation("b", 5, 15), make_annotation("c", 20, 30)]
        )
        assert [a.id for a in annotations_at(s, 7)] == ["a", "b"]

    def test_matches_closed_membership_on_random_sets(self):
        rng = random.Random(13)
        for _ in range(50):
            anns = [
                make_annotation(f"a{i}", rng.randint(0, 40), rng.randint(40, 80))
                for i in range(rng.randint(0, 8))
            ]
            s = make_set(anns)
            for t in range(0, 81, 7):
                expected = {
                    a.id
                    for a in anns
                    if overlap_ms(a.fragment, TimeFragment(t, t)) > 0 or a.fragment == TimeFragment(t, t)
                    or a.fragment.begin_ms <= t <= a.fragment.end_ms
                }
                assert {a.id for a in annotations_at(s, t)} == expected


class TestValidateSet:
    def test_empty_ok(self):
        assert validate_set(make_set(), VIDEO, CATALOG) == []

    def test_duplicate_ids(self):
        s = make_set([make_annotation("dup"), make_annotation("dup")])
        assert any(v.code == "duplicate id" for v in validate_set(s, VIDEO, CATALOG))

    def test_unknown_resource(self):
        s = make_set([make_annotation("a1", body=ResourceLink("rX"))])
        violations = validate_set(s, VIDEO, CATALOG)
        assert any(v.code == "unknown resource rX" for v in violations)
        assert violations[0].path == "annotations[0].body.resource_id"

    def test_fragment_violations_carry_paths(self):
        s = make_set([make_annotation("a1", 20, 10)])
        violations = validate_set(s, VIDEO, CATALOG)
        assert [(v.path, v.code) for v in violations] == [("annotations[0].fragment", "begin>end")]

    def test_tags_must_be_normalized(self):
        s = make_set([make_annotation("a1", tags=("Question",))])
        assert any(v.code == "tags not normalized" for v in validate_set(s, VIDEO, CATALOG))

    def test_created_after_modified(self):
        s = make_set([make_annotation("a1", created=ts(10), modified=ts(5))])
        assert any(v.code == "created>modified" for v in validate_set(s, VIDEO, CATALOG))

    def test_video_mismatch(self):
        s = AnnotationSet(id="s", video_id="other", owner="u")
        assert any(v.code == "video mismatch" for v in validate_set(s, VIDEO, CATALOG))


class TestConstruction:
    def test_fragment_requires_integers(self):
        with pytest.raises(ValueError):
            TimeFragment(0.5, 1)  # type: ignore[arg-type]

    def test_comment_text_non_empty(self):
        with pytest.raises(ValueError):
            Comment("")

    def test_overlay_always_carries_region(self):
        with pytest.raises(ValueError):
            Overlay("text", None)  # type: ignore[arg-type]

    def test_percent_region_bounds(self):
        with pytest.raises(ValueError):
            SpatialRegion("percent", 60, 0, 50, 10)
        with pytest.raises(ValueError):
            SpatialRegion("percent", 0, 0, 10.125, 10)

    def test_region_positive_size(self):
        with pytest.raises(ValueError):
            SpatialRegion("pixel", 0, 0, 0, 10)

    def test_integral_floats_normalize(self):
        assert SpatialRegion("percent", 10.0, 10, 50, 50) == SpatialRegion("percent", 10, 10, 50, 50)

    def test_normalize_tags(self):
        assert normalize_tags(["Physics", "physics", "", "History"]) == ("physics", "history")


class TestTimestamps:
    def test_round_trip_without_fraction(self):
        assert format_timestamp(parse_timestamp("2014-03-01T12:00:00Z")) == "2014-03-01T12:00:00Z"

    def test_fraction_trimmed(self):
        assert format_timestamp(parse_timestamp("2014-03-01T12:00:00.500000Z")) == "2014-03-01T12:00:00.5Z"

    def test_rejects_offset_form(self):
        with pytest.raises(ValueError):
            parse_timestamp("2014-03-01T12:00:00+00:00")

    def test_rejects_naive_garbage(self):
        with pytest.raises(ValueError):
            parse_timestamp("yesterday")
