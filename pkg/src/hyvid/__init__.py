"""Collaborative hypervideo annotation toolkit.

Learners anchor comments and predefined resources to fragments of a lecture
video; sets of annotations can be validated, exported (canonical JSON,
WebVTT, CSV), diffed, merged into a shared timeline, graded against a
teacher key and replayed from their revision logs. A file-backed store, an
HTTP API and a CLI expose the same engine.
"""

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
    annotations_at,
    jaccard,
    overlap_ms,
    sort_timeline,
    validate_fragment,
    validate_set,
)
from .fragments import (
    FragmentDirective,
    FragmentSyntaxError,
    TemporalSpan,
    annotation_fragment_uri,
    format_npt_time,
    parse_fragment_string,
    parse_npt_time,
    serialize_fragment,
)

__version__ = "0.1.0"
