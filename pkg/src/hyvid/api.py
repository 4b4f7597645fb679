"""HTTP/JSON API over the annotation engine; the system's only network surface.

Handlers are stateless: every persisted mutation is exactly one store put,
reads never mutate, and all JSON responses are emitted in canonical form so
they are byte-identical to the CLI's output for the same computation.

Roles: teachers provision videos/resources and grade; learners and teachers
write their own annotation sets; anyone (including unauthenticated users)
may browse videos and annotations unless the server runs with
`private_sets=True`, in which case set contents require a token and
non-teachers only see their own sets.
"""

from __future__ import annotations

import json
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request, Response
from fastapi.staticfiles import StaticFiles

from .collab import (
    DiffError,
    GradeError,
    MajorityPolicy,
    ManualPolicy,
    MergeError,
    MergePolicy,
    RevisionEntry,
    RevisionError,
    UnionPolicy,
    diff_pair,
    grade,
    merge,
    replay,
)
from .interchange import (
    InterchangeError,
    annotation_from_json,
    annotation_to_json,
    canonical_json_bytes,
    diff_report_to_json,
    export_csv,
    export_set_json,
    export_webvtt,
    grade_report_to_json,
    import_set_json,
    merge_result_to_json,
    resource_from_json,
    resource_to_json,
    revision_entry_from_json,
    revision_entry_to_json,
    set_document,
    video_from_json,
    video_to_json,
)
from .model import Annotation, AnnotationSet, VideoReference, format_timestamp
from .store import (
    AuthError,
    DuplicateError,
    NotFoundError,
    ReadOnlyStoreError,
    ReplayMismatchError,
    RevisionConflictError,
    Store,
    StoreValidationError,
    User,
)

__all__ = ["create_app", "ApiError", "ERROR_CODES"]

MAX_BODY_BYTES = 10 * 1024 * 1024

# the fixed error-code vocabulary; documented in the README API reference
ERROR_CODES = (
    "invalid_json",
    "validation_error",
    "invalid_fragment",
    "unknown_resource",
    "video_mismatch",
    "missing_token",
    "invalid_token",
    "forbidden_role",
    "not_found",
    "duplicate_id",
    "revision_conflict",
    "replay_mismatch",
    "payload_too_large",
    "store_read_only",
)

_FRAGMENT_CODES = ("begin<0", "begin>end", "end>duration")


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, path: Optional[str] = None):
        assert code in ERROR_CODES, code
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.path = path

    def body(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.path:
            out["path"] = self.path
        return out


def _canonical_response(payload: Any, status: int = 200) -> Response:
    return Response(canonical_json_bytes(payload), status_code=status, media_type="application/json")


def _mint(prefix: str) -> str:
    return f"{prefix}-{uuid.uuid4().hex[:12]}"


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _violation_error(violations) -> ApiError:
    v = violations[0]
    if v.code in _FRAGMENT_CODES:
        code = "invalid_fragment"
    elif v.code.startswith("unknown resource"):
        code = "unknown_resource"
    elif v.code == "video mismatch":
        code = "video_mismatch"
    else:
        code = "validation_error"
    return ApiError(400, code, str(v), v.path)


def create_app(store: Store, private_sets: bool = False, webapp_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="hyvid", docs_url=None, redoc_url=None, openapi_url=None)

    # -- plumbing ------------------------------------------------------------

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError) -> Response:
        return Response(canonical_json_bytes(exc.body()), status_code=exc.status, media_type="application/json")

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception) -> Response:
        body = {"code": "validation_error", "message": f"unexpected error: {exc}"}
        return Response(canonical_json_bytes(body), status_code=500, media_type="application/json")

    async def read_json(request: Request) -> Any:
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            raise ApiError(413, "payload_too_large", f"request body exceeds {MAX_BODY_BYTES} bytes")
        content_type = request.headers.get("content-type", "")
        if body and not content_type.startswith("application/json"):
            raise ApiError(400, "invalid_json", f"expected application/json, got {content_type!r}")
        try:
            return json.loads(body)
        except json.JSONDecodeError as exc:
            raise ApiError(400, "invalid_json", f"malformed JSON body: {exc}") from None

    def authenticate(request: Request) -> User:
        header = request.headers.get("authorization")
        if not header:
            raise ApiError(401, "missing_token", "Authorization header required")
        scheme, _, token = header.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise ApiError(401, "invalid_token", "expected 'Authorization: Bearer <token>'")
        try:
            return store.authenticate(token.strip())
        except AuthError:
            raise ApiError(401, "invalid_token", "unknown token") from None

    def require_role(user: User, *roles: str) -> None:
        if user.role not in roles:
            raise ApiError(403, "forbidden_role", f"requires role {' or '.join(roles)}, you are {user.role}")

    def get_video_or_404(video_id: str) -> VideoReference:
        try:
            return store.get_video(video_id)
        except NotFoundError as exc:
            raise ApiError(404, "not_found", str(exc)) from None

    def get_set_or_404(set_id: str) -> AnnotationSet:
        try:
            return store.get_set(set_id)
        except NotFoundError as exc:
            raise ApiError(404, "not_found", str(exc)) from None

    def check_set_readable(request: Request, s: AnnotationSet) -> None:
        if not private_sets:
            return
        user = authenticate(request)
        if user.role != "teacher" and user.id != s.owner:
            raise ApiError(403, "forbidden_role", "this server keeps annotation sets private to their owners")

    def check_set_writable(request: Request, s: AnnotationSet) -> User:
        user = authenticate(request)
        if user.role == "teacher" or (user.role == "learner" and user.id == s.owner):
            return user
        raise ApiError(403, "forbidden_role", "only the owning learner or a teacher may modify a set")

    def store_put(s: AnnotationSet, expected_revision: int, entries: list[RevisionEntry]) -> int:
        try:
            return store.put_set(s, expected_revision, entries)
        except RevisionConflictError as exc:
            raise ApiError(409, "revision_conflict", str(exc)) from None
        except ReplayMismatchError as exc:
            raise ApiError(400, "replay_mismatch", str(exc)) from None
        except StoreValidationError as exc:
            raise _violation_error(exc.violations) from None
        except ReadOnlyStoreError as exc:
            raise ApiError(503, "store_read_only", str(exc)) from None
        except NotFoundError as exc:
            raise ApiError(404, "not_found", str(exc)) from None

    def parse_policy(obj: Any) -> MergePolicy:
        if not isinstance(obj, dict) or "type" not in obj:
            raise ApiError(400, "validation_error", "policy must be an object with a 'type'", "policy")
        kind = obj["type"]
        try:
            if kind == "union":
                return UnionPolicy()
            if kind == "majority":
                return MajorityPolicy(obj.get("quorum", 0))
            if kind == "manual":
                selected = obj.get("selected")
                if not isinstance(selected, list):
                    raise ApiError(400, "validation_error", "manual policy needs a 'selected' list", "policy.selected")
                pairs = []
                for i, item in enumerate(selected):
                    if not isinstance(item, dict) or "set_id" not in item or "annotation_id" not in item:
                        raise ApiError(400, "validation_error",
                                       "selection entries need set_id and annotation_id", f"policy.selected[{i}]")
                    pairs.append((item["set_id"], item["annotation_id"]))
                return ManualPolicy(tuple(pairs))
        except ValueError as exc:
            raise ApiError(400, "validation_error", str(exc), "policy") from None
        raise ApiError(400, "validation_error", f"unknown policy type {kind!r}", "policy.type")

    # -- videos and resources -------------------------------------------------

    @app.post("/api/videos")
    async def create_video(request: Request) -> Response:
        user = authenticate(request)
        require_role(user, "teacher")
        body = await read_json(request)
        if not isinstance(body, dict):
            raise ApiError(400, "validation_error", "expected a JSON object")
        body.setdefault("id", _mint("vid"))
        body.setdefault("title", "")
        try:
            video = video_from_json(body, "")
        except InterchangeError as exc:
            raise ApiError(400, "validation_error", exc.message, exc.path) from None
        try:
            store.put_video(video)
        except DuplicateError as exc:
            raise ApiError(409, "duplicate_id", str(exc)) from None
        except ReadOnlyStoreError as exc:
            raise ApiError(503, "store_read_only", str(exc)) from None
        return _canonical_response(video_to_json(video), 201)

    @app.get("/api/videos")
    async def list_videos() -> Response:
        return _canonical_response([video_to_json(v) for v in store.list_videos()])

    @app.get("/api/videos/{video_id}")
    async def get_video(video_id: str) -> Response:
        return _canonical_response(video_to_json(get_video_or_404(video_id)))

    @app.post("/api/videos/{video_id}/resources")
    async def create_resource(video_id: str, request: Request) -> Response:
        user = authenticate(request)
        require_role(user, "teacher")
        get_video_or_404(video_id)
        body = await read_json(request)
        if not isinstance(body, dict):
            raise ApiError(400, "validation_error", "expected a JSON object")
        body.setdefault("id", _mint("res"))
        try:
            resource = resource_from_json(body, "")
        except InterchangeError as exc:
            raise ApiError(400, "validation_error", exc.message, exc.path) from None
        try:
            store.put_resource(video_id, resource)
        except DuplicateError as exc:
            raise ApiError(409, "duplicate_id", str(exc)) from None
        except ReadOnlyStoreError as exc:
            raise ApiError(503, "store_read_only", str(exc)) from None
        return _canonical_response(resource_to_json(resource), 201)

    @app.get("/api/videos/{video_id}/resources")
    async def list_resources(video_id: str) -> Response:
        get_video_or_404(video_id)
        return _canonical_response([resource_to_json(r) for r in store.list_resources(video_id)])

    # -- annotation sets -------------------------------------------------------

    def set_payload(s: AnnotationSet) -> dict:
        return set_document(s, store.get_video(s.video_id))

    @app.post("/api/videos/{video_id}/sets")
    async def create_set(video_id: str, request: Request) -> Response:
        user = authenticate(request)
        require_role(user, "teacher", "learner")
        get_video_or_404(video_id)
        body = await read_json(request) if (await request.body()) else {}
        if not isinstance(body, dict):
            raise ApiError(400, "validation_error", "expected a JSON object")
        set_id = body.get("id") or _mint("set")
        if not isinstance(set_id, str):
            raise ApiError(400, "validation_error", "set id must be a string", "id")
        try:
            store.get_set(set_id)
            raise ApiError(409, "duplicate_id", f"set {set_id!r} already exists")
        except NotFoundError:
            pass
        fresh = AnnotationSet(id=set_id, video_id=video_id, owner=user.id)
        store_put(fresh, 0, [])
        return _canonical_response(set_payload(store.get_set(set_id)), 201)

    @app.get("/api/videos/{video_id}/sets")
    async def list_sets(video_id: str, request: Request) -> Response:
        get_video_or_404(video_id)
        sets = store.list_sets(video_id)
        if private_sets:
            user = authenticate(request)
            if user.role != "teacher":
                sets = [s for s in sets if s.owner == user.id]
        return _canonical_response([set_payload(s) for s in sets])

    @app.get("/api/sets/{set_id}")
    async def get_set(set_id: str, request: Request) -> Response:
        s = get_set_or_404(set_id)
        check_set_readable(request, s)
        return _canonical_response(set_payload(s))

    @app.put("/api/sets/{set_id}")
    async def put_set(set_id: str, request: Request) -> Response:
        s = get_set_or_404(set_id)
        check_set_writable(request, s)
        body = await read_json(request)
        if not isinstance(body, dict) or "document" not in body or "expected_revision" not in body:
            raise ApiError(400, "validation_error",
                           "body must carry 'document', 'expected_revision' and 'entries'")
        try:
            imported = import_set_json(json.dumps(body["document"]).encode())
        except InterchangeError as exc:
            raise ApiError(400, "validation_error", exc.message, f"document.{exc.path}" if exc.path else "document") from None
        if imported.set.id != set_id:
            raise ApiError(400, "validation_error", "document id must match the URL", "document.id")
        if imported.set.video_id != s.video_id or imported.video != store.get_video(s.video_id):
            raise ApiError(400, "video_mismatch", "document video must match the stored video", "document.video")
        expected = body["expected_revision"]
        if not isinstance(expected, int) or isinstance(expected, bool):
            raise ApiError(400, "validation_error", "expected_revision must be an integer", "expected_revision")
        raw_entries = body.get("entries", [])
        if not isinstance(raw_entries, list):
            raise ApiError(400, "validation_error", "entries must be a list", "entries")
        try:
            entries = [revision_entry_from_json(e, f"entries[{i}]") for i, e in enumerate(raw_entries)]
        except InterchangeError as exc:
            raise ApiError(400, "validation_error", exc.message, exc.path) from None
        if imported.set.owner != s.owner:
            raise ApiError(400, "validation_error", "owner cannot change", "document.owner")
        revision = store_put(imported.set, expected, entries)
        return _canonical_response({"set_id": set_id, "revision": revision})

    # -- single-annotation convenience ops (server synthesizes the entries) ----

    def annotation_from_body(obj: Any, user: User, existing: Optional[Annotation] = None) -> Annotation:
        if not isinstance(obj, dict):
            raise ApiError(400, "validation_error", "expected a JSON object")
        unknown = set(obj) - {"fragment", "body", "tags"}
        if unknown:
            raise ApiError(400, "validation_error", f"unknown field {sorted(unknown)[0]!r}")
        now = format_timestamp(_now())
        if existing is not None:
            merged = annotation_to_json(existing)
        else:
            merged = {"id": _mint("ann"), "author": user.id, "created": now, "tags": []}
            for key in ("fragment", "body"):
                if key not in obj:
                    raise ApiError(400, "validation_error", f"missing field {key!r}", key)
        for key in ("fragment", "body", "tags"):
            if key in obj:
                merged[key] = obj[key]
        merged["modified"] = now
        try:
            return annotation_from_json(merged, "annotation")
        except InterchangeError as exc:
            raise ApiError(400, "validation_error", exc.message, exc.path) from None

    def apply_entry(set_id: str, request: Request, op: str, annotation_id: Optional[str], body_obj: Any) -> Response:
        # optimistic retry: the entry is synthesized from the current state
        for _ in range(10):
            s = get_set_or_404(set_id)
            user = check_set_writable(request, s)
            current = {a.id: a for a in s.annotations}
            now = _now()
            if op == "add":
                after = annotation_from_body(body_obj, user)
                entry = RevisionEntry(s.revision + 1, user.id, now, "add", after.id, None, after)
                new_annotations = list(s.annotations) + [after]
            elif op == "update":
                if annotation_id not in current:
                    raise ApiError(404, "not_found", f"unknown annotation {annotation_id!r}")
                before = current[annotation_id]
                after = annotation_from_body(body_obj, user, existing=before)
                entry = RevisionEntry(s.revision + 1, user.id, now, "update", annotation_id, before, after)
                new_annotations = [after if a.id == annotation_id else a for a in s.annotations]
            else:
                if annotation_id not in current:
                    raise ApiError(404, "not_found", f"unknown annotation {annotation_id!r}")
                before = current[annotation_id]
                entry = RevisionEntry(s.revision + 1, user.id, now, "remove", annotation_id, before, None)
                new_annotations = [a for a in s.annotations if a.id != annotation_id]
            try:
                revision = store_put(s.with_annotations(new_annotations), s.revision, [entry])
            except ApiError as exc:
                if exc.code == "revision_conflict":
                    continue
                raise
            payload: dict = {"set_id": set_id, "revision": revision}
            if op != "remove":
                payload["annotation"] = annotation_to_json(after)
            return _canonical_response(payload, 201 if op == "add" else 200)
        raise ApiError(409, "revision_conflict", "set is changing too quickly, retry")

    @app.post("/api/sets/{set_id}/annotations")
    async def add_annotation(set_id: str, request: Request) -> Response:
        return apply_entry(set_id, request, "add", None, await read_json(request))

    @app.put("/api/sets/{set_id}/annotations/{annotation_id}")
    async def update_annotation(set_id: str, annotation_id: str, request: Request) -> Response:
        return apply_entry(set_id, request, "update", annotation_id, await read_json(request))

    @app.delete("/api/sets/{set_id}/annotations/{annotation_id}")
    async def remove_annotation(set_id: str, annotation_id: str, request: Request) -> Response:
        return apply_entry(set_id, request, "remove", annotation_id, None)

    # -- history ---------------------------------------------------------------

    @app.get("/api/sets/{set_id}/history")
    async def get_history(set_id: str, request: Request) -> Response:
        s = get_set_or_404(set_id)
        check_set_readable(request, s)
        log = store.get_log(set_id)
        return _canonical_response({
            "set_id": set_id,
            "revision": len(log.entries),
            "entries": [revision_entry_to_json(e) for e in log.entries],
        })

    @app.get("/api/sets/{set_id}/history/{upto}")
    async def get_history_at(set_id: str, upto: int, request: Request) -> Response:
        s = get_set_or_404(set_id)
        check_set_readable(request, s)
        log = store.get_log(set_id)
        try:
            state = replay(log, upto)
        except RevisionError as exc:
            raise ApiError(400, "validation_error", str(exc), "upto") from None
        ordered = sorted(state.values(), key=lambda a: (a.fragment.begin_ms, a.fragment.end_ms, a.id))
        return _canonical_response({
            "set_id": set_id,
            "upto": upto,
            "annotations": [annotation_to_json(a) for a in ordered],
        })

    # -- diff / merge / grade ----------------------------------------------------

    @app.post("/api/diff")
    async def post_diff(request: Request) -> Response:
        authenticate(request)
        body = await read_json(request)
        if not isinstance(body, dict):
            raise ApiError(400, "validation_error", "expected a JSON object")
        set_a = get_set_or_404(str(body.get("set_a")))
        set_b = get_set_or_404(str(body.get("set_b")))
        tolerance = body.get("tolerance_ms", 0)
        if not isinstance(tolerance, int) or isinstance(tolerance, bool) or tolerance < 0:
            raise ApiError(400, "validation_error", "tolerance_ms must be a non-negative integer", "tolerance_ms")
        try:
            report = diff_pair(set_a, set_b, tolerance)
        except DiffError as exc:
            raise ApiError(400, "video_mismatch", str(exc)) from None
        return _canonical_response(diff_report_to_json(report))

    @app.post("/api/videos/{video_id}/merge")
    async def post_merge(video_id: str, request: Request) -> Response:
        user = authenticate(request)
        get_video_or_404(video_id)
        body = await read_json(request)
        if not isinstance(body, dict) or not isinstance(body.get("set_ids"), list):
            raise ApiError(400, "validation_error", "body needs 'set_ids' and 'policy'")
        sets = [get_set_or_404(str(sid)) for sid in body["set_ids"]]
        for s in sets:
            if s.video_id != video_id:
                raise ApiError(400, "video_mismatch", f"set {s.id!r} belongs to video {s.video_id!r}")
        policy = parse_policy(body.get("policy"))
        try:
            result = merge(sets, policy)
        except MergeError as exc:
            raise ApiError(400, "validation_error", str(exc), "policy") from None
        payload = merge_result_to_json(result)
        owner = body.get("save_as_owner")
        if owner is not None:
            if not isinstance(owner, str):
                raise ApiError(400, "validation_error", "save_as_owner must be a user id", "save_as_owner")
            if user.role != "teacher" and user.id != owner:
                raise ApiError(403, "forbidden_role", "only teachers may save a merge for someone else")
            try:
                store.get_user(owner)
            except NotFoundError as exc:
                raise ApiError(400, "validation_error", str(exc), "save_as_owner") from None
            saved_id = _mint("merged")
            now = _now()
            entries = [
                RevisionEntry(i, user.id, now, "add", a.id, None, a)
                for i, a in enumerate(result.merged, start=1)
            ]
            consolidated = AnnotationSet(
                id=saved_id, video_id=video_id, owner=owner,
                annotations=result.merged, revision=0,
            )
            revision = store_put(consolidated, 0, entries)
            payload = {**payload, "saved_set_id": saved_id, "revision": revision}
        return _canonical_response(payload)

    @app.post("/api/grade")
    async def post_grade(request: Request) -> Response:
        user = authenticate(request)
        require_role(user, "teacher")
        body = await read_json(request)
        if not isinstance(body, dict):
            raise ApiError(400, "validation_error", "expected a JSON object")
        learner = get_set_or_404(str(body.get("learner_set")))
        key = get_set_or_404(str(body.get("key_set")))
        tolerance = body.get("tolerance_ms", 0)
        if not isinstance(tolerance, int) or isinstance(tolerance, bool) or tolerance < 0:
            raise ApiError(400, "validation_error", "tolerance_ms must be a non-negative integer", "tolerance_ms")
        try:
            report = grade(learner, key, tolerance)
        except GradeError as exc:
            code = "video_mismatch" if "different videos" in str(exc) else "validation_error"
            raise ApiError(400, code, str(exc)) from None
        return _canonical_response(grade_report_to_json(report))

    # -- export -------------------------------------------------------------------

    @app.get("/api/sets/{set_id}/export")
    async def export_set(set_id: str, request: Request, format: str = "json",
                         point_padding_ms: int = 1000, pretty: bool = False) -> Response:
        s = get_set_or_404(set_id)
        check_set_readable(request, s)
        video = store.get_video(s.video_id)
        if format == "json":
            return Response(export_set_json(s, video, pretty=pretty), media_type="application/json")
        if format == "webvtt":
            if point_padding_ms <= 0:
                raise ApiError(400, "validation_error", "point_padding_ms must be > 0", "point_padding_ms")
            return Response(export_webvtt(s, video, point_padding_ms), media_type="text/vtt")
        if format == "csv":
            return Response(export_csv(s, video), media_type="text/csv")
        raise ApiError(400, "validation_error", f"unknown export format {format!r}", "format")

    if webapp_dir is not None and Path(webapp_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(webapp_dir), html=True), name="webapp")

    return app
