"""File-backed persistence: videos, resource catalogs, users, sets and logs.

Everything on disk is canonical JSON, so the store is diffable and
inspectable with standard tools. Writes follow write-temp-then-rename
discipline; a crash before the rename leaves the previous committed state
intact. On open, every set is checked against its revision log (replay must
reproduce the stored annotations and the revision counter must equal the
log length); any mismatch is reported per set and flips the store to
read-only.

Concurrency: reads return immutable values and take no locks; `put_set`
serializes per set id, catalog writes serialize globally. The atomic unit
is one put call; there are no cross-set transactions.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from .collab import RevisionEntry, RevisionError, RevisionLog, replay
from .interchange import (
    InterchangeError,
    canonical_json_bytes,
    export_log_json,
    export_set_json,
    import_log_json,
    import_set_json,
    resource_from_json,
    resource_to_json,
    video_from_json,
    video_to_json,
)
from .model import AnnotationSet, Resource, VideoReference, sort_timeline, validate_set

__all__ = [
    "User",
    "ROLES",
    "Store",
    "StoreError",
    "NotFoundError",
    "DuplicateError",
    "AuthError",
    "RevisionConflictError",
    "ReplayMismatchError",
    "StoreValidationError",
    "ReadOnlyStoreError",
    "open_store",
]

ROLES = ("teacher", "learner", "viewer")


class StoreError(Exception):
    pass


class NotFoundError(StoreError):
    pass


class DuplicateError(StoreError):
    pass


class AuthError(StoreError):
    pass


class RevisionConflictError(StoreError):
    def __init__(self, set_id: str, expected: int, actual: int):
        super().__init__(f"set {set_id!r}: expected revision {expected}, stored revision is {actual}")
        self.expected = expected
        self.actual = actual


class ReplayMismatchError(StoreError):
    pass


class StoreValidationError(StoreError):
    def __init__(self, violations):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = tuple(violations)


class ReadOnlyStoreError(StoreError):
    pass


@dataclass(frozen=True)
class User:
    id: str
    display_name: str
    role: str
    token: str

    def __post_init__(self) -> None:
        if not self.id or not isinstance(self.id, str):
            raise ValueError("user id must be a non-empty string")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not self.token or not isinstance(self.token, str):
            raise ValueError("token must be a non-empty string")


def _user_to_json(u: User) -> dict:
    return {"id": u.id, "display_name": u.display_name, "role": u.role, "token": u.token}


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


class Store:
    """Handle over one data directory; share freely across threads."""

    VIDEOS_FILE = "videos.json"
    USERS_FILE = "users.json"
    RESOURCES_DIR = "resources"
    SETS_DIR = "sets"
    LOGS_DIR = "logs"

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        for sub in (self.RESOURCES_DIR, self.SETS_DIR, self.LOGS_DIR):
            (self.path / sub).mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()
        self._set_locks: dict[str, threading.Lock] = {}
        self._videos: dict[str, VideoReference] = {}
        self._users: dict[str, User] = {}
        self._tokens: dict[str, User] = {}
        self._resources: dict[str, dict[str, Resource]] = {}
        self._sets: dict[str, AnnotationSet] = {}
        self._logs: dict[str, RevisionLog] = {}
        self.corruption: dict[str, str] = {}
        self._load()

    # -- loading -----------------------------------------------------------

    def _load_envelope(self, path: Path, format_tag: str) -> dict:
        doc = json.loads(path.read_bytes().decode("utf-8"))
        if not isinstance(doc, dict) or doc.get("format") != format_tag or doc.get("version") != 1:
            raise StoreError(f"{path.name}: not a {format_tag} v1 document")
        return doc

    def _load(self) -> None:
        videos_path = self.path / self.VIDEOS_FILE
        if videos_path.exists():
            doc = self._load_envelope(videos_path, "hyvid-videos")
            for i, obj in enumerate(doc.get("videos", [])):
                video = video_from_json(obj, f"videos[{i}]")
                self._videos[video.id] = video
        users_path = self.path / self.USERS_FILE
        if users_path.exists():
            doc = self._load_envelope(users_path, "hyvid-users")
            for obj in doc.get("users", []):
                user = User(obj["id"], obj.get("display_name", ""), obj["role"], obj["token"])
                if user.id in self._users or user.token in self._tokens:
                    raise StoreError(f"duplicate user id or token for {user.id!r}")
                self._users[user.id] = user
                self._tokens[user.token] = user
        for res_path in sorted((self.path / self.RESOURCES_DIR).glob("*.json")):
            doc = self._load_envelope(res_path, "hyvid-resources")
            video_id = doc.get("video_id", res_path.stem)
            catalog = {}
            for i, obj in enumerate(doc.get("resources", [])):
                resource = resource_from_json(obj, f"resources[{i}]")
                catalog[resource.id] = resource
            self._resources[video_id] = catalog

        for set_path in sorted((self.path / self.SETS_DIR).glob("*.json")):
            set_id = set_path.stem
            try:
                self._load_set(set_id, set_path)
            except (InterchangeError, RevisionError, StoreError, OSError, ValueError) as exc:
                self.corruption[set_id] = str(exc)
        for log_path in sorted((self.path / self.LOGS_DIR).glob("*.json")):
            if log_path.stem not in self._sets and log_path.stem not in self.corruption:
                self.corruption[log_path.stem] = "revision log exists without a set file"

    def _load_set(self, set_id: str, set_path: Path) -> None:
        imported = import_set_json(set_path.read_bytes())
        if imported.set.id != set_id:
            raise StoreError(f"set file {set_path.name} contains id {imported.set.id!r}")
        if imported.set.video_id not in self._videos:
            raise StoreError(f"set references unknown video {imported.set.video_id!r}")
        log_path = self.path / self.LOGS_DIR / f"{set_id}.json"
        if log_path.exists():
            log = import_log_json(log_path.read_bytes())
            if log.set_id != set_id:
                raise StoreError(f"log file {log_path.name} is for set {log.set_id!r}")
        else:
            log = RevisionLog(set_id)
        if replay(log) != {a.id: a for a in imported.set.annotations}:
            raise StoreError("revision log does not replay to the stored annotations")
        if imported.set.revision != len(log.entries):
            raise StoreError(
                f"revision counter {imported.set.revision} != log length {len(log.entries)}"
            )
        self._sets[set_id] = imported.set
        self._logs[set_id] = log

    # -- guards ------------------------------------------------------------

    @property
    def read_only(self) -> bool:
        return bool(self.corruption)

    def _writable(self) -> None:
        if self.read_only:
            detail = "; ".join(f"{k}: {v}" for k, v in sorted(self.corruption.items()))
            raise ReadOnlyStoreError(f"store is read-only due to corruption ({detail})")

    def _set_lock(self, set_id: str) -> threading.Lock:
        with self._write_lock:
            return self._set_locks.setdefault(set_id, threading.Lock())

    # -- videos / users / resources ----------------------------------------

    def _persist_videos(self) -> None:
        doc = {"format": "hyvid-videos", "version": 1,
               "videos": [video_to_json(v) for _, v in sorted(self._videos.items())]}
        _write_atomic(self.path / self.VIDEOS_FILE, canonical_json_bytes(doc, ("format", "version")))

    def _persist_users(self) -> None:
        doc = {"format": "hyvid-users", "version": 1,
               "users": [_user_to_json(u) for _, u in sorted(self._users.items())]}
        _write_atomic(self.path / self.USERS_FILE, canonical_json_bytes(doc, ("format", "version")))

    def _persist_resources(self, video_id: str) -> None:
        doc = {"format": "hyvid-resources", "version": 1, "video_id": video_id,
               "resources": [resource_to_json(r) for _, r in sorted(self._resources.get(video_id, {}).items())]}
        _write_atomic(self.path / self.RESOURCES_DIR / f"{video_id}.json",
                      canonical_json_bytes(doc, ("format", "version")))

    def put_video(self, video: VideoReference) -> None:
        self._writable()
        with self._write_lock:
            if video.id in self._videos:
                raise DuplicateError(f"video {video.id!r} already exists")
            self._videos[video.id] = video
            self._persist_videos()

    def get_video(self, video_id: str) -> VideoReference:
        try:
            return self._videos[video_id]
        except KeyError:
            raise NotFoundError(f"unknown video {video_id!r}") from None

    def list_videos(self) -> list[VideoReference]:
        return [v for _, v in sorted(self._videos.items())]

    def put_user(self, user: User) -> None:
        self._writable()
        with self._write_lock:
            if user.id in self._users:
                raise DuplicateError(f"user {user.id!r} already exists")
            if user.token in self._tokens:
                raise DuplicateError("token already in use")
            self._users[user.id] = user
            self._tokens[user.token] = user
            self._persist_users()

    def get_user(self, user_id: str) -> User:
        try:
            return self._users[user_id]
        except KeyError:
            raise NotFoundError(f"unknown user {user_id!r}") from None

    def authenticate(self, token: str) -> User:
        user = self._tokens.get(token)
        if user is None:
            raise AuthError("unknown token")
        return user

    def put_resource(self, video_id: str, resource: Resource) -> None:
        self._writable()
        self.get_video(video_id)
        with self._write_lock:
            catalog = self._resources.setdefault(video_id, {})
            if resource.id in catalog:
                raise DuplicateError(f"resource {resource.id!r} already exists for video {video_id!r}")
            catalog[resource.id] = resource
            self._persist_resources(video_id)

    def list_resources(self, video_id: str) -> list[Resource]:
        self.get_video(video_id)
        return [r for _, r in sorted(self._resources.get(video_id, {}).items())]

    # -- sets / logs ---------------------------------------------------------

    def get_set(self, set_id: str) -> AnnotationSet:
        try:
            return self._sets[set_id]
        except KeyError:
            raise NotFoundError(f"unknown set {set_id!r}") from None

    def list_sets(self, video_id: str) -> list[AnnotationSet]:
        self.get_video(video_id)
        return [s for _, s in sorted(self._sets.items()) if s.video_id == video_id]

    def get_log(self, set_id: str) -> RevisionLog:
        self.get_set(set_id)
        return self._logs.get(set_id, RevisionLog(set_id))

    def put_set(
        self,
        s: AnnotationSet,
        expected_revision: int,
        entries: list[RevisionEntry],
    ) -> int:
        """Atomically persist a set plus the log entries that produce it.

        `expected_revision` must match the stored revision (0 for a new set)
        and replaying the stored log extended by `entries` must reproduce
        exactly `s.annotations`. Returns the new revision; the stored set's
        revision counter is stamped to it.
        """
        self._writable()
        video = self.get_video(s.video_id)
        catalog = list(self._resources.get(s.video_id, {}).values())
        violations = validate_set(s, video, catalog)
        if violations:
            raise StoreValidationError(violations)
        with self._set_lock(s.id):
            current = self._sets.get(s.id)
            current_revision = current.revision if current is not None else 0
            if current is not None and current.video_id != s.video_id:
                raise StoreValidationError(
                    [f"set {s.id!r} already belongs to video {current.video_id!r}"]
                )
            if expected_revision != current_revision:
                raise RevisionConflictError(s.id, expected_revision, current_revision)
            old_log = self._logs.get(s.id, RevisionLog(s.id))
            try:
                new_log = RevisionLog(s.id, old_log.entries + tuple(entries))
                final = replay(new_log)
            except RevisionError as exc:
                raise ReplayMismatchError(str(exc)) from None
            if final != {a.id: a for a in s.annotations}:
                raise ReplayMismatchError(
                    "submitted entries do not transform the stored annotations into the submitted set"
                )
            stored = s.with_annotations(sort_timeline(s), revision=len(new_log.entries))
            _write_atomic(self.path / self.SETS_DIR / f"{s.id}.json", export_set_json(stored, video))
            _write_atomic(self.path / self.LOGS_DIR / f"{s.id}.json", export_log_json(new_log))
            self._sets[s.id] = stored
            self._logs[s.id] = new_log
            return stored.revision


def open_store(path: str | os.PathLike) -> Store:
    """Open (creating if needed) the data directory at `path`."""
    return Store(path)
