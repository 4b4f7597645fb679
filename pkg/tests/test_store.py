from __future__ import annotations

import json
import os
import random
import threading
from dataclasses import replace

import pytest

from hyvid.collab import RevisionEntry, RevisionLog, append_revision, replay
from hyvid.model import TimeFragment
from hyvid.store import (
    AuthError,
    DuplicateError,
    NotFoundError,
    ReadOnlyStoreError,
    ReplayMismatchError,
    RevisionConflictError,
    Store,
    StoreValidationError,
    User,
    open_store,
)

from support import CATALOG, VIDEO, make_annotation, make_set, ts

TEACHER = User("t1", "Dr. Verne", "teacher", "tok-teacher")
LEARNER = User("l1", "Ada", "learner", "tok-ada")


def seeded_store(tmp_path) -> Store:
    store = open_store(tmp_path / "data")
    store.put_video(VIDEO)
    for r in CATALOG:
        store.put_resource(VIDEO.id, r)
    store.put_user(TEACHER)
    store.put_user(LEARNER)
    return store


def entries_for(annotations, start_seq=1, actor="l1"):
    return [
        RevisionEntry(seq=start_seq + i, actor=actor, at=ts(i), op="add", annotation_id=a.id, after=a)
        for i, a in enumerate(annotations)
    ]


class TestOpen:
    def test_empty_directory(self, tmp_path):
        store = open_store(tmp_path / "fresh")
        assert store.list_videos() == []
        assert store.corruption == {}
        assert not store.read_only

    def test_round_trip_reload(self, tmp_path):
        store = seeded_store(tmp_path)
        anns = [make_annotation("a1", 10_000, 20_000), make_annotation("a2", 30_000, 40_000)]
        s = make_set(anns, id="set-ada", owner="l1")
        revision = store.put_set(s, 0, entries_for(anns))
        assert revision == 2

        again = open_store(store.path)
        assert again.corruption == {}
        assert again.get_set("set-ada").annotations == tuple(anns)
        assert again.get_set("set-ada").revision == 2
        assert len(again.get_log("set-ada").entries) == 2
        assert again.get_video(VIDEO.id) == VIDEO
        assert again.list_resources(VIDEO.id) == sorted(CATALOG, key=lambda r: r.id)
        assert again.authenticate("tok-ada") == LEARNER

    def test_tampered_log_reported(self, tmp_path):
        store = seeded_store(tmp_path)
        anns = [make_annotation("a1")]
        store.put_set(make_set(anns, id="set-ada", owner="l1"), 0, entries_for(anns))

        log_path = store.path / "logs" / "set-ada.json"
        doc = json.loads(log_path.read_bytes())
        doc["entries"] = []
        log_path.write_bytes(json.dumps(doc).encode())

        again = open_store(store.path)
        assert "set-ada" in again.corruption
        assert again.read_only
        with pytest.raises(ReadOnlyStoreError):
            again.put_video(replace(VIDEO, id="v2"))

    def test_orphan_log_reported(self, tmp_path):
        store = seeded_store(tmp_path)
        (store.path / "logs" / "ghost.json").write_bytes(b'{"format":"hyvid-revlog","version":1,"set_id":"ghost","entries":[]}')
        again = open_store(store.path)
        assert "ghost" in again.corruption


class TestPutSet:
    def test_first_write_revision_counts_entries(self, tmp_path):
        store = seeded_store(tmp_path)
        anns = [make_annotation("a1"), make_annotation("a2", 20_000)]
        assert store.put_set(make_set(anns, id="s", owner="l1"), 0, entries_for(anns)) == 2

    def test_stale_revision_conflict_leaves_store_unchanged(self, tmp_path):
        store = seeded_store(tmp_path)
        a1 = make_annotation("a1")
        store.put_set(make_set([a1], id="s", owner="l1"), 0, entries_for([a1]))

        a2 = make_annotation("a2", 20_000)
        update = make_set([a1, a2], id="s", owner="l1")
        second_entry = entries_for([a2], start_seq=2)
        assert store.put_set(update, 1, second_entry) == 2
        with pytest.raises(RevisionConflictError):
            store.put_set(update, 1, second_entry)
        assert store.get_set("s").revision == 2
        assert len(store.get_log("s").entries) == 2

    def test_replay_mismatch_rejected(self, tmp_path):
        store = seeded_store(tmp_path)
        a1, other = make_annotation("a1"), make_annotation("other", 50_000)
        with pytest.raises(ReplayMismatchError):
            store.put_set(make_set([other], id="s", owner="l1"), 0, entries_for([a1]))

    def test_entries_built_by_collab_replay_accepted(self, tmp_path):
        store = seeded_store(tmp_path)
        a1 = make_annotation("a1", 10_000)
        moved = replace(a1, fragment=TimeFragment(15_000, 15_000))
        log = RevisionLog("s")
        log = append_revision(log, "l1", ts(0), "add", after=a1)
        log = append_revision(log, "l1", ts(1), "update", before=a1, after=moved)
        final = list(replay(log).values())
        assert store.put_set(make_set(final, id="s", owner="l1"), 0, list(log.entries)) == 2
        assert store.get_set("s").annotations == (moved,)

    def test_validation_failure_rejected(self, tmp_path):
        store = seeded_store(tmp_path)
        bad = make_annotation("a1", 10, 5)
        with pytest.raises(StoreValidationError):
            store.put_set(make_set([bad], id="s", owner="l1"), 0, entries_for([bad]))

    def test_unknown_video_rejected(self, tmp_path):
        store = seeded_store(tmp_path)
        s = replace(make_set([], id="s"), video_id="nope")
        with pytest.raises(NotFoundError):
            store.put_set(s, 0, [])

    def test_crash_between_temp_write_and_rename(self, tmp_path, monkeypatch):
        store = seeded_store(tmp_path)
        a1 = make_annotation("a1")
        store.put_set(make_set([a1], id="s", owner="l1"), 0, entries_for([a1]))

        import hyvid.store as store_mod

        def crash(src, dst):
            raise OSError("simulated crash before rename")

        monkeypatch.setattr(store_mod.os, "replace", crash)
        a2 = make_annotation("a2", 20_000)
        with pytest.raises(OSError):
            store.put_set(make_set([a1, a2], id="s", owner="l1"), 1, entries_for([a2], start_seq=2))
        monkeypatch.undo()

        again = open_store(store.path)
        assert again.corruption == {}
        assert again.get_set("s").annotations == (a1,)
        assert again.get_set("s").revision == 1

    def test_concurrent_writers_single_winner(self, tmp_path):
        store = seeded_store(tmp_path)
        a1 = make_annotation("a1")
        store.put_set(make_set([a1], id="s", owner="l1"), 0, entries_for([a1]))

        outcomes = []

        def writer(tag):
            ann = make_annotation(f"b-{tag}", 30_000)
            try:
                store.put_set(
                    make_set([a1, ann], id="s", owner="l1"), 1,
                    entries_for([ann], start_seq=2),
                )
                outcomes.append(("ok", tag))
            except RevisionConflictError:
                outcomes.append(("conflict", tag))

        threads = [threading.Thread(target=writer, args=(i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(o for o, _ in outcomes) == ["conflict", "conflict", "conflict", "ok"]
        assert store.get_set("s").revision == 2


class TestCatalogAndUsers:
    def test_get_unknown_set(self, tmp_path):
        with pytest.raises(NotFoundError):
            open_store(tmp_path / "x").get_set("nope")

    def test_put_then_list_resources(self, tmp_path):
        store = open_store(tmp_path / "x")
        store.put_video(VIDEO)
        store.put_resource(VIDEO.id, CATALOG[0])
        assert store.list_resources(VIDEO.id) == [CATALOG[0]]
        with pytest.raises(DuplicateError):
            store.put_resource(VIDEO.id, CATALOG[0])

    def test_duplicate_video(self, tmp_path):
        store = open_store(tmp_path / "x")
        store.put_video(VIDEO)
        with pytest.raises(DuplicateError):
            store.put_video(VIDEO)

    def test_authenticate_unknown_token(self, tmp_path):
        store = seeded_store(tmp_path)
        with pytest.raises(AuthError):
            store.authenticate("tok-nobody")

    def test_list_sets_by_video(self, tmp_path):
        store = seeded_store(tmp_path)
        a = make_annotation("a1")
        store.put_set(make_set([a], id="s1", owner="l1"), 0, entries_for([a]))
        store.put_set(make_set([], id="s2", owner="t1"), 0, [])
        assert [s.id for s in store.list_sets(VIDEO.id)] == ["s1", "s2"]
