"""Walk the full classroom workflow against a live server, step by step.

Boots a throwaway data directory and an HTTP server on a free port, then
plays teacher and two learners: provision a lecture and resources, link and
comment, compare the two annotation sets, consolidate them by majority,
grade one learner against a key, and export the shared timeline as WebVTT.

Run:  python demos/flipped_classroom.py
"""

from __future__ import annotations

import contextlib
import tempfile
import threading
import time

import httpx
import uvicorn

from hyvid.api import create_app
from hyvid.store import User, open_store


@contextlib.contextmanager
def throwaway_server():
    with tempfile.TemporaryDirectory() as tmp:
        store = open_store(tmp)
        store.put_user(User("t1", "Dr. Verne", "teacher", "tok-teacher"))
        store.put_user(User("l1", "Ada", "learner", "tok-ada"))
        store.put_user(User("l2", "Ben", "learner", "tok-ben"))
        config = uvicorn.Config(create_app(store), host="127.0.0.1", port=0, log_level="error")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        while not server.started:
            time.sleep(0.01)
        port = server.servers[0].sockets[0].getsockname()[1]
        try:
            yield f"http://127.0.0.1:{port}"
        finally:
            server.should_exit = True
            thread.join(timeout=5)


def step(title: str) -> None:
    print(f"\n=== {title}")


def main() -> None:
    teacher = {"Authorization": "Bearer tok-teacher"}
    ada = {"Authorization": "Bearer tok-ada"}
    ben = {"Authorization": "Bearer tok-ben"}

    with throwaway_server() as base:
        client = httpx.Client(base_url=base, timeout=10)

        step("teacher registers the lecture recording")
        video = client.post("/api/videos", json={
            "uri": "http://media.example.org/science-history.mp4",
            "duration_ms": 600_000,
            "title": "Science history, lecture 1",
        }, headers=teacher).json()
        print(video)

        step("teacher provisions three resources for the linking exercise")
        for rid, title, kind in [
            ("r1", "Portrait of Lavoisier", "image"),
            ("r2", "Entropy, a primer", "text"),
            ("r3", "Original 1789 paper", "web"),
        ]:
            resource = client.post(f"/api/videos/{video['id']}/resources", json={
                "id": rid, "title": title, "kind": kind,
                "url": f"http://res.example.org/{rid}",
            }, headers=teacher).json()
            print(resource["id"], "→", resource["title"])

        step("Ada links resources to moments of the lecture and leaves a comment")
        set_ada = client.post(f"/api/videos/{video['id']}/sets", json={"id": "set-ada"},
                              headers=ada).json()["id"]
        for fragment, body in [
            ((10_000, 20_000), {"type": "resource-link", "resource_id": "r1"}),
            ((100_000, 110_000), {"type": "resource-link", "resource_id": "r2"}),
            ((300_000, 300_000), {"type": "resource-link", "resource_id": "r3"}),
            ((50_000, 50_000), {"type": "comment", "text": "Why does entropy rise here?"}),
        ]:
            client.post(f"/api/sets/{set_ada}/annotations", json={
                "fragment": {"begin_ms": fragment[0], "end_ms": fragment[1]}, "body": body,
            }, headers=ada)
        print("Ada's set:", set_ada)

        step("Ben does the same, with his own timings")
        set_ben = client.post(f"/api/videos/{video['id']}/sets", json={"id": "set-ben"},
                              headers=ben).json()["id"]
        for fragment, body in [
            ((12_000, 22_000), {"type": "resource-link", "resource_id": "r1"}),
            ((200_000, 210_000), {"type": "resource-link", "resource_id": "r2"}),
            ((55_000, 55_000), {"type": "comment", "text": "Lost me at the second law."}),
        ]:
            client.post(f"/api/sets/{set_ben}/annotations", json={
                "fragment": {"begin_ms": fragment[0], "end_ms": fragment[1]}, "body": body,
            }, headers=ben)
        print("Ben's set:", set_ben)

        step("the group compares both sets (tolerance 2 s)")
        report = client.post("/api/diff", json={
            "set_a": set_ada, "set_b": set_ben, "tolerance_ms": 2_000,
        }, headers=ada).json()
        print("agree on:", [x["resource_id"] for x in report["agreements"]])
        print("disagree on:", [
            (x["resource_id"], f'{x["delta_begin_ms"]} ms apart') for x in report["disagreements"]
        ])
        print("only Ada:", len(report["unique_a"]), "| only Ben:", len(report["unique_b"]))

        step("they consolidate: every resource at least two of them linked, at median timings")
        merged = client.post(f"/api/videos/{video['id']}/merge", json={
            "set_ids": [set_ada, set_ben],
            "policy": {"type": "majority", "quorum": 2},
            "save_as_owner": "l1",
        }, headers=ada).json()
        for annotation in merged["merged"]:
            fragment = annotation["fragment"]
            print(annotation["body"]["resource_id"], "@", fragment["begin_ms"], "-", fragment["end_ms"], "ms")
        print("saved as:", merged["saved_set_id"], "| dropped:",
              [(d["annotation_id"], d["reason"]) for d in merged["dropped"]])

        step("teacher grades Ben against Ada's placements as a mock key")
        key = client.post(f"/api/videos/{video['id']}/sets", json={"id": "key"},
                          headers=teacher).json()["id"]
        for fragment, rid in [((10_000, 20_000), "r1"), ((100_000, 110_000), "r2")]:
            client.post(f"/api/sets/{key}/annotations", json={
                "fragment": {"begin_ms": fragment[0], "end_ms": fragment[1]},
                "body": {"type": "resource-link", "resource_id": rid},
            }, headers=teacher)
        grade = client.post("/api/grade", json={
            "learner_set": set_ben, "key_set": key, "tolerance_ms": 2_000,
        }, headers=teacher).json()
        print(grade)

        step("the shared timeline exports as WebVTT")
        vtt = client.get(f"/api/sets/{merged['saved_set_id']}/export",
                         params={"format": "webvtt"})
        print(vtt.text)

        step("revision history of Ada's set")
        history = client.get(f"/api/sets/{set_ada}/history").json()
        for entry in history["entries"]:
            print(f'#{entry["seq"]} {entry["op"]} {entry["annotation_id"]} by {entry["actor"]}')

        client.close()


if __name__ == "__main__":
    main()
