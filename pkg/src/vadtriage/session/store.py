"""Directory-per-session persistence.

Each session owns ``<root>/<session_id>/`` holding an append-only
``events.jsonl`` log (the source of truth) and a ``snapshots/`` directory of
derived model artifacts. Replaying the event log reconstructs the full
session state.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

from ..errors import DatasetMissing


class SessionStore:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def session_dir(self, session_id: str) -> Path:
        return self.root / session_id

    def exists(self, session_id: str) -> bool:
        return (self.session_dir(session_id) / "events.jsonl").exists()

    def list_sessions(self) -> list[str]:
        return sorted(
            d.name for d in self.root.iterdir()
            if d.is_dir() and (d / "events.jsonl").exists()
        )

    def create(self, session_id: str) -> Path:
        d = self.session_dir(session_id)
        (d / "snapshots").mkdir(parents=True, exist_ok=True)
        (d / "events.jsonl").touch()
        return d

    def append_event(self, session_id: str, event: dict):
        path = self.session_dir(session_id) / "events.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n")

    def read_events(self, session_id: str) -> Iterator[dict]:
        path = self.session_dir(session_id) / "events.jsonl"
        if not path.exists():
            raise DatasetMissing(f"no session {session_id!r} under {self.root}")
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    def snapshot_path(self, session_id: str, name: str) -> Path:
        return self.session_dir(session_id) / "snapshots" / name

    def write_snapshot(self, session_id: str, name: str, text: str) -> str:
        path = self.snapshot_path(session_id, name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        return str(path.relative_to(self.session_dir(session_id)))

    def read_snapshot(self, session_id: str, relpath: str) -> str:
        return (self.session_dir(session_id) / relpath).read_text(encoding="utf-8")
