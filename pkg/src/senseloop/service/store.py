"""Durable per-session event logs.

One directory per session holding a meta.json and an append-only events.jsonl.
Every append is flushed and fsync'd before the caller acknowledges the event,
so an acknowledged event survives a crash and recovered state equals replay.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

from ..errors import CorruptLogError


class SessionStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _dir(self, session_id: str) -> Path:
        # session ids are server-generated hex; reject anything path-like
        if not session_id or "/" in session_id or session_id.startswith("."):
            raise CorruptLogError(f"bad session id {session_id!r}")
        return self.root / session_id

    def exists(self, session_id: str) -> bool:
        return (self._dir(session_id) / "meta.json").is_file()

    def create(self, session_id: str, meta: dict) -> None:
        session_dir = self._dir(session_id)
        session_dir.mkdir(parents=True, exist_ok=False)
        meta_path = session_dir / "meta.json"
        with meta_path.open("w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.flush()
            os.fsync(fh.fileno())
        (session_dir / "events.jsonl").touch()
        dir_fd = os.open(session_dir, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)

    def append_event(self, session_id: str, event: dict) -> None:
        path = self._dir(session_id) / "events.jsonl"
        line = json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n"
        with path.open("a") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def read(self, session_id: str) -> tuple[dict, list[dict]]:
        session_dir = self._dir(session_id)
        try:
            meta = json.loads((session_dir / "meta.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptLogError(f"session {session_id!r} meta unreadable: {exc}") from exc
        events = []
        events_path = session_dir / "events.jsonl"
        if events_path.is_file():
            for lineno, line in enumerate(events_path.read_text().splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise CorruptLogError(
                        f"session {session_id!r} events.jsonl line {lineno}: {exc}"
                    ) from exc
        return meta, events

    def list_sessions(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir()
                      if (p / "meta.json").is_file())
