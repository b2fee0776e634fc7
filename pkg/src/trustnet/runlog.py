"""Run logs: one JSON object per line, header first, timestamps non-decreasing."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

RUNLOG_SCHEMA = "trustnet-runlog/1"


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class RunLog:
    header: dict
    events: list[dict] = field(default_factory=list)

    def append(self, event: dict) -> None:
        if self.events and event["t"] < self.events[-1]["t"]:
            raise ValueError(
                f"run log is append-only in time: {event['t']} after {self.events[-1]['t']}"
            )
        self.events.append(event)

    def extend(self, events: Iterable[dict]) -> None:
        for e in events:
            self.append(e)

    def of_type(self, kind: str) -> Iterator[dict]:
        return (e for e in self.events if e["type"] == kind)

    @property
    def malicious(self) -> list[str]:
        return list(self.header["malicious"])

    @property
    def benign(self) -> list[str]:
        return list(self.header["benign"])

    def lines(self) -> Iterator[str]:
        yield dumps({"type": "header", **self.header})
        for e in self.events:
            yield dumps(e)

    def to_text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def write(self, path: str | os.PathLike) -> None:
        atomic_write(path, self.to_text())

    @staticmethod
    def from_lines(lines: Iterable[str]) -> "RunLog":
        it = (ln for ln in lines if ln.strip())
        try:
            first = json.loads(next(it))
        except StopIteration:
            raise ValueError("empty run log") from None
        if first.get("type") != "header" or first.get("schema") != RUNLOG_SCHEMA:
            raise ValueError(f"not a {RUNLOG_SCHEMA} run log")
        header = {k: v for k, v in first.items() if k != "type"}
        return RunLog(header, [json.loads(ln) for ln in it])

    @staticmethod
    def read(path: str | os.PathLike) -> "RunLog":
        with open(path, encoding="utf-8") as fh:
            return RunLog.from_lines(fh)


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the same directory and rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
