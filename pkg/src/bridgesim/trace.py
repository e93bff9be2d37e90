"""Run traces: line-delimited canonical JSON, byte-stable across reruns.

Every record is one JSON object with the fields (tick, seq, kind, chain,
payload), keys sorted, no insignificant whitespace, so identical runs produce
identical bytes and any divergence is a meaningful difference.  The first line
is a header embedding the scenario itself, which is what makes a trace
self-replaying.
"""

from __future__ import annotations

import json
from typing import Any

from . import codec

TRACE_FORMAT = 1


def dumps(record: dict) -> str:
    """Canonical-ish JSON for trace lines; floats allowed (fault rates)."""
    return json.dumps(_plain(record), sort_keys=True, separators=(",", ":"))


def _plain(value: Any) -> Any:
    if isinstance(value, float):
        return value
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if value is None or isinstance(value, (str, int, bool)):
        return value
    if isinstance(value, bytes):
        return "0x" + value.hex()
    return codec.to_plain(value)


class TraceWriter:
    def __init__(self) -> None:
        self.lines: list[str] = []
        self._seq = 0

    def header(self, scenario, threshold_override: int | None) -> None:
        self.lines.append(dumps({
            "tick": -1,
            "seq": 0,
            "kind": "header",
            "chain": "",
            "payload": {
                "format": TRACE_FORMAT,
                "hash_algorithm": codec.HASH_ALGORITHM,
                "scenario": scenario.raw,
                "threshold_override": threshold_override,
            },
        }))

    def record(self, tick: int, kind: str, chain: str, payload: dict) -> None:
        self._seq += 1
        self.lines.append(dumps({
            "tick": tick,
            "seq": self._seq,
            "kind": kind,
            "chain": chain,
            "payload": payload,
        }))


class TraceError(ValueError):
    pass


def read_trace(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise TraceError("trace file is empty")
    return lines


def header_of(lines: list[str]) -> dict:
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceError(f"trace header is not JSON: {exc}") from exc
    if head.get("kind") != "header":
        raise TraceError("first trace line is not a header record")
    return head["payload"]


def first_divergence(recorded: list[str], regenerated: list[str]) -> dict | None:
    """None when byte-identical; otherwise the first differing position."""
    for i, (a, b) in enumerate(zip(recorded, regenerated)):
        if a != b:
            return {"line": i + 1, "recorded": a, "regenerated": b}
    if len(recorded) != len(regenerated):
        i = min(len(recorded), len(regenerated))
        return {
            "line": i + 1,
            "recorded": recorded[i] if i < len(recorded) else "<absent>",
            "regenerated": regenerated[i] if i < len(regenerated) else "<absent>",
        }
    return None
