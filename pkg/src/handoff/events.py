"""Event records and the line-oriented structured log encoding.

One record per line::

    t=1100 agent=Stinger kind=TriggerReceived epoch=0 latency=310 sender=Deployer

``t``, ``agent`` and ``kind`` come first, then the detail pairs sorted by
key. Values are integers or percent-encoded strings. The file starts with a
``# handoff-log v1 ...`` header and ends with a ``# end ...`` footer; see
``docs/log-format.md``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterable, Union
from urllib.parse import quote, unquote

LOG_MAGIC = "# handoff-log v1"

NET = "@net"
OPERATOR = "@operator"

_INT = re.compile(r"-?(0|[1-9][0-9]*)\Z")
_SAFE = "/,:._-+@*()[]<>|!~"


class Kind(str, enum.Enum):
    StateEntered = "StateEntered"
    StateExited = "StateExited"
    BehaviorStarted = "BehaviorStarted"
    BehaviorCompleted = "BehaviorCompleted"
    ActionStarted = "ActionStarted"
    ActionFeedback = "ActionFeedback"
    ActionCompleted = "ActionCompleted"
    ActionRejected = "ActionRejected"
    PingAttempt = "PingAttempt"
    PingResult = "PingResult"
    TriggerPublished = "TriggerPublished"
    TriggerReceived = "TriggerReceived"
    TriggerIgnored = "TriggerIgnored"
    LinkDown = "LinkDown"
    LinkUp = "LinkUp"
    MissionDone = "MissionDone"
    Fault = "Fault"

    def __str__(self) -> str:
        return self.value


Value = Union[int, str]


@dataclass(frozen=True)
class EventRecord:
    t: int
    agent: str
    kind: Kind
    detail: tuple = ()

    @classmethod
    def make(cls, t: int, agent: str, kind, **detail) -> "EventRecord":
        return cls(t, agent, kind if type(kind) is Kind else Kind(kind), _freeze(detail))

    def get(self, key: str, default=None):
        for k, v in self.detail:
            if k == key:
                return v
        return default

    def __getitem__(self, key: str):
        for k, v in self.detail:
            if k == key:
                return v
        raise KeyError(key)

    @property
    def details(self) -> dict:
        return dict(self.detail)


def _freeze(detail: dict) -> tuple:
    out = []
    for k, v in sorted(detail.items()):
        tv = type(v)
        if tv is int or tv is str:
            out.append((k, v))
            continue
        if v is None:
            continue
        if isinstance(v, bool):
            v = int(v)
        elif isinstance(v, enum.Enum):
            v = v.value
        elif not isinstance(v, (int, str)):
            v = str(v)
        out.append((k, v))
    return tuple(out)


@dataclass
class EventLog:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    end: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def of(self, kind=None, agent=None, **where) -> list:
        kind = Kind(kind) if kind is not None else None
        out = []
        for r in self.records:
            if kind is not None and r.kind is not kind:
                continue
            if agent is not None and r.agent != agent:
                continue
            if any(r.get(k) != v for k, v in where.items()):
                continue
            out.append(r)
        return out

    def agents(self) -> list:
        seen = []
        for r in self.records:
            if r.agent not in seen:
                seen.append(r.agent)
        return seen


def _enc(v: Value) -> str:
    if isinstance(v, int):
        return str(v)
    s = quote(v, safe=_SAFE)
    if s == "" or _INT.match(s):
        # keep strings that look like integers distinguishable
        s = "%s" + s if s == "" else "%" + format(ord(s[0]), "02X") + s[1:]
    return s


def _dec(s: str) -> Value:
    if _INT.match(s):
        return int(s)
    if s == "%s":
        return ""
    return unquote(s)


def _pairs(pairs: Iterable) -> str:
    return " ".join(f"{k}={_enc(v)}" for k, v in pairs)


def format_record(r: EventRecord) -> str:
    head = f"t={r.t} agent={_enc(r.agent)} kind={r.kind.value}"
    return head + (" " + _pairs(r.detail) if r.detail else "")


def format_log(log: EventLog) -> str:
    lines = [LOG_MAGIC + ((" " + _pairs(sorted(log.meta.items()))) if log.meta else "")]
    lines.extend(format_record(r) for r in log.records)
    lines.append("# end" + ((" " + _pairs(sorted(log.end.items()))) if log.end else ""))
    return "\n".join(lines) + "\n"


class LogFormatError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


def _split(text: str, lineno: int) -> list:
    out = []
    for tok in text.split(" "):
        if not tok:
            continue
        k, sep, v = tok.partition("=")
        if not sep or not k:
            raise LogFormatError(lineno, f"malformed field {tok!r}")
        out.append((k, _dec(v)))
    return out


def parse_log(text: str) -> EventLog:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith(LOG_MAGIC):
        raise LogFormatError(1, "missing log header")
    log = EventLog(meta=dict(_split(lines[0][len(LOG_MAGIC):], 1)))
    saw_end = False
    for i, line in enumerate(lines[1:], start=2):
        if saw_end:
            raise LogFormatError(i, "content after end marker")
        if line.startswith("# end"):
            log.end = dict(_split(line[len("# end"):], i))
            saw_end = True
            continue
        fields = _split(line, i)
        if len(fields) < 3 or [k for k, _ in fields[:3]] != ["t", "agent", "kind"]:
            raise LogFormatError(i, "record must start with t, agent, kind")
        (_, t), (_, agent), (_, kind) = fields[:3]
        if not isinstance(t, int):
            raise LogFormatError(i, "t must be an integer")
        try:
            kind = Kind(kind)
        except ValueError:
            raise LogFormatError(i, f"unknown kind {kind!r}") from None
        detail = tuple(fields[3:])
        if list(detail) != sorted(detail, key=lambda kv: kv[0]):
            raise LogFormatError(i, "detail keys must be sorted")
        log.records.append(EventRecord(t, str(agent), kind, detail))
    if not saw_end:
        raise LogFormatError(len(lines), "missing end marker")
    return log
