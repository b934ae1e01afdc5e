"""Reader and writer for ``.machine`` and ``.scenario`` documents.

Both formats share one line grammar (see ``docs/format.md``)::

    version: 1
    # comment
    [section arg arg]
    key: value

Parsing never raises anything but :class:`DocumentError`, which carries
located :class:`ParseDiagnostic` entries.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

from .agents import ActuatorModel
from .bus import BridgeRule, LatencyModel, LinkSchedule, normalize_intervals
from .coordinator import RobotSpec
from .hfsm import ATOMIC, COMPOSITE, ActionRef, MachineDef, StateDef, validate_machine
from .scenario import TOKEN, Scenario, validate_scenario

_KEY = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")
_INT = re.compile(r"-?[0-9]+\Z")
_FLOAT = re.compile(r"-?[0-9]+\.[0-9]+([eE][-+]?[0-9]+)?\Z")
_REF = re.compile(r"\$[A-Za-z_][A-Za-z0-9_]*\Z")
_INTERVAL = re.compile(r"(-?[0-9]+)-(-?[0-9]+)\Z")


@dataclass(frozen=True, order=True)
class ParseDiagnostic:
    line: int
    column: int
    severity: str
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class DocumentError(ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = sorted(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass
class _Field:
    value: str
    line: int
    col: int  # column of the value
    key_col: int = 1


@dataclass
class _Section:
    kind: str
    args: list
    line: int
    arg_cols: list = field(default_factory=list)
    fields: dict = field(default_factory=dict)


class _Diags:
    def __init__(self, nlines: int):
        self.items: list = []
        self.nlines = max(nlines, 1)

    def error(self, line: int, col: int, msg: str) -> None:
        self._add(line, col, "error", msg)

    def warning(self, line: int, col: int, msg: str) -> None:
        self._add(line, col, "warning", msg)

    def _add(self, line, col, sev, msg):
        line = min(max(int(line), 1), self.nlines)
        self.items.append(ParseDiagnostic(line, max(int(col), 1), sev, msg))

    @property
    def errors(self) -> list:
        return [d for d in self.items if d.severity == "error"]


def _decode(text: Union[str, bytes], diags_holder: list):
    if isinstance(text, str):
        return text
    try:
        return text.decode("utf-8")
    except UnicodeDecodeError as exc:
        prefix = text[:exc.start]
        line = prefix.count(b"\n") + 1
        col = exc.start - (prefix.rfind(b"\n") + 1) + 1
        diags_holder.append(ParseDiagnostic(line, col, "error", "invalid UTF-8"))
        return None


def _read_sections(text: str, diags: _Diags) -> list:
    """Split a document into sections; checks the line grammar and the header."""
    lines = text.split("\n")
    sections: list = []
    current: Optional[_Section] = None
    version_seen = False
    headers: dict = {}
    scope: tuple = ()
    for n, raw in enumerate(lines, start=1):
        line = raw[:-1] if raw.endswith("\r") else raw
        if "\x00" in line:
            diags.error(n, line.index("\x00") + 1, "NUL character")
            continue
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if line[0] in " \t":
            diags.error(n, 1, "indentation is not allowed")
            continue
        if line.startswith("["):
            if not line.rstrip().endswith("]"):
                diags.error(n, len(line) + 1, "expected ']' to close section header")
                current = None
                continue
            if not version_seen:
                diags.error(n, 1, "missing version header: expected 'version: 1' first")
                version_seen = True
            inner = line.rstrip()[1:-1]
            words, cols, pos = [], [], 0
            for part in inner.split(" "):
                if part:
                    words.append(part)
                    cols.append(pos + 2)
                pos += len(part) + 1
            if not words:
                diags.error(n, 2, "empty section header")
                current = None
                continue
            if words[0] == "machine":
                scope = tuple(words)
            # state names only need to be unique within their machine
            sig = (scope if words[0] == "state" else ()) + tuple(words)
            if sig in headers:
                diags.error(n, 1, f"duplicate section [{' '.join(words)}] "
                                  f"(first at line {headers[sig]})")
            headers.setdefault(sig, n)
            current = _Section(words[0], words[1:], n, cols[1:])
            sections.append(current)
            continue
        key, sep, value = line.partition(":")
        if not sep:
            diags.error(n, 1, "expected 'key: value' or '[section]'")
            continue
        if not _KEY.match(key):
            diags.error(n, 1, f"invalid key {key!r}")
            continue
        vcol = len(key) + 2
        while vcol - 1 < len(line) and line[vcol - 1] == " ":
            vcol += 1
        value = value.strip()
        if not version_seen:
            version_seen = True
            if key != "version":
                diags.error(n, 1, "missing version header: expected 'version: 1' first")
            elif value != "1":
                diags.error(n, vcol, f"unsupported version {value!r}")
            else:
                continue
            if key == "version":
                continue
        if current is None:
            diags.error(n, 1, f"field {key!r} outside of any section")
            continue
        if key in current.fields:
            diags.error(n, 1, f"duplicate key {key!r} (first at line {current.fields[key].line})")
            continue
        if not value:
            diags.error(n, vcol, f"empty value for {key!r}")
            continue
        current.fields[key] = _Field(value, n, vcol)
    if not version_seen:
        diags.error(1, 1, "missing version header: expected 'version: 1' first")
    return sections


def _check_fields(sec: _Section, allowed: set, required: set, diags: _Diags) -> bool:
    ok = True
    for key, f in sec.fields.items():
        if key not in allowed and not any(key.startswith(p) and len(key) > len(p)
                                          for p in allowed if p.endswith(".")):
            diags.error(f.line, f.key_col, f"unknown field: {key}")
            ok = False
    for key in sorted(required - set(sec.fields)):
        diags.error(sec.line, 1, f"missing required field: {key}")
        ok = False
    return ok


def _token(f: _Field, what: str, diags: _Diags) -> Optional[str]:
    if not TOKEN.match(f.value):
        diags.error(f.line, f.col, f"invalid {what}: {f.value!r}")
        return None
    return f.value


def _tokens(f: _Field, what: str, diags: _Diags) -> Optional[list]:
    out, col, bad = [], f.col, False
    for part in f.value.split(" "):
        if part:
            if not TOKEN.match(part):
                diags.error(f.line, col, f"invalid {what}: {part!r}")
                bad = True
            elif part in out:
                diags.error(f.line, col, f"duplicate {what}: {part}")
                bad = True
            else:
                out.append(part)
        col += len(part) + 1
    return None if bad else out


def _int(f: _Field, what: str, diags: _Diags, minimum: Optional[int] = None) -> Optional[int]:
    if not _INT.match(f.value):
        diags.error(f.line, f.col, f"{what} must be an integer, got {f.value!r}")
        return None
    v = int(f.value)
    if minimum is not None and v < minimum:
        msg = "negative times are not allowed" if minimum == 0 else f"{what} must be >= {minimum}"
        diags.error(f.line, f.col, f"{msg} ({what} = {v})")
        return None
    return v


def _scalar(text: str):
    if _INT.match(text):
        return int(text)
    if _FLOAT.match(text):
        return float(text)
    if _REF.match(text) or TOKEN.match(text):
        return text
    raise ValueError(text)


def _format_scalar(v) -> str:
    if isinstance(v, bool):
        raise ValueError("booleans are not representable")
    if isinstance(v, float):
        r = repr(v)
        return r if ("." in r and _FLOAT.match(r)) else format(v, ".17e").replace("e+", "e")
    return str(v)


def _pairs(f: _Field, diags: _Diags, scalar=True) -> Optional[dict]:
    out, col, bad = {}, f.col, False
    for part in f.value.split(" "):
        if part:
            k, sep, v = part.partition("=")
            if not sep or not TOKEN.match(k) or not v:
                diags.error(f.line, col, f"expected key=value, got {part!r}")
                bad = True
            elif k in out:
                diags.error(f.line, col, f"duplicate key {k!r}")
                bad = True
            else:
                try:
                    out[k] = _scalar(v) if scalar else v
                except ValueError:
                    diags.error(f.line, col + len(k) + 1, f"bad value {v!r}")
                    bad = True
        col += len(part) + 1
    return None if bad else out


# -- machines ---------------------------------------------------------------

_MACHINE_FIELDS = {"initial", "outcomes"}
_STATE_FIELDS = {"kind", "outcomes", "action", "goal", "on_success", "on_abort", "child", "map",
                 "next."}


def _parse_machine_text(text: str, diags: _Diags) -> Optional[MachineDef]:
    sections = _read_sections(text, diags)
    machines: dict = {}  # name -> (section, [state sections])
    order: list = []
    current = None
    for sec in sections:
        if sec.kind == "machine":
            if len(sec.args) != 1 or not TOKEN.match(sec.args[0]):
                diags.error(sec.line, 1, "expected [machine NAME]")
                current = None
                continue
            current = sec.args[0]
            machines[current] = (sec, [])
            order.append(current)
        elif sec.kind == "state":
            if len(sec.args) != 1 or not TOKEN.match(sec.args[0]):
                diags.error(sec.line, 1, "expected [state NAME]")
                continue
            if current is None:
                diags.error(sec.line, 1, "state section before any [machine] section")
                continue
            machines[current][1].append(sec)
        else:
            diags.error(sec.line, 2, f"unknown section type: {sec.kind}")
    if not order:
        if not diags.errors:
            diags.error(1, 1, "document declares no [machine] section")
        return None

    lines: dict = {}  # locus -> line, for semantic diagnostics
    raw: dict = {}
    for name in order:
        msec, ssecs = machines[name]
        lines[name] = msec.line
        _check_fields(msec, _MACHINE_FIELDS, _MACHINE_FIELDS, diags)
        initial = msec.fields.get("initial")
        initial = _token(initial, "state name", diags) if initial else None
        outs = msec.fields.get("outcomes")
        outs = _tokens(outs, "outcome", diags) if outs else None
        states = {}
        for ssec in ssecs:
            sname = ssec.args[0]
            if sname in states:
                diags.error(ssec.line, 1, f"duplicate state {sname!r} in machine {name}")
                continue
            lines[f"{name}/{sname}"] = ssec.line
            states[sname] = _state_fields(ssec, diags)
        raw[name] = (initial, outs, states, msec)

    if diags.errors:
        return None

    built: dict = {}

    def build(name: str, stack: tuple) -> Optional[MachineDef]:
        if name in built:
            return built[name]
        initial, outs, states, msec = raw[name]
        sdefs, transitions = {}, {}
        for sname, info in states.items():
            for outcome, target in info["next"].items():
                transitions[(sname, outcome)] = target
            if info["kind"] == COMPOSITE:
                child = info["child"]
                if child.value not in raw:
                    diags.error(child.line, child.col, f"unknown child machine {child.value!r}")
                    return None
                if child.value in stack:
                    diags.error(child.line, child.col,
                                f"machine {child.value!r} contains itself")
                    return None
                cdef = build(child.value, stack + (child.value,))
                if cdef is None:
                    return None
                sdefs[sname] = StateDef(sname, COMPOSITE, info["outcomes"], child=cdef,
                                        outcome_map=info["map"])
            else:
                sdefs[sname] = StateDef(sname, ATOMIC, info["outcomes"], action=info["action"])
        m = MachineDef(name, sdefs, initial, transitions, outs)
        built[name] = m
        return m

    root = build(order[0], (order[0],))
    if root is None:
        return None
    used = {m.name for m in root.walk()}
    for name in order[1:]:
        if name not in used:
            diags.warning(machines[name][0].line, 1, f"machine {name!r} is never used")
    report = validate_machine(root)
    for d in report.diagnostics:
        diags.error(_locus_line(d.locus, lines), 1, f"{d.locus}: {d.message}")
    return None if diags.errors else root


def _locus_line(locus: str, lines: dict) -> int:
    parts = [p for p in locus.split("/") if not p.startswith("(")]
    tail = locus.rsplit("/", 1)[-1]
    if tail.startswith("("):
        parts.append(tail[1:].split(",")[0])
    # composite loci nest machine names: Root/State/.../ChildState
    best = 1
    for i in range(len(parts)):
        for j in range(i + 1, len(parts) + 1):
            key = "/".join(parts[i:j])
            if key in lines:
                best = max(best, lines[key])
    return best


def _state_fields(sec: _Section, diags: _Diags) -> dict:
    f = sec.fields
    _check_fields(sec, _STATE_FIELDS, {"kind", "outcomes"}, diags)
    info: dict = {"next": {}, "kind": None, "outcomes": []}
    kind = f.get("kind")
    if kind is not None:
        if kind.value not in (ATOMIC, COMPOSITE):
            diags.error(kind.line, kind.col, f"bad kind {kind.value!r}: expected atomic or composite")
        else:
            info["kind"] = kind.value
    if "outcomes" in f:
        info["outcomes"] = _tokens(f["outcomes"], "outcome", diags) or []
    for key, fld in f.items():
        if key.startswith("next."):
            outcome = key[len("next."):]
            if not TOKEN.match(outcome):
                diags.error(fld.line, 1, f"invalid outcome {outcome!r}")
            else:
                target = _token(fld, "transition target", diags)
                if target:
                    info["next"][outcome] = target
    atomic_only = ("action", "goal", "on_success", "on_abort")
    if info["kind"] == ATOMIC:
        for key in ("child", "map"):
            if key in f:
                diags.error(f[key].line, 1, f"field {key!r} is not allowed in an atomic state")
        if "action" not in f:
            diags.error(sec.line, 1, "missing required field: action")
        else:
            server = _token(f["action"], "server name", diags)
            goal = _pairs(f["goal"], diags) if "goal" in f else {}
            ok = _token(f["on_success"], "outcome", diags) if "on_success" in f else "done"
            abort = _token(f["on_abort"], "outcome", diags) if "on_abort" in f else None
            if server and goal is not None and ok:
                info["action"] = ActionRef(server, goal, ok, abort)
    elif info["kind"] == COMPOSITE:
        for key in atomic_only:
            if key in f:
                diags.error(f[key].line, 1, f"field {key!r} is not allowed in a composite state")
        for key in ("child", "map"):
            if key not in f:
                diags.error(sec.line, 1, f"missing required field: {key}")
        if "child" in f:
            _token(f["child"], "machine name", diags)
            info["child"] = f["child"]
        if "map" in f:
            pairs = _pairs(f["map"], diags, scalar=False)
            if pairs is not None:
                for k, v in pairs.items():
                    if not TOKEN.match(v):
                        diags.error(f["map"].line, f["map"].col, f"invalid outcome {v!r}")
                info["map"] = pairs or {}
    return info


def parse_machine(text: Union[str, bytes]) -> MachineDef:
    """Parse a ``.machine`` document; raises :class:`DocumentError`."""
    pre: list = []
    decoded = _decode(text, pre)
    if decoded is None:
        raise DocumentError(pre)
    diags = _Diags(decoded.count("\n") + 1)
    try:
        machine = _parse_machine_text(decoded, diags)
    except RecursionError:
        diags.error(1, 1, "machine nesting too deep")
        machine = None
    if machine is None:
        if not diags.errors:
            diags.error(1, 1, "invalid machine document")
        raise DocumentError(diags.items)
    return machine


def serialize_machine(machine: MachineDef) -> str:
    """Canonical text: root machine first, children by name, states and keys sorted."""
    machines: dict = {}
    for m in machine.walk():
        prev = machines.get(m.name)
        if prev is not None and prev != m:
            raise ValueError(f"two different machines are both named {m.name!r}")
        machines[m.name] = m
    names = [machine.name] + sorted(n for n in machines if n != machine.name)
    out = ["version: 1"]
    for name in names:
        m = machines[name]
        out += ["", f"[machine {name}]", f"initial: {m.initial}",
                f"outcomes: {' '.join(sorted(m.terminal_outcomes))}"]
        for sname in sorted(m.states):
            st = m.states[sname]
            out += ["", f"[state {sname}]", f"kind: {st.kind}",
                    f"outcomes: {' '.join(sorted(st.outcomes))}"]
            if st.kind == ATOMIC:
                out.append(f"action: {st.action.server}")
                if st.action.goal:
                    out.append("goal: " + " ".join(f"{k}={_format_scalar(v)}"
                                                   for k, v in sorted(st.action.goal.items())))
                out.append(f"on_success: {st.action.on_success}")
                if st.action.on_abort is not None:
                    out.append(f"on_abort: {st.action.on_abort}")
            else:
                out.append(f"child: {st.child.name}")
                out.append("map: " + " ".join(f"{k}={v}" for k, v in sorted(st.outcome_map.items())))
            for outcome in sorted(st.outcomes):
                target = m.transitions.get((sname, outcome))
                if target is not None:
                    out.append(f"next.{outcome}: {target}")
    return "\n".join(out) + "\n"


# -- scenarios --------------------------------------------------------------

_SCENARIO_FIELDS = {"name", "mission", "seed", "epochs", "horizon", "ping_interval", "latency",
                    "feedback_interval", "head"}
_ROBOT_FIELDS = {"domain", "behavior", "successor", "trigger_topic", "probe_peer", "ping_interval"}
_ACTUATOR_FIELDS = {"server", "position", "min", "max", "speed"}


def _file_loader(base: Optional[Path]) -> Callable[[str], str]:
    def load(rel: str) -> str:
        path = Path(rel)
        if not path.is_absolute():
            if base is None:
                raise FileNotFoundError(f"cannot resolve relative path {rel!r} without a base directory")
            path = base / path
        return path.read_text(encoding="utf-8")
    return load


def parse_scenario(text: Union[str, bytes], base_dir: Union[str, Path, None] = None,
                   loader: Optional[Callable[[str], str]] = None) -> Scenario:
    """Parse a ``.scenario`` document and eagerly load its behavior files.

    ``loader(relative_path) -> text`` overrides file access; by default paths
    resolve against ``base_dir``. Raises :class:`DocumentError`; warnings on
    success end up in ``Scenario.warnings``.
    """
    pre: list = []
    decoded = _decode(text, pre)
    if decoded is None:
        raise DocumentError(pre)
    diags = _Diags(decoded.count("\n") + 1)
    if loader is None:
        loader = _file_loader(Path(base_dir) if base_dir is not None else None)
    sc = _parse_scenario_text(decoded, diags, loader)
    if sc is None or diags.errors:
        if not diags.errors:
            diags.error(1, 1, "invalid scenario document")
        raise DocumentError(diags.items)
    sc.warnings = [d for d in diags.items if d.severity == "warning"]
    return sc


def _parse_scenario_text(text: str, diags: _Diags, loader) -> Optional[Scenario]:
    sections = _read_sections(text, diags)
    head_sec = None
    robots: list = []  # (section, values)
    actuators: dict = {}
    params: dict = {}
    bridges: list = []
    links: list = []
    for sec in sections:
        k = sec.kind
        if k == "scenario":
            if sec.args:
                diags.error(sec.line, 1, "[scenario] takes no arguments")
            if head_sec is not None:
                diags.error(sec.line, 1, "duplicate [scenario] section")
            else:
                head_sec = sec
        elif k == "robot":
            if len(sec.args) != 1:
                diags.error(sec.line, 1, "expected [robot ID]")
                continue
            robots.append(sec)
        elif k == "actuator":
            if len(sec.args) != 2:
                diags.error(sec.line, 1, "expected [actuator ROBOT ACTUATOR]")
                continue
            actuators.setdefault(sec.args[0], []).append(sec)
        elif k == "params":
            if len(sec.args) != 1:
                diags.error(sec.line, 1, "expected [params ROBOT]")
                continue
            params[sec.args[0]] = sec
        elif k == "bridge":
            if len(sec.args) != 3:
                diags.error(sec.line, 1, "expected [bridge FROM_DOMAIN TO_DOMAIN TOPIC]")
                continue
            bridges.append(sec)
        elif k == "link":
            if len(sec.args) != 2:
                diags.error(sec.line, 1, "expected [link ROBOT ROBOT]")
                continue
            links.append(sec)
        else:
            diags.error(sec.line, 2, f"unknown section type: {k}")

    if head_sec is None:
        if not diags.errors:
            diags.error(1, 1, "missing [scenario] section")
        return None

    # [scenario]
    _check_fields(head_sec, _SCENARIO_FIELDS, {"name", "horizon"}, diags)
    f = head_sec.fields
    name = _token(f["name"], "scenario name", diags) if "name" in f else None
    mission = _token(f["mission"], "mission id", diags) if "mission" in f else None
    seed = _int(f["seed"], "seed", diags, 0) if "seed" in f else 0
    if seed is not None and seed >= 2 ** 64:
        diags.error(f["seed"].line, f["seed"].col, "seed must fit in 64 bits")
    epochs = _int(f["epochs"], "epochs", diags, 1) if "epochs" in f else 1
    horizon = _int(f["horizon"], "horizon", diags, 0) if "horizon" in f else None
    if horizon == 0:
        diags.error(f["horizon"].line, f["horizon"].col, "horizon must be positive")
    ping = _int(f["ping_interval"], "ping_interval", diags, 1) if "ping_interval" in f else 500
    fb = _int(f["feedback_interval"], "feedback_interval", diags, 0) \
        if "feedback_interval" in f else 250
    head = _token(f["head"], "robot id", diags) if "head" in f else None
    latency = LatencyModel()
    if "latency" in f:
        latency = _latency(f["latency"], diags)

    # [robot ...]
    specs: list = []
    spec_lines: dict = {}
    for sec in robots:
        rid = sec.args[0]
        if not TOKEN.match(rid):
            diags.error(sec.line, sec.arg_cols[0], f"invalid robot id: {rid!r}")
            continue
        _check_fields(sec, _ROBOT_FIELDS, {"domain", "behavior"}, diags)
        rf = sec.fields
        domain = _int(rf["domain"], "domain", diags, 0) if "domain" in rf else None
        successor = None
        if "successor" in rf and rf["successor"].value != "none":
            successor = _token(rf["successor"], "robot id", diags)
        topic = _token(rf["trigger_topic"], "topic", diags) if "trigger_topic" in rf else None
        peer = _token(rf["probe_peer"], "robot id", diags) if "probe_peer" in rf else None
        rping = _int(rf["ping_interval"], "ping_interval", diags, 1) if "ping_interval" in rf else ping
        behavior = None
        if "behavior" in rf:
            bf = rf["behavior"]
            try:
                btext = loader(bf.value)
            except (OSError, ValueError) as exc:
                diags.error(bf.line, bf.col, f"cannot read behavior {bf.value!r}: {exc}")
            else:
                try:
                    behavior = parse_machine(btext)
                except DocumentError as exc:
                    for d in exc.diagnostics:
                        if d.severity == "error":
                            diags.error(bf.line, bf.col, f"{bf.value}:{d.line}:{d.column}: {d.message}")
        acts = []
        for asec in actuators.pop(rid, []):
            act = _actuator(asec, diags)
            if act is not None:
                acts.append(act)
        pvals = {}
        psec = params.pop(rid, None)
        if psec is not None:
            for key, fld in psec.fields.items():
                if not TOKEN.match(key):
                    diags.error(fld.line, 1, f"invalid parameter name {key!r}")
                    continue
                try:
                    pvals[key] = _scalar(fld.value)
                except ValueError:
                    diags.error(fld.line, fld.col, f"bad parameter value {fld.value!r}")
        if domain is None or behavior is None or None in (rping,):
            continue
        spec = RobotSpec(rid, domain, behavior, successor=successor, trigger_topic=topic,
                         probe_peer=peer, ping_interval=rping, actuators=acts, params=pvals,
                         behavior_path=rf["behavior"].value)
        specs.append(spec)
        spec_lines[rid] = sec
    for rid, secs in actuators.items():
        for asec in secs:
            diags.error(asec.line, asec.arg_cols[0], f"actuator for unknown robot: {rid}")
    for rid, psec in params.items():
        diags.error(psec.line, psec.arg_cols[0], f"params for unknown robot: {rid}")

    rules = []
    for sec in bridges:
        if sec.fields:
            for key, fld in sec.fields.items():
                diags.error(fld.line, 1, f"unknown field: {key}")
        a, b, topic = sec.args
        if not (_INT.match(a) and _INT.match(b)) or int(a) < 0 or int(b) < 0:
            diags.error(sec.line, sec.arg_cols[0], "bridge domains must be non-negative integers")
            continue
        if not TOKEN.match(topic):
            diags.error(sec.line, sec.arg_cols[2], f"invalid topic {topic!r}")
            continue
        rules.append(BridgeRule(int(a), int(b), topic))

    schedules = []
    for sec in links:
        _check_fields(sec, {"outages"}, set(), diags)
        a, b = sec.args
        if not (TOKEN.match(a) and TOKEN.match(b)):
            diags.error(sec.line, sec.arg_cols[0], "link endpoints must be robot ids")
            continue
        if a == b:
            diags.error(sec.line, sec.arg_cols[1], "a link needs two different robots")
            continue
        intervals = []
        if "outages" in sec.fields:
            intervals = _intervals(sec.fields["outages"], diags)
        if intervals is None:
            continue
        merged = normalize_intervals(intervals)
        if len(merged) < len(intervals):
            fld = sec.fields["outages"]
            ordered = sorted(intervals)
            if any(ordered[i + 1][0] < ordered[i][1] for i in range(len(ordered) - 1)):
                diags.warning(fld.line, fld.col, "overlapping outage intervals were merged")
        schedules.append(LinkSchedule(a, b, merged))
    seen_links: dict = {}
    for sched, sec in zip(schedules, links):
        if sched.key in seen_links:
            diags.error(sec.line, 1, f"duplicate link {sched.a}-{sched.b}")
        seen_links[sched.key] = sec

    if diags.errors or name is None or horizon is None or seed is None or epochs is None \
            or ping is None or fb is None or latency is None:
        return None
    sc = Scenario(name=name, robots=specs, horizon=horizon, seed=seed, epochs=epochs, head=head,
                  bridge_rules=rules, links=schedules, latency=latency, ping_interval=ping,
                  feedback_interval=fb, mission_id=mission)
    for p in validate_scenario(sc):
        line, col = head_sec.line, 1
        if p.robot in spec_lines:
            rsec = spec_lines[p.robot]
            line = rsec.line
            if p.field in rsec.fields:
                line, col = rsec.fields[p.field].line, rsec.fields[p.field].col
        elif p.field in head_sec.fields:
            line, col = head_sec.fields[p.field].line, head_sec.fields[p.field].col
        elif p.section is not None:
            for sec in bridges + links:
                if tuple([sec.kind] + sec.args) == tuple(str(x) for x in p.section):
                    line = sec.line
        (diags.error if p.severity == "error" else diags.warning)(line, col, p.message)
    return sc


def _latency(f: _Field, diags: _Diags) -> Optional[LatencyModel]:
    parts = f.value.split()
    try:
        if parts[0] == "fixed" and len(parts) == 2 and _INT.match(parts[1]):
            return LatencyModel.fixed(int(parts[1]))
        if parts[0] == "uniform" and len(parts) == 3 and all(_INT.match(p) for p in parts[1:]):
            return LatencyModel.uniform(int(parts[1]), int(parts[2]))
    except ValueError as exc:
        diags.error(f.line, f.col, f"bad latency model: {exc}")
        return None
    diags.error(f.line, f.col, f"bad latency model {f.value!r}: expected 'fixed MS' or 'uniform LO HI'")
    return None


def _actuator(sec: _Section, diags: _Diags) -> Optional[ActuatorModel]:
    _check_fields(sec, _ACTUATOR_FIELDS, {"position", "min", "max", "speed"}, diags)
    f = sec.fields
    aid = sec.args[1]
    if not TOKEN.match(aid):
        diags.error(sec.line, sec.arg_cols[1], f"invalid actuator id {aid!r}")
        return None
    server = _token(f["server"], "server name", diags) if "server" in f else "move_motor"
    vals = {}
    for key in ("position", "min", "max", "speed"):
        if key in f:
            vals[key] = _int(f[key], key, diags, 1 if key == "speed" else None)
    if server is None or len(vals) < 4 or None in vals.values():
        return None
    try:
        return ActuatorModel(aid, vals["position"], vals["min"], vals["max"], vals["speed"], server)
    except ValueError as exc:
        diags.error(sec.line, 1, str(exc))
        return None


def _intervals(f: _Field, diags: _Diags) -> Optional[list]:
    out, col, bad = [], f.col, False
    for part in f.value.split(" "):
        if part:
            m = _INTERVAL.match(part)
            if not m:
                diags.error(f.line, col, f"expected START-END in ms, got {part!r}")
                bad = True
            else:
                s, e = int(m.group(1)), int(m.group(2))
                if s < 0 or e < 0:
                    diags.error(f.line, col, f"negative times are not allowed ({part})")
                    bad = True
                elif e <= s:
                    diags.error(f.line, col, f"empty outage interval {part}")
                    bad = True
                else:
                    out.append((s, e))
        col += len(part) + 1
    return None if bad else out


def load_machine(path: Union[str, Path]) -> MachineDef:
    return parse_machine(Path(path).read_bytes())


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_bytes(), base_dir=path.parent)


def serialize_scenario(sc: Scenario) -> str:
    """Write ``sc`` back as a document; behaviors are referenced by ``behavior_path``."""
    out = ["version: 1", "", "[scenario]", f"name: {sc.name}"]
    if sc.mission_id != sc.name:
        out.append(f"mission: {sc.mission_id}")
    out += [f"seed: {sc.seed}", f"epochs: {sc.epochs}", f"horizon: {sc.horizon}",
            f"ping_interval: {sc.ping_interval}", f"latency: {sc.latency}",
            f"feedback_interval: {sc.feedback_interval}", f"head: {sc.head}"]
    for r in sc.robots:
        if r.behavior_path is None:
            raise ValueError(f"robot {r.id} has no behavior_path")
        out += ["", f"[robot {r.id}]", f"domain: {r.domain}", f"behavior: {r.behavior_path}",
                f"successor: {r.successor or 'none'}", f"trigger_topic: {r.trigger_topic}"]
        if r.probe_peer is not None:
            out.append(f"probe_peer: {r.probe_peer}")
        out.append(f"ping_interval: {r.ping_interval}")
        for a in r.actuators:
            out += ["", f"[actuator {r.id} {a.id}]", f"server: {a.server}",
                    f"position: {a.position}", f"min: {a.min}", f"max: {a.max}",
                    f"speed: {a.speed}"]
        if r.params:
            out += ["", f"[params {r.id}]"]
            out += [f"{k}: {_format_scalar(v)}" for k, v in sorted(r.params.items())]
    for rule in sorted(sc.bridge_rules):
        out += ["", f"[bridge {rule.from_domain} {rule.to_domain} {rule.topic}]"]
    for sched in sc.links:
        out += ["", f"[link {sched.a} {sched.b}]"]
        if sched.outages:
            out.append("outages: " + " ".join(f"{s}-{e}" for s, e in sched.outages))
    return "\n".join(out) + "\n"
