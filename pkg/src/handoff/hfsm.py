"""Hierarchical finite state machines with asynchronous atomic states.

A machine is a set of named states plus a transition table keyed by
``(state, outcome)``. Atomic states dispatch one action goal on entry and
wait for its result; composite states run a nested child machine and map
the child's terminal outcome onto one of their own outcomes.

Execution is non-blocking and single-clocked: :class:`Execution` only moves
when :meth:`Execution.on_action_result` is called.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping, Optional, Union

# Emitted by any atomic state whose goal was refused by the action server.
REJECTED = "rejected"

ATOMIC = "atomic"
COMPOSITE = "composite"


class TransitionError(LookupError):
    """Raised by :func:`resolve_transition` for an undeclared (state, outcome) pair."""


class InvalidMachineError(ValueError):
    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__("; ".join(str(d) for d in report.diagnostics))


@dataclass(frozen=True)
class ActionRef:
    """Which action server an atomic state calls and with what goal.

    Goal values that are strings beginning with ``$`` are read from the
    execution context when the state is entered.
    """

    server: str
    goal: Mapping[str, Union[int, float, str]] = field(default_factory=dict)
    on_success: str = "done"
    on_abort: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "goal", dict(self.goal))

    def __hash__(self) -> int:
        return hash((self.server, tuple(sorted(self.goal.items())), self.on_success, self.on_abort))


@dataclass(frozen=True)
class StateDef:
    name: str
    kind: str
    outcomes: frozenset
    action: Optional[ActionRef] = None
    child: Optional["MachineDef"] = None
    outcome_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "outcomes", frozenset(self.outcomes))
        object.__setattr__(self, "outcome_map", dict(self.outcome_map))

    def __hash__(self) -> int:
        return hash((self.name, self.kind, self.outcomes))

    @classmethod
    def atomic(cls, name: str, action: ActionRef, outcomes) -> "StateDef":
        return cls(name=name, kind=ATOMIC, outcomes=frozenset(outcomes), action=action)

    @classmethod
    def composite(cls, name: str, child: "MachineDef", outcome_map: Mapping[str, str],
                  outcomes=None) -> "StateDef":
        if outcomes is None:
            outcomes = set(outcome_map.values())
        return cls(name=name, kind=COMPOSITE, outcomes=frozenset(outcomes),
                   child=child, outcome_map=dict(outcome_map))


@dataclass(frozen=True)
class MachineDef:
    """A (possibly nested) state machine.

    ``transitions`` maps ``(state_name, outcome)`` to either another state
    name or one of ``terminal_outcomes``. Equality ignores declaration order.
    """

    name: str
    states: Mapping[str, StateDef]
    initial: str
    transitions: Mapping[tuple, str]
    terminal_outcomes: frozenset

    def __post_init__(self) -> None:
        states = self.states
        if not isinstance(states, Mapping):
            states = {s.name: s for s in states}
        object.__setattr__(self, "states", dict(states))
        object.__setattr__(self, "transitions", dict(self.transitions))
        object.__setattr__(self, "terminal_outcomes", frozenset(self.terminal_outcomes))

    def __hash__(self) -> int:
        return hash((self.name, self.initial, self.terminal_outcomes))

    def walk(self) -> Iterator["MachineDef"]:
        """Yield this machine and every nested child machine, depth first."""
        yield self
        for name in sorted(self.states):
            child = self.states[name].child
            if child is not None:
                yield from child.walk()


@dataclass(frozen=True)
class Diagnostic:
    locus: str
    message: str

    def __str__(self) -> str:
        return f"{self.locus}: {self.message}"


@dataclass
class ValidationReport:
    diagnostics: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def __bool__(self) -> bool:
        return self.ok


def validate_machine(machine: MachineDef) -> ValidationReport:
    """Check every structural invariant, recursing into composite states.

    All violations are collected; nothing is raised.
    """
    report = ValidationReport()
    _validate(machine, machine.name, report.diagnostics, seen=())
    return report


def _validate(m: MachineDef, where: str, out: list, seen: tuple) -> None:
    def diag(locus: str, msg: str) -> None:
        out.append(Diagnostic(locus, msg))

    if m.name in seen:
        diag(where, f"machine {m.name!r} contains itself")
        return
    seen = seen + (m.name,)

    if not m.name:
        diag(where, "empty machine name")
    if not m.terminal_outcomes:
        diag(where, "machine declares no terminal outcomes")
    for label in m.terminal_outcomes:
        if not label:
            diag(where, "empty terminal outcome label")
    clash = set(m.states) & set(m.terminal_outcomes)
    for name in sorted(clash):
        diag(f"{where}/{name}", "name used both as state and as terminal outcome")
    if m.initial not in m.states:
        diag(where, f"initial state {m.initial!r} does not exist")

    for key, st in sorted(m.states.items()):
        loc = f"{where}/{key}"
        if st.name != key:
            diag(loc, f"state registered under {key!r} but named {st.name!r}")
        if not st.outcomes:
            diag(loc, "state declares no outcomes")
        if any(not o for o in st.outcomes):
            diag(loc, "empty outcome label")
        if st.kind == ATOMIC:
            if st.action is None:
                diag(loc, "atomic state has no action binding")
            else:
                if st.action.on_success not in st.outcomes:
                    diag(loc, f"success outcome {st.action.on_success!r} is not declared")
                if st.action.on_abort is not None and st.action.on_abort not in st.outcomes:
                    diag(loc, f"abort outcome {st.action.on_abort!r} is not declared")
            if st.child is not None:
                diag(loc, "atomic state must not have a child machine")
        elif st.kind == COMPOSITE:
            if st.child is None:
                diag(loc, "composite state has no child machine")
            else:
                if st.action is not None:
                    diag(loc, "composite state must not have an action binding")
                missing = st.child.terminal_outcomes - set(st.outcome_map)
                for o in sorted(missing):
                    diag(loc, f"outcome_map does not cover child outcome {o!r}")
                extra = set(st.outcome_map) - st.child.terminal_outcomes
                for o in sorted(extra):
                    diag(loc, f"outcome_map key {o!r} is not a child terminal outcome")
                for src, dst in sorted(st.outcome_map.items()):
                    if dst not in st.outcomes:
                        diag(loc, f"outcome_map sends {src!r} to undeclared outcome {dst!r}")
                _validate(st.child, f"{loc}", out, seen)
        else:
            diag(loc, f"unknown state kind {st.kind!r}")

        for o in sorted(st.outcomes):
            if (key, o) not in m.transitions:
                diag(f"{where}/({key}, {o})", "missing transition for declared outcome")

    for (src, outcome), target in sorted(m.transitions.items()):
        loc = f"{where}/({src}, {outcome})"
        if src not in m.states:
            diag(loc, "transition from unknown state")
            continue
        if outcome not in m.states[src].outcomes:
            diag(loc, "transition on undeclared outcome")
        if target not in m.states and target not in m.terminal_outcomes:
            diag(loc, f"unknown transition target {target!r}")

    if m.initial in m.states:
        reached = {m.initial}
        queue = deque([m.initial])
        while queue:
            s = queue.popleft()
            for o in m.states[s].outcomes:
                nxt = m.transitions.get((s, o))
                if nxt in m.states and nxt not in reached:
                    reached.add(nxt)
                    queue.append(nxt)
        for name in sorted(set(m.states) - reached):
            diag(f"{where}/{name}", "state is unreachable from initial")


def resolve_transition(machine: MachineDef, state: str, outcome: str) -> str:
    try:
        return machine.transitions[(state, outcome)]
    except KeyError:
        raise TransitionError(f"unmapped outcome {outcome!r} of state {state!r}") from None


class ExecutionContext(dict):
    """Userdata shared by the states of one execution.

    Reading a key nobody wrote is a fault, not a default.
    """

    def read(self, key: str):
        if key not in self:
            raise KeyError(f"missing context key {key!r}")
        return self[key]


class Phase(enum.Enum):
    IDLE = "Idle"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAULTED = "Faulted"


@dataclass(frozen=True)
class ExecutionStatus:
    phase: Phase
    path: tuple = ()
    outcome: Optional[str] = None
    reason: Optional[str] = None

    @property
    def running(self) -> bool:
        return self.phase is Phase.RUNNING

    @property
    def done(self) -> bool:
        return self.phase in (Phase.COMPLETED, Phase.FAULTED)


class ResultStatus(str, enum.Enum):
    SUCCEEDED = "succeeded"
    ABORTED = "aborted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ActionResult:
    goal_id: int
    status: ResultStatus
    final_position: Optional[float] = None
    duration: int = 0
    reason: Optional[str] = None


@dataclass(frozen=True)
class GoalRequest:
    """What an atomic state hands to the outside world on entry."""

    goal_id: int
    path: tuple
    server: str
    goal: Mapping[str, Any]


def _default_clock() -> int:
    return 0


class Execution:
    """One run of a validated machine.

    ``dispatch`` receives a :class:`GoalRequest` every time an atomic state
    is entered. ``emit(kind, detail)`` receives StateEntered / StateExited
    records; every record is also appended to :attr:`trace` with the clock
    reading at emission time.
    """

    def __init__(self, machine: MachineDef, ctx: Optional[ExecutionContext] = None,
                 clock: Callable[[], int] = _default_clock,
                 dispatch: Optional[Callable[[GoalRequest], None]] = None,
                 emit: Optional[Callable[[str, dict], None]] = None):
        self.machine = machine
        self.ctx = ctx if ctx is not None else ExecutionContext()
        self.clock = clock
        self._dispatch = dispatch
        self._emit = emit
        self.trace: list = []
        self.requests: list = []
        self._frames: list = []  # [(MachineDef, state name)], root first
        self._status = ExecutionStatus(Phase.IDLE)
        self._next_goal = 1
        self._in_flight: Optional[int] = None

    @property
    def status(self) -> ExecutionStatus:
        return self._status

    @property
    def in_flight(self) -> Optional[int]:
        return self._in_flight

    def _record(self, kind: str, **detail) -> None:
        self.trace.append((self.clock(), kind, tuple(sorted(detail.items()))))
        if self._emit is not None:
            self._emit(kind, detail)

    def _path(self) -> tuple:
        return tuple(name for _, name in self._frames)

    def _fault(self, reason: str) -> ExecutionStatus:
        self._in_flight = None
        self._status = ExecutionStatus(Phase.FAULTED, self._path(), reason=reason)
        return self._status

    def start(self) -> ExecutionStatus:
        if self._status.phase is not Phase.IDLE:
            raise RuntimeError("execution already started")
        self._enter(self.machine, self.machine.initial)
        return self._status

    def _enter(self, machine: MachineDef, name: str) -> None:
        while True:
            self._frames.append((machine, name))
            st = machine.states[name]
            self._record("StateEntered", path="/".join(self._path()), state=name)
            if st.kind == COMPOSITE:
                machine, name = st.child, st.child.initial
                continue
            break
        self._status = ExecutionStatus(Phase.RUNNING, self._path())
        self._send_goal(st)

    def _send_goal(self, st: StateDef) -> None:
        goal = {}
        try:
            for key, value in st.action.goal.items():
                if isinstance(value, str) and value.startswith("$"):
                    value = self.ctx.read(value[1:])
                goal[key] = value
        except KeyError as exc:
            self._fault(exc.args[0])
            return
        req = GoalRequest(self._next_goal, self._path(), st.action.server, goal)
        self._next_goal += 1
        self._in_flight = req.goal_id
        self.requests.append(req)
        if self._dispatch is not None:
            self._dispatch(req)

    def on_action_result(self, result: ActionResult) -> ExecutionStatus:
        if self._status.phase is not Phase.RUNNING:
            return self._status
        if result.goal_id != self._in_flight:
            return self._fault("stale action result")
        self._in_flight = None
        machine, name = self._frames[-1]
        st = machine.states[name]
        status = ResultStatus(result.status)
        self.ctx[f"{name}.status"] = status.value
        if status is ResultStatus.SUCCEEDED:
            outcome = st.action.on_success
        elif status is ResultStatus.ABORTED:
            outcome = st.action.on_abort
            if outcome is None:
                return self._fault(f"state {name!r} has no abort outcome")
        else:
            outcome = REJECTED
        return self._leave_with(outcome)

    def _leave_with(self, outcome: str) -> ExecutionStatus:
        while True:
            machine, name = self._frames[-1]
            st = machine.states[name]
            if outcome not in st.outcomes:
                return self._fault(f"state {name!r} emitted undeclared outcome {outcome!r}")
            try:
                target = resolve_transition(machine, name, outcome)
            except TransitionError as exc:
                return self._fault(str(exc))
            self._record("StateExited", path="/".join(self._path()), state=name, outcome=outcome)
            self._frames.pop()
            if target in machine.states:
                self._enter(machine, target)
                return self._status
            # target is a terminal outcome of `machine`
            if not self._frames:
                self._status = ExecutionStatus(Phase.COMPLETED, (), outcome=target)
                return self._status
            parent_machine, parent_name = self._frames[-1]
            outcome = parent_machine.states[parent_name].outcome_map[target]


def start_execution(machine: MachineDef, ctx: Optional[ExecutionContext] = None,
                    clock: Callable[[], int] = _default_clock,
                    dispatch: Optional[Callable[[GoalRequest], None]] = None,
                    emit: Optional[Callable[[str, dict], None]] = None) -> Execution:
    """Validate ``machine`` and enter its initial state path."""
    report = validate_machine(machine)
    if not report.ok:
        raise InvalidMachineError(report)
    handle = Execution(machine, ctx, clock=clock, dispatch=dispatch, emit=emit)
    handle.start()
    return handle


def on_action_result(handle: Execution, result: ActionResult) -> ExecutionStatus:
    return handle.on_action_result(result)
