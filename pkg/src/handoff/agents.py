"""Simulated robot hardware and the Deployer / Stinger behavior fixtures.

The ``move_motor`` style :class:`ActionServer` drives one actuator at a
time at constant speed. :class:`TimerServer` backs the wait states used by
the retry branches of the fixtures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Union

from .hfsm import ActionRef, ActionResult, MachineDef, ResultStatus, StateDef
from .scheduler import RANK_ACTION, Scheduler

DEFAULT_FEEDBACK_INTERVAL = 250


@dataclass
class ActuatorModel:
    id: str
    position: int
    min: int
    max: int
    speed: Union[int, float]  # ticks per second
    server: str = "move_motor"

    def __post_init__(self) -> None:
        if self.min > self.max:
            raise ValueError(f"actuator {self.id}: min > max")
        if not self.min <= self.position <= self.max:
            raise ValueError(f"actuator {self.id}: position outside limits")
        if self.speed <= 0:
            raise ValueError(f"actuator {self.id}: speed must be positive")

    def travel_ms(self, target: int) -> int:
        return math.ceil(Fraction(abs(target - self.position) * 1000) / Fraction(self.speed))


@dataclass(frozen=True)
class MoveMotorGoal:
    actuator: str
    target: int


@dataclass(frozen=True)
class GoalAccepted:
    goal_id: int
    expected_end: int


@dataclass(frozen=True)
class GoalRejected:
    reason: str


@dataclass
class _ActiveGoal:
    goal_id: int
    goal: MoveMotorGoal
    start: int
    end: int
    start_position: int
    duration: int
    aborts: bool


def _noop_emit(kind: str, detail: dict) -> None:
    pass


def interpolate(start: int, target: int, elapsed: int, duration: int) -> int:
    """Position on the straight line from ``start`` to ``target``, rounded to a tick."""
    if duration <= 0:
        return target
    return round(start + Fraction((target - start) * elapsed, duration))


class ActionServer:
    """Goal/feedback/result endpoint owning a set of actuators.

    At most one goal is active; a goal submitted while busy is rejected
    with reason ``"busy"``.
    """

    def __init__(self, name: str, actuators, scheduler: Scheduler,
                 emit: Callable[[str, dict], None] = _noop_emit,
                 feedback_interval: int = DEFAULT_FEEDBACK_INTERVAL, agent: str = ""):
        self.name = name
        self.actuators = {a.id: a for a in actuators}
        self.scheduler = scheduler
        self.emit = emit
        self.feedback_interval = feedback_interval
        self.agent = agent
        self.active: Optional[_ActiveGoal] = None
        self._ids = 0
        self._abort_next: dict = {}

    @property
    def busy(self) -> bool:
        return self.active is not None

    def inject_abort(self, actuator: str, fraction: Fraction = Fraction(1, 2)) -> None:
        """Make the next goal on ``actuator`` abort after ``fraction`` of its travel."""
        self._abort_next[actuator] = Fraction(fraction)

    def _reject(self, goal_id: int, reason: str, t: int, on_result) -> GoalRejected:
        self.emit("ActionRejected", {"server": self.name, "goal": goal_id, "reason": reason})
        if on_result is not None:
            res = ActionResult(goal_id, ResultStatus.REJECTED, None, 0, reason)
            self.scheduler.at(t, lambda: on_result(res), agent=self.agent, rank=RANK_ACTION)
        return GoalRejected(reason)

    def submit_goal(self, goal: MoveMotorGoal, t: Optional[int] = None,
                    on_result: Optional[Callable[[ActionResult], None]] = None,
                    goal_id: Optional[int] = None):
        t = self.scheduler.now if t is None else t
        if goal_id is None:
            self._ids += 1
            goal_id = self._ids
        if self.busy:
            return self._reject(goal_id, "busy", t, on_result)
        act = self.actuators.get(goal.actuator)
        if act is None:
            return self._reject(goal_id, "unknown actuator", t, on_result)
        target = goal.target
        if isinstance(target, float) and target.is_integer():
            target = int(target)
        if not isinstance(target, int) or isinstance(target, bool):
            return self._reject(goal_id, "bad target", t, on_result)
        if not act.min <= target <= act.max:
            return self._reject(goal_id, "limit", t, on_result)

        duration = act.travel_ms(target)
        fraction = self._abort_next.pop(act.id, None)
        end = t + (duration if fraction is None else math.floor(duration * fraction))
        active = _ActiveGoal(goal_id, MoveMotorGoal(act.id, target), t, end, act.position,
                             duration, fraction is not None)
        self.active = active
        self.emit("ActionStarted", {"server": self.name, "goal": goal_id, "actuator": act.id,
                                    "from": act.position, "target": target,
                                    "expected_end": t + duration})
        if self.feedback_interval > 0:
            k = 1
            while t + k * self.feedback_interval < end:
                ft = t + k * self.feedback_interval
                self.scheduler.at(ft, lambda ft=ft: self._feedback(active, ft),
                                  agent=self.agent, rank=RANK_ACTION)
                k += 1
        self.scheduler.at(end, lambda: self._finish(active, on_result),
                          agent=self.agent, rank=RANK_ACTION)
        return GoalAccepted(goal_id, t + duration)

    def _feedback(self, active: _ActiveGoal, t: int) -> None:
        pos = interpolate(active.start_position, active.goal.target, t - active.start,
                          active.duration)
        self.emit("ActionFeedback", {"server": self.name, "goal": active.goal_id,
                                     "actuator": active.goal.actuator, "position": pos})

    def _finish(self, active: _ActiveGoal, on_result) -> None:
        act = self.actuators[active.goal.actuator]
        elapsed = active.end - active.start
        if active.aborts:
            status = ResultStatus.ABORTED
            act.position = interpolate(active.start_position, active.goal.target, elapsed,
                                       active.duration)
        else:
            status = ResultStatus.SUCCEEDED
            act.position = active.goal.target
        self.active = None
        self.emit("ActionCompleted", {"server": self.name, "goal": active.goal_id,
                                      "actuator": act.id, "status": status.value,
                                      "position": act.position, "duration": elapsed})
        if on_result is not None:
            on_result(ActionResult(active.goal_id, status, act.position, elapsed))


class TimerServer:
    """Action server whose goal is simply ``{"ms": n}``."""

    name = "wait"

    def __init__(self, scheduler: Scheduler, emit: Callable[[str, dict], None] = _noop_emit,
                 agent: str = ""):
        self.scheduler = scheduler
        self.emit = emit
        self.agent = agent

    def submit_goal(self, ms: int, t: Optional[int] = None, on_result=None, goal_id: int = 0):
        t = self.scheduler.now if t is None else t
        if not isinstance(ms, int) or ms < 0:
            self.emit("ActionRejected", {"server": self.name, "goal": goal_id, "reason": "bad duration"})
            if on_result is not None:
                res = ActionResult(goal_id, ResultStatus.REJECTED, None, 0, "bad duration")
                self.scheduler.at(t, lambda: on_result(res), agent=self.agent)
            return GoalRejected("bad duration")
        self.emit("ActionStarted", {"server": self.name, "goal": goal_id, "ms": ms,
                                    "expected_end": t + ms})

        def done() -> None:
            self.emit("ActionCompleted", {"server": self.name, "goal": goal_id,
                                          "status": "succeeded", "duration": ms})
            if on_result is not None:
                on_result(ActionResult(goal_id, ResultStatus.SUCCEEDED, None, ms))

        self.scheduler.at(t + ms, done, agent=self.agent, rank=RANK_ACTION)
        return GoalAccepted(goal_id, t + ms)


# -- behavior fixtures ------------------------------------------------------

DEPLOYER_DEFAULTS = {"home": 0, "pick": 1200, "grip": 100, "deploy": 3000, "retry_ms": 500}
STINGER_DEFAULTS = {"left_target": 400, "right_target": 400, "third_target": None,
                    "retry_ms": 500}


def _motion_state(name: str, server: str, actuator: str, target, success: str = "reached"):
    action = ActionRef(server, {"actuator": actuator, "target": target},
                       on_success=success, on_abort="aborted")
    return StateDef.atomic(name, action, {success, "aborted", "rejected"})


def _retry_state(name: str, ms) -> StateDef:
    return StateDef.atomic(name, ActionRef("wait", {"ms": ms}, on_success="done"), {"done"})


def _linear(name: str, steps, success: str, failure: str, retry_ms) -> MachineDef:
    """Chain ``steps`` = [(state, server, actuator, target, success_outcome)]
    with abort -> ``failure`` and rejected -> a retry wait per step."""
    states, transitions = {}, {}
    for i, (state, server, actuator, target, ok) in enumerate(steps):
        nxt = steps[i + 1][0] if i + 1 < len(steps) else success
        retry = f"{state}Retry"
        states[state] = _motion_state(state, server, actuator, target, ok)
        states[retry] = _retry_state(retry, retry_ms)
        transitions[(state, ok)] = nxt
        transitions[(state, "aborted")] = failure
        transitions[(state, "rejected")] = retry
        transitions[(retry, "done")] = state
    return MachineDef(name, states, steps[0][0], transitions, {success, failure})


def build_deployer_machine(params: Optional[dict] = None) -> MachineDef:
    """Pick the Stinger up with the arm and carry it to the deployment pose.

    MoveToHome -> MoveToPickPose -> Pick -> MoveToDeployPose -> finished.
    The last state is the one whose completion releases the trigger.
    """
    p = {**DEPLOYER_DEFAULTS, **(params or {})}
    steps = [
        ("MoveToHome", "arm", "arm", p["home"], "reached"),
        ("MoveToPickPose", "arm", "arm", p["pick"], "reached"),
        ("Pick", "arm", "gripper", p["grip"], "grasped"),
        ("MoveToDeployPose", "arm", "arm", p["deploy"], "reached"),
    ]
    return _linear("Deployer", steps, "finished", "failed", p["retry_ms"])


def build_stinger_machine(params: Optional[dict] = None) -> MachineDef:
    """Centering: move the side legs one after the other, then finish.

    A third leg is appended to the Centering sequence when ``third_target``
    is given.
    """
    p = {**STINGER_DEFAULTS, **(params or {})}
    steps = [
        ("LeftLeg", "move_motor", "left_leg", p["left_target"], "reached"),
        ("RightLeg", "move_motor", "right_leg", p["right_target"], "reached"),
    ]
    if p.get("third_target") is not None:
        steps.append(("ThirdLeg", "move_motor", "third_leg", p["third_target"], "reached"))
    legs = _linear("CenteringLegs", steps, "centered", "failed", p["retry_ms"])
    centering = StateDef.composite("Centering", legs, {"centered": "done", "failed": "failed"})
    return MachineDef("Stinger", {"Centering": centering}, "Centering",
                      {("Centering", "done"): "finished", ("Centering", "failed"): "failed"},
                      {"finished", "failed"})


def build_chain_machine(name: str, moves, server: str = "move_motor",
                        retry_ms: int = 500) -> MachineDef:
    """Generic linear behavior: one move per ``(actuator, target)`` pair."""
    steps = [(f"Step{i + 1}", server, actuator, target, "reached")
             for i, (actuator, target) in enumerate(moves)]
    if not steps:
        raise ValueError("a chain machine needs at least one move")
    return _linear(name, steps, "finished", "failed", retry_ms)


def deployer_actuators(arm_position: int = 200) -> list:
    return [ActuatorModel("arm", arm_position, 0, 4000, 500, server="arm"),
            ActuatorModel("gripper", 0, 0, 100, 100, server="arm")]


def stinger_actuators(third_leg: bool = False) -> list:
    legs = [ActuatorModel("left_leg", 0, 0, 1000, 100),
            ActuatorModel("right_leg", 0, 0, 1000, 100)]
    if third_leg:
        legs.append(ActuatorModel("third_leg", 0, 0, 1000, 100))
    return legs
