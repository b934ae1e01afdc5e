"""Per-agent trigger-gated handoff.

Every agent waits for a trigger on its own topic, runs its behavior, then
probes its successor every ``ping_interval`` ms and publishes the
successor's trigger at the first successful probe. Triggers are
deduplicated on ``(mission_id, epoch, sender)``.

The epoch increments whenever a trigger is sent back to the chain head, so
a Deployer -> Stinger -> Deployer loop runs one epoch per cycle.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .agents import ActionServer, MoveMotorGoal, TimerServer
from .bus import Envelope, MessageBus
from .events import Kind
from .hfsm import (ActionResult, Execution, ExecutionContext, GoalRequest, MachineDef, Phase,
                   ResultStatus)
from .scheduler import RANK_DELIVERY, RANK_PROBE, Scheduler

log = logging.getLogger(__name__)

DEFAULT_PING_INTERVAL = 500
SUCCESS_OUTCOME = "finished"


@dataclass
class RobotSpec:
    id: str
    domain: int
    behavior: MachineDef
    successor: Optional[str] = None
    trigger_topic: Optional[str] = None
    probe_peer: Optional[str] = None
    ping_interval: int = DEFAULT_PING_INTERVAL
    actuators: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    behavior_path: Optional[str] = None

    def __post_init__(self) -> None:
        if self.trigger_topic is None:
            self.trigger_topic = f"trigger_{self.id}"
        if self.probe_peer is None:
            self.probe_peer = self.successor
        if self.ping_interval <= 0:
            raise ValueError("ping_interval must be positive")


@dataclass(frozen=True)
class TriggerMessage:
    mission_id: str
    epoch: int
    sender: str
    sent_at: int

    @property
    def key(self) -> tuple:
        return (self.mission_id, self.epoch, self.sender)


class CoordinatorPhase(enum.Enum):
    WAITING = "WaitingForTrigger"
    EXECUTING = "Executing"
    AWAITING = "AwaitingReachability"
    SENT = "TriggerSent"
    DONE = "MissionDone"
    FAULTED = "Faulted"


class Verdict(enum.Enum):
    ACCEPTED = "Accepted"
    DUPLICATE = "Duplicate"
    WRONG_PHASE = "WrongPhase"


_LEGAL = {
    CoordinatorPhase.WAITING: {CoordinatorPhase.EXECUTING, CoordinatorPhase.DONE,
                               CoordinatorPhase.FAULTED},
    CoordinatorPhase.EXECUTING: {CoordinatorPhase.AWAITING, CoordinatorPhase.DONE,
                                 CoordinatorPhase.FAULTED},
    CoordinatorPhase.AWAITING: {CoordinatorPhase.SENT, CoordinatorPhase.FAULTED},
    CoordinatorPhase.SENT: {CoordinatorPhase.WAITING, CoordinatorPhase.DONE},
    CoordinatorPhase.DONE: set(),
    CoordinatorPhase.FAULTED: set(),
}


def await_reachability(is_up: Callable[[int], bool], start: int, interval: int,
                       horizon: Optional[int] = None, outages=()) -> Optional[int]:
    """Smallest ``start + k*interval`` (k >= 0) at which ``is_up`` holds.

    When ``outages`` (sorted disjoint ``[s, e)`` pairs) is given, probe
    instants inside an outage are skipped arithmetically instead of one by
    one. Returns ``None`` past ``horizon``.
    """
    t = start
    i = 0
    while horizon is None or t <= horizon:
        while i < len(outages) and outages[i][1] <= t:
            i += 1
        if i < len(outages) and outages[i][0] <= t:
            end = outages[i][1]
            t = start + -(-(end - start) // interval) * interval
            continue
        if is_up(t):
            return t
        t += interval
    return None


class Coordinator:
    """The trigger bookkeeping of one agent, independent of any transport."""

    def __init__(self, spec: RobotSpec, mission_id: str, epochs: int = 1,
                 head: bool = False, cyclic: bool = False, head_id: Optional[str] = None):
        self.spec = spec
        self.mission_id = mission_id
        self.epochs = epochs
        self.head = head
        self.cyclic = cyclic
        self.head_id = head_id
        self.phase = CoordinatorPhase.WAITING
        self.epoch: Optional[int] = None
        self.seen: set = set()
        self.history: list = [self.phase]
        self.on_settle: Optional[Callable[[], None]] = None

    def _to(self, phase: CoordinatorPhase) -> None:
        if phase not in _LEGAL[self.phase]:
            raise RuntimeError(f"{self.spec.id}: illegal phase change {self.phase.value} -> {phase.value}")
        self.phase = phase
        self.history.append(phase)
        if phase in (CoordinatorPhase.DONE, CoordinatorPhase.FAULTED) and self.on_settle:
            self.on_settle()

    def on_trigger(self, msg: TriggerMessage, t: int) -> Verdict:
        if self.phase is not CoordinatorPhase.WAITING:
            return Verdict.WRONG_PHASE
        if msg.key in self.seen:
            return Verdict.DUPLICATE
        self.seen.add(msg.key)
        self.epoch = msg.epoch
        return Verdict.ACCEPTED

    def closes_mission(self, msg: TriggerMessage) -> bool:
        """An accepted trigger that carries the head past its last epoch."""
        return self.head and self.cyclic and msg.epoch >= self.epochs

    def outgoing_epoch(self) -> int:
        return self.epoch + 1 if self.spec.successor == self.head_id else self.epoch

    def final_epoch(self) -> bool:
        return self.epoch >= self.epochs - 1


class AgentProcess:
    """An agent wired to the scheduler, bus and its simulated hardware.

    ``record(agent, kind, **detail)`` receives every event the agent emits.
    """

    def __init__(self, coord: Coordinator, scheduler: Scheduler, bus: MessageBus,
                 record: Callable[..., None], horizon: int,
                 successor_topic: Optional[str] = None, feedback_interval: int = 250):
        self.coord = coord
        self.spec = coord.spec
        self.scheduler = scheduler
        self.bus = bus
        self.horizon = horizon
        self._record = record
        self._successor_topic = successor_topic
        self.execution: Optional[Execution] = None
        self.completed_at: Optional[int] = None
        self.fault: Optional[str] = None
        self.started_epochs: list = []

        emit = self.emit
        servers: dict = {}
        for act in self.spec.actuators:
            # a private copy: positions change during a run, the scenario must not
            servers.setdefault(act.server, []).append(dataclasses.replace(act))
        self.servers = {name: ActionServer(name, acts, scheduler, emit, feedback_interval,
                                           agent=self.spec.id)
                        for name, acts in servers.items()}
        self.timer = TimerServer(scheduler, emit, agent=self.spec.id)

        bus.register(self.spec.id, self.spec.domain)
        bus.subscribe(self.spec.domain, self.spec.trigger_topic, self.spec.id, self._on_envelope)

    @property
    def phase(self) -> CoordinatorPhase:
        return self.coord.phase

    def emit(self, kind, detail: Optional[dict] = None, **more) -> None:
        if detail:
            more.update(detail)
        self._record(self.spec.id, kind, **more)

    # -- trigger intake ------------------------------------------------------

    def _on_envelope(self, env: Envelope) -> None:
        msg = env.payload
        self.emit(Kind.TriggerReceived, mission=msg.mission_id, epoch=msg.epoch, sender=msg.sender,
                  sent_at=msg.sent_at, envelope=env.id, topic=env.topic, domain=env.domain,
                  pub_domain=env.pub_domain, bridged=env.bridged,
                  latency=env.delivery_time - env.publish_time,
                  legs=",".join(str(x) for x in env.legs))
        self.handle_trigger(msg)

    def inject(self, msg: TriggerMessage, t: int) -> None:
        """Deliver ``msg`` straight to this agent at ``t``, bypassing the bus."""
        def fire() -> None:
            self.emit(Kind.TriggerReceived, mission=msg.mission_id, epoch=msg.epoch,
                      sender=msg.sender, sent_at=msg.sent_at, topic=self.spec.trigger_topic,
                      injected=1)
            self.handle_trigger(msg)
        self.scheduler.at(t, fire, agent=self.spec.id, rank=RANK_DELIVERY)

    def handle_trigger(self, msg: TriggerMessage) -> Verdict:
        t = self.scheduler.now
        verdict = self.coord.on_trigger(msg, t)
        if verdict is not Verdict.ACCEPTED:
            log.info("%s ignored trigger %s at %d (%s)", self.spec.id, msg.key, t, verdict.value)
            self.emit(Kind.TriggerIgnored, reason=verdict.value, epoch=msg.epoch,
                      sender=msg.sender, phase=self.coord.phase.value)
            return verdict
        if self.coord.closes_mission(msg):
            self.coord._to(CoordinatorPhase.DONE)
            self.emit(Kind.MissionDone, epoch=msg.epoch)
            return verdict
        self._start_behavior(msg.epoch)
        return verdict

    # -- behavior execution ----------------------------------------------------

    def _start_behavior(self, epoch: int) -> None:
        self.coord._to(CoordinatorPhase.EXECUTING)
        self.started_epochs.append(epoch)
        self.emit(Kind.BehaviorStarted, epoch=epoch, behavior=self.spec.behavior.name)
        ctx = ExecutionContext(self.spec.params)
        ctx["epoch"] = epoch
        self.execution = Execution(self.spec.behavior, ctx, clock=lambda: self.scheduler.now,
                                   dispatch=self._dispatch,
                                   emit=lambda kind, d: self.emit(kind, d, epoch=epoch))
        self.execution.start()
        self._check_execution()

    def _dispatch(self, req: GoalRequest) -> None:
        execution = self.execution

        def on_result(res: ActionResult) -> None:
            if self.execution is execution:
                execution.on_action_result(res)
                self._check_execution()

        if req.server == self.timer.name:
            self.timer.submit_goal(req.goal.get("ms"), on_result=on_result, goal_id=req.goal_id)
            return
        server = self.servers.get(req.server)
        if server is None:
            self.emit(Kind.ActionRejected, server=req.server, goal=req.goal_id,
                      reason="unknown server")
            res = ActionResult(req.goal_id, ResultStatus.REJECTED, None, 0, "unknown server")
            self.scheduler.at(self.scheduler.now, lambda: on_result(res), agent=self.spec.id)
            return
        goal = MoveMotorGoal(str(req.goal.get("actuator")), req.goal.get("target"))
        server.submit_goal(goal, on_result=on_result, goal_id=req.goal_id)

    def _check_execution(self) -> None:
        st = self.execution.status
        if st.phase is Phase.FAULTED:
            self._fail(f"behavior faulted: {st.reason}")
        elif st.phase is Phase.COMPLETED:
            self.emit(Kind.BehaviorCompleted, epoch=self.coord.epoch, outcome=st.outcome)
            if st.outcome != SUCCESS_OUTCOME:
                self._fail(f"behavior ended with outcome {st.outcome}")
                return
            self.completed_at = self.scheduler.now
            if self.spec.successor is None:
                self.coord._to(CoordinatorPhase.DONE)
                self.emit(Kind.MissionDone, epoch=self.coord.epoch)
                return
            self.coord._to(CoordinatorPhase.AWAITING)
            self._probe_at(self.scheduler.now)

    def time_out(self) -> None:
        """Horizon reached without settling: record the phase it was stuck in."""
        if self.phase in (CoordinatorPhase.DONE, CoordinatorPhase.FAULTED):
            return
        stuck = self.phase
        self.fault = "horizon reached"
        self.coord._to(CoordinatorPhase.FAULTED)
        self.emit(Kind.Fault, reason="TimedOut", phase=stuck.value, epoch=self.coord.epoch)

    def _fail(self, reason: str, kind: str = "FaultedEpoch") -> None:
        self.fault = reason
        self.coord._to(CoordinatorPhase.FAULTED)
        self.emit(Kind.Fault, reason=kind, message=reason, epoch=self.coord.epoch)

    # -- reachability and trigger release --------------------------------------

    def _probe_at(self, t: int) -> None:
        if t > self.horizon:
            self.scheduler.at(max(self.horizon, self.scheduler.now),
                              lambda: self._fail("no successful probe before horizon",
                                                 "TimedOutEpoch"),
                              agent=self.spec.id, rank=RANK_PROBE)
            return
        self.scheduler.at(t, self._probe, agent=self.spec.id, rank=RANK_PROBE)

    def _probe(self) -> None:
        t = self.scheduler.now
        peer = self.spec.probe_peer
        self.emit(Kind.PingAttempt, peer=peer, epoch=self.coord.epoch)
        ok = self.bus.probe(self.spec.id, peer, t)
        self.emit(Kind.PingResult, peer=peer, ok=ok, epoch=self.coord.epoch)
        if ok:
            self.emit_trigger(t)
        else:
            self._probe_at(t + self.spec.ping_interval)

    def emit_trigger(self, t: int) -> None:
        epoch = self.coord.outgoing_epoch()
        successor = self.spec.successor
        msg = TriggerMessage(self.coord.mission_id, epoch, self.spec.id, t)
        topic = self._successor_topic
        self.emit(Kind.TriggerPublished, mission=msg.mission_id, epoch=epoch, sender=self.spec.id,
                  target=successor, topic=topic,
                  wait=t - self.completed_at if self.completed_at is not None else None)
        self.bus.publish(self.spec.id, topic, msg, t)
        self.coord._to(CoordinatorPhase.SENT)
        if self.coord.final_epoch() and not (self.coord.head and self.coord.cyclic):
            self.coord._to(CoordinatorPhase.DONE)
            self.emit(Kind.MissionDone, epoch=self.coord.epoch)
        else:
            self.coord._to(CoordinatorPhase.WAITING)
