"""Scenario runner, latency statistics and timeline rendering."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

from .bus import MessageBus
from .coordinator import AgentProcess, Coordinator, CoordinatorPhase, TriggerMessage
from .events import NET, OPERATOR, EventLog, EventRecord, Kind, _freeze, format_log
from .scenario import Scenario, errors, validate_scenario
from .scheduler import RANK_HORIZON, RANK_LINK, Scheduler

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(p.message for p in self.problems))


class Simulation:
    """One isolated run: its own scheduler, bus, agents and event log."""

    def __init__(self, sc: Scenario, realtime_scale: Optional[float] = None):
        problems = errors(validate_scenario(sc))
        if problems:
            raise ScenarioError(problems)
        self.scenario = sc
        self.scheduler = Scheduler(realtime_scale)
        self.bus = MessageBus(self.scheduler, sc.latency, sc.seed,
                              domains={r.domain for r in sc.robots})
        self.log = EventLog(meta={"scenario": sc.name, "mission": sc.mission_id,
                                  "seed": sc.seed, "horizon": sc.horizon, "epochs": sc.epochs})
        for rule in sc.bridge_rules:
            self.bus.add_bridge_rule(rule)
        for sched in sc.links:
            self.bus.set_link(sched)
        cyclic = sc.cyclic
        topics = {r.id: r.trigger_topic for r in sc.robots}
        self.agents: dict = {}
        for r in sc.robots:
            coord = Coordinator(r, sc.mission_id, sc.epochs, head=(r.id == sc.head),
                                cyclic=cyclic, head_id=sc.head)
            self.agents[r.id] = AgentProcess(
                coord, self.scheduler, self.bus, self.record, sc.horizon,
                successor_topic=topics.get(r.successor), feedback_interval=sc.feedback_interval)
            coord.on_settle = self._settle
        self._unsettled = len(self.agents)
        self._ran = False

    def record(self, agent: str, kind, **detail) -> None:
        self.log.records.append(EventRecord(self.scheduler.now, agent, Kind(kind), _freeze(detail)))

    def inject_trigger(self, robot: str, msg: TriggerMessage, t: int) -> None:
        """Hand ``msg`` to ``robot`` at time ``t`` without going through the bus."""
        self.agents[robot].inject(msg, t)

    def inject_abort(self, robot: str, actuator: str, fraction=None) -> None:
        for server in self.agents[robot].servers.values():
            if actuator in server.actuators:
                if fraction is None:
                    server.inject_abort(actuator)
                else:
                    server.inject_abort(actuator, fraction)
                return
        raise KeyError(f"{robot} has no actuator {actuator}")

    def _schedule_links(self) -> None:
        for sched in self.scenario.links:
            for start, end in sched.outages:
                for t, kind in ((start, Kind.LinkDown), (end, Kind.LinkUp)):
                    if t <= self.scenario.horizon:
                        self.scheduler.at(t, lambda t=t, kind=kind, s=sched: self.record(
                            NET, kind, a=s.a, b=s.b), agent=NET, rank=RANK_LINK)

    def _settle(self) -> None:
        self._unsettled -= 1

    def _all_settled(self) -> bool:
        return self._unsettled == 0

    def run(self) -> EventLog:
        if self._ran:
            raise RuntimeError("a Simulation runs once")
        self._ran = True
        sc = self.scenario
        self._schedule_links()
        if sc.robots:
            first = TriggerMessage(sc.mission_id, 0, OPERATOR, 0)
            self.agents[sc.head].inject(first, 0)
        for rid, agent in self.agents.items():
            self.scheduler.at(sc.horizon, agent.time_out, agent=rid, rank=RANK_HORIZON)
        self.scheduler.run(until=sc.horizon, stop=self._all_settled)
        faulted = any(a.phase is CoordinatorPhase.FAULTED for a in self.agents.values())
        status = "fault" if faulted else "ok"
        end_t = self.scheduler.now
        self.log.end = {"t": end_t, "status": status}
        return self.log

    @property
    def outcomes(self) -> dict:
        return {rid: a.phase.value for rid, a in self.agents.items()}


def run_scenario(sc: Scenario, seed: Optional[int] = None,
                 realtime_scale: Optional[float] = None) -> EventLog:
    if seed is not None:
        sc = sc.with_seed(seed)
    return Simulation(sc, realtime_scale).run()


def mission_ok(log: EventLog) -> bool:
    return log.end.get("status") == "ok"


# -- latency --------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    count: int = 0
    min_ms: Optional[int] = None
    mean_ms: Optional[float] = None
    max_ms: Optional[int] = None

    @classmethod
    def of(cls, values) -> "Summary":
        values = list(values)
        if not values:
            return cls()
        return cls(len(values), min(values), sum(values) / len(values), max(values))

    def __str__(self) -> str:
        if not self.count:
            return "n=0"
        return f"n={self.count} min={self.min_ms} mean={self.mean_ms:.1f} max={self.max_ms}"


@dataclass
class LatencyStats:
    """``hop``: every single network draw (a bridged trigger contributes two).
    ``trigger``: publish-to-receive per trigger. ``end_to_end``: per epoch,
    from the head's trigger to the last behavior start. ``wait``: time a
    finished agent spent probing before it could publish."""

    hop: Summary
    trigger: Summary
    end_to_end: Summary
    wait: Summary
    per_edge: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    def report(self) -> str:
        lines = [f"hop latency (per network hop):  {self.hop}",
                 f"trigger latency (publish->recv): {self.trigger}",
                 f"end-to-end (head trigger->last start): {self.end_to_end}",
                 f"deferred-trigger wait (completion->publish): {self.wait}"]
        for (src, dst), s in sorted(self.per_edge.items()):
            lines.append(f"  {src} -> {dst}: {s}")
        for v in self.violations:
            lines.append(f"INTEGRITY: {v}")
        return "\n".join(lines)


def compute_latency(log: EventLog) -> LatencyStats:
    published: dict = {}
    for r in log.of(Kind.TriggerPublished):
        published.setdefault((r["mission"], r["epoch"], r.agent), []).append(r)
    received: dict = {}
    for r in log.of(Kind.TriggerReceived):
        if r.get("injected"):
            continue
        received.setdefault((r["mission"], r["epoch"], r["sender"]), []).append(r)

    violations = []
    hops, trig, per_edge = [], [], {}
    for key, pubs in sorted(published.items()):
        recvs = received.get(key, [])
        if len(pubs) != 1:
            violations.append(f"trigger {key} published {len(pubs)} times")
        if len(recvs) != 1:
            violations.append(f"trigger {key} published but received {len(recvs)} times")
        for rec in recvs[:1]:
            lat = rec.t - pubs[0].t
            trig.append(lat)
            per_edge.setdefault((pubs[0].agent, rec.agent), []).append(lat)
            legs = [int(x) for x in str(rec.get("legs", "")).split(",") if x]
            hops.extend(legs)
            if sum(legs) != lat:
                violations.append(f"trigger {key}: legs {legs} do not add up to {lat}")
    for key in sorted(set(received) - set(published)):
        violations.append(f"trigger {key} received but never published")

    e2e = []
    starts = log.of(Kind.BehaviorStarted)
    if starts:
        head = starts[0].agent
        by_epoch: dict = {}
        for r in starts:
            by_epoch.setdefault(r["epoch"], []).append(r)
        for epoch, rs in sorted(by_epoch.items()):
            head_start = [r.t for r in rs if r.agent == head]
            if head_start:
                e2e.append(max(r.t for r in rs) - head_start[0])

    waits = [r["wait"] for r in log.of(Kind.TriggerPublished) if r.get("wait") is not None]
    return LatencyStats(Summary.of(hops), Summary.of(trig), Summary.of(e2e), Summary.of(waits),
                        {k: Summary.of(v) for k, v in per_edge.items()}, violations)


# -- log checks -------------------------------------------------------------

def check_integrity(log: EventLog) -> list:
    """Structural checks on a finished log; returns a list of violations."""
    problems = []
    last = None
    for i, r in enumerate(log.records):
        # link changes first, then agents in id order within one instant
        key = (r.t, 0 if r.agent == NET else 1, r.agent)
        if last is not None and key < last:
            problems.append(f"record {i} ({r.t} {r.agent} {r.kind.value}) breaks the tie order")
        last = key
    problems.extend(compute_latency(log).violations)

    open_goals: dict = {}
    for r in log.records:
        key = (r.agent, r.get("server"), r.get("goal"))
        if r.kind is Kind.ActionStarted:
            if key in open_goals:
                problems.append(f"goal {key} started twice")
            open_goals[key] = r
        elif r.kind is Kind.ActionCompleted:
            if open_goals.pop(key, None) is None:
                problems.append(f"goal {key} completed without start")
    done_agents = {r.agent for r in log.records if r.kind in (Kind.Fault, Kind.MissionDone)}
    for key in open_goals:
        if key[0] not in done_agents:
            problems.append(f"goal {key} never completed")

    stacks: dict = {}
    for r in log.records:
        if r.kind is Kind.StateEntered:
            stacks.setdefault(r.agent, []).append(r["path"])
        elif r.kind is Kind.StateExited:
            stack = stacks.get(r.agent, [])
            if not stack or stack[-1] != r["path"]:
                problems.append(f"{r.agent}: StateExited {r['path']} at {r.t} without matching entry")
            else:
                stack.pop()
        elif r.kind is Kind.BehaviorStarted and stacks.get(r.agent):
            problems.append(f"{r.agent}: behavior restarted with open states {stacks[r.agent]}")
    for agent, stack in stacks.items():
        if stack and agent not in done_agents:
            problems.append(f"{agent}: states {stack} never closed")
    return problems


# -- timelines --------------------------------------------------------------

_GLYPH = {
    Kind.BehaviorStarted: "S", Kind.BehaviorCompleted: "C", Kind.ActionStarted: "a",
    Kind.ActionCompleted: "a", Kind.ActionFeedback: "-", Kind.StateEntered: "s",
    Kind.StateExited: "s", Kind.PingAttempt: "p", Kind.PingResult: "p",
    Kind.TriggerPublished: ">", Kind.TriggerReceived: "<", Kind.TriggerIgnored: "x",
    Kind.MissionDone: "D", Kind.Fault: "!", Kind.ActionRejected: "r",
}
_PRIORITY = [Kind.Fault, Kind.TriggerPublished, Kind.TriggerReceived, Kind.MissionDone,
             Kind.BehaviorStarted, Kind.BehaviorCompleted, Kind.TriggerIgnored,
             Kind.ActionRejected, Kind.PingResult, Kind.PingAttempt, Kind.ActionStarted,
             Kind.ActionCompleted, Kind.StateEntered, Kind.StateExited, Kind.ActionFeedback]


def outage_bands(log: EventLog) -> list:
    """``[(a, b, start, end)]`` from LinkDown/LinkUp pairs; open bands end at the log end."""
    open_: dict = {}
    bands = []
    for r in log.records:
        if r.kind is Kind.LinkDown:
            open_[(r["a"], r["b"])] = r.t
        elif r.kind is Kind.LinkUp:
            start = open_.pop((r["a"], r["b"]), None)
            if start is not None:
                bands.append((r["a"], r["b"], start, r.t))
    end = log.end.get("t", log.records[-1].t if log.records else 0)
    for (a, b), start in open_.items():
        bands.append((a, b, start, end))
    return sorted(bands, key=lambda x: (x[2], x[0], x[1]))


def _detail_text(r: EventRecord) -> str:
    return " ".join(f"{k}={v}" for k, v in r.detail)


def render_timeline(log: EventLog, format: str = "text", bucket_ms: Optional[int] = None,
                    width: int = 72) -> str:
    """Render per-agent lanes. ``structured`` is the plain log encoding."""
    if format == "structured":
        return format_log(log)
    if format != "text":
        raise ValueError(f"unknown timeline format {format!r}")

    title = f"timeline scenario={log.meta.get('scenario', '?')} seed={log.meta.get('seed', '?')}"
    if not log.records:
        return title + "\n(no events)\n"
    end = max(log.end.get("t", 0), log.records[-1].t)
    if bucket_ms is None:
        bucket_ms = max(1, -(-(end + 1) // width))
        for nice in (10, 20, 50, 100, 200, 250, 500, 1000, 2000, 5000, 10000, 30000, 60000):
            if nice >= bucket_ms:
                bucket_ms = nice
                break
    ncols = end // bucket_ms + 1
    lanes = [a for a in log.agents() if a != NET]
    name_w = max([len(a) for a in lanes] + [8])

    def ruler() -> str:
        cells = [" "] * ncols
        for c in range(0, ncols, 10):
            label = str(c * bucket_ms)
            for i, ch in enumerate(label):
                if c + i < ncols:
                    cells[c + i] = ch
        return " " * (name_w + 2) + "".join(cells)

    out = [title, f"bucket={bucket_ms}ms span=0..{end}ms", ruler()]
    bands = outage_bands(log)
    for agent in lanes:
        cells = ["."] * ncols
        for a, b, s, e in bands:
            if agent in (a, b):
                for c in range(s // bucket_ms, min(ncols, -(-e // bucket_ms))):
                    cells[c] = "#"
        prio = {}
        for r in log.records:
            if r.agent != agent:
                continue
            c = r.t // bucket_ms
            rank = _PRIORITY.index(r.kind)
            if c not in prio or rank < prio[c]:
                prio[c] = rank
                cells[c] = _GLYPH[r.kind]
        out.append(f"{agent:<{name_w}}  " + "".join(cells))
    out.append("legend: S start  C complete  < recv  > publish  p ping  a action  s state  "
               "- feedback  x ignored  D done  ! fault  # network off")
    out.append("")

    if bands:
        out.append("outages:")
        for a, b, s, e in bands:
            out.append(f"  {a}<->{b} down [{s}, {e}) ms")
    triggers = [r for r in log.records if r.kind is Kind.TriggerReceived]
    if triggers:
        out.append("triggers:")
        for r in triggers:
            if r.get("injected"):
                out.append(f"  {r['sender']} => {r.agent}  epoch {r['epoch']}  injected at {r.t}")
            else:
                out.append(f"  {r['sender']} => {r.agent}  epoch {r['epoch']}  "
                           f"published {r['sent_at']}  received {r.t}  (+{r['latency']} ms)")
    out.append("")
    for agent in log.agents():
        out.append(f"lane {agent}:")
        for r in log.records:
            if r.agent == agent:
                out.append(f"  {r.t:>8}  {r.kind.value:<18} {_detail_text(r)}".rstrip())
    status = " ".join(f"{k}={v}" for k, v in sorted(log.end.items()))
    out.append(f"end {status}")
    return "\n".join(out) + "\n"
