"""The scenario model: robots, network, chain order, and its validation rules."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .bus import BridgeRule, LatencyModel, LinkSchedule, link_key
from .coordinator import DEFAULT_PING_INTERVAL, RobotSpec
from .events import NET, OPERATOR
from .hfsm import validate_machine

TOKEN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
RESERVED_IDS = {NET, OPERATOR, "none"}


@dataclass(frozen=True)
class Problem:
    message: str
    severity: str = "error"
    robot: Optional[str] = None
    field: Optional[str] = None
    section: Optional[tuple] = None


@dataclass
class Scenario:
    name: str
    robots: list
    horizon: int
    seed: int = 0
    epochs: int = 1
    head: Optional[str] = None
    bridge_rules: list = field(default_factory=list)
    links: list = field(default_factory=list)
    latency: LatencyModel = field(default_factory=LatencyModel)
    ping_interval: int = DEFAULT_PING_INTERVAL
    feedback_interval: int = 250
    mission_id: Optional[str] = None
    warnings: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.head is None and self.robots:
            self.head = self.robots[0].id
        if self.mission_id is None:
            self.mission_id = self.name

    def robot(self, robot_id: str) -> RobotSpec:
        for r in self.robots:
            if r.id == robot_id:
                return r
        raise KeyError(robot_id)

    def link(self, a: str, b: str) -> Optional[LinkSchedule]:
        key = link_key(a, b)
        for sched in self.links:
            if sched.key == key:
                return sched
        return None

    def link_state(self, a: str, b: str, t: int) -> str:
        sched = self.link(a, b)
        return "up" if sched is None else sched.link_state(t)

    @property
    def cyclic(self) -> bool:
        ids = {r.id: r for r in self.robots}
        if self.head not in ids:
            return False
        seen, cur = set(), self.head
        while cur is not None and cur in ids and cur not in seen:
            seen.add(cur)
            cur = ids[cur].successor
        return cur == self.head

    def chain(self) -> list:
        """Robot ids in execution order, starting at the head."""
        ids = {r.id: r for r in self.robots}
        order, cur = [], self.head
        while cur is not None and cur in ids and cur not in order:
            order.append(cur)
            cur = ids[cur].successor
        return order

    def with_seed(self, seed: int) -> "Scenario":
        from dataclasses import replace
        return replace(self, seed=seed)


def validate_scenario(sc: Scenario) -> list:
    """Return every :class:`Problem` found; errors and warnings alike."""
    out: list = []

    def err(msg, **kw):
        out.append(Problem(msg, "error", **kw))

    def warn(msg, **kw):
        out.append(Problem(msg, "warning", **kw))

    if sc.horizon <= 0:
        err("horizon must be positive", field="horizon")
    if sc.epochs < 1:
        err("epochs must be at least 1", field="epochs")
    if sc.seed < 0 or sc.seed >= 2 ** 64:
        err("seed must fit in 64 bits", field="seed")
    if sc.ping_interval <= 0:
        err("ping_interval must be positive", field="ping_interval")

    ids: dict = {}
    for r in sc.robots:
        if r.id in ids:
            err(f"duplicate robot id: {r.id}", robot=r.id)
        elif not TOKEN.match(r.id) or r.id in RESERVED_IDS:
            err(f"invalid robot id: {r.id!r}", robot=r.id)
        ids.setdefault(r.id, r)
    if not sc.robots:
        return out

    topics: dict = {}
    for r in sc.robots:
        if r.trigger_topic in topics:
            err(f"duplicate trigger topic: {r.trigger_topic} (robots {topics[r.trigger_topic]} "
                f"and {r.id})", robot=r.id, field="trigger_topic")
        topics.setdefault(r.trigger_topic, r.id)
        if r.successor is not None and r.successor not in ids:
            err(f"unknown successor: {r.successor}", robot=r.id, field="successor")
        if r.probe_peer is not None and r.probe_peer not in ids:
            err(f"unknown probe peer: {r.probe_peer}", robot=r.id, field="probe_peer")
        if r.successor is not None and r.probe_peer is None:
            err("robot with a successor needs a probe peer", robot=r.id, field="probe_peer")
        if r.domain < 0:
            err("domain ids are non-negative", robot=r.id, field="domain")
        if r.ping_interval <= 0:
            err("ping_interval must be positive", robot=r.id, field="ping_interval")
        report = validate_machine(r.behavior)
        for d in report.diagnostics:
            err(f"behavior {r.behavior.name}: {d}", robot=r.id, field="behavior")
        names = set()
        for a in r.actuators:
            if (a.server, a.id) in names:
                err(f"duplicate actuator {a.id}", robot=r.id)
            names.add((a.server, a.id))

    by_domain: dict = {}
    for r in sc.robots:
        if r.domain in by_domain:
            err(f"single behavior engine per domain: robots {by_domain[r.domain]} and {r.id} "
                f"both host an engine in domain {r.domain}", robot=r.id, field="domain")
        else:
            by_domain[r.domain] = r.id

    domains = {r.domain for r in sc.robots}
    for rule in sc.bridge_rules:
        for d in (rule.from_domain, rule.to_domain):
            if d not in domains:
                err(f"bridge rule references unknown domain {d}",
                    section=("bridge", rule.from_domain, rule.to_domain, rule.topic))

    for sched in sc.links:
        for agent in (sched.a, sched.b):
            if agent not in ids:
                err(f"link references unknown robot {agent}", section=("link", sched.a, sched.b))
        if any(s < 0 for s, _ in sched.outages):
            err("negative outage time", section=("link", sched.a, sched.b))

    if sc.head not in ids:
        err(f"unknown chain head: {sc.head}", field="head")
        return out
    preds: dict = {}
    for r in sc.robots:
        if r.successor is not None:
            preds.setdefault(r.successor, []).append(r.id)
    for target, ps in sorted(preds.items()):
        if len(ps) > 1:
            err(f"robot {target} has several predecessors ({', '.join(ps)}); "
                f"only sequential chains are supported", robot=target)
    chain = sc.chain()
    for r in sc.robots:
        if r.id not in chain:
            err(f"robot {r.id} is not reachable from chain head {sc.head}", robot=r.id)
    if not sc.cyclic and sc.epochs != 1:
        err("epochs > 1 needs a cyclic chain that returns to the head", field="epochs")

    rules = {(b.from_domain, b.to_domain, b.topic) for b in sc.bridge_rules}
    for r in sc.robots:
        if r.successor is None or r.successor not in ids:
            continue
        succ = ids[r.successor]
        if succ.domain != r.domain and (r.domain, succ.domain, succ.trigger_topic) not in rules:
            warn(f"no bridge rule forwards {succ.trigger_topic} from domain {r.domain} to "
                 f"domain {succ.domain}; the trigger cannot arrive", robot=r.id, field="successor")
    return out


def errors(problems) -> list:
    return [p for p in problems if p.severity == "error"]


__all__ = ["Scenario", "Problem", "validate_scenario", "errors", "BridgeRule", "LinkSchedule",
           "LatencyModel", "RobotSpec"]
