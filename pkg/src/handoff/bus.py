"""Domain-isolated publish/subscribe over a simulated lossy network.

Each agent lives in one domain. A publish reaches subscribers of the same
``(domain, topic)`` channel, plus subscribers in other domains for which a
directional bridge rule exists. The bridge is modelled as an extra network
hop with its own latency draw. Delivery is volatile: if the link between
publisher and subscriber is down at the delivery instant, the copy is
dropped for good.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional

from .scheduler import RANK_DELIVERY, Scheduler

DEFAULT_LATENCY = ("uniform", 20, 500)


class BusError(LookupError):
    pass


@dataclass(frozen=True, order=True)
class BridgeRule:
    from_domain: int
    to_domain: int
    topic: str


@dataclass(frozen=True)
class LatencyModel:
    kind: str = "uniform"
    lo: int = 20
    hi: int = 500

    def __post_init__(self) -> None:
        if self.kind not in ("fixed", "uniform"):
            raise ValueError(f"unknown latency model {self.kind!r}")
        # at least 1 ms, so a delivery never lands at its own publish instant
        if self.lo < 1 or self.hi < self.lo:
            raise ValueError(f"bad latency bounds [{self.lo}, {self.hi}]")
        if self.kind == "fixed" and self.lo != self.hi:
            raise ValueError("fixed latency needs lo == hi")

    @classmethod
    def fixed(cls, ms: int) -> "LatencyModel":
        return cls("fixed", ms, ms)

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "LatencyModel":
        return cls("uniform", lo, hi)

    def draw(self, rng: random.Random) -> int:
        if self.kind == "fixed":
            return self.lo
        return rng.randint(self.lo, self.hi)

    def __str__(self) -> str:
        if self.kind == "fixed":
            return f"fixed {self.lo}"
        return f"uniform {self.lo} {self.hi}"


def normalize_intervals(intervals: Iterable) -> tuple:
    """Sort half-open ``[start, end)`` intervals and merge overlapping or touching ones."""
    merged: list = []
    for start, end in sorted((int(s), int(e)) for s, e in intervals if e > s):
        if merged and start <= merged[-1][1]:
            if end > merged[-1][1]:
                merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))
    return tuple(merged)


def link_key(a: str, b: str) -> tuple:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class LinkSchedule:
    a: str
    b: str
    outages: tuple = ()

    def __post_init__(self) -> None:
        a, b = link_key(self.a, self.b)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "outages", normalize_intervals(self.outages))

    @property
    def key(self) -> tuple:
        return (self.a, self.b)

    def is_up(self, t: int) -> bool:
        i = bisect.bisect_right(self.outages, (t, float("inf"))) - 1
        return not (i >= 0 and self.outages[i][0] <= t < self.outages[i][1])

    def link_state(self, t: int) -> str:
        return "up" if self.is_up(t) else "down"


@dataclass
class Envelope:
    id: int
    domain: int
    topic: str
    payload: Any
    sender: str
    pub_domain: int
    publish_time: int
    legs: tuple
    delivery_time: Optional[int] = None

    @property
    def bridged(self) -> bool:
        return len(self.legs) > 1


@dataclass
class _Subscription:
    agent: str
    domain: int
    topic: str
    handler: Callable[[Envelope], None]


@dataclass
class BusStats:
    delivered: list = field(default_factory=list)
    dropped: list = field(default_factory=list)


class MessageBus:
    """The simulated transport. Owned by exactly one :class:`Scheduler`."""

    def __init__(self, scheduler: Scheduler, latency: LatencyModel = LatencyModel(),
                 seed: int = 0, domains: Iterable[int] = ()):
        self.scheduler = scheduler
        self.latency = latency
        self.rng = random.Random(seed)
        self.domains = set(domains)
        self.agents: dict = {}
        self.links: dict = {}
        self.rules: set = set()
        self._subs: list = []
        self._ids = 0
        self.stats = BusStats()

    def add_domain(self, domain: int) -> None:
        if domain < 0:
            raise ValueError("domain ids are non-negative")
        self.domains.add(domain)

    def register(self, agent: str, domain: int) -> None:
        if domain not in self.domains:
            raise BusError(f"unknown domain {domain}")
        self.agents[agent] = domain

    def set_link(self, schedule: LinkSchedule) -> None:
        self.links[schedule.key] = schedule

    def add_bridge_rule(self, rule: BridgeRule) -> None:
        for d in (rule.from_domain, rule.to_domain):
            if d not in self.domains:
                raise BusError(f"unknown domain {d}")
        self.rules.add(rule)

    def subscribe(self, domain: int, topic: str, agent: str,
                  handler: Callable[[Envelope], None]) -> _Subscription:
        if domain not in self.domains:
            raise BusError(f"unknown domain {domain}")
        if self.agents.get(agent) != domain:
            raise BusError(f"agent {agent!r} is not registered on domain {domain}")
        sub = _Subscription(agent, domain, topic, handler)
        self._subs.append(sub)
        return sub

    def probe(self, a: str, b: str, t: int) -> bool:
        """IP-level reachability: ignores domains, consults only the link schedule."""
        for agent in (a, b):
            if agent not in self.agents:
                raise BusError(f"unknown agent {agent!r}")
        sched = self.links.get(link_key(a, b))
        return True if sched is None else sched.is_up(t)

    def publish(self, sender: str, topic: str, payload: Any, t: Optional[int] = None) -> list:
        """Publish in the sender's domain. Returns the envelopes put in flight."""
        if sender not in self.agents:
            raise BusError(f"unknown agent {sender!r}")
        t = self.scheduler.now if t is None else t
        domain = self.agents[sender]
        in_flight = []
        for sub in self._subs:
            if sub.domain == domain and sub.topic == topic:
                in_flight.append(self._send(sub, sender, domain, topic, payload, t,
                                            (self.latency.draw(self.rng),)))
        for rule in sorted(self.rules):
            if rule.from_domain != domain or rule.topic != topic:
                continue
            relay = self.latency.draw(self.rng)
            for sub in self._subs:
                if sub.domain == rule.to_domain and sub.topic == topic:
                    legs = (relay, self.latency.draw(self.rng))
                    in_flight.append(self._send(sub, sender, domain, topic, payload, t, legs))
        return in_flight

    def _send(self, sub: _Subscription, sender: str, pub_domain: int, topic: str,
              payload: Any, t: int, legs: tuple) -> Envelope:
        self._ids += 1
        env = Envelope(self._ids, sub.domain, topic, payload, sender, pub_domain, t, legs)
        at = t + sum(legs)

        def deliver() -> None:
            if self.probe(sender, sub.agent, at):
                env.delivery_time = at
                self.stats.delivered.append(env)
                sub.handler(env)
            else:
                self.stats.dropped.append(env)

        self.scheduler.at(at, deliver, agent=sub.agent, rank=RANK_DELIVERY)
        return env
