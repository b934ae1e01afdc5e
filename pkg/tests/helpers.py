"""Independent oracles and scenario builders shared by the test modules.

The oracles deliberately avoid the package's own arithmetic: they
enumerate instead of computing.
"""

from __future__ import annotations

import itertools
import random

from handoff import RobotSpec, Scenario, build_chain_machine
from handoff.agents import ActuatorModel
from handoff.bus import BridgeRule, LatencyModel, LinkSchedule


def in_outage(raw_intervals, t):
    return any(s <= t < e for s, e in raw_intervals)


def brute_force_release(raw_intervals, start, interval, limit=10 ** 7):
    """First probe instant start + k*interval outside every raw interval."""
    for k in itertools.count():
        t = start + k * interval
        if t > limit:
            return None
        if not in_outage(raw_intervals, t):
            return t


def brute_force_duration(distance, speed):
    """Smallest whole ms in which ``speed`` ticks/s covers ``distance`` ticks."""
    ms = 0
    while ms * speed < abs(distance) * 1000:
        ms += 1
    return ms


def random_outages(rng, count, lo, hi, max_len):
    out = []
    for _ in range(count):
        s = rng.randrange(lo, hi)
        out.append((s, s + rng.randrange(1, max_len)))
    return out


def chain_scenario(n, rng=None, *, moves_per_robot=2, outages=None, seed=0, horizon=400000,
                   cyclic=False, epochs=1, ping_intervals=None, latency=None, speeds=None,
                   name="chain"):
    """Robots R_1..R_n in domains 1..n, each with a random linear behavior,
    chained R_1 -> ... -> R_n (-> R_1 when ``cyclic``), bridged pairwise."""
    rng = rng or random.Random(0)
    robots = []
    ids = [f"R_{i}" for i in range(1, n + 1)]
    for i, rid in enumerate(ids):
        if i + 1 < n:
            succ = ids[i + 1]
        else:
            succ = ids[0] if cyclic else None
        speed = speeds[i] if speeds else rng.choice([50, 100, 200, 400])
        acts = [ActuatorModel("m0", 0, 0, 1000, speed)]
        moves = [("m0", rng.randrange(0, 1001)) for _ in range(moves_per_robot)]
        robots.append(RobotSpec(
            rid, i + 1, build_chain_machine(rid, moves), successor=succ,
            ping_interval=(ping_intervals[i] if ping_intervals else 500), actuators=acts))
    rules = [BridgeRule(r.domain, next(x for x in robots if x.id == r.successor).domain,
                        f"trigger_{r.successor}") for r in robots if r.successor]
    links = []
    for (a, b), raw in (outages or {}).items():
        links.append(LinkSchedule(a, b, raw))
    return Scenario(name=name, robots=robots, horizon=horizon, seed=seed, epochs=epochs,
                    bridge_rules=rules, links=links,
                    latency=latency or LatencyModel.uniform(20, 500))


def started_order(log):
    return [r.agent for r in log.of("BehaviorStarted")]


def random_machine(rng, name="M", depth=0, used=None):
    """A random valid machine: a linear spine with random back/forward edges,
    optionally one composite state wrapping a smaller random machine."""
    from handoff.hfsm import ActionRef, MachineDef, StateDef

    used = used if used is not None else set()
    used.add(name)
    n = rng.randint(1, 5)
    names = [f"S{i}_{rng.randrange(1000)}" for i in range(n)]
    names = list(dict.fromkeys(names))
    terminals = {"finished"} | ({"failed"} if rng.random() < 0.5 else set())
    states, transitions = {}, {}
    for i, s in enumerate(names):
        forward = names[i + 1] if i + 1 < len(names) else "finished"
        if depth < 2 and rng.random() < 0.25:
            child_name = f"{name}_C{i}"
            child = random_machine(rng, child_name, depth + 1, used)
            outs = {f"o{j}" for j in range(len(child.terminal_outcomes))}
            mapping = dict(zip(sorted(child.terminal_outcomes), sorted(outs)))
            states[s] = StateDef.composite(s, child, mapping, outcomes=outs)
        else:
            goal = {}
            if rng.random() < 0.7:
                goal["actuator"] = rng.choice(["m0", "arm", "leg"])
                goal["target"] = rng.choice([rng.randrange(-50, 5000), "$p" + str(rng.randrange(3))])
            outs = {"ok"} | ({"bad"} if rng.random() < 0.5 else set())
            action = ActionRef(rng.choice(["move_motor", "arm", "wait"]), goal, on_success="ok",
                               on_abort="bad" if "bad" in outs else None)
            states[s] = StateDef.atomic(s, action, outs)
        for j, o in enumerate(sorted(states[s].outcomes)):
            if j == 0:
                transitions[(s, o)] = forward
            else:
                transitions[(s, o)] = rng.choice(names + sorted(terminals))
    return MachineDef(name, states, names[0], transitions, terminals)
