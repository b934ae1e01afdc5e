"""
A five-robot chain written from scratch
=======================================

Scenarios and behaviors are plain text. This demo writes a behavior for a
generic robot, a five-robot linear chain with two flaky links, validates
it, runs it, and then replays the run with duplicate triggers injected to
show that each robot still executes exactly once.
"""

import random

from handoff import Simulation, TriggerMessage, parse_machine, parse_scenario, validate_scenario
from handoff.events import Kind
from handoff.sim import mission_ok

LIFT = """version: 1
[machine Lift]
initial: Raise
outcomes: finished failed

[state Raise]
kind: atomic
outcomes: reached aborted
action: move_motor
goal: actuator=lift target=$height
on_success: reached
on_abort: aborted
next.reached: Lower
next.aborted: failed

[state Lower]
kind: atomic
outcomes: reached aborted
action: move_motor
goal: actuator=lift target=0
on_success: reached
on_abort: aborted
next.reached: finished
next.aborted: failed
"""

ids = [f"R_{i}" for i in range(1, 6)]
parts = ["version: 1", "[scenario]", "name: five", "mission: survey", "seed: 3",
         "horizon: 300000", "head: R_1"]
for i, rid in enumerate(ids):
    succ = ids[i + 1] if i + 1 < len(ids) else "none"
    parts += [f"[robot {rid}]", f"domain: {i + 1}", "behavior: lift.machine",
              f"successor: {succ}", f"ping_interval: {250 * (i + 1)}",
              f"[actuator {rid} lift]", "server: move_motor", "position: 0", "min: 0",
              "max: 1000", "speed: 200", f"[params {rid}]", f"height: {200 * (i + 1)}"]
    if succ != "none":
        parts.append(f"[bridge {i + 1} {i + 2} trigger_{succ}]")
parts += ["[link R_2 R_3]", "outages: 3000-9000", "[link R_4 R_5]", "outages: 10000-30000"]
text = "\n".join(parts) + "\n"

assert parse_machine(LIFT).name == "Lift"
sc = parse_scenario(text, loader=lambda name: LIFT)
print("problems:", validate_scenario(sc) or "none")

log = Simulation(sc).run()
print("mission ok:", mission_ok(log))
for r in log.of(Kind.TriggerPublished):
    print(f"  {r.agent} -> {r['target']} at {r.t} ms (waited {r['wait']} ms)")

# replay with 1-10 copies of every trigger, delivered after the original
rng = random.Random(0)
sim = Simulation(sc)
copies = 0
for r in log.of(Kind.TriggerReceived):
    msg = TriggerMessage(r["mission"], r["epoch"], r["sender"], r["sent_at"])
    for _ in range(rng.randint(1, 10)):
        sim.inject_trigger(r.agent, msg, rng.randint(r.t + 1, log.end["t"] - 1))
        copies += 1
noisy = sim.run()
print(f"\n{copies} duplicates injected, {len(noisy.of(Kind.TriggerIgnored))} ignored")
print("behavior starts:", [r.agent for r in noisy.of(Kind.BehaviorStarted)])
