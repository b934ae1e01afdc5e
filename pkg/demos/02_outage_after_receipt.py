"""
The link drops right after the Stinger gets its trigger
========================================================

Same mission as the persistent-link demo, but the link between the two
robots goes down one millisecond after the trigger arrives and comes back
after the Stinger has finished. The Stinger keeps working offline, then
keeps pinging until the link is back before it triggers the Deployer.
"""

from handoff import bundled_path, load_scenario, run_scenario
from handoff.events import Kind

case_a = run_scenario(load_scenario(bundled_path("caseA.scenario")))
sc = load_scenario(bundled_path("caseB.scenario"))
case_b = run_scenario(sc)

[(down, up)] = sc.link("Deployer", "Stinger").outages
print(f"outage: [{down}, {up}) ms")


def lane(log):
    keep = {Kind.StateEntered, Kind.StateExited, Kind.ActionStarted, Kind.ActionCompleted}
    return [(r.t, r.kind.value, r.get("path") or r.get("actuator"))
            for r in log.records if r.agent == "Stinger" and r.kind in keep]


# local progress does not care about the network
assert lane(case_a) == lane(case_b)
for row in lane(case_b):
    print("  ", *row)

print("\nStinger pings:")
for r in case_b.of(Kind.PingResult, agent="Stinger"):
    print(f"  {r.t:>6} ms  ok={r['ok']}")

pub_a = case_a.of(Kind.TriggerPublished, agent="Stinger")[0]
pub_b = case_b.of(Kind.TriggerPublished, agent="Stinger")[0]
print(f"\nping-back published at {pub_a.t} ms with the link up, {pub_b.t} ms with the outage")
print(f"time spent waiting for the link: {pub_b['wait']} ms")
