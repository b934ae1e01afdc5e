"""
Deployer places the Stinger over a link that never drops
=========================================================

The Deployer runs its behavior, pings the Stinger, publishes the trigger,
and the Stinger centres its legs as soon as the trigger lands.
"""

from handoff import bundled_path, compute_latency, load_scenario, render_timeline, run_scenario
from handoff.events import Kind

sc = load_scenario(bundled_path("caseA.scenario"))
print("chain:", " -> ".join(sc.chain()), "| latency model:", sc.latency)

log = run_scenario(sc)

# the four records that make up one handoff
for kind, agent in [(Kind.BehaviorCompleted, "Deployer"), (Kind.TriggerPublished, "Deployer"),
                    (Kind.TriggerReceived, "Stinger"), (Kind.BehaviorStarted, "Stinger")]:
    r = log.of(kind, agent=agent)[0]
    print(f"{r.t:>6} ms  {agent:<9} {kind.value}")

# a bridged trigger crosses two network hops; each hop is one latency draw
received = log.of(Kind.TriggerReceived, agent="Stinger")[0]
print("legs of the Deployer -> Stinger trigger:", received["legs"], "ms")

print()
print(compute_latency(log).report())
print()
print(render_timeline(log, bucket_ms=500))
