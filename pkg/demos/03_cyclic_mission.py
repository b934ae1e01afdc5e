"""
Three Deployer/Stinger cycles
=============================

When the last robot's successor is the head, the chain is a cycle. Every
trigger sent to the head opens a new epoch; the head closes the mission
when it receives the trigger for the epoch after the last one.
"""

from handoff import bundled_path, load_scenario, run_scenario
from handoff.events import Kind

sc = load_scenario(bundled_path("cycle3.scenario"))
print(f"{sc.name}: epochs={sc.epochs}, cyclic={sc.cyclic}")

for seed in (42, 7, 1234):
    log = run_scenario(sc, seed=seed)
    starts = [f"{r.agent}@{r.t}(e{r['epoch']})" for r in log.of(Kind.BehaviorStarted)]
    print(f"\nseed {seed}: {log.end['status']} at t={log.end['t']} ms")
    print("  behavior starts:", ", ".join(starts))
    print("  published epochs:", [r["epoch"] for r in log.of(Kind.TriggerPublished)])
