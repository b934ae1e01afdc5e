"""Sequential multi-robot autonomy: per-robot hierarchical state machines
chained by trigger messages over a simulated, partition-prone network."""

from .agents import (ActionServer, ActuatorModel, GoalAccepted, GoalRejected, MoveMotorGoal,
                     TimerServer, build_chain_machine, build_deployer_machine,
                     build_stinger_machine)
from .bus import BridgeRule, Envelope, LatencyModel, LinkSchedule, MessageBus
from .coordinator import (Coordinator, CoordinatorPhase, RobotSpec, TriggerMessage, Verdict,
                          await_reachability)
from .dsl import (DocumentError, ParseDiagnostic, load_machine, load_scenario, parse_machine,
                  parse_scenario, serialize_machine, serialize_scenario)
from .events import EventLog, EventRecord, Kind, format_log, parse_log
from .hfsm import (ActionRef, ActionResult, Execution, ExecutionContext, ExecutionStatus,
                   MachineDef, StateDef, resolve_transition, start_execution, validate_machine)
from .scenario import Scenario, validate_scenario
from .sim import (LatencyStats, Simulation, check_integrity, compute_latency, render_timeline,
                  run_scenario)
from .bundled import bundled_path

__version__ = "0.1.0"

__all__ = [
    "ActionRef",
    "ActionResult",
    "ActionServer",
    "ActuatorModel",
    "BridgeRule",
    "Coordinator",
    "CoordinatorPhase",
    "DocumentError",
    "Envelope",
    "EventLog",
    "EventRecord",
    "Execution",
    "ExecutionContext",
    "ExecutionStatus",
    "GoalAccepted",
    "GoalRejected",
    "Kind",
    "LatencyModel",
    "LatencyStats",
    "LinkSchedule",
    "MachineDef",
    "MessageBus",
    "MoveMotorGoal",
    "ParseDiagnostic",
    "RobotSpec",
    "Scenario",
    "Simulation",
    "StateDef",
    "TimerServer",
    "TriggerMessage",
    "Verdict",
    "await_reachability",
    "build_chain_machine",
    "build_deployer_machine",
    "build_stinger_machine",
    "bundled_path",
    "check_integrity",
    "compute_latency",
    "format_log",
    "load_machine",
    "load_scenario",
    "parse_log",
    "parse_machine",
    "parse_scenario",
    "render_timeline",
    "resolve_transition",
    "run_scenario",
    "serialize_machine",
    "serialize_scenario",
    "start_execution",
    "validate_machine",
    "validate_scenario",
]
