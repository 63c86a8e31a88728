"""Component graph: the composable structure the simulator executes.

Components are nodes (hardware, traces, policies, tasks); directed edges
declare supplier-consumer relationships. Power edges are static during a
run and acyclic; compute edges bind tasks to devices dynamically while
they execute.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import TYPE_CHECKING, Iterator

from .simtime import SimTime

if TYPE_CHECKING:  # pragma: no cover
    from .engine import Engine, Event


class ComponentKind(Enum):
    POWER_SOURCE = "PowerSource"
    PSU = "PSU"
    CPU = "CPU"
    GPU = "GPU"
    MEMORY = "Memory"
    HOST = "Host"
    BATTERY = "Battery"
    TASK = "Task"
    CARBON_MODEL = "CarbonModel"
    TASK_STOPPER = "TaskStopper"
    BATTERY_MANAGER = "BatteryManager"
    SCHEDULER = "Scheduler"
    FAULT_INJECTOR = "FaultInjector"
    METRICS_PROBE = "MetricsProbe"


class EdgeKind(Enum):
    POWER = "power"      # supplier delivers power to consumer
    COMPUTE = "compute"  # device provides computation to a task
    OBSERVE = "observe"  # consumer reads supplier state
    CONTROL = "control"  # supplier commands consumer
    CONTAINS = "contains"


class Priority(IntEnum):
    """Deterministic same-timestamp processing order."""

    TRACE = 0
    DEVICE = 1
    POLICY = 2
    SCHEDULER = 3
    METRICS = 4


class Component:
    """A simulated object; subclasses own a kind-specific state block."""

    kind: ComponentKind = ComponentKind.HOST

    def __init__(self, comp_id: str) -> None:
        self.id = comp_id
        self.order = -1  # registration index, assigned by the graph

    def on_start(self, engine: "Engine") -> None:
        """Called once when the simulation starts."""

    def handle(self, event: "Event", engine: "Engine") -> None:
        raise NotImplementedError

    def __repr__(self) -> str:  # pragma: no cover
        return f"<{type(self).__name__} {self.id}>"


Edge = tuple[str, str, EdgeKind]


class GraphError(ValueError):
    pass


@dataclass
class ComponentGraph:
    components: list[Component] = field(default_factory=list)
    by_id: dict[str, Component] = field(default_factory=dict)
    edges: set[Edge] = field(default_factory=set)
    # append-only record of dynamic (compute) edge changes during a run
    edge_log: list[tuple[SimTime, str, Edge]] = field(default_factory=list)

    def add(self, component: Component) -> Component:
        if component.id in self.by_id:
            raise GraphError(f"duplicate component id {component.id!r}")
        component.order = len(self.components)
        self.components.append(component)
        self.by_id[component.id] = component
        return component

    def connect(self, supplier: str, consumer: str, kind: EdgeKind) -> None:
        for comp_id in (supplier, consumer):
            if comp_id not in self.by_id:
                raise GraphError(f"edge references unknown component {comp_id!r}")
        self.edges.add((supplier, consumer, kind))

    def connect_dynamic(self, t: SimTime, supplier: str, consumer: str, kind: EdgeKind) -> None:
        edge = (supplier, consumer, kind)
        self.edges.add(edge)
        self.edge_log.append((t, "+", edge))

    def disconnect_dynamic(self, t: SimTime, supplier: str, consumer: str, kind: EdgeKind) -> None:
        edge = (supplier, consumer, kind)
        self.edges.discard(edge)
        self.edge_log.append((t, "-", edge))

    def of_kind(self, kind: ComponentKind) -> Iterator[Component]:
        return (c for c in self.components if c.kind is kind)

    def edges_of(self, comp_id: str) -> set[Edge]:
        return {e for e in self.edges if comp_id in (e[0], e[1])}

    def validate(self) -> None:
        """Reject dangling edge references and power-flow cycles."""
        for sup, con, _ in self.edges:
            if sup not in self.by_id or con not in self.by_id:
                raise GraphError(f"edge ({sup} -> {con}) references unknown component")
        adjacency: dict[str, list[str]] = {}
        for sup, con, kind in self.edges:
            if kind is EdgeKind.POWER:
                adjacency.setdefault(sup, []).append(con)
        state: dict[str, int] = {}

        def visit(node: str, stack: list[str]) -> None:
            state[node] = 1
            stack.append(node)
            for nxt in adjacency.get(node, ()):
                if state.get(nxt) == 1:
                    cycle = stack[stack.index(nxt):] + [nxt]
                    raise GraphError(f"power-flow cycle: {' -> '.join(cycle)}")
                if state.get(nxt) is None:
                    visit(nxt, stack)
            stack.pop()
            state[node] = 2

        for node in adjacency:
            if state.get(node) is None:
                visit(node, [])
