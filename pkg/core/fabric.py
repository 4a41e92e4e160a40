"""Non-blocking big-switch fabric: only per-machine ingress/egress ports constrain rates."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple

from core.failures import InvalidArgumentError, UnknownEntityError
from core.model import EPSILON, Flow


class Direction(str, Enum):
    INGRESS = "ingress"
    EGRESS = "egress"


@dataclass(frozen=True, order=True)
class PortId:
    machine: int
    direction: Direction

    def __str__(self) -> str:
        return f"{self.direction.value}({self.machine})"


def egress(machine: int) -> PortId:
    return PortId(machine, Direction.EGRESS)


def ingress(machine: int) -> PortId:
    return PortId(machine, Direction.INGRESS)


def flow_ports(flow: Flow) -> Tuple[PortId, PortId]:
    return egress(flow.src), ingress(flow.dst)


@dataclass(frozen=True)
class Fabric:
    num_machines: int
    port_capacity: float = 1.0

    def __post_init__(self) -> None:
        if not isinstance(self.num_machines, int) or self.num_machines < 1:
            raise InvalidArgumentError("num_machines must be a positive integer", num_machines=self.num_machines)
        if not self.port_capacity > 0:
            raise InvalidArgumentError("port_capacity must be positive", port_capacity=self.port_capacity)

    def ports(self) -> list[PortId]:
        return [p for m in range(self.num_machines) for p in (ingress(m), egress(m))]

    def check_flow(self, flow: Flow) -> None:
        for machine in (flow.src, flow.dst):
            if not 0 <= machine < self.num_machines:
                raise InvalidArgumentError(
                    f"flow {flow.id} uses machine {machine} outside fabric of {self.num_machines}",
                    flow=flow.id,
                    machine=machine,
                )


def new_fabric(num_machines: int, port_capacity: float = 1.0) -> Fabric:
    return Fabric(num_machines=num_machines, port_capacity=port_capacity)


@dataclass(frozen=True)
class RateAllocation:
    rates: Mapping[str, float] = field(default_factory=dict)

    def rate(self, flow_id: str) -> float:
        return self.rates.get(flow_id, 0.0)

    def positive(self) -> Dict[str, float]:
        return {f: r for f, r in self.rates.items() if r > 0}


@dataclass(frozen=True)
class Violation:
    kind: str
    excess: float
    port: Optional[PortId] = None
    flow_id: Optional[str] = None

    def to_payload(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "excess": self.excess,
            "port": str(self.port) if self.port else None,
            "flow_id": self.flow_id,
        }


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def _port_load(fabric: Fabric, allocation: RateAllocation, flows: Mapping[str, Flow]) -> Dict[PortId, float]:
    load = {p: 0.0 for p in fabric.ports()}
    for flow_id in sorted(allocation.rates):
        try:
            flow = flows[flow_id]
        except KeyError:
            raise UnknownEntityError("flow", flow_id) from None
        fabric.check_flow(flow)
        rate = allocation.rates[flow_id]
        for port in flow_ports(flow):
            load[port] += rate
    return load


def residual_capacities(fabric: Fabric, allocation: RateAllocation, flows: Mapping[str, Flow]) -> Dict[PortId, float]:
    residual = {}
    for port, used in _port_load(fabric, allocation, flows).items():
        value = fabric.port_capacity - used
        residual[port] = 0.0 if -EPSILON <= value < 0 else value
    return residual


def validate_allocation(
    fabric: Fabric,
    allocation: RateAllocation,
    flows: Mapping[str, Flow],
    remaining: Optional[Mapping[str, float]] = None,
) -> ValidationReport:
    """Report every overloaded port, negative rate, and rated finished flow."""

    violations: list[Violation] = []
    known = {f: r for f, r in allocation.rates.items() if f in flows}
    for flow_id in sorted(set(allocation.rates) - set(known)):
        violations.append(Violation("unknown_flow", 0.0, flow_id=flow_id))
    for flow_id in sorted(known):
        rate = known[flow_id]
        if rate < 0:
            violations.append(Violation("negative_rate", -rate, flow_id=flow_id))
        left = remaining.get(flow_id, flows[flow_id].size_remaining) if remaining is not None else flows[flow_id].size_remaining
        if rate > 0 and left <= 0:
            violations.append(Violation("finished_flow_rate", rate, flow_id=flow_id))
    for port, used in sorted(_port_load(fabric, RateAllocation(known), flows).items()):
        if used > fabric.port_capacity + EPSILON:
            violations.append(Violation("port_overload", used - fabric.port_capacity, port=port))
    return ValidationReport(tuple(violations))
