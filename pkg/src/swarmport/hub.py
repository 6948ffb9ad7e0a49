"""Central coordinator: job dispatch, fleet telemetry, radar association.

The hub is co-located with the sim loop.  Mission bookkeeping (who is free,
where everyone is) comes from direct observation; the RF telemetry stream
is the logged data product and feeds the CSV/metrics pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import EmptyLog, IoFailure, UnknownVehicle
from .grid import GridMap, NodeId
from .planner import AllPairsCosts, floyd_warshall
from .radar import TargetEstimate
from .rfnet import Message, MessageKind, assign_channel

UNMATCHED = "UNMATCHED"

ORDER_RETRY_TICKS = 20
ASSOCIATION_GATE_M = 0.3

AVAILABLE = "AVAILABLE"
REPOSITIONING = "REPOSITIONING"
DELIVERING = "DELIVERING"


@dataclass(frozen=True)
class Job:
    job_id: int
    pickup_node: NodeId
    destination_node: NodeId
    release_tick: int = 0

    def __post_init__(self) -> None:
        if self.pickup_node == self.destination_node:
            raise ValueError(f"job {self.job_id}: pickup equals destination")


@dataclass(frozen=True)
class TelemetryRecord:
    tick: int
    vehicle_id: int
    x_m: float
    y_m: float
    heading_deg: float
    speed_m_s: float
    dist_from_origin_m: float
    angle_from_origin_deg: float
    state: str


@dataclass
class FleetView:
    latest: dict[int, TelemetryRecord]
    job_queue: list[Job]
    assignments: dict[int, int]


@dataclass
class _Order:
    kind: str
    job: Job
    dest: NodeId
    last_send: int
    acked: bool = False


@dataclass
class _VehicleInfo:
    channel: int
    node: NodeId
    state: str = "IDLE"
    mission: str = AVAILABLE
    job: Job | None = None


class Hub:
    """Dispatches jobs to the nearest free vehicle and logs the fleet."""

    def __init__(self, grid: GridMap) -> None:
        self.grid = grid
        self.costs: AllPairsCosts = floyd_warshall(grid)
        self.vehicles: dict[int, _VehicleInfo] = {}
        self.jobs: list[Job] = []
        self.assignments: dict[int, int] = {}
        self.completed: dict[int, int] = {}
        self.orders: dict[int, _Order] = {}
        self.log: list[TelemetryRecord] = []
        self.outbox: list[tuple[int, Message]] = []
        # Optional veto on (vehicle_id, job) pairings, e.g. the sim engine
        # rejecting pairs whose route cannot exist.
        self.dispatch_filter: Callable[[int, Job], bool] | None = None

    def register_vehicle(self, vehicle_id: int, home_node: NodeId) -> int:
        channel = assign_channel(vehicle_id)
        self.vehicles[vehicle_id] = _VehicleInfo(channel=channel.index, node=home_node)
        return channel.index

    def add_job(self, job: Job) -> None:
        self.jobs.append(job)
        self.jobs.sort(key=lambda j: (j.release_tick, j.job_id))

    def observe(self, vehicle_id: int, node: NodeId, state: str) -> None:
        """Ground-truth position/state update from the co-located sim."""
        info = self.vehicles[vehicle_id]
        info.node = node
        info.state = state

    # -- dispatch ----------------------------------------------------

    def _send_order(self, vehicle_id: int, order: _Order, tick: int) -> None:
        info = self.vehicles[vehicle_id]
        msg = Message(MessageKind.ASSIGN_DESTINATION, vehicle_id, dest=order.dest)
        self.outbox.append((info.channel, msg))
        order.last_send = tick

    def dispatch(self, current_tick: int) -> list[tuple[int, Job]]:
        """Assign released jobs to free vehicles; retransmit stale orders."""
        assigned: list[tuple[int, Job]] = []
        for job in self.jobs:
            if job.job_id in self.assignments or job.release_tick > current_tick:
                continue
            best: tuple[float, int] | None = None
            for vid, info in self.vehicles.items():
                if info.mission != AVAILABLE:
                    continue
                d = self.costs.cost(info.node, job.pickup_node)
                if math.isinf(d):
                    continue
                if self.dispatch_filter is not None and not self.dispatch_filter(vid, job):
                    continue
                if best is None or (d, vid) < best:
                    best = (d, vid)
            if best is None:
                continue
            vid = best[1]
            info = self.vehicles[vid]
            info.mission = REPOSITIONING
            info.job = job
            self.assignments[job.job_id] = vid
            order = _Order("reposition", job, job.pickup_node, current_tick)
            self.orders[vid] = order
            self._send_order(vid, order, current_tick)
            assigned.append((vid, job))
        for vid, order in self.orders.items():
            if not order.acked and current_tick - order.last_send >= ORDER_RETRY_TICKS:
                self._send_order(vid, order, current_tick)
        return assigned

    def on_activate(self, vehicle_id: int, current_tick: int) -> None:
        """Loaded vehicle announced itself; issue the cargo destination."""
        info = self.vehicles.get(vehicle_id)
        if info is None:
            raise UnknownVehicle(f"ACTIVATE from unregistered vehicle {vehicle_id}")
        if info.job is None:
            return
        info.mission = DELIVERING
        order = self.orders.get(vehicle_id)
        if order is None or order.kind != "cargo":
            order = _Order("cargo", info.job, info.job.destination_node, current_tick)
            self.orders[vehicle_id] = order
            self._send_order(vehicle_id, order, current_tick)
        else:
            # Duplicate ACTIVATE: the cargo order was lost; re-arm it.
            order.acked = False
            self._send_order(vehicle_id, order, current_tick)

    def on_ack(self, vehicle_id: int) -> None:
        order = self.orders.get(vehicle_id)
        if order is not None:
            order.acked = True

    def on_job_complete(self, vehicle_id: int, current_tick: int) -> None:
        info = self.vehicles[vehicle_id]
        if info.job is not None:
            self.completed[info.job.job_id] = current_tick
        info.job = None
        info.mission = AVAILABLE
        self.orders.pop(vehicle_id, None)

    def fleet_view(self) -> FleetView:
        latest: dict[int, TelemetryRecord] = {}
        for rec in self.log:
            latest[rec.vehicle_id] = rec
        queue = [j for j in self.jobs if j.job_id not in self.assignments]
        return FleetView(latest=latest, job_queue=queue, assignments=dict(self.assignments))


def ingest_telemetry(hub: Hub, message: Message, tick: int) -> FleetView:
    """Decode a TELEMETRY message into the fleet log with derived polar pose."""
    if message.kind != MessageKind.TELEMETRY:
        raise ValueError(f"expected TELEMETRY, got {message.kind!r}")
    info = hub.vehicles.get(message.vehicle_id)
    if info is None:
        raise UnknownVehicle(f"telemetry from unregistered vehicle {message.vehicle_id}")
    x = message.x_mm / 1000.0
    y = message.y_mm / 1000.0
    dist = math.hypot(x, y)
    angle = 0.0 if dist == 0.0 else math.degrees(math.atan2(y, x)) % 360.0
    rec = TelemetryRecord(
        tick=tick,
        vehicle_id=message.vehicle_id,
        x_m=x,
        y_m=y,
        heading_deg=message.heading_cdeg / 100.0,
        speed_m_s=message.speed_mm_s / 1000.0,
        dist_from_origin_m=dist,
        angle_from_origin_deg=angle,
        state=info.state,
    )
    hub.log.append(rec)
    return hub.fleet_view()


def associate_radar(
    hub: Hub, targets: list[TargetEstimate], fleet_view: FleetView
) -> dict[int, int | str]:
    """Greedy nearest-neighbor match of radar targets to telemetry poses.

    Pairs farther than the association gate stay UNMATCHED and are treated
    as obstacles.  Each vehicle is claimed by at most one target.
    """
    pairs: list[tuple[float, int, int]] = []
    for t_idx, target in enumerate(targets):
        for vid, rec in fleet_view.latest.items():
            d = math.hypot(target.centroid[0] - rec.x_m, target.centroid[1] - rec.y_m)
            if d <= ASSOCIATION_GATE_M:
                pairs.append((d, t_idx, vid))
    pairs.sort()
    result: dict[int, int | str] = {i: UNMATCHED for i in range(len(targets))}
    used_targets: set[int] = set()
    used_vehicles: set[int] = set()
    for d, t_idx, vid in pairs:
        if t_idx in used_targets or vid in used_vehicles:
            continue
        result[t_idx] = vid
        used_targets.add(t_idx)
        used_vehicles.add(vid)
    return result


CSV_HEADER = (
    "tick,vehicle_id,x_m,y_m,heading_deg,speed_m_s,"
    "dist_from_origin_m,angle_from_origin_deg,state"
)


def write_csv(log: list[TelemetryRecord], out_path: str) -> None:
    """Emit the telemetry log as a byte-deterministic CSV file."""
    rows = sorted(log, key=lambda r: (r.tick, r.vehicle_id))
    try:
        with open(out_path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for r in rows:
                fh.write(
                    f"{r.tick},{r.vehicle_id},{r.x_m:.5f},{r.y_m:.5f},"
                    f"{r.heading_deg:.5f},{r.speed_m_s:.5f},"
                    f"{r.dist_from_origin_m:.5f},{r.angle_from_origin_deg:.5f},"
                    f"{r.state}\n"
                )
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


@dataclass(frozen=True)
class VehicleMetrics:
    total_distance_m: float
    mean_transit_speed_m_s: float
    job_completion_ticks: tuple[int, ...]


@dataclass(frozen=True)
class SummaryReport:
    per_vehicle: dict[int, VehicleMetrics]
    makespan_ticks: int


def metrics(log: list[TelemetryRecord]) -> SummaryReport:
    """Per-vehicle odometry and completion summary computed from the log."""
    if not log:
        raise EmptyLog("no telemetry records")
    by_vehicle: dict[int, list[TelemetryRecord]] = {}
    for rec in sorted(log, key=lambda r: (r.tick, r.vehicle_id)):
        by_vehicle.setdefault(rec.vehicle_id, []).append(rec)
    per_vehicle: dict[int, VehicleMetrics] = {}
    makespan = 0
    for vid, recs in sorted(by_vehicle.items()):
        dist = 0.0
        speeds: list[float] = []
        completions: list[int] = []
        for prev, cur in zip(recs, recs[1:]):
            dist += math.hypot(cur.x_m - prev.x_m, cur.y_m - prev.y_m)
            if cur.state == "IDLE" and prev.state == "RETRACING":
                completions.append(cur.tick)
        for rec in recs:
            if rec.speed_m_s > 0.0:
                speeds.append(rec.speed_m_s)
        mean_speed = sum(speeds) / len(speeds) if speeds else 0.0
        per_vehicle[vid] = VehicleMetrics(
            total_distance_m=dist,
            mean_transit_speed_m_s=mean_speed,
            job_completion_ticks=tuple(completions),
        )
        if completions:
            makespan = max(makespan, completions[-1])
    return SummaryReport(per_vehicle=per_vehicle, makespan_ticks=makespan)
