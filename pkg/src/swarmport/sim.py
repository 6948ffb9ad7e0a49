"""Fixed-timestep simulation engine, scenario config, and run artifacts.

One tick advances the world in a fixed phase order: RF delivery, hub
work, vehicle steps in ascending id, one radar step, telemetry emission,
reservation GC.  Everything downstream of the scenario (plus its seed)
is deterministic, so two runs produce byte-identical outputs.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields
from typing import Any

from .errors import (
    DecodeError,
    IoFailure,
    NoPath,
    NodeOutOfRange,
    NonPositiveDimension,
    NonPositiveSpeed,
    ScenarioInvalid,
    SpacingTooLarge,
)
from .grid import GridMap, NodeId, Position, build_grid
from .hub import (
    Hub,
    Job,
    VehicleMetrics,
    associate_radar,
    ingest_telemetry,
    metrics,
    write_csv,
)
from .planner import (
    INF_TICK,
    PathMemory,
    ReservationTable,
    astar,
    commit,
    hop_distances,
    plan_space_time,
    schedule_along,
)
from .radar import Disc, Scan, SweepConfig, WorldModel, detect_targets, echo_distance, encode_frame, render_frame
from .rfnet import (
    CHANNEL_COUNT,
    Channel,
    Medium,
    Message,
    MessageKind,
    Radio,
    decode,
    encode,
    write_capture,
)
from .vehicle import (
    AWAITING_ROUTE,
    IDLE,
    LOADED,
    UNLOADING,
    VehicleAgent,
    VehicleParams,
)

UNLOAD_DWELL_S = 1.0
NOPATH_RETRY_TICKS = 50
GC_INTERVAL_TICKS = 50
RENDER_EVERY_SWEEPS = 10
HOP_MARGIN_S = 1.0
START_DEFICIT_S = 0.4


# ----------------------------------------------------------------- scenario


@dataclass(frozen=True)
class TerrainConfig:
    width_m: float = 2.0
    height_m: float = 2.0
    spacing_m: float = 0.25
    blocked: tuple[NodeId, ...] = ()


@dataclass(frozen=True)
class SensorConfig:
    origin: Position = Position(1.0, 1.0)
    step_deg: float = 1.0
    beam_halfwidth_deg: float = 0.0
    max_range_m: float = 4.0


@dataclass(frozen=True)
class VehicleSpec:
    vehicle_id: int
    home_node: NodeId
    params: VehicleParams = field(default_factory=VehicleParams)


@dataclass(frozen=True)
class MediumConfig:
    loss_probability: float = 0.0
    latency_ticks: int = 0
    seed: int = 42


@dataclass(frozen=True)
class SimConfig:
    dt_s: float = 0.01
    max_ticks: int = 1_000_000
    telemetry_interval: int = 10


@dataclass(frozen=True)
class Scenario:
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    vehicles: tuple[VehicleSpec, ...] = ()
    jobs: tuple[Job, ...] = ()
    medium: MediumConfig = field(default_factory=MediumConfig)
    sim: SimConfig = field(default_factory=SimConfig)


def default_scenario() -> Scenario:
    """Desk-scale prototype: 2x2 m, two corner vehicles, center sensor mast."""
    return Scenario(
        terrain=TerrainConfig(blocked=(NodeId(4, 4),)),
        sensor=SensorConfig(),
        vehicles=(
            VehicleSpec(0, NodeId(0, 0)),
            VehicleSpec(1, NodeId(8, 0)),
        ),
        jobs=(
            Job(0, NodeId(1, 2), NodeId(7, 2)),
            Job(1, NodeId(7, 6), NodeId(1, 6)),
        ),
        medium=MediumConfig(),
        sim=SimConfig(),
    )


def _check_keys(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ScenarioInvalid(f"{where}: unknown field(s) {', '.join(unknown)}")


def _node(value: Any, where: str) -> NodeId:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        raise ScenarioInvalid(f"{where}: expected [ix, iy] integer pair, got {value!r}")
    return NodeId(value[0], value[1])


def scenario_from_dict(data: dict) -> Scenario:
    """Parse a scenario document; unknown fields anywhere are rejected."""
    if not isinstance(data, dict):
        raise ScenarioInvalid("top level: expected an object")
    _check_keys(data, {"terrain", "sensor", "vehicles", "jobs", "medium", "sim"}, "top level")

    t = data.get("terrain", {})
    _check_keys(t, {"width_m", "height_m", "spacing_m", "blocked"}, "terrain")
    terrain = TerrainConfig(
        width_m=t.get("width_m", 2.0),
        height_m=t.get("height_m", 2.0),
        spacing_m=t.get("spacing_m", 0.25),
        blocked=tuple(_node(b, "terrain.blocked") for b in t.get("blocked", [])),
    )

    s = data.get("sensor", {})
    _check_keys(s, {"origin", "step_deg", "beam_halfwidth_deg", "max_range_m"}, "sensor")
    origin = s.get("origin", [1.0, 1.0])
    if not isinstance(origin, (list, tuple)) or len(origin) != 2:
        raise ScenarioInvalid(f"sensor.origin: expected [x, y], got {origin!r}")
    sensor = SensorConfig(
        origin=Position(float(origin[0]), float(origin[1])),
        step_deg=s.get("step_deg", 1.0),
        beam_halfwidth_deg=s.get("beam_halfwidth_deg", 0.0),
        max_range_m=s.get("max_range_m", 4.0),
    )

    vehicles = []
    for i, v in enumerate(data.get("vehicles", [])):
        where = f"vehicles[{i}]"
        _check_keys(v, {"vehicle_id", "home_node", "params"}, where)
        if "vehicle_id" not in v or "home_node" not in v:
            raise ScenarioInvalid(f"{where}: vehicle_id and home_node are required")
        p = v.get("params", {})
        param_names = {f.name for f in fields(VehicleParams)}
        _check_keys(p, param_names, f"{where}.params")
        try:
            params = VehicleParams(**p)
        except ValueError as exc:
            raise ScenarioInvalid(f"{where}.params: {exc}") from exc
        vehicles.append(VehicleSpec(v["vehicle_id"], _node(v["home_node"], where), params))

    jobs = []
    for i, j in enumerate(data.get("jobs", [])):
        where = f"jobs[{i}]"
        _check_keys(j, {"job_id", "pickup_node", "destination_node", "release_tick"}, where)
        for req in ("job_id", "pickup_node", "destination_node"):
            if req not in j:
                raise ScenarioInvalid(f"{where}: {req} is required")
        try:
            jobs.append(
                Job(
                    j["job_id"],
                    _node(j["pickup_node"], where),
                    _node(j["destination_node"], where),
                    j.get("release_tick", 0),
                )
            )
        except ValueError as exc:
            raise ScenarioInvalid(f"{where}: {exc}") from exc

    m = data.get("medium", {})
    _check_keys(m, {"loss_probability", "latency_ticks", "seed"}, "medium")
    medium = MediumConfig(
        loss_probability=m.get("loss_probability", 0.0),
        latency_ticks=m.get("latency_ticks", 0),
        seed=m.get("seed", 42),
    )

    c = data.get("sim", {})
    _check_keys(c, {"dt_s", "max_ticks", "telemetry_interval"}, "sim")
    sim = SimConfig(
        dt_s=c.get("dt_s", 0.01),
        max_ticks=c.get("max_ticks", 1_000_000),
        telemetry_interval=c.get("telemetry_interval", 10),
    )

    scenario = Scenario(terrain, sensor, tuple(vehicles), tuple(jobs), medium, sim)
    validate_scenario(scenario)
    return scenario


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "terrain": {
            "width_m": scenario.terrain.width_m,
            "height_m": scenario.terrain.height_m,
            "spacing_m": scenario.terrain.spacing_m,
            "blocked": [list(b) for b in scenario.terrain.blocked],
        },
        "sensor": {
            "origin": list(scenario.sensor.origin),
            "step_deg": scenario.sensor.step_deg,
            "beam_halfwidth_deg": scenario.sensor.beam_halfwidth_deg,
            "max_range_m": scenario.sensor.max_range_m,
        },
        "vehicles": [
            {
                "vehicle_id": v.vehicle_id,
                "home_node": list(v.home_node),
                "params": {
                    f.name: getattr(v.params, f.name)
                    for f in fields(VehicleParams)
                    if getattr(v.params, f.name) != getattr(VehicleParams(), f.name)
                },
            }
            for v in scenario.vehicles
        ],
        "jobs": [
            {
                "job_id": j.job_id,
                "pickup_node": list(j.pickup_node),
                "destination_node": list(j.destination_node),
                "release_tick": j.release_tick,
            }
            for j in scenario.jobs
        ],
        "medium": {
            "loss_probability": scenario.medium.loss_probability,
            "latency_ticks": scenario.medium.latency_ticks,
            "seed": scenario.medium.seed,
        },
        "sim": {
            "dt_s": scenario.sim.dt_s,
            "max_ticks": scenario.sim.max_ticks,
            "telemetry_interval": scenario.sim.telemetry_interval,
        },
    }


def build_scenario_grid(scenario: Scenario) -> GridMap:
    t = scenario.terrain
    try:
        return build_grid(t.width_m, t.height_m, t.spacing_m, t.blocked)
    except (NonPositiveDimension, SpacingTooLarge, NodeOutOfRange) as exc:
        raise ScenarioInvalid(f"terrain: {exc}") from exc


def validate_scenario(scenario: Scenario) -> None:
    """Field-level checks; raises ScenarioInvalid naming the bad field."""
    grid = build_scenario_grid(scenario)
    for b in scenario.terrain.blocked:
        if not grid.contains(b):
            raise ScenarioInvalid(f"terrain.blocked: node {tuple(b)} outside grid")

    try:
        SweepConfig(
            origin=scenario.sensor.origin,
            step_deg=scenario.sensor.step_deg,
            beam_halfwidth_deg=scenario.sensor.beam_halfwidth_deg,
            max_range_m=scenario.sensor.max_range_m,
        )
    except (ValueError, NonPositiveSpeed) as exc:
        raise ScenarioInvalid(f"sensor: {exc}") from exc

    if len(scenario.vehicles) > CHANNEL_COUNT:
        raise ScenarioInvalid(
            f"vehicles: count {len(scenario.vehicles)} exceeds the {CHANNEL_COUNT}-channel limit"
        )
    seen_ids: set[int] = set()
    seen_homes: set[NodeId] = set()
    for v in scenario.vehicles:
        where = f"vehicles[{v.vehicle_id}]"
        if not 0 <= v.vehicle_id < CHANNEL_COUNT:
            raise ScenarioInvalid(f"{where}: vehicle_id outside 0..{CHANNEL_COUNT - 1}")
        if v.vehicle_id in seen_ids:
            raise ScenarioInvalid(f"{where}: duplicate vehicle_id")
        seen_ids.add(v.vehicle_id)
        if not grid.contains(v.home_node):
            raise ScenarioInvalid(f"{where}: home_node {tuple(v.home_node)} outside grid")
        if grid.is_blocked(v.home_node):
            raise ScenarioInvalid(f"{where}: home_node {tuple(v.home_node)} is blocked")
        if v.home_node in seen_homes:
            raise ScenarioInvalid(f"{where}: home_node {tuple(v.home_node)} already taken")
        seen_homes.add(v.home_node)

    seen_jobs: set[int] = set()
    for j in scenario.jobs:
        where = f"jobs[{j.job_id}]"
        if j.job_id in seen_jobs:
            raise ScenarioInvalid(f"{where}: duplicate job_id")
        seen_jobs.add(j.job_id)
        for label, node in (("pickup_node", j.pickup_node), ("destination_node", j.destination_node)):
            if not grid.contains(node):
                raise ScenarioInvalid(f"{where}.{label}: node {tuple(node)} outside grid")
            if grid.is_blocked(node):
                raise ScenarioInvalid(f"{where}.{label}: node {tuple(node)} is blocked")
        if j.release_tick < 0:
            raise ScenarioInvalid(f"{where}: release_tick must be >= 0")

    m = scenario.medium
    if not 0.0 <= m.loss_probability < 1.0:
        raise ScenarioInvalid("medium.loss_probability: must be in [0, 1)")
    if m.latency_ticks < 0:
        raise ScenarioInvalid("medium.latency_ticks: must be >= 0")

    c = scenario.sim
    if c.dt_s <= 0:
        raise ScenarioInvalid("sim.dt_s: must be positive")
    taus = [v.params.motor_time_constant_s for v in scenario.vehicles] or [
        VehicleParams().motor_time_constant_s
    ]
    if c.dt_s > min(taus) / 2:
        raise ScenarioInvalid(
            f"sim.dt_s: {c.dt_s} exceeds stability guard tau/2 = {min(taus) / 2}"
        )
    if c.max_ticks < 1:
        raise ScenarioInvalid("sim.max_ticks: must be >= 1")
    if c.telemetry_interval < 1:
        raise ScenarioInvalid("sim.telemetry_interval: must be >= 1")


def hop_window_ticks(scenario: Scenario) -> int:
    """Worst-case single hop (180 deg turn + drive + margin) in ticks."""
    spacing = scenario.terrain.spacing_m
    worst = 0.0
    specs = scenario.vehicles or (VehicleSpec(0, NodeId(0, 0)),)
    for v in specs:
        p = v.params
        turn = math.pi * p.track_m / (2.0 * p.cruise_speed_m_s)
        drive = spacing / p.cruise_speed_m_s
        worst = max(worst, turn + drive + HOP_MARGIN_S)
    return max(1, math.ceil(worst / scenario.sim.dt_s))


# ----------------------------------------------------------------- engine


@dataclass
class JobTrace:
    vehicle_id: int
    job_id: int
    outbound: tuple[NodeId, ...]
    retraced: tuple[NodeId, ...]
    final_pose: tuple[float, float]
    home_position: tuple[float, float]
    complete_tick: int


@dataclass
class _SimVehicle:
    agent: VehicleAgent
    radio: Radio
    channel: int
    home_node: NodeId
    job: Job | None = None
    pending: tuple[str, NodeId | None] | None = None
    retry_at: int = 0
    unload_at: int | None = None
    outbound_trail: tuple[NodeId, ...] = ()
    retrace_driven: list[NodeId] = field(default_factory=list)


@dataclass(frozen=True)
class SimReport:
    completed_jobs: int
    total_jobs: int
    makespan_ticks: int
    ticks_run: int
    per_vehicle: dict[int, VehicleMetrics]
    artifacts: dict[str, Any]


class Simulation:
    """Mutable world state; ``tick()`` advances it one fixed timestep."""

    def __init__(self, scenario: Scenario, *, trace: bool = False, capture: bool = False) -> None:
        validate_scenario(scenario)
        self.scenario = scenario
        self.grid = build_scenario_grid(scenario)
        self.dt = scenario.sim.dt_s
        self.hub = Hub(self.grid)
        self.table = ReservationTable()
        self.memory = PathMemory()
        self.medium = Medium(
            scenario.medium.loss_probability,
            scenario.medium.latency_ticks,
            scenario.medium.seed,
            capture=capture,
        )
        self.ticks_per_hop = hop_window_ticks(scenario)
        self.unload_ticks = max(1, round(UNLOAD_DWELL_S / self.dt))
        # Nodes where some vehicle may park open-ended (homes, pickups,
        # drop-offs).  Legs never route through them, so no trail can be
        # blocked forever by a parked vehicle.
        self.park_spots: frozenset[NodeId] = frozenset(
            [v.home_node for v in scenario.vehicles]
            + [j.pickup_node for j in scenario.jobs]
            + [j.destination_node for j in scenario.jobs]
        )
        self._feasible_cache: dict[tuple[int, int], bool] = {}

        self.vehicles: dict[int, _SimVehicle] = {}
        self.hub_radios: list[Radio] = []
        for vcfg in sorted(scenario.vehicles, key=lambda v: v.vehicle_id):
            agent = VehicleAgent(
                vcfg.vehicle_id,
                vcfg.home_node,
                self.grid.node_to_position(vcfg.home_node),
                params=vcfg.params,
            )
            agent.departure_gate = self._departure_gate
            agent.arrival_hook = self._on_arrival
            radio = self.medium.attach(Radio(Channel(vcfg.vehicle_id)))
            self.hub_radios.append(self.medium.attach(Radio(Channel(vcfg.vehicle_id))))
            self.hub.register_vehicle(vcfg.vehicle_id, vcfg.home_node)
            self.table.reserve(vcfg.vehicle_id, vcfg.home_node, 0, INF_TICK)
            self.vehicles[vcfg.vehicle_id] = _SimVehicle(
                agent=agent, radio=radio, channel=vcfg.vehicle_id, home_node=vcfg.home_node
            )
        for job in scenario.jobs:
            self.hub.add_job(job)
        self.hub.dispatch_filter = self._job_feasible

        self.sensor_cfg = SweepConfig(
            origin=scenario.sensor.origin,
            step_deg=scenario.sensor.step_deg,
            beam_halfwidth_deg=scenario.sensor.beam_halfwidth_deg,
            max_range_m=scenario.sensor.max_range_m,
        )
        self._sweep_len = max(1, int(math.floor(360.0 / self.sensor_cfg.step_deg + 1e-9)))
        self._radar_idx = 0
        self._radar_dir = 1
        self._sweep_samples: list[tuple[float, float | None]] = []
        self.sweep_count = 0
        self.frame_lines: list[str] = []
        self.renders: list[tuple[int, Scan]] = []
        self.last_targets = []
        self.last_association: dict[int, int | str] = {}

        self.tick_count = 0
        self.completed_jobs = 0
        self.total_jobs = len(scenario.jobs)
        self.last_complete_tick = 0
        self.job_traces: list[JobTrace] = []

        self.trace = trace
        self.pose_trace: list[list[tuple[float, float]]] = []
        self.occupancy_trace: list[list[tuple[int, int]]] = []

    # -- callbacks ----------------------------------------------------

    def _departure_gate(self, agent: VehicleAgent, next_node: NodeId, now: int, scheduled: int) -> bool:
        conflict = self.table.reserve(agent.vehicle_id, next_node, now, scheduled)
        return conflict is None

    def _on_arrival(self, agent: VehicleAgent, node: NodeId, tick: int) -> None:
        sv = self.vehicles[agent.vehicle_id]
        if agent.route_kind in ("reposition", "transit"):
            self.memory.record_node(agent.vehicle_id, node)
        elif agent.route_kind == "retrace":
            sv.retrace_driven.append(node)

    # -- planning helpers ---------------------------------------------

    def _repark(self, sv: _SimVehicle, now: int) -> None:
        self.table.release_vehicle(sv.agent.vehicle_id)
        self.table.reserve(sv.agent.vehicle_id, sv.agent.current_node, now, INF_TICK)

    def _routing_grid(self, src: NodeId, dst: NodeId) -> GridMap:
        extra = self.park_spots - {src, dst}
        if not extra:
            return self.grid
        t = self.scenario.terrain
        return build_grid(t.width_m, t.height_m, t.spacing_m, self.grid.blocked | extra)

    def _job_feasible(self, vid: int, job: Job) -> bool:
        """Both legs must exist on the park-spot-restricted grid.

        A vehicle is only ever offered a job while parked at home, so the
        reposition leg starts there.
        """
        key = (vid, job.job_id)
        cached = self._feasible_cache.get(key)
        if cached is not None:
            return cached
        home = self.vehicles[vid].home_node
        g = self._routing_grid(home, job.pickup_node)
        ok = job.pickup_node in hop_distances(g, home)
        if ok:
            g = self._routing_grid(job.pickup_node, job.destination_node)
            ok = job.destination_node in hop_distances(g, job.pickup_node)
        self._feasible_cache[key] = ok
        return ok

    def _plan_reposition(self, sv: _SimVehicle, dest: NodeId, now: int) -> None:
        agent = sv.agent
        vid = agent.vehicle_id
        try:
            self.table.release_vehicle(vid)
            grid = self._routing_grid(agent.current_node, dest)
            tp = plan_space_time(grid, self.table, agent.current_node, dest, now, self.ticks_per_hop)
            commit(self.table, vid, tp)
        except NoPath:
            self._repark(sv, now)
            sv.pending = ("reposition", dest)
            sv.retry_at = now + NOPATH_RETRY_TICKS
            return
        self.memory.record_node(vid, agent.current_node)
        agent.begin_reposition(tp)
        sv.pending = None

    def _plan_cargo(self, sv: _SimVehicle, dest: NodeId, now: int) -> None:
        agent = sv.agent
        vid = agent.vehicle_id
        try:
            self.table.release_vehicle(vid)
            grid = self._routing_grid(agent.current_node, dest)
            tp = plan_space_time(grid, self.table, agent.current_node, dest, now, self.ticks_per_hop)
            commit(self.table, vid, tp)
        except NoPath:
            self._repark(sv, now)
            sv.pending = ("cargo", dest)
            sv.retry_at = now + NOPATH_RETRY_TICKS
            agent.queue_ack()
            return
        agent.on_destination(dest, tp)
        sv.pending = None

    def _start_retrace(self, sv: _SimVehicle, now: int) -> None:
        agent = sv.agent
        vid = agent.vehicle_id
        trail = self.memory.trail(vid)
        sequence = list(reversed(trail))
        horizon = 10 * (self.grid.nx - 1 + self.grid.ny - 1) + len(sequence)
        try:
            self.table.release_vehicle(vid)
            tp = schedule_along(self.table, sequence, now, self.ticks_per_hop, horizon)
            commit(self.table, vid, tp)
        except NoPath:
            self._repark(sv, now)
            sv.pending = ("retrace", None)
            sv.retry_at = now + NOPATH_RETRY_TICKS
            return
        sv.outbound_trail = tuple(trail)
        sv.retrace_driven = [agent.current_node]
        agent.unload(self.memory, tp)
        sv.pending = None
        sv.unload_at = None

    def _attempt_pending(self, sv: _SimVehicle, now: int) -> None:
        assert sv.pending is not None
        kind, goal = sv.pending
        if kind == "reposition":
            self._plan_reposition(sv, goal, now)
        elif kind == "cargo":
            self._plan_cargo(sv, goal, now)
        else:
            self._start_retrace(sv, now)

    def _handle_assign(self, sv: _SimVehicle, dest: NodeId, now: int) -> None:
        agent = sv.agent
        if agent.state == IDLE:
            if agent.busy or (agent.route_finished and agent.route_kind == "reposition"):
                agent.queue_ack()
                return
            if sv.pending is not None:
                agent.queue_ack()
                return
            agent.queue_ack()
            if dest == agent.current_node:
                self.memory.record_node(agent.vehicle_id, agent.current_node)
                agent.press_load_switch()
            else:
                self._plan_reposition(sv, dest, now)
        elif agent.state in (LOADED, AWAITING_ROUTE):
            if dest == agent.current_node or sv.pending is not None:
                agent.queue_ack()
                return
            self._plan_cargo(sv, dest, now)
        else:
            agent.queue_ack()

    # -- tick phases ----------------------------------------------------

    def _deliver(self, now: int) -> list[Message]:
        for sv in self.vehicles.values():
            for frame in self.medium.poll(sv.radio, now):
                try:
                    msg = decode(frame)
                except DecodeError:
                    continue
                if msg.kind == MessageKind.ASSIGN_DESTINATION and msg.vehicle_id == sv.agent.vehicle_id:
                    self._handle_assign(sv, NodeId(msg.dest[0], msg.dest[1]), now)
        inbound: list[Message] = []
        for radio in self.hub_radios:
            for frame in self.medium.poll(radio, now):
                try:
                    msg = decode(frame)
                except DecodeError:
                    continue
                if msg.kind in (MessageKind.ACTIVATE, MessageKind.TELEMETRY, MessageKind.ACK):
                    inbound.append(msg)
        return inbound

    def _hub_phase(self, inbound: list[Message], now: int) -> None:
        for sv in self.vehicles.values():
            self.hub.observe(sv.agent.vehicle_id, sv.agent.current_node, sv.agent.state)
        for msg in inbound:
            if msg.kind == MessageKind.ACTIVATE:
                self.hub.on_activate(msg.vehicle_id, now)
            elif msg.kind == MessageKind.ACK:
                self.hub.on_ack(msg.vehicle_id)
            else:
                ingest_telemetry(self.hub, msg, now)
        self.hub.dispatch(now)
        for channel_idx, msg in self.hub.outbox:
            self.medium.send(Channel(channel_idx), encode(msg), now)
        self.hub.outbox.clear()

    def _vehicle_phase(self, now: int) -> None:
        for vid in sorted(self.vehicles):
            sv = self.vehicles[vid]
            agent = sv.agent
            if sv.pending is not None and now >= sv.retry_at:
                self._attempt_pending(sv, now)
            if (
                agent.state == UNLOADING
                and sv.unload_at is not None
                and now >= sv.unload_at
                and sv.pending is None
            ):
                self._start_retrace(sv, now)
            agent.step(self.grid, self.dt)
            self._post_step(sv, now)
            for msg in agent.outbox:
                self.medium.send(Channel(sv.channel), encode(msg), now)
            agent.outbox.clear()

    def _post_step(self, sv: _SimVehicle, now: int) -> None:
        agent = sv.agent
        if not agent.route_finished:
            return
        kind = agent.route_kind
        if kind == "reposition" and agent.state == IDLE:
            agent.clear_route()
            agent.press_load_switch()
        elif kind == "transit" and agent.state == UNLOADING:
            agent.clear_route()
            if sv.unload_at is None:
                sv.unload_at = now + self.unload_ticks
        elif kind == "retrace" and agent.state == IDLE:
            agent.clear_route()
            job = sv.job or self.hub.vehicles[agent.vehicle_id].job
            job_id = job.job_id if job is not None else -1
            home_xy = self.grid.node_to_position(sv.home_node)
            self.job_traces.append(
                JobTrace(
                    vehicle_id=agent.vehicle_id,
                    job_id=job_id,
                    outbound=sv.outbound_trail,
                    retraced=tuple(sv.retrace_driven),
                    final_pose=(agent.pose.x, agent.pose.y),
                    home_position=(home_xy.x, home_xy.y),
                    complete_tick=now,
                )
            )
            self.hub.on_job_complete(agent.vehicle_id, now)
            sv.job = None
            sv.outbound_trail = ()
            sv.retrace_driven = []
            self.completed_jobs += 1
            self.last_complete_tick = now

    def _radar_phase(self, now: int) -> None:
        angle = self._radar_idx * self.sensor_cfg.step_deg
        world = WorldModel(
            [
                Disc(Position(sv.agent.pose.x, sv.agent.pose.y), sv.agent.params.body_radius_m)
                for sv in self.vehicles.values()
            ]
        )
        dist = echo_distance(world, self.sensor_cfg, angle)
        self._sweep_samples.append((angle, dist))
        self.frame_lines.append(encode_frame(angle, dist))
        self._radar_idx += self._radar_dir
        if self._radar_idx >= self._sweep_len or self._radar_idx < 0:
            scan = Scan(self.sensor_cfg.origin, list(self._sweep_samples), self._radar_dir)
            self.sweep_count += 1
            self.last_targets = detect_targets(scan, self.sensor_cfg)
            self.last_association = associate_radar(self.hub, self.last_targets, self.hub.fleet_view())
            if self.sweep_count == 1 or self.sweep_count % RENDER_EVERY_SWEEPS == 0:
                self.renders.append((self.sweep_count, scan))
            self._sweep_samples = []
            self._radar_dir = -self._radar_dir
            self._radar_idx = 0 if self._radar_dir > 0 else self._sweep_len - 1

    def _telemetry_phase(self, now: int) -> None:
        if now % self.scenario.sim.telemetry_interval != 0:
            return
        for vid in sorted(self.vehicles):
            sv = self.vehicles[vid]
            self.medium.send(Channel(sv.channel), encode(sv.agent.telemetry()), now)

    def _trace_phase(self) -> None:
        poses: list[tuple[float, float]] = []
        occupancy: list[tuple[int, int]] = []
        for vid in sorted(self.vehicles):
            agent = self.vehicles[vid].agent
            poses.append((agent.pose.x, agent.pose.y))
            edge = agent.edge_in_progress()
            src = agent.current_node
            dst = edge[1] if edge is not None else src
            occupancy.append((src.ix * self.grid.ny + src.iy, dst.ix * self.grid.ny + dst.iy))
        self.pose_trace.append(poses)
        self.occupancy_trace.append(occupancy)

    def tick(self) -> None:
        now = self.tick_count
        inbound = self._deliver(now)
        self._hub_phase(inbound, now)
        self._vehicle_phase(now)
        self._radar_phase(now)
        self._telemetry_phase(now)
        if now > 0 and now % GC_INTERVAL_TICKS == 0:
            self.table.gc(now)
        if self.trace:
            self._trace_phase()
        self.tick_count += 1

    @property
    def all_done(self) -> bool:
        if self.completed_jobs < self.total_jobs:
            return False
        return all(
            sv.agent.state == IDLE and not sv.agent.busy and sv.pending is None
            for sv in self.vehicles.values()
        )

    def run_loop(self) -> None:
        while self.tick_count < self.scenario.sim.max_ticks:
            self.tick()
            if self.all_done:
                break


# ----------------------------------------------------------------- artifacts


def run(scenario: Scenario, out_dir, *, trace: bool = False, capture: bool = True) -> SimReport:
    """Run to completion (or max_ticks) and write all artifacts."""
    sim = Simulation(scenario, trace=trace, capture=capture)
    sim.run_loop()

    artifacts: dict[str, Any] = {}
    try:
        os.makedirs(out_dir, exist_ok=True)
        frames_dir = os.path.join(out_dir, "frames")
        os.makedirs(frames_dir, exist_ok=True)

        write_csv(sim.hub.log, os.path.join(out_dir, "telemetry.csv"))
        artifacts["telemetry_csv"] = "telemetry.csv"

        with open(os.path.join(out_dir, "scan_stream.txt"), "w", encoding="ascii", newline="\n") as fh:
            fh.write("".join(sim.frame_lines))
        artifacts["scan_stream"] = "scan_stream.txt"

        frame_paths = []
        for sweep_idx, scan in sim.renders:
            rel = os.path.join("frames", f"sweep_{sweep_idx:04d}.svg")
            render_frame(scan, (scenario.terrain.width_m, scenario.terrain.height_m), os.path.join(out_dir, rel))
            frame_paths.append(rel)
        artifacts["frames"] = frame_paths

        if sim.medium.capture is not None:
            write_capture(sim.medium.capture, os.path.join(out_dir, "capture.bin"))
            artifacts["capture"] = "capture.bin"
    except OSError as exc:
        raise IoFailure(str(exc)) from exc

    per_vehicle: dict[int, VehicleMetrics] = {}
    if sim.hub.log:
        per_vehicle = metrics(sim.hub.log).per_vehicle
    makespan = sim.last_complete_tick if sim.completed_jobs else 0
    report = SimReport(
        completed_jobs=sim.completed_jobs,
        total_jobs=sim.total_jobs,
        makespan_ticks=makespan,
        ticks_run=sim.tick_count,
        per_vehicle=per_vehicle,
        artifacts=artifacts,
    )

    summary = {
        "completed_jobs": report.completed_jobs,
        "total_jobs": report.total_jobs,
        "makespan_ticks": report.makespan_ticks,
        "ticks_run": report.ticks_run,
        "per_vehicle": {
            str(vid): {
                "total_distance_m": round(m.total_distance_m, 5),
                "mean_transit_speed_m_s": round(m.mean_transit_speed_m_s, 5),
                "job_completion_ticks": list(m.job_completion_ticks),
            }
            for vid, m in sorted(per_vehicle.items())
        },
        "artifacts": artifacts,
    }
    try:
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="ascii", newline="\n") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        lines = [
            f"jobs completed: {report.completed_jobs}/{report.total_jobs}",
            f"makespan ticks: {report.makespan_ticks}",
            f"ticks run: {report.ticks_run}",
        ]
        for vid, m in sorted(per_vehicle.items()):
            lines.append(
                f"vehicle {vid}: distance {m.total_distance_m:.5f} m, "
                f"mean speed {m.mean_transit_speed_m_s:.5f} m/s, "
                f"completions {list(m.job_completion_ticks)}"
            )
        with open(os.path.join(out_dir, "summary.txt"), "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    artifacts["summary_json"] = "summary.json"
    artifacts["summary_txt"] = "summary.txt"
    return report


# ----------------------------------------------------------------- estimate


def _turn_time_s(angle_deg: float, params: VehicleParams) -> float:
    return math.radians(angle_deg) * params.track_m / (2.0 * params.cruise_speed_m_s)


def _leg_time_s(leg: list[NodeId], heading: float, params: VehicleParams, spacing: float) -> tuple[float, float]:
    t = START_DEFICIT_S
    for cur, nxt in zip(leg, leg[1:]):
        target = math.degrees(math.atan2(nxt[1] - cur[1], nxt[0] - cur[0])) % 360.0
        diff = abs(target - heading) % 360.0
        diff = min(diff, 360.0 - diff)
        if diff:
            t += _turn_time_s(diff, params)
            heading = target
        t += spacing / params.cruise_speed_m_s
    return t, heading


def analytic_makespan_ticks(scenario: Scenario) -> int:
    """Kinematic hand estimate: drive time + turn time + start/stop slack.

    Assumes uncongested canonical routes with one full job cycle per
    assignment (out to pickup, transit to destination, retrace home).
    """
    if not scenario.vehicles or not scenario.jobs:
        return 0
    grid = build_scenario_grid(scenario)
    finish: dict[int, float] = {v.vehicle_id: 0.0 for v in scenario.vehicles}
    homes = {v.vehicle_id: v.home_node for v in scenario.vehicles}
    params = {v.vehicle_id: v.params for v in scenario.vehicles}
    spacing = scenario.terrain.spacing_m
    for job in sorted(scenario.jobs, key=lambda j: (j.release_tick, j.job_id)):
        vid = min(
            finish,
            key=lambda v: (
                finish[v],
                len(astar(grid, homes[v], job.pickup_node).nodes),
                v,
            ),
        )
        p = params[vid]
        to_pickup = astar(grid, homes[vid], job.pickup_node).nodes
        to_dest = astar(grid, job.pickup_node, job.destination_node).nodes
        outbound = to_pickup + to_dest[1:]
        heading = 0.0
        total = max(finish[vid], job.release_tick * scenario.sim.dt_s)
        t, heading = _leg_time_s(to_pickup, heading, p, spacing)
        total += t
        t, heading = _leg_time_s(to_dest, heading, p, spacing)
        total += t + UNLOAD_DWELL_S
        t, heading = _leg_time_s(list(reversed(outbound)), heading, p, spacing)
        total += t
        finish[vid] = total
    latest = max(finish.values(), default=0.0)
    return math.ceil(latest / scenario.sim.dt_s)
