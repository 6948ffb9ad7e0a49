"""Route planning over the virtual-node grid.

Four shortest-path algorithms share one canonical tie-break so every
planner returns the same node sequence: among equal-hop routes, prefer
the one whose direction sequence comes first in East, North, West, South
order.  On top of that sit space-time reservations (half-open tick
intervals per node) and a cooperative planner that threads a route
through the reservations of other vehicles, waiting where needed.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import BadInterval, EmptyMemory, GridTooLarge, NoPath
from .grid import GridMap, NodeId

INF_TICK = math.inf


@dataclass
class Path:
    """Spatial route: consecutive nodes are grid neighbors, cost = hops."""

    nodes: list[NodeId]
    cost: int


class TimedStep(NamedTuple):
    node: NodeId
    enter_tick: int
    exit_tick: int


@dataclass
class TimedPath:
    """Route with tick windows.

    ``enter_tick`` is when the vehicle starts claiming the node (the move
    toward it begins), ``exit_tick`` when its departure move begins.  A
    stay longer than one hop window means the plan waits at that node.
    """

    steps: list[TimedStep]
    ticks_per_hop: int

    @property
    def route(self) -> list[NodeId]:
        return [s.node for s in self.steps]

    @property
    def arrival_tick(self) -> int:
        return self.steps[-1].enter_tick + self.ticks_per_hop


def _check_endpoints(grid: GridMap, src: NodeId, dst: NodeId) -> None:
    grid.require(src)
    grid.require(dst)
    if src in grid.blocked or dst in grid.blocked:
        raise NoPath(f"endpoint blocked: {tuple(src)} -> {tuple(dst)}")


def hop_distances(grid: GridMap, root: NodeId) -> dict[NodeId, int]:
    """Breadth-first hop counts from ``root`` to every reachable node."""
    grid.require(root)
    if root in grid.blocked:
        return {}
    dist = {root: 0}
    queue = deque([root])
    while queue:
        cur = queue.popleft()
        d = dist[cur] + 1
        for nb in grid.neighbors(cur):
            if nb not in dist:
                dist[nb] = d
                queue.append(nb)
    return dist


def _canonical_walk(grid: GridMap, src: NodeId, dst: NodeId, to_dst: dict[NodeId, int]) -> Path:
    """Walk from src picking the first E,N,W,S neighbor that nears dst."""
    nodes = [src]
    cur = src
    while cur != dst:
        remaining = to_dst[cur]
        for nb in grid.neighbors(cur):
            if to_dst.get(nb, math.inf) == remaining - 1:
                cur = nb
                break
        nodes.append(cur)
    return Path(nodes, len(nodes) - 1)


def dijkstra(grid: GridMap, src: NodeId, dst: NodeId) -> Path:
    """Uniform-cost search; rooted at dst so reconstruction walks forward."""
    _check_endpoints(grid, src, dst)
    dist: dict[NodeId, int] = {}
    heap: list[tuple[int, NodeId]] = [(0, dst)]
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in dist:
            continue
        dist[cur] = d
        if cur == src:
            break
        for nb in grid.neighbors(cur):
            if nb not in dist:
                heapq.heappush(heap, (d + 1, nb))
    if src not in dist:
        raise NoPath(f"no route {tuple(src)} -> {tuple(dst)}")
    return _canonical_walk(grid, src, dst, dist)


def astar(grid: GridMap, src: NodeId, dst: NodeId) -> Path:
    """A* with the Manhattan heuristic (admissible on a unit 4-grid)."""
    _check_endpoints(grid, src, dst)

    def h(n: NodeId) -> int:
        return abs(n[0] - dst[0]) + abs(n[1] - dst[1])

    best: dict[NodeId, int] = {src: 0}
    closed: set[NodeId] = set()
    heap: list[tuple[int, int, NodeId]] = [(h(src), 0, src)]
    cost = None
    while heap:
        f, g, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        closed.add(cur)
        if cur == dst:
            cost = g
            break
        for nb in grid.neighbors(cur):
            ng = g + 1
            if ng < best.get(nb, math.inf):
                best[nb] = ng
                heapq.heappush(heap, (ng + h(nb), ng, nb))
    if cost is None:
        raise NoPath(f"no route {tuple(src)} -> {tuple(dst)}")
    path = _canonical_walk(grid, src, dst, hop_distances(grid, dst))
    return Path(path.nodes, cost)


def bellman_ford(grid: GridMap, src: NodeId) -> dict[NodeId, int]:
    """Single-source hop counts by edge relaxation; unreachable nodes absent."""
    grid.require(src)
    if src in grid.blocked:
        return {}
    edges = []
    for iy in range(grid.ny):
        for ix in range(grid.nx):
            n = NodeId(ix, iy)
            if n in grid.blocked:
                continue
            for nb in grid.neighbors(n):
                edges.append((n, nb))
    dist = {src: 0}
    for _ in range(grid.node_count - 1):
        changed = False
        for a, b in edges:
            da = dist.get(a)
            if da is not None and da + 1 < dist.get(b, math.inf):
                dist[b] = da + 1
                changed = True
        if not changed:
            break
    return dist


@dataclass
class AllPairsCosts:
    """Dense hop-count matrix over every node, inf where unreachable."""

    nodes: list[NodeId]
    index: dict[NodeId, int]
    matrix: np.ndarray

    def cost(self, a: NodeId, b: NodeId) -> float:
        return float(self.matrix[self.index[a], self.index[b]])


def floyd_warshall(grid: GridMap) -> AllPairsCosts:
    """All-pairs hop counts; guarded to small grids (cubic in nodes)."""
    n = grid.node_count
    if n > 1000:
        raise GridTooLarge(f"{n} nodes exceeds the 1000-node all-pairs guard")
    nodes = [NodeId(ix, iy) for ix in range(grid.nx) for iy in range(grid.ny)]
    index = {node: i for i, node in enumerate(nodes)}
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for node in nodes:
        if node in grid.blocked:
            continue
        i = index[node]
        for nb in grid.neighbors(node):
            d[i, index[nb]] = 1.0
    for k in range(n):
        np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :], out=d)
    return AllPairsCosts(nodes, index, d)


class Conflict(NamedTuple):
    vehicle_id: int


class ReservationTable:
    """Half-open [tick_start, tick_end) holds of grid nodes per vehicle.

    Intervals of distinct vehicles never overlap on a node; a vehicle may
    freely stack or extend its own holds.
    """

    def __init__(self) -> None:
        self._holds: dict[NodeId, list[tuple[float, float, int]]] = {}

    def reserve(self, vehicle_id: int, node: NodeId, tick_start: float, tick_end: float) -> Conflict | None:
        """Add a hold, or report the first conflicting vehicle untouched."""
        if not tick_start < tick_end:
            raise BadInterval(f"empty interval [{tick_start}, {tick_end})")
        holds = self._holds.setdefault(node, [])
        for start, end, vid in holds:
            if vid != vehicle_id and tick_start < end and start < tick_end:
                return Conflict(vid)
        holds.append((tick_start, tick_end, vehicle_id))
        holds.sort(key=lambda h: (h[0], h[1], h[2]))
        return None

    def is_free(self, node: NodeId, tick_start: float, tick_end: float, ignore_vehicle: int | None = None) -> bool:
        for start, end, vid in self._holds.get(node, ()):
            if vid == ignore_vehicle:
                continue
            if tick_start < end and start < tick_end:
                return False
        return True

    def free_from(self, node: NodeId, tick: float, ignore_vehicle: int | None = None) -> bool:
        """True when no hold by another vehicle extends past ``tick``."""
        for _, end, vid in self._holds.get(node, ()):
            if vid != ignore_vehicle and end > tick:
                return False
        return True

    def release_vehicle(self, vehicle_id: int) -> None:
        for node in list(self._holds):
            kept = [h for h in self._holds[node] if h[2] != vehicle_id]
            if kept:
                self._holds[node] = kept
            else:
                del self._holds[node]

    def gc(self, tick: float) -> int:
        """Drop holds that ended at or before ``tick``; returns count dropped."""
        dropped = 0
        for node in list(self._holds):
            kept = [h for h in self._holds[node] if h[1] > tick]
            dropped += len(self._holds[node]) - len(kept)
            if kept:
                self._holds[node] = kept
            else:
                del self._holds[node]
        return dropped

    def holds_of(self, vehicle_id: int) -> list[tuple[NodeId, float, float]]:
        out = []
        for node, holds in self._holds.items():
            for start, end, vid in holds:
                if vid == vehicle_id:
                    out.append((node, start, end))
        out.sort(key=lambda h: (h[1], h[2], h[0]))
        return out

    def snapshot(self) -> dict[NodeId, list[tuple[float, float, int]]]:
        return {node: list(holds) for node, holds in self._holds.items()}


def plan_space_time(
    grid: GridMap,
    table: ReservationTable,
    src: NodeId,
    dst: NodeId,
    start_tick: int,
    ticks_per_hop: int,
) -> TimedPath:
    """Earliest-arrival route through existing reservations.

    Time advances in whole hop windows of ``ticks_per_hop`` ticks.  During
    a move the vehicle claims both edge endpoints for the window, so two
    plans can never occupy nearby poses at the same tick.  The destination
    must stay free after arrival (the vehicle parks there).  Waiting in
    place is allowed; with an empty table the result degenerates to the
    astar route with zero waits.
    """
    _check_endpoints(grid, src, dst)
    h = ticks_per_hop
    if h <= 0:
        raise BadInterval(f"ticks_per_hop must be positive, got {h}")
    t0 = start_tick

    def window_free(node: NodeId, k: int) -> bool:
        return table.is_free(node, t0 + k * h, t0 + (k + 1) * h)

    if src == dst:
        if not table.free_from(dst, t0):
            raise NoPath(f"destination {tuple(dst)} reserved past arrival")
        return TimedPath([TimedStep(src, t0, t0 + h)], h)

    max_slots = 10 * (grid.nx - 1 + grid.ny - 1)
    reachable: list[set[NodeId]] = [{src}]
    arrival_slot = None
    for k in range(max_slots):
        nxt: set[NodeId] = set()
        for node in reachable[k]:
            if not window_free(node, k):
                continue
            nxt.add(node)
            for nb in grid.neighbors(node):
                if window_free(nb, k):
                    nxt.add(nb)
        reachable.append(nxt)
        if dst in nxt and table.free_from(dst, t0 + (k + 1) * h):
            arrival_slot = k + 1
            break
    if arrival_slot is None:
        raise NoPath(f"no conflict-free route {tuple(src)} -> {tuple(dst)} within horizon")

    # Backward feasibility, then a forward walk preferring moves in
    # canonical direction order so ties resolve like the plain planners.
    feasible: list[set[NodeId]] = [set() for _ in range(arrival_slot + 1)]
    feasible[arrival_slot] = {dst}
    for k in range(arrival_slot - 1, -1, -1):
        nxt = feasible[k + 1]
        for node in reachable[k]:
            if not window_free(node, k):
                continue
            if node in nxt or any(nb in nxt and window_free(nb, k) for nb in grid.neighbors(node)):
                feasible[k].add(node)

    boundary = [src]
    cur = src
    for k in range(arrival_slot):
        nxt = feasible[k + 1]
        step = cur
        for nb in grid.neighbors(cur):
            if nb in nxt and window_free(nb, k):
                step = nb
                break
        if step is cur and cur not in nxt:
            raise NoPath("internal: walk lost feasibility")  # pragma: no cover
        boundary.append(step)
        cur = step

    return TimedPath(_collapse(boundary, t0, h), h)


def schedule_along(
    table: ReservationTable,
    sequence: list[NodeId],
    start_tick: int,
    ticks_per_hop: int,
    max_slots: int,
) -> TimedPath:
    """Time a fixed node sequence through the table, waiting where needed."""
    if not sequence:
        raise NoPath("empty sequence")
    h = ticks_per_hop
    t0 = start_tick

    def window_free(i: int, k: int) -> bool:
        return table.is_free(sequence[i], t0 + k * h, t0 + (k + 1) * h)

    last = len(sequence) - 1
    if last == 0:
        if not table.free_from(sequence[0], t0):
            raise NoPath("terminal node reserved past arrival")
        return TimedPath([TimedStep(sequence[0], t0, t0 + h)], h)

    reachable: list[set[int]] = [{0}]
    arrival_slot = None
    for k in range(max_slots):
        nxt: set[int] = set()
        for i in reachable[k]:
            if not window_free(i, k):
                continue
            nxt.add(i)
            if i < last and window_free(i + 1, k):
                nxt.add(i + 1)
        reachable.append(nxt)
        if last in nxt and table.free_from(sequence[last], t0 + (k + 1) * h):
            arrival_slot = k + 1
            break
    if arrival_slot is None:
        raise NoPath("no conflict-free schedule along sequence within horizon")

    feasible: list[set[int]] = [set() for _ in range(arrival_slot + 1)]
    feasible[arrival_slot] = {last}
    for k in range(arrival_slot - 1, -1, -1):
        nxt = feasible[k + 1]
        for i in reachable[k]:
            if not window_free(i, k):
                continue
            if i in nxt or (i < last and i + 1 in nxt and window_free(i + 1, k)):
                feasible[k].add(i)

    boundary = [sequence[0]]
    cur = 0
    for k in range(arrival_slot):
        if cur < last and cur + 1 in feasible[k + 1] and window_free(cur + 1, k):
            cur += 1
        boundary.append(sequence[cur])

    return TimedPath(_collapse(boundary, t0, h), h)


def _collapse(boundary: list[NodeId], t0: int, h: int) -> list[TimedStep]:
    """Boundary occupancy per slot edge -> visit steps with tick windows."""
    steps: list[TimedStep] = []
    i = 0
    while i < len(boundary):
        j = i
        while j + 1 < len(boundary) and boundary[j + 1] == boundary[i]:
            j += 1
        enter = t0 if i == 0 else t0 + (i - 1) * h
        if j + 1 < len(boundary):
            exit_ = t0 + j * h
        else:
            exit_ = t0 + j * h + h
        steps.append(TimedStep(boundary[i], enter, exit_))
        i = j + 1
    return steps


def commit(table: ReservationTable, vehicle_id: int, plan: TimedPath, park: bool = True) -> None:
    """Reserve every hold a plan implies; the final node parks open-ended."""
    h = plan.ticks_per_hop
    last = len(plan.steps) - 1
    for i, step in enumerate(plan.steps):
        if i == last:
            end = INF_TICK if park else float(step.exit_tick)
        else:
            end = step.exit_tick + h
        conflict = table.reserve(vehicle_id, step.node, step.enter_tick, end)
        if conflict is not None:  # pragma: no cover - plans are conflict-free
            raise BadInterval(f"plan collides with vehicle {conflict.vehicle_id}")


class PathMemory:
    """Per-vehicle trail of nodes entered, for exact reverse retracing."""

    def __init__(self) -> None:
        self._trails: dict[int, list[NodeId]] = {}

    def record_node(self, vehicle_id: int, node: NodeId) -> None:
        trail = self._trails.setdefault(vehicle_id, [])
        if not trail or trail[-1] != node:
            trail.append(node)

    def trail(self, vehicle_id: int) -> list[NodeId]:
        return list(self._trails.get(vehicle_id, ()))

    def retrace(self, vehicle_id: int) -> list[NodeId]:
        """Return the reversed trail and clear it."""
        trail = self._trails.pop(vehicle_id, None)
        if not trail:
            raise EmptyMemory(f"no recorded trail for vehicle {vehicle_id}")
        return list(reversed(trail))
