"""Route search, reservation table, and space-time scheduling."""

import math
import random
from collections import deque

import pytest
from hypothesis import given, settings, strategies as st

from swarmport.errors import BadInterval, EmptyMemory, GridTooLarge, NoPath
from swarmport.grid import NodeId, build_grid
from swarmport.planner import (
    INF_TICK,
    Conflict,
    PathMemory,
    ReservationTable,
    astar,
    bellman_ford,
    commit,
    dijkstra,
    floyd_warshall,
    plan_space_time,
    schedule_along,
)


# ---------------------------------------------------------------- oracles


def bfs_cost(grid, src, dst):
    """Independent breadth-first hop count; None when unreachable."""
    if src == dst:
        return 0
    seen = {src}
    queue = deque([(src, 0)])
    while queue:
        node, d = queue.popleft()
        for nxt in grid.neighbors(node):
            if nxt in seen:
                continue
            if nxt == dst:
                return d + 1
            seen.add(nxt)
            queue.append((nxt, d + 1))
    return None


def random_grid(seed, block_ratio=0.2):
    rng = random.Random(seed)
    grid = build_grid(2.0, 2.0, 0.25)
    nodes = [NodeId(ix, iy) for ix in range(9) for iy in range(9)]
    blocked = rng.sample(nodes, int(len(nodes) * block_ratio))
    grid = build_grid(2.0, 2.0, 0.25, blocked=blocked)
    free = [n for n in nodes if not grid.is_blocked(n)]
    src, dst = rng.sample(free, 2)
    return grid, src, dst


def check_is_path(grid, nodes, src, dst):
    assert nodes[0] == src and nodes[-1] == dst
    for a, b in zip(nodes, nodes[1:]):
        assert b in grid.neighbors(a)
        assert not grid.is_blocked(b)


# ---------------------------------------------------------------- search


def test_straight_line_cost_two():
    grid = build_grid(2.0, 2.0, 0.25)
    path = dijkstra(grid, NodeId(0, 0), NodeId(2, 0))
    assert path.cost == 2
    assert path.nodes == [NodeId(0, 0), NodeId(1, 0), NodeId(2, 0)]


def test_wall_forces_detour():
    # column blocked at (1,0) -> go up, across, down: 4 hops
    grid = build_grid(2.0, 2.0, 0.25, blocked=[NodeId(1, 0)])
    path = astar(grid, NodeId(0, 0), NodeId(2, 0))
    assert path.cost == 4
    assert path.nodes == [
        NodeId(0, 0),
        NodeId(0, 1),
        NodeId(1, 1),
        NodeId(2, 1),
        NodeId(2, 0),
    ]


def test_tie_break_prefers_east_before_north():
    grid = build_grid(2.0, 2.0, 0.25)
    expect = [NodeId(0, 0), NodeId(1, 0), NodeId(2, 0), NodeId(2, 1), NodeId(2, 2)]
    assert dijkstra(grid, NodeId(0, 0), NodeId(2, 2)).nodes == expect
    assert astar(grid, NodeId(0, 0), NodeId(2, 2)).nodes == expect


def test_tie_break_prefers_west_before_south():
    grid = build_grid(2.0, 2.0, 0.25)
    # W < S in the direction order, so go all the way west first
    expect = [NodeId(2, 2), NodeId(1, 2), NodeId(0, 2), NodeId(0, 1), NodeId(0, 0)]
    assert dijkstra(grid, NodeId(2, 2), NodeId(0, 0)).nodes == expect


def test_src_equals_dst():
    grid = build_grid(2.0, 2.0, 0.25)
    path = dijkstra(grid, NodeId(3, 3), NodeId(3, 3))
    assert path.cost == 0
    assert path.nodes == [NodeId(3, 3)]


def test_unreachable_raises_no_path():
    # wall the bottom-left corner in
    grid = build_grid(2.0, 2.0, 0.25, blocked=[NodeId(1, 0), NodeId(0, 1), NodeId(1, 1)])
    with pytest.raises(NoPath):
        dijkstra(grid, NodeId(0, 0), NodeId(8, 8))
    with pytest.raises(NoPath):
        astar(grid, NodeId(0, 0), NodeId(8, 8))


def test_blocked_endpoint_raises_no_path():
    grid = build_grid(2.0, 2.0, 0.25, blocked=[NodeId(4, 4)])
    with pytest.raises(NoPath):
        dijkstra(grid, NodeId(0, 0), NodeId(4, 4))
    with pytest.raises(NoPath):
        astar(grid, NodeId(4, 4), NodeId(0, 0))


def test_bellman_ford_distance_map():
    grid = build_grid(2.0, 2.0, 0.25, blocked=[NodeId(1, 0)])
    dist = bellman_ford(grid, NodeId(0, 0))
    assert dist[NodeId(0, 0)] == 0
    assert dist[NodeId(2, 0)] == 4
    assert dist[NodeId(8, 8)] == 16
    assert NodeId(1, 0) not in dist


def test_bellman_ford_omits_unreachable():
    grid = build_grid(2.0, 2.0, 0.25, blocked=[NodeId(1, 0), NodeId(0, 1), NodeId(1, 1)])
    dist = bellman_ford(grid, NodeId(0, 0))
    assert dist == {NodeId(0, 0): 0}


def test_floyd_warshall_matches_bfs_rows():
    grid, src, _ = random_grid(7)
    costs = floyd_warshall(grid)
    for ix in range(9):
        for iy in range(9):
            node = NodeId(ix, iy)
            if grid.is_blocked(node):
                continue
            want = bfs_cost(grid, src, node)
            got = costs.cost(src, node)
            if want is None:
                assert math.isinf(got)
            else:
                assert got == want


def test_floyd_warshall_symmetry_and_diagonal():
    grid, _, _ = random_grid(11)
    costs = floyd_warshall(grid)
    free = [NodeId(ix, iy) for ix in range(9) for iy in range(9) if not grid.is_blocked(NodeId(ix, iy))]
    for a in free[:10]:
        assert costs.cost(a, a) == 0
        for b in free[:10]:
            assert costs.cost(a, b) == costs.cost(b, a)


def test_floyd_warshall_node_limit():
    grid = build_grid(10.0, 10.0, 0.25)  # 41 x 41 = 1681 nodes
    with pytest.raises(GridTooLarge):
        floyd_warshall(grid)


@pytest.mark.parametrize("seed", range(25))
def test_all_algorithms_match_bfs_oracle(seed):
    grid, src, dst = random_grid(seed, block_ratio=0.25)
    want = bfs_cost(grid, src, dst)
    costs = floyd_warshall(grid)
    dist = bellman_ford(grid, src)
    if want is None:
        with pytest.raises(NoPath):
            dijkstra(grid, src, dst)
        with pytest.raises(NoPath):
            astar(grid, src, dst)
        assert dst not in dist
        assert math.isinf(costs.cost(src, dst))
        return
    d_path = dijkstra(grid, src, dst)
    a_path = astar(grid, src, dst)
    assert d_path.cost == want
    assert a_path.cost == want
    assert dist[dst] == want
    assert costs.cost(src, dst) == want
    # identical canonical tie-break, not merely equal cost
    assert d_path.nodes == a_path.nodes
    check_is_path(grid, d_path.nodes, src, dst)


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_dijkstra_astar_parity_property(seed):
    grid, src, dst = random_grid(seed, block_ratio=0.3)
    want = bfs_cost(grid, src, dst)
    if want is None:
        with pytest.raises(NoPath):
            astar(grid, src, dst)
    else:
        assert dijkstra(grid, src, dst).nodes == astar(grid, src, dst).nodes


# ------------------------------------------------------- reservation table


def test_reserve_and_conflict():
    table = ReservationTable()
    node = NodeId(2, 2)
    assert table.reserve(0, node, 0, 10) is None
    clash = table.reserve(1, node, 5, 15)
    assert clash == Conflict(0)
    # failed reserve must not leave residue
    assert table.reserve(1, node, 10, 15) is None


def test_half_open_windows_touch_without_conflict():
    table = ReservationTable()
    node = NodeId(0, 0)
    assert table.reserve(0, node, 0, 10) is None
    assert table.reserve(1, node, 10, 20) is None
    assert not table.is_free(node, 9, 10)
    assert table.is_free(node, 9, 10, ignore_vehicle=0)


def test_bad_interval():
    table = ReservationTable()
    with pytest.raises(BadInterval):
        table.reserve(0, NodeId(0, 0), 10, 10)
    with pytest.raises(BadInterval):
        table.reserve(0, NodeId(0, 0), 10, 5)


def test_open_ended_parking():
    table = ReservationTable()
    node = NodeId(1, 1)
    assert table.reserve(0, node, 100, INF_TICK) is None
    assert table.reserve(1, node, 10 ** 9, 10 ** 9 + 1) == Conflict(0)
    assert table.is_free(node, 0, 100)
    assert not table.free_from(node, 50)
    assert table.free_from(node, 50, ignore_vehicle=0)


def test_release_vehicle_clears_only_its_holds():
    table = ReservationTable()
    table.reserve(0, NodeId(0, 0), 0, INF_TICK)
    table.reserve(1, NodeId(1, 0), 0, INF_TICK)
    table.release_vehicle(0)
    assert table.holds_of(0) == []
    assert table.free_from(NodeId(0, 0), 0)
    assert not table.free_from(NodeId(1, 0), 0)


def test_gc_drops_expired_holds():
    table = ReservationTable()
    table.reserve(0, NodeId(0, 0), 0, 10)
    table.reserve(0, NodeId(1, 0), 5, 15)
    table.reserve(0, NodeId(2, 0), 20, INF_TICK)
    dropped = table.gc(15)
    assert dropped == 2
    assert table.holds_of(0) == [(NodeId(2, 0), 20, INF_TICK)]


# ------------------------------------------------------ space-time planning


def test_plan_on_empty_table_equals_static_route():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    plan = plan_space_time(grid, table, NodeId(0, 0), NodeId(4, 2), 0, 10)
    assert plan.route == astar(grid, NodeId(0, 0), NodeId(4, 2)).nodes
    assert plan.arrival_tick == 6 * 10
    # uniform pacing: one window per hop, no waiting anywhere
    assert plan.steps[0].enter_tick == 0
    for step, nxt in zip(plan.steps[1:], plan.steps[2:]):
        assert nxt.enter_tick - step.enter_tick == 10


def test_plan_claims_both_endpoints_of_each_hop():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    plan = plan_space_time(grid, table, NodeId(0, 0), NodeId(2, 0), 0, 10)
    commit(table, 0, plan, park=False)
    # while hopping (0,0)->(1,0) during [0,10) both nodes are held
    assert not table.is_free(NodeId(0, 0), 0, 1)
    assert not table.is_free(NodeId(1, 0), 0, 1)
    assert not table.is_free(NodeId(2, 0), 19, 20)


def test_plan_waits_out_a_transient_block():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    # someone sits on (1,0) until tick 35
    table.reserve(9, NodeId(1, 0), 0, 35)
    plan = plan_space_time(grid, table, NodeId(0, 0), NodeId(2, 0), 0, 10)
    commit(table, 0, plan, park=False)
    assert plan.route[0] == NodeId(0, 0)
    assert plan.route[-1] == NodeId(2, 0)
    assert plan.arrival_tick > 30
    for hold in table.holds_of(0):
        node, start, end = hold
        assert table.is_free(node, start, end, ignore_vehicle=0) or node == NodeId(1, 0)


def test_plan_routes_around_permanent_block():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    table.reserve(9, NodeId(1, 0), 0, INF_TICK)
    plan = plan_space_time(grid, table, NodeId(0, 0), NodeId(2, 0), 0, 10)
    assert NodeId(1, 0) not in plan.route
    assert plan.route[-1] == NodeId(2, 0)


def test_plan_no_path_when_walled_in():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    table.reserve(8, NodeId(1, 0), 0, INF_TICK)
    table.reserve(9, NodeId(0, 1), 0, INF_TICK)
    with pytest.raises(NoPath):
        plan_space_time(grid, table, NodeId(0, 0), NodeId(5, 5), 0, 10)


def test_destination_must_stay_free_after_arrival():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    # destination box is busy later; arriving earlier would strand the vehicle
    table.reserve(9, NodeId(3, 0), 100, 130)
    plan = plan_space_time(grid, table, NodeId(0, 0), NodeId(3, 0), 0, 10)
    assert plan.steps[-1].enter_tick >= 130
    commit(table, 0, plan, park=True)
    assert not table.free_from(NodeId(3, 0), plan.steps[-1].enter_tick, ignore_vehicle=9)


def test_committed_plans_never_overlap():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    # two crossing routes committed in sequence
    p0 = plan_space_time(grid, table, NodeId(0, 2), NodeId(8, 2), 0, 10)
    commit(table, 0, p0, park=True)
    p1 = plan_space_time(grid, table, NodeId(4, 0), NodeId(4, 4), 0, 10)
    commit(table, 1, p1, park=True)
    for node, holds in table.snapshot().items():
        ordered = sorted(holds)
        for (s0, e0, v0), (s1, e1, v1) in zip(ordered, ordered[1:]):
            assert e0 <= s1, f"overlap at {node}: {ordered}"


def test_head_on_corridor_resolves_by_detour_or_delay():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    p0 = plan_space_time(grid, table, NodeId(0, 0), NodeId(4, 0), 0, 10)
    commit(table, 0, p0, park=True)
    p1 = plan_space_time(grid, table, NodeId(4, 0), NodeId(0, 0), 0, 10)
    commit(table, 1, p1, park=True)
    assert p1.route[0] == NodeId(4, 0) and p1.route[-1] == NodeId(0, 0)
    # direct swap is impossible; the second plan must cost time or distance
    assert p1.arrival_tick > p0.arrival_tick or len(p1.route) > len(p0.route)
    for node, holds in table.snapshot().items():
        ordered = sorted(holds)
        for (s0, e0, _), (s1, e1, _) in zip(ordered, ordered[1:]):
            assert e0 <= s1


def test_schedule_along_keeps_sequence():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    seq = [NodeId(0, 0), NodeId(1, 0), NodeId(2, 0), NodeId(2, 1)]
    plan = schedule_along(table, seq, 0, 10, max_slots=50)
    assert plan.route == seq
    assert plan.arrival_tick == 30


def test_schedule_along_waits_for_clearance():
    table = ReservationTable()
    table.reserve(9, NodeId(1, 0), 0, 45)
    seq = [NodeId(0, 0), NodeId(1, 0), NodeId(2, 0)]
    plan = schedule_along(table, seq, 0, 10, max_slots=50)
    assert plan.route == seq
    assert plan.steps[1].enter_tick >= 40
    commit(table, 0, plan, park=False)


def test_schedule_along_gives_up_past_horizon():
    table = ReservationTable()
    table.reserve(9, NodeId(1, 0), 0, INF_TICK)
    with pytest.raises(NoPath):
        schedule_along(table, [NodeId(0, 0), NodeId(1, 0)], 0, 10, max_slots=30)


def test_commit_with_park_holds_destination_forever():
    grid = build_grid(2.0, 2.0, 0.25)
    table = ReservationTable()
    plan = plan_space_time(grid, table, NodeId(0, 0), NodeId(2, 0), 0, 10)
    commit(table, 0, plan, park=True)
    assert not table.free_from(NodeId(2, 0), 10 ** 12)
    table.release_vehicle(0)
    plan = plan_space_time(grid, table, NodeId(0, 0), NodeId(2, 0), 0, 10)
    commit(table, 0, plan, park=False)
    assert table.free_from(NodeId(2, 0), plan.arrival_tick + 10)


# ------------------------------------------------------------- path memory


def test_memory_records_and_retraces():
    memory = PathMemory()
    for node in [NodeId(0, 0), NodeId(1, 0), NodeId(1, 1)]:
        memory.record_node(7, node)
    assert memory.trail(7) == [NodeId(0, 0), NodeId(1, 0), NodeId(1, 1)]
    assert memory.retrace(7) == [NodeId(1, 1), NodeId(1, 0), NodeId(0, 0)]
    with pytest.raises(EmptyMemory):
        memory.retrace(7)


def test_memory_skips_consecutive_duplicates():
    memory = PathMemory()
    memory.record_node(3, NodeId(0, 0))
    memory.record_node(3, NodeId(0, 0))
    memory.record_node(3, NodeId(0, 1))
    assert memory.trail(3) == [NodeId(0, 0), NodeId(0, 1)]


def test_memory_is_per_vehicle():
    memory = PathMemory()
    memory.record_node(0, NodeId(0, 0))
    with pytest.raises(EmptyMemory):
        memory.retrace(1)
