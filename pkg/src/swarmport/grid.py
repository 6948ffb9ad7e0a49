"""Virtual-node grid laid over a rectangular terrain.

Nodes form a lattice with one node every ``spacing_m`` meters, node (0, 0)
at the terrain origin, ix growing east and iy growing north.  Vehicles
travel node to node along the four axis directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import NodeOutOfRange, NonPositiveDimension, OutOfTerrain, SpacingTooLarge


class NodeId(NamedTuple):
    ix: int
    iy: int


class Position(NamedTuple):
    x: float
    y: float


# Canonical neighbor order: East, North, West, South.
NEIGHBOR_OFFSETS = ((1, 0), (0, 1), (-1, 0), (0, -1))


@dataclass(frozen=True)
class GridMap:
    """Immutable grid description; blocked nodes are impassable."""

    width_m: float
    height_m: float
    spacing_m: float
    nx: int
    ny: int
    blocked: frozenset[NodeId] = field(default_factory=frozenset)

    @property
    def node_count(self) -> int:
        return self.nx * self.ny

    def contains(self, node: NodeId) -> bool:
        return 0 <= node[0] < self.nx and 0 <= node[1] < self.ny

    def require(self, node: NodeId) -> None:
        if not self.contains(node):
            raise NodeOutOfRange(f"node {tuple(node)} outside {self.nx}x{self.ny} grid")

    def is_blocked(self, node: NodeId) -> bool:
        self.require(node)
        return node in self.blocked

    def neighbors(self, node: NodeId) -> list[NodeId]:
        """Unblocked 4-neighbors in East, North, West, South order."""
        self.require(node)
        out = []
        ix, iy = node
        for dx, dy in NEIGHBOR_OFFSETS:
            nb = NodeId(ix + dx, iy + dy)
            if self.contains(nb) and nb not in self.blocked:
                out.append(nb)
        return out

    def node_to_position(self, node: NodeId) -> Position:
        self.require(node)
        return Position(node[0] * self.spacing_m, node[1] * self.spacing_m)

    def position_to_nearest_node(self, pos: Position) -> NodeId:
        """Snap a metric position to the nearest node.

        Midpoint ties resolve toward the lower ix, then the lower iy.
        """
        x, y = pos
        if not (0.0 <= x <= self.width_m and 0.0 <= y <= self.height_m):
            raise OutOfTerrain(f"position ({x}, {y}) outside terrain")
        # ceil(v - 0.5) rounds half-down, which is the lower-index side.
        ix = math.ceil(x / self.spacing_m - 0.5)
        iy = math.ceil(y / self.spacing_m - 0.5)
        ix = min(max(ix, 0), self.nx - 1)
        iy = min(max(iy, 0), self.ny - 1)
        return NodeId(ix, iy)


def build_grid(
    width_m: float,
    height_m: float,
    spacing_m: float,
    blocked: tuple[tuple[int, int], ...] | frozenset[NodeId] | list = (),
) -> GridMap:
    """Construct a GridMap; node counts are floor(extent / spacing) + 1."""
    if width_m <= 0 or height_m <= 0 or spacing_m <= 0:
        raise NonPositiveDimension(
            f"dimensions must be positive, got {width_m} x {height_m} @ {spacing_m}"
        )
    if spacing_m > min(width_m, height_m):
        raise SpacingTooLarge(f"spacing {spacing_m} exceeds terrain extent")
    nx = int(math.floor(width_m / spacing_m)) + 1
    ny = int(math.floor(height_m / spacing_m)) + 1
    grid = GridMap(width_m, height_m, spacing_m, nx, ny, frozenset(NodeId(*b) for b in blocked))
    for b in grid.blocked:
        grid.require(b)
    return grid
