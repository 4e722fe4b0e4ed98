"""Shipped desk-scale instances and the generators that produced them."""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..geometry import Aabb
from ..roadmap import ROBOT_BOX
from .config import Instance, RobotSpec, instance_from_node, parse_yaml

FIXTURES = ("circle10", "swap8", "swap48")


def _snap(p, spacing, origin):
    return origin + np.round((np.asarray(p, float) - origin) / spacing) * spacing


def circle_instance(n=10, radius=6.0, z=1.0, spacing=0.5, phase_deg=9.0, name="circle10") -> Instance:
    """Robots on a circle, each heading to the antipodal point, around three columns.

    The phase keeps every start and goal off the buffered cell faces of the
    default three-cell partition.
    """
    ws = Aabb([-7.0, -7.0, 0.5], [7.0, 7.0, 1.5])
    cols = [(0.0, 2.5), (-2.2, -1.2), (2.2, -1.2)]
    obs = [Aabb([x - 0.5, y - 0.5, 0.0], [x + 0.5, y + 0.5, 2.0]).as_hull() for x, y in cols]
    robots = []
    for i in range(n):
        a = 2 * np.pi * i / n + np.radians(phase_deg)
        p = _snap([radius * np.cos(a), radius * np.sin(a), z], spacing, ws.min)
        q = _snap([-radius * np.cos(a), -radius * np.sin(a), z], spacing, ws.min)
        robots.append(RobotSpec(i, p, q))
    return Instance(ws, obs, robots, ROBOT_BOX, name)


def swap_instance(rows=2, cols=2, layers=1, spacing=0.5, name="swap8") -> Instance:
    """Two robot blocks trade places through a gap in a wall."""
    ws = Aabb([-4.0, -2.0, 0.5], [4.0, 2.0, 2.0])
    obs = [
        Aabb([-0.4, -2.5, 0.0], [0.4, -0.7, 2.5]).as_hull(),
        Aabb([-0.4, 0.7, 0.0], [0.4, 2.5, 2.5]).as_hull(),
    ]
    robots = []
    ys = (np.arange(cols) - (cols - 1) / 2) * 1.0
    zs = 1.0 + np.arange(rows) * 0.5
    xs = np.arange(layers) * 1.0
    k = 0
    for x in xs:
        for y in ys:
            for z in zs:
                left, right = np.array([-3.0 - x, y, z]), np.array([3.0 + x, y, z])
                robots.append(RobotSpec(k, left, right))
                robots.append(RobotSpec(k + 1, right, left))
                k += 2
    return Instance(ws, obs, robots, ROBOT_BOX, name)


def swap48_instance() -> Instance:
    """Two 24-robot blocks, each filling a 3.6 x 4.8 x 4 m box, swap through a wide opening."""
    ws = Aabb([-6.0, -3.0, 0.0], [6.0, 3.0, 4.5])
    obs = [
        Aabb([-0.3, -3.5, 0.0], [0.3, -1.5, 5.0]).as_hull(),
        Aabb([-0.3, 1.5, 0.0], [0.3, 3.5, 5.0]).as_hull(),
    ]
    robots = []
    k = 0
    for i in range(3):  # 3 x 4 x 2 per block, 1.2 m apart, inside 3.6 x 4.8 x 4
        for j in range(4):
            for m in range(2):
                left = np.array([-5.4 + 1.2 * i, -1.8 + 1.2 * j, 0.5 + 2.0 * m])
                right = left * [-1, 1, 1]
                robots.append(RobotSpec(k, left, right))
                robots.append(RobotSpec(k + 1, right, left))
                k += 2
    return Instance(ws, obs, robots, ROBOT_BOX, "swap48")


def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; shipped: {', '.join(FIXTURES)}")
    return resources.files("hiswarm").joinpath("fixtures", f"{name}.yaml").read_text(encoding="utf-8")


def load_fixture(name: str) -> Instance:
    return instance_from_node(parse_yaml(fixture_text(name)))
