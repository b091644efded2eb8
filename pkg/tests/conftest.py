import math

import numpy as np
import pytest
from hypothesis import settings

from dpd.world import AgentBox, Pose2D, Trajectory, parse_scenario

settings.register_profile("ci", max_examples=100, deadline=None)
settings.load_profile("ci")

EGO_DIMS = (4.5, 2.0, 1.5)


def box7(x, y, yaw=0.0, length=4.5, width=2.0, height=1.5):
    return [float(x), float(y), 0.0, length, width, height, float(yaw)]


def straight_lane(y=0.0, limit=13.9, x0=-50.0, x1=250.0):
    return {"centerline": [[x0, y], [x1, y]], "speed_limit": limit}


def scenario_dict(*, ego=None, agents=(), lanes=None, controls=(), command="straight", n=10, v=8.0,
                  dt=0.5, v_target=None):
    """Straight-road scenario; the expert cruises east at ``v``."""
    ego = ego or {"box": box7(0, 0), "velocity": v}
    x0, y0 = ego["box"][0], ego["box"][1]
    expert = [[x0 + v * dt * (k + 1), y0, 0.0, v] for k in range(n)]
    return {
        "dt": dt,
        "horizon_steps": n,
        "ego_init": ego,
        "agents": list(agents),
        "lanes": [straight_lane()] if lanes is None else list(lanes),
        "controls": list(controls),
        "navigation_command": command,
        "expert_trajectory": expert,
        "v_target": v if v_target is None else v_target,
    }


def make_scenario(name="test", **kw):
    return parse_scenario(scenario_dict(**kw), name)


def cv_agent(x, y, yaw=0.0, speed=0.0, kind="vehicle", dims=(4.5, 2.0, 1.6)):
    return {"box": box7(x, y, yaw, *dims), "kind": kind, "motion": {"constant_velocity": speed}}


def traj_from_rows(rows, dt=0.5, origin=None):
    rows = np.asarray(rows, dtype=float)
    if origin is None:
        origin = rows[0] if len(rows) else [0, 0, 0, 0]
    return Trajectory(rows, dt, origin)


def arc_trajectory(v, kappa, n, dt=0.5):
    """Exact constant-speed circular arc from the origin heading east."""
    rows = []
    for k in range(1, n + 1):
        s = v * dt * k
        th = kappa * s
        if kappa == 0:
            x, y = s, 0.0
        else:
            x, y = math.sin(th) / kappa, (1 - math.cos(th)) / kappa
        rows.append([x, y, th, v])
    return Trajectory(np.array(rows), dt, [0.0, 0.0, 0.0, v])


def unit_box(x=0.0, y=0.0, yaw=0.0):
    return AgentBox(Pose2D(x, y, yaw), 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_trajectory(rng, n=6, dt=0.5):
    """Fuzzed but physically plausible trajectory: random speeds and headings, integrated."""
    v = np.abs(rng.normal(6.0, 3.0, n))
    yaw = np.cumsum(rng.normal(0.0, 0.15, n)) + rng.uniform(-0.3, 0.3)
    x = rng.uniform(-5, 5) + np.cumsum(v * dt * np.cos(yaw))
    y = rng.uniform(-3, 3) + np.cumsum(v * dt * np.sin(yaw))
    rows = np.stack([x, y, yaw, v], axis=1)
    return Trajectory(rows, dt, [x[0] - v[0] * dt, y[0], yaw[0], v[0]])
