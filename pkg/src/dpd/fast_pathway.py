"""Candidate trajectory generation from a Gaussian latent.

A latent sample is split into curvature knots and acceleration knots.  The
knots are interpolated over the horizon, clamped to the kinematic bounds and
rolled out with point kinematics, giving N_C x N_K multi-modal futures
anchored at the ego pose.

Knots are offsets around two tracking baselines: an acceleration that reaches
the target speed over the horizon, and a pure-pursuit curvature toward the
reference lane that fades out over the horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .world import (
    AgentBox,
    LaneGeometry,
    NavigationCommand,
    Scenario,
    Trajectory,
    WorldState,
    ego_lane_index,
    normalize_angle,
)

COMMANDS = (NavigationCommand.LEFT, NavigationCommand.STRAIGHT, NavigationCommand.RIGHT)


@dataclass(frozen=True)
class KinematicsConfig:
    horizon_steps: int = 6
    kappa_max: float = 0.2
    a_min: float = -4.0
    a_max: float = 2.0
    v_max: float = 20.0
    n_knots: int = 3
    n_k: int = 8
    # latent -> control profile map
    kappa_scale: float = 0.02
    command_kappa: float = 0.04
    accel_scale: float = 1.0
    # pure-pursuit lookahead: max(min distance, speed x time)
    track_lookahead_min: float = 6.0
    track_lookahead_time: float = 1.5
    mu: tuple[float, ...] | None = None
    sigma: tuple[float, ...] | None = None
    # with n_k >= 2 the first latent is the mean itself, so the nominal plan is always on offer
    include_mean: bool = True

    @property
    def d_z(self) -> int:
        return 2 * self.n_knots

    def latent_mu(self) -> np.ndarray:
        return np.zeros(self.d_z) if self.mu is None else np.asarray(self.mu, dtype=float)

    def latent_sigma(self) -> np.ndarray:
        return np.ones(self.d_z) if self.sigma is None else np.asarray(self.sigma, dtype=float)


@dataclass(frozen=True, eq=False)
class LatentSample:
    z: np.ndarray

    def __post_init__(self):
        z = np.array(self.z, dtype=float).reshape(-1)
        if z.size < 1:
            raise ValueError("latent dimension must be >= 1")
        z.flags.writeable = False
        object.__setattr__(self, "z", z)


@dataclass(frozen=True, eq=False)
class Candidate:
    trajectory: Trajectory
    command: NavigationCommand
    latent: LatentSample
    curvature: np.ndarray = field(repr=False)
    acceleration: np.ndarray = field(repr=False)

    @property
    def mean_abs_curvature(self) -> float:
        return float(np.mean(np.abs(self.curvature)))

    @property
    def mean_curvature(self) -> float:
        return float(np.mean(self.curvature))


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[Candidate, ...]
    n_k: int

    def __len__(self) -> int:
        return len(self.candidates)

    def __getitem__(self, i: int) -> Candidate:
        return self.candidates[i]

    def __iter__(self):
        return iter(self.candidates)

    def subset(self, indices: Sequence[int]) -> "CandidateSet":
        return CandidateSet(tuple(self.candidates[i] for i in indices), self.n_k)

    def by_command(self, command: NavigationCommand) -> list[Candidate]:
        return [c for c in self.candidates if c.command is command]


def sample_latent(rng_seed, mu: Sequence[float], sigma: Sequence[float]) -> LatentSample:
    """Draw z ~ N(mu, sigma^2) componentwise; deterministic in ``rng_seed``.

    ``rng_seed`` may be an int or a sequence of ints (hashed by numpy's
    SeedSequence).
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.shape != sigma.shape:
        raise ValueError("mu and sigma must have the same shape")
    if np.any(sigma <= 0):
        raise ValueError("sigma components must be positive")
    rng = np.random.default_rng(rng_seed)
    return LatentSample(mu + sigma * rng.standard_normal(mu.shape))


def tracking_curvature(ego: AgentBox, lane: LaneGeometry, cfg: KinematicsConfig) -> float:
    """Pure-pursuit curvature steering the ego onto ``lane``."""
    p = ego.pose
    station = lane.project(np.array([[p.x, p.y]]))[0][0]
    lookahead = max(cfg.track_lookahead_min, max(ego.velocity, 0.0) * cfg.track_lookahead_time)
    tx, ty = lane.point_at(station + lookahead)
    dist = math.hypot(tx - p.x, ty - p.y)
    if dist < 1e-9:
        return 0.0
    alpha = normalize_angle(math.atan2(ty - p.y, tx - p.x) - p.yaw)
    return float(np.clip(2.0 * math.sin(alpha) / dist, -cfg.kappa_max, cfg.kappa_max))


def latent_to_profiles(z: np.ndarray, command: NavigationCommand, v0: float, v_target: float,
                       dt: float, cfg: KinematicsConfig, kappa_track: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Map a latent to per-step (curvature, acceleration) profiles of length T_s.

    ``kappa_track`` is the lane-tracking curvature at the first knot; it fades
    linearly to zero at the last.
    """
    n = cfg.n_knots
    if z.size != 2 * n:
        raise ValueError(f"latent has dimension {z.size}, expected {2 * n}")
    bias = {NavigationCommand.LEFT: cfg.command_kappa, NavigationCommand.STRAIGHT: 0.0,
            NavigationCommand.RIGHT: -cfg.command_kappa}[command]
    horizon = cfg.horizon_steps
    tracking = float(np.clip((v_target - v0) / (horizon * dt), cfg.a_min, cfg.a_max))
    fade = np.linspace(1.0, 0.0, n) if n > 1 else np.ones(1)
    kappa_knots = bias + kappa_track * fade + cfg.kappa_scale * z[:n]
    accel_knots = tracking + cfg.accel_scale * z[n:]
    t = np.arange(horizon, dtype=float)
    knot_t = np.linspace(0.0, horizon - 1, n) if n > 1 else np.zeros(1)
    kappa = np.clip(np.interp(t, knot_t, kappa_knots), -cfg.kappa_max, cfg.kappa_max)
    accel = np.clip(np.interp(t, knot_t, accel_knots), cfg.a_min, cfg.a_max)
    return kappa, accel


def rollout(x: float, y: float, yaw: float, v: float, kappa: np.ndarray, accel: np.ndarray,
            dt: float, v_max: float) -> np.ndarray:
    """Point-kinematics rollout; returns (T, 4) rows of x, y, yaw, v."""
    out = np.empty((len(kappa), 4))
    for k in range(len(kappa)):
        v_next = min(max(v + accel[k] * dt, 0.0), v_max)
        ds = 0.5 * (v + v_next) * dt
        dyaw = kappa[k] * ds
        mid = yaw + 0.5 * dyaw
        x += ds * math.cos(mid)
        y += ds * math.sin(mid)
        yaw = math.remainder(yaw + dyaw, 2.0 * math.pi)
        v = v_next
        out[k] = (x, y, yaw, v)
    return out


def generate_candidates(state: WorldState, scenario: Scenario, n_k: int, rng_seed: int,
                        cfg: KinematicsConfig | None = None, *,
                        v_target: float | None = None, reference_lane: int | None = None) -> CandidateSet:
    """N_C x n_k candidates, ``n_k`` per command, in command order left/straight/right.

    The k-th candidate of every command shares one latent sample, so the
    command bias alone separates the modes.  ``v_target`` overrides the
    scenario target speed used for acceleration tracking; ``reference_lane``
    overrides the lane tracked for curvature (default: the ego's lane).
    """
    if n_k < 1:
        raise ValueError("n_k must be >= 1")
    cfg = cfg or KinematicsConfig()
    ego = state.ego
    v0 = max(ego.velocity, 0.0)
    target = scenario.v_target if v_target is None else v_target
    origin = (ego.pose.x, ego.pose.y, ego.pose.yaw, v0)
    lane_idx = ego_lane_index(ego.pose, scenario.lanes) if reference_lane is None else reference_lane
    kappa_track = tracking_curvature(ego, scenario.lanes[lane_idx], cfg) if lane_idx >= 0 else 0.0
    mu, sigma = cfg.latent_mu(), cfg.latent_sigma()
    latents = [sample_latent((int(rng_seed), state.tick, k), mu, sigma) for k in range(n_k)]
    if cfg.include_mean and n_k >= 2:
        latents[0] = LatentSample(mu)
    out = []
    for command in COMMANDS:
        for latent in latents:
            kappa, accel = latent_to_profiles(latent.z, command, v0, target, scenario.dt, cfg, kappa_track)
            rows = rollout(*origin, kappa, accel, scenario.dt, cfg.v_max)
            traj = Trajectory(rows, scenario.dt, origin)
            kappa.flags.writeable = False
            accel.flags.writeable = False
            out.append(Candidate(traj, command, latent, kappa, accel))
    return CandidateSet(tuple(out), n_k)


def is_feasible(traj: Trajectory, cfg: KinematicsConfig) -> bool:
    return (len(traj) == cfg.horizon_steps and bool(np.all(traj.speed >= 0))
            and traj.max_spacing() <= cfg.v_max * traj.dt + 1e-9)
