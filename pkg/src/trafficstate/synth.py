"""Synthetic traffic scenarios with exact ground truth.

Agents move at constant world velocity; their boxes are projected into
pixel space through the inverse calibration, optionally corrupted with
Gaussian centroid noise, dropped frames, and occlusion windows. Ground
truth (trajectories, per-interval classified crossing counts, speeds) is
computed in closed form from the motion model, never by running the
tracking engine, so it can serve as an independent oracle.

For exact engine-vs-truth comparisons keep agents alive through the whole
run: a track whose agent disappears coasts for up to max_age frames on
predicted positions, which the model truth knows nothing about.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calib import CalibrationParams, to_pixel, to_world
from .detstream import Detection
from .errors import ValidationError
from .traffic import IntervalMeasurement, LineOfInterest, interval_grid

SECONDS_PER_HOUR = 3600.0
MPS_TO_KMH = 3.6


@dataclass(frozen=True)
class AgentSpec:
    """One road user: class, lifetime, and constant-velocity world motion."""

    class_id: int
    x0_m: float
    y0_m: float
    vx_mps: float
    vy_mps: float
    spawn_frame: int = 1
    end_frame: Optional[int] = None
    box_w_px: float = 24.0
    box_h_px: float = 48.0

    def __post_init__(self):
        if self.class_id < 0:
            raise ValidationError("agent class must be >= 0")
        if self.spawn_frame < 1:
            raise ValidationError("agent spawn frame must be >= 1")
        if self.end_frame is not None and self.end_frame < self.spawn_frame:
            raise ValidationError("agent end frame before spawn frame")
        if self.box_w_px <= 0 or self.box_h_px <= 0:
            raise ValidationError("agent box size must be positive")

    @property
    def speed_mps(self) -> float:
        return math.hypot(self.vx_mps, self.vy_mps)


@dataclass
class ScenarioSpec:
    """Complete description of a synthetic scene; the seed pins every byte."""

    agents: list[AgentSpec]
    duration_s: float
    fps: float = 25.0
    calibration: CalibrationParams = CalibrationParams(1.0, 1.0, 90.0)
    noise_std_px: float = 0.0
    miss_prob: float = 0.0
    occlusions: list[tuple[int, int, int]] = field(default_factory=list)
    embedding_dim: int = 0
    embedding_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.agents:
            raise ValidationError("scenario needs at least one agent")
        if self.duration_s <= 0 or self.fps <= 0:
            raise ValidationError("duration and fps must be positive")
        if not 0.0 <= self.miss_prob < 1.0:
            raise ValidationError("miss probability must be in [0, 1)")
        if self.noise_std_px < 0 or self.embedding_noise_std < 0:
            raise ValidationError("noise standard deviations must be >= 0")
        if self.embedding_dim < 0:
            raise ValidationError("embedding dimension must be >= 0")
        n_frames = self.n_frames
        for agent_idx, first, last in self.occlusions:
            if not 0 <= agent_idx < len(self.agents):
                raise ValidationError(f"occlusion for unknown agent {agent_idx}")
            if not 1 <= first <= last <= n_frames:
                raise ValidationError(
                    f"occlusion window [{first}, {last}] outside 1..{n_frames}"
                )

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * self.fps))


@dataclass
class GroundTruth:
    """Model truth: world trajectories, per-interval counts and speeds."""

    trajectories: dict[int, list[tuple[int, float, float]]]
    counts: dict[int, dict[int, int]]            # interval -> class -> crossings
    speeds: dict[int, dict[int, list[float]]]    # interval -> class -> m/s values
    interval_s: float
    total_duration: float

    def to_measurements(self) -> list[IntervalMeasurement]:
        """Sidecar rows in the same shape the engine's interval output uses."""
        grid = interval_grid(self.interval_s, self.total_duration)
        out = []
        for i, (start, end) in enumerate(grid):
            m = IntervalMeasurement(index=i, start=start, end=end)
            for k, c in sorted(self.counts.get(i, {}).items()):
                m.counts[k] = c
                m.flows[k] = c * SECONDS_PER_HOUR / self.interval_s
            for k, vals in sorted(self.speeds.get(i, {}).items()):
                m.speeds[k] = list(vals)
                m.mean_speed_kmh[k] = (sum(vals) / len(vals)) * MPS_TO_KMH
            out.append(m)
        return out


def _alive_frames(agent: AgentSpec, n_frames: int) -> range:
    last = n_frames if agent.end_frame is None else min(agent.end_frame, n_frames)
    return range(agent.spawn_frame, last + 1)


def _world_pos(agent: AgentSpec, frame: int, fps: float) -> tuple[float, float]:
    dt = (frame - agent.spawn_frame) / fps
    return agent.x0_m + agent.vx_mps * dt, agent.y0_m + agent.vy_mps * dt


def _segments_intersect(p1, p2, a, b) -> bool:
    """Closed-segment intersection by solving the parametric 2x2 system."""
    rx, ry = p2[0] - p1[0], p2[1] - p1[1]
    sx, sy = b[0] - a[0], b[1] - a[1]
    qx, qy = a[0] - p1[0], a[1] - p1[1]
    denom = rx * sy - ry * sx
    if denom == 0.0:
        if qx * ry - qy * rx != 0.0:
            return False
        rr = rx * rx + ry * ry
        if rr == 0.0:
            return (min(a[0], b[0]) <= p1[0] <= max(a[0], b[0])
                    and min(a[1], b[1]) <= p1[1] <= max(a[1], b[1]))
        t0 = (qx * rx + qy * ry) / rr
        t1 = t0 + (sx * rx + sy * ry) / rr
        return max(min(t0, t1), 0.0) <= min(max(t0, t1), 1.0)
    t = (qx * sy - qy * sx) / denom
    u = (qx * ry - qy * rx) / denom
    return 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0


def _embedding_means(n_agents: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if n_agents <= dim:
        return np.eye(dim)[:n_agents]
    vecs = rng.normal(size=(n_agents, dim))
    return vecs / np.linalg.norm(vecs, axis=1, keepdims=True)


def generate(
    spec: ScenarioSpec,
    loi: LineOfInterest,
    interval_s: float,
) -> tuple[list[tuple[int, list[Detection]]], GroundTruth]:
    """Produce the detection stream and its closed-form ground truth.

    loi is given in world coordinates (meters); counts honor its optional
    direction filter with the same sign convention the engine uses.
    """
    rng = np.random.default_rng(spec.seed)
    n_frames = spec.n_frames
    occluded: set[tuple[int, int]] = set()
    for agent_idx, first, last in spec.occlusions:
        for f in range(first, last + 1):
            occluded.add((agent_idx, f))

    means = None
    if spec.embedding_dim > 0:
        means = _embedding_means(len(spec.agents), spec.embedding_dim, rng)

    batches: list[tuple[int, list[Detection]]] = []
    for frame in range(1, n_frames + 1):
        dets: list[Detection] = []
        for idx, agent in enumerate(spec.agents):
            if frame not in _alive_frames(agent, n_frames):
                continue
            if (idx, frame) in occluded:
                continue
            if spec.miss_prob > 0 and rng.random() < spec.miss_prob:
                continue
            wx, wy = _world_pos(agent, frame, spec.fps)
            cx, cy = to_pixel(wx, wy, spec.calibration)
            if spec.noise_std_px > 0:
                offset = rng.normal(0.0, spec.noise_std_px, size=2)
                cx, cy = cx + offset[0], cy + offset[1]
            bbox = (cx - agent.box_w_px / 2.0, cy - agent.box_h_px / 2.0,
                    agent.box_w_px, agent.box_h_px)
            appearance = None
            if means is not None:
                vec = means[idx]
                if spec.embedding_noise_std > 0:
                    vec = vec + rng.normal(0.0, spec.embedding_noise_std,
                                           size=spec.embedding_dim)
                norm = np.linalg.norm(vec)
                if norm == 0.0:
                    vec = means[idx]
                    norm = 1.0
                appearance = vec / norm
            dets.append(Detection(frame=frame, class_id=agent.class_id,
                                  bbox=bbox, confidence=1.0,
                                  appearance=appearance))
        batches.append((frame, dets))

    truth = _ground_truth(spec, loi, interval_s)
    return batches, truth


def _ground_truth(spec: ScenarioSpec, loi: LineOfInterest,
                  interval_s: float) -> GroundTruth:
    n_frames = spec.n_frames
    grid = interval_grid(interval_s, spec.duration_s)
    n_intervals = len(grid)
    trajectories: dict[int, list[tuple[int, float, float]]] = {}
    counts: dict[int, dict[int, int]] = {}
    speeds: dict[int, dict[int, list[float]]] = {}

    for idx, agent in enumerate(spec.agents):
        frames = _alive_frames(agent, n_frames)
        traj = [(f, *_world_pos(agent, f, spec.fps)) for f in frames]
        trajectories[idx] = traj

        crossing_frame = None
        for (f0, x0, y0), (f1, x1, y1) in zip(traj, traj[1:]):
            if not _segments_intersect((x0, y0), (x1, y1), loi.a, loi.b):
                continue
            if loi.direction is not None:
                cross = (loi.b[0] - loi.a[0]) * (y1 - y0) \
                    - (loi.b[1] - loi.a[1]) * (x1 - x0)
                sign = (cross > 0) - (cross < 0)
                if sign != loi.direction:
                    continue
            crossing_frame = f1
            break
        if crossing_frame is not None:
            t = crossing_frame / spec.fps
            if t <= spec.duration_s and n_intervals > 0:
                i = min(int(t / interval_s), n_intervals - 1)
                counts.setdefault(i, {})
                counts[i][agent.class_id] = counts[i].get(agent.class_id, 0) + 1

        for i, (start, end) in enumerate(grid):
            closed_end = i == n_intervals - 1
            inside = [
                f for f in frames
                if start <= f / spec.fps < end
                or (closed_end and f / spec.fps == end)
            ]
            if len(inside) >= 2:
                speeds.setdefault(i, {}).setdefault(agent.class_id, []).append(
                    agent.speed_mps
                )

    return GroundTruth(trajectories=trajectories, counts=counts, speeds=speeds,
                       interval_s=interval_s, total_duration=spec.duration_s)


# ---------------------------------------------------------------------------
# scenario files


def parse_scenario(text: str):
    """Read a scenario description (INI sections) into its parts.

    Returns (ScenarioSpec, loi_pixel_endpoints, direction, interval_s).
    The line of interest is specified in pixel coordinates, like the run
    config, and mapped to world coordinates by the caller.
    """
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"bad scenario file: {exc}") from None
    if "scenario" not in cp:
        raise ValidationError("scenario file needs a [scenario] section")
    sc = cp["scenario"]

    calib = CalibrationParams(1.0, 1.0, 90.0)
    if "calibration" in cp:
        cb = cp["calibration"]
        calib = CalibrationParams(
            phi=cb.getfloat("phi", 1.0), omega=cb.getfloat("omega", 1.0),
            delta_deg=cb.getfloat("delta_deg", 90.0),
            x0=cb.getfloat("x0", 0.0), y0=cb.getfloat("y0", 0.0),
        )

    agents = []
    occlusions = []
    for section in cp.sections():
        if section.startswith("agent."):
            ag = cp[section]
            end = ag.get("end_frame", "").strip()
            agents.append(AgentSpec(
                class_id=ag.getint("class"),
                x0_m=ag.getfloat("x0_m"), y0_m=ag.getfloat("y0_m"),
                vx_mps=ag.getfloat("vx_mps"), vy_mps=ag.getfloat("vy_mps"),
                spawn_frame=ag.getint("spawn_frame", 1),
                end_frame=int(end) if end else None,
                box_w_px=ag.getfloat("box_w_px", 24.0),
                box_h_px=ag.getfloat("box_h_px", 48.0),
            ))
        elif section.startswith("occlusion."):
            oc = cp[section]
            occlusions.append((oc.getint("agent"), oc.getint("first_frame"),
                               oc.getint("last_frame")))

    try:
        spec = ScenarioSpec(
            agents=agents,
            duration_s=sc.getfloat("duration_s"),
            fps=sc.getfloat("fps", 25.0),
            calibration=calib,
            noise_std_px=sc.getfloat("noise_std_px", 0.0),
            miss_prob=sc.getfloat("miss_prob", 0.0),
            occlusions=occlusions,
            embedding_dim=sc.getint("embedding_dim", 0),
            embedding_noise_std=sc.getfloat("embedding_noise_std", 0.0),
            seed=sc.getint("seed", 0),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad scenario file: {exc}") from None

    if "loi" not in cp:
        raise ValidationError("scenario file needs a [loi] section")
    lo = cp["loi"]
    loi_px = ((lo.getfloat("ax_px"), lo.getfloat("ay_px")),
              (lo.getfloat("bx_px"), lo.getfloat("by_px")))
    raw_dir = lo.get("direction", "").strip()
    direction = int(raw_dir) if raw_dir else None

    interval_s = 60.0
    if "measure" in cp:
        interval_s = cp["measure"].getfloat("interval_s", 60.0)
    return spec, loi_px, direction, interval_s


def loi_to_world(loi_px, direction, calib: CalibrationParams) -> LineOfInterest:
    """Map pixel LoI endpoints into the world frame used for counting."""
    (ax, ay), (bx, by) = loi_px
    return LineOfInterest(a=to_world(ax, ay, calib), b=to_world(bx, by, calib),
                          direction=direction)
