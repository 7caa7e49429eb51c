"""Desk-scale 2-D point-mass manipulation tasks.

Three tasks on the unit square: reach (drive the effector to a goal), push
(shove a disk object onto a goal pad), and pick-lite (grip the object, then
carry it to the goal).  Physics is disk overlap only; all dynamics are pure
functions of (state, action), and resets are pure functions of the seed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .frames import FRAME_DTYPE

REACH, PUSH, PICK_LITE = "reach", "push", "pick_lite"
TASK_KINDS = (REACH, PUSH, PICK_LITE)
TASK_IDS = {REACH: 0, PUSH: 1, PICK_LITE: 2}
TASK_NAMES = {v: k for k, v in TASK_IDS.items()}

EFFECTOR_RADIUS = 0.03
OBJECT_RADIUS = 0.05
CONTACT_RADIUS = EFFECTOR_RADIUS + OBJECT_RADIUS
STEP_GAIN = 0.03
ATTACH_RADIUS = 0.05
MIN_SEPARATION = 0.15

# render sizes are larger than the physical disks so blobs span a few pixels,
# but kept slim: the fewer pixels two different scenes share, the sharper the
# latent cosine separation the reward encoder can achieve
RENDER_EFFECTOR_R = 0.055
RENDER_OBJECT_R = 0.075
RENDER_GOAL_R = 0.10
RENDER_GOAL_HALFWIDTH = 0.010
GOAL_LEVEL, OBJECT_LEVEL, EFFECTOR_LEVEL = 0.4, 0.7, 1.0


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    horizon: int = 200
    reach_radius: float = 0.05
    object_goal_radius: float = 0.06
    frame_size: int = 32

    @property
    def action_dim(self) -> int:
        return 3 if self.kind == PICK_LITE else 2

    @property
    def task_id(self) -> int:
        return TASK_IDS[self.kind]


def make_task(kind: str, horizon: int = 200, frame_size: int = 32) -> TaskSpec:
    kind = kind.replace("-", "_")
    if kind not in TASK_KINDS:
        raise ValueError(f"unknown task {kind!r}, expected one of {TASK_KINDS}")
    return TaskSpec(kind=kind, horizon=horizon, frame_size=frame_size)


@dataclass(frozen=True)
class WorldState:
    effector: np.ndarray  # (2,) in [0,1]^2
    obj: np.ndarray
    goal: np.ndarray
    attached: bool = False
    t: int = 0


def _unit_clip(p: np.ndarray) -> np.ndarray:
    return np.clip(p, 0.0, 1.0)


def success(state: WorldState, task: TaskSpec) -> bool:
    """Closed-ball success predicates per task."""
    if task.kind == REACH:
        return float(np.linalg.norm(state.effector - state.goal)) <= task.reach_radius
    if task.kind == PUSH:
        return float(np.linalg.norm(state.obj - state.goal)) <= task.object_goal_radius
    return state.attached and \
        float(np.linalg.norm(state.obj - state.goal)) <= task.object_goal_radius


def low_dim_obs(state: WorldState) -> np.ndarray:
    return np.concatenate([state.effector, state.obj, state.goal]).astype(FRAME_DTYPE)


def _sample_positions(task: TaskSpec, rng: np.random.Generator) -> tuple:
    """Rejection-sample (effector, object, goal) with pairwise separation."""
    boxes = {
        REACH: ((0.10, 0.90), (0.10, 0.90), (0.10, 0.90)),
        PUSH: ((0.10, 0.90), (0.25, 0.75), (0.20, 0.80)),
        PICK_LITE: ((0.10, 0.90), (0.20, 0.80), (0.20, 0.80)),
    }[task.kind]
    for _ in range(10_000):
        eff = rng.uniform(boxes[0][0], boxes[0][1], size=2)
        obj = rng.uniform(boxes[1][0], boxes[1][1], size=2)
        goal = rng.uniform(boxes[2][0], boxes[2][1], size=2)
        if task.kind == REACH:
            if np.linalg.norm(eff - goal) >= MIN_SEPARATION:
                return eff, goal.copy(), goal
            continue
        seps = (np.linalg.norm(eff - obj), np.linalg.norm(eff - goal),
                np.linalg.norm(obj - goal))
        if min(seps) >= MIN_SEPARATION:
            return eff, obj, goal
    raise RuntimeError("reset sampling failed to satisfy separation constraint")


def reset(task: TaskSpec, seed, render_frame: bool = True):
    """Sample an initial state.  Returns (state, frame, low_dim_obs)."""
    rng = np.random.default_rng(seed)
    eff, obj, goal = _sample_positions(task, rng)
    state = WorldState(effector=eff, obj=obj, goal=goal, attached=False, t=0)
    frame = render(state, task) if render_frame else None
    return state, frame, low_dim_obs(state)


def step(state: WorldState, action: np.ndarray, task: TaskSpec, render_frame: bool = True):
    """Advance one tick.  Returns (state', frame, low_dim_obs, sparse, done, info).

    Velocity components outside [-1, 1] are clamped and flagged in info.
    The object moves only through effector contact (push) or attachment
    (pick-lite); in pick-lite, pressing without gripping does nothing.
    """
    action = np.asarray(action, dtype=np.float64)
    clamped = bool((action < -1.0).any() or (action > 1.0).any())
    action = np.clip(action, -1.0, 1.0)
    vel = action[:2]
    grip = float(action[2]) if task.kind == PICK_LITE and action.shape[0] > 2 else 0.0

    eff = _unit_clip(state.effector + STEP_GAIN * vel)
    obj = state.obj
    attached = state.attached

    if task.kind == PUSH:
        delta = obj - eff
        dist = float(np.linalg.norm(delta))
        if dist < CONTACT_RADIUS:
            normal = delta / dist if dist > 1e-9 else np.array([1.0, 0.0])
            obj = _unit_clip(obj + normal * (CONTACT_RADIUS - dist))
    elif task.kind == PICK_LITE:
        if attached:
            obj = eff.copy()
        elif grip > 0.0 and float(np.linalg.norm(eff - obj)) <= ATTACH_RADIUS:
            attached = True
            obj = eff.copy()

    new_state = WorldState(effector=eff, obj=obj, goal=state.goal,
                           attached=attached, t=state.t + 1)
    succeeded = success(new_state, task)
    sparse = 1 if succeeded else 0
    done = succeeded or new_state.t >= task.horizon
    frame = render(new_state, task) if render_frame else None
    info = {"clamped": clamped, "success": succeeded}
    return new_state, frame, low_dim_obs(new_state), sparse, done, info


_GRID_CACHE: dict = {}


def _pixel_grid(size: int):
    grid = _GRID_CACHE.get(size)
    if grid is None:
        centers = (np.arange(size) + 0.5) / size
        gx, gy = np.meshgrid(centers, centers)  # gy varies along rows
        grid = (gx.astype(np.float64), gy.astype(np.float64))
        _GRID_CACHE[size] = grid
    return grid


def _disk(dist: np.ndarray, radius: float, aa: float) -> np.ndarray:
    return np.clip(0.5 + (radius - dist) / aa, 0.0, 1.0)


def _ring(dist: np.ndarray, radius: float, halfwidth: float, aa: float) -> np.ndarray:
    return np.clip(0.5 + (halfwidth - np.abs(dist - radius)) / aa, 0.0, 1.0)


def render(state: WorldState, task: TaskSpec) -> np.ndarray:
    """Rasterize to a (size, size, 1) grayscale frame.

    Goal ring at 0.4, object disk at 0.7, effector disk at 1.0; layers are
    combined by max so the effector stays the brightest blob.  Edges are
    anti-aliased over one pixel so intensity varies smoothly with position.
    """
    size = task.frame_size
    gx, gy = _pixel_grid(size)
    aa = 1.0 / size

    def dist_to(p):
        return np.sqrt((gx - p[0]) ** 2 + (gy - p[1]) ** 2)

    img = GOAL_LEVEL * _ring(dist_to(state.goal), RENDER_GOAL_R, RENDER_GOAL_HALFWIDTH, aa)
    if task.kind != REACH:
        np.maximum(img, OBJECT_LEVEL * _disk(dist_to(state.obj), RENDER_OBJECT_R, aa), out=img)
    np.maximum(img, EFFECTOR_LEVEL * _disk(dist_to(state.effector), RENDER_EFFECTOR_R, aa), out=img)
    return img[:, :, None].astype(FRAME_DTYPE)


def state_with(state: WorldState, **kw) -> WorldState:
    """Convenience for tests: copy a state with fields replaced."""
    return replace(state, **kw)
