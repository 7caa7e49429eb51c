"""Per-episode guidance clips: scripted experts, corruption, clip files.

The guidance provider fills the contract "initial state + task -> clip of a
successful episode".  Here that is realized by a deterministic scripted
controller rolled through the task physics, rendered, subsampled to a fixed
length, and optionally passed through a generation-noise model (Gaussian
pixel noise, integer jitter, occasional box blur).  A real video generator
can replace the provider behind the same interface.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import env
from .binio import BinaryFormatError, Reader, Writer
from .frames import FRAME_DTYPE, box_blur3, random_shift, validate_frame

CLIP_MAGIC = b"DEGC"
CLIP_VERSION = 1
SOURCE_EXPERT, SOURCE_CORRUPTED = "expert", "corrupted"
_SOURCE_CODES = {SOURCE_EXPERT: 0, SOURCE_CORRUPTED: 1}
_SOURCE_NAMES = {v: k for k, v in _SOURCE_CODES.items()}

EXPERT_SPEED = 0.6          # fraction of max velocity; slows clips to episode pace
_APPROACH_DIST = 0.085      # push: standoff point behind the object
_PUSH_DEPTH = 0.070         # push: pressing target inside the contact radius
_SAFE_RADIUS = 0.11         # push: orbit radius that cannot disturb the object
_ALIGN_COS = 0.940          # push: cos threshold for "effector is behind object"
_PRESS_COS = 0.850          # push: looser threshold once already in close contact


class ExpertFailure(RuntimeError):
    """Scripted controller failed to reach success within the horizon."""


class UnsupportedClipVersion(BinaryFormatError):
    pass


@dataclass
class NoiseModel:
    """Generation-noise stand-in: i.i.d. pixel noise, jitter, box blur."""
    gaussian_sigma: float = 0.05
    jitter_bound: int = 2
    blur_probability: float = 0.3

    def validate(self) -> "NoiseModel":
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be >= 0")
        if self.jitter_bound < 0:
            raise ValueError("jitter_bound must be >= 0")
        if not 0.0 <= self.blur_probability <= 1.0:
            raise ValueError("blur_probability must be in [0, 1]")
        return self

    @property
    def is_null(self) -> bool:
        return self.gaussian_sigma == 0 and self.jitter_bound == 0 and \
            self.blur_probability == 0


@dataclass
class GuidanceClip:
    """Ordered frames for one episode; frames[0] depicts the initial state.

    Frames 1..n-1 are the guidance proper (the reward engine indexes them
    1-based and never rewards frame 0).
    """
    task_id: int
    frames: np.ndarray       # (n, H, W, C) float32 in [0, 1]
    source: str = SOURCE_EXPERT
    seed: int = 0
    padded: bool = False

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[0] < 2:
            raise ValueError("clip needs at least 2 frames of shape (H, W, C)")
        if self.source not in _SOURCE_CODES:
            raise ValueError(f"bad source {self.source!r}")

    @property
    def guidance_length(self) -> int:
        """Number of reward-indexable frames (excludes frame 0)."""
        return self.frames.shape[0] - 1


@dataclass
class ProviderConfig:
    clip_length: int = 64    # frames stored per clip, including frame 0
    noise: NoiseModel = None

    def __post_init__(self):
        if self.clip_length < 2:
            raise ValueError("clip_length must be >= 2")
        if self.noise is None:
            self.noise = NoiseModel()


def _toward(eff: np.ndarray, target: np.ndarray) -> np.ndarray:
    v = (target - eff) / env.STEP_GAIN
    return np.clip(v, -EXPERT_SPEED, EXPERT_SPEED)


def _segment_clearance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-12:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def expert_action(state: env.WorldState, task: env.TaskSpec) -> np.ndarray:
    """Deterministic proportional controller; pure function of the state."""
    eff, obj, goal = state.effector, state.obj, state.goal
    if task.kind == env.REACH:
        return _toward(eff, goal)

    if task.kind == env.PICK_LITE:
        if state.attached:
            return np.append(_toward(eff, goal), 1.0)
        grip = 1.0 if float(np.linalg.norm(eff - obj)) <= 0.045 else -1.0
        return np.append(_toward(eff, obj), grip)

    # push: stand behind the object on the object->goal line, then press in
    away = obj - goal
    away_n = float(np.linalg.norm(away))
    u = away / away_n if away_n > 1e-9 else np.array([1.0, 0.0])
    behind = obj + _APPROACH_DIST * u
    rel = eff - obj
    dist_o = float(np.linalg.norm(rel))
    cos_v = float(rel @ u) / dist_o if dist_o > 1e-9 else -1.0
    # pressing tolerates more lateral slip than the initial line-up does
    aligned = cos_v > (_PRESS_COS if dist_o < _SAFE_RADIUS + 0.005 else _ALIGN_COS)

    if aligned:
        return _toward(eff, obj + _PUSH_DEPTH * u)
    if _segment_clearance(obj, eff, behind) >= _SAFE_RADIUS - 0.015:
        return _toward(eff, behind)
    # orbit around the object toward the behind point, outside contact range
    radius = min(max(dist_o, _SAFE_RADIUS), 0.16)
    phi = float(np.arctan2(rel[1], rel[0]))
    phi_goal = float(np.arctan2(u[1], u[0]))
    diff = (phi_goal - phi + np.pi) % (2 * np.pi) - np.pi
    omega = env.STEP_GAIN * EXPERT_SPEED / radius
    phi_next = phi + np.clip(diff, -omega, omega)
    target = obj + radius * np.array([np.cos(phi_next), np.sin(phi_next)])
    return _toward(eff, np.clip(target, 0.02, 0.98))


def scripted_expert(task: env.TaskSpec, state: env.WorldState):
    """Roll the controller to success.  Returns (states, ok).

    states includes the initial state; ok is False when the horizon ran out
    (must not happen for in-distribution resets).
    """
    states = [state]
    if env.success(state, task):
        return states, True
    for _ in range(task.horizon):
        action = expert_action(state, task)
        state, _, _, _, done, info = env.step(state, action, task, render_frame=False)
        states.append(state)
        if info["success"]:
            return states, True
        if done:
            break
    return states, False


def render_and_subsample(states, length: int, task: env.TaskSpec,
                         seed: int = 0) -> GuidanceClip:
    """Render `length` states at uniform spacing, always keeping first and last.

    When the trajectory is shorter than the clip, the terminal state repeats
    and the clip is flagged as padded.
    """
    if length < 2:
        raise ValueError("clip length must be >= 2")
    if not states:
        raise ValueError("empty trajectory")
    n = len(states)
    if n >= length:
        idx = np.round(np.arange(length) * (n - 1) / (length - 1)).astype(int)
        padded = False
    else:
        idx = np.concatenate([np.arange(n), np.full(length - n, n - 1, dtype=int)])
        padded = True
    frames = np.stack([env.render(states[i], task) for i in idx])
    return GuidanceClip(task_id=task.task_id, frames=frames,
                        source=SOURCE_EXPERT, seed=seed, padded=padded)


def corrupt(clip: GuidanceClip, noise: NoiseModel, rng: np.random.Generator) -> GuidanceClip:
    """Apply the noise model per frame; deterministic under the rng state.

    Per-frame draw order: Gaussian field (if sigma > 0), jitter offsets (if
    bound > 0), blur coin (if probability > 0).
    """
    noise.validate()
    out = np.empty_like(clip.frames)
    for i in range(clip.frames.shape[0]):
        out[i] = corrupt_frame(clip.frames[i], noise, rng)
    return replace(clip, frames=out, source=SOURCE_CORRUPTED)


def provide(config: ProviderConfig, task: env.TaskSpec, initial_state: env.WorldState,
            rng: np.random.Generator, seed: int = 0) -> GuidanceClip:
    """Produce the episode's guidance clip from its initial state.

    Pure function of (task, initial state, config, rng state).  Frame 0
    matches the episode's initial observation up to the noise model.
    """
    states, ok = scripted_expert(task, initial_state)
    if not ok:
        raise ExpertFailure(f"scripted expert failed on task {task.kind}")
    clip = render_and_subsample(states, config.clip_length, task, seed=seed)
    if config.noise.is_null:
        return clip
    return corrupt(clip, config.noise, rng)


def build_expert_pool(task: env.TaskSpec, config: ProviderConfig, seeds) -> list:
    """Zero-noise expert clips from the given reset seeds (the pool used for
    contrastive pre-training; 4 clips per task by default upstream)."""
    clips = []
    zero_noise = ProviderConfig(clip_length=config.clip_length, noise=NoiseModel(0.0, 0, 0.0))
    for s in seeds:
        state, _, _ = env.reset(task, s, render_frame=False)
        clips.append(provide(zero_noise, task, state, np.random.default_rng(0), seed=int(s)))
    return clips


def pool_frames(clips) -> np.ndarray:
    """Distinct frames across the given clips, for contrastive pre-training.

    Terminal padding makes clips repeat their last frame; exact duplicates
    are dropped, since identical frames acting as mutual negatives only add
    irreducible contrastive loss.  Corruption is NOT baked in here — it is
    applied as a per-view augmentation at training time (see
    frame_corruptor), so corrupted renditions of a frame count as positives
    of that frame rather than as separate pool entries the loss would try
    to push away from their own clean originals.
    """
    clean = np.concatenate([c.frames for c in clips])
    _, keep = np.unique(clean.reshape(clean.shape[0], -1), axis=0,
                        return_index=True)
    return clean[np.sort(keep)]


def corrupt_frame(frame: np.ndarray, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Single-frame version of corrupt(); identical draw order."""
    if noise.gaussian_sigma > 0:
        frame = np.clip(frame + rng.normal(0.0, noise.gaussian_sigma,
                                           size=frame.shape), 0.0, 1.0)
        frame = frame.astype(FRAME_DTYPE)
    if noise.jitter_bound > 0:
        frame = random_shift(frame, noise.jitter_bound, rng)
    if noise.blur_probability > 0 and rng.random() < noise.blur_probability:
        frame = box_blur3(frame)
    return frame


def frame_corruptor(noise: NoiseModel):
    """Augmentation hook `f(frame, rng)` for contrastive training views."""
    noise.validate()
    if noise.is_null:
        return None
    return lambda frame, rng: corrupt_frame(frame, noise, rng)


def training_noise(noise: NoiseModel) -> NoiseModel:
    """Corruption used for contrastive training views: the clip noise model
    minus its jitter.  Training views already get a random shift, so keeping
    the jitter too would widen translation tolerance past what corrupted
    clips require, blurring temporal neighbors together."""
    return NoiseModel(noise.gaussian_sigma, 0, noise.blur_probability)


def clip_to_bytes(clip: GuidanceClip) -> bytes:
    w = Writer()
    w.magic(CLIP_MAGIC)
    w.u32(CLIP_VERSION)
    w.u32(clip.task_id)
    n, h, wd, c = clip.frames.shape
    w.u32(n)
    w.u32(wd)
    w.u32(h)
    w.u32(c)
    w.f32_array(clip.frames)
    w.u64(clip.seed)
    w.u32(_SOURCE_CODES[clip.source])
    w.u32(1 if clip.padded else 0)
    return w.getvalue()


def clip_from_bytes(data: bytes) -> GuidanceClip:
    r = Reader(data)
    r.magic(CLIP_MAGIC)
    version = r.u32("version")
    if version != CLIP_VERSION:
        raise UnsupportedClipVersion(4, f"unsupported clip version {version}")
    task_id = r.u32("task_id")
    n = r.u32("frame count")
    wd = r.u32("width")
    h = r.u32("height")
    c = r.u32("channels")
    if n < 2 or c not in (1, 3):
        raise BinaryFormatError(8, f"bad clip geometry n={n} c={c}")
    frames = r.f32_array(n * h * wd * c, "frames").reshape(n, h, wd, c)
    seed = r.u64("seed")
    source = _SOURCE_NAMES.get(r.u32("source"))
    if source is None:
        raise BinaryFormatError(r.pos - 4, "bad source code")
    padded = r.u32("padded flag") != 0
    r.expect_end()
    for i in (0, n - 1):
        validate_frame(frames[i])
    return GuidanceClip(task_id=task_id, frames=frames, source=source,
                        seed=seed, padded=padded)


def save_clip(clip: GuidanceClip, path) -> None:
    with open(path, "wb") as fh:
        fh.write(clip_to_bytes(clip))


def load_clip(path) -> GuidanceClip:
    with open(path, "rb") as fh:
        return clip_from_bytes(fh.read())


def frame_to_bytes(frame: np.ndarray) -> bytes:
    """Single frame in the clip container (n = 1 wire variant for HTTP)."""
    w = Writer()
    w.magic(CLIP_MAGIC)
    w.u32(CLIP_VERSION)
    w.u32(0)
    h, wd, c = frame.shape
    w.u32(1)
    w.u32(wd)
    w.u32(h)
    w.u32(c)
    w.f32_array(frame)
    w.u64(0)
    w.u32(0)
    w.u32(0)
    return w.getvalue()


def frame_from_bytes(data: bytes) -> np.ndarray:
    r = Reader(data)
    r.magic(CLIP_MAGIC)
    version = r.u32("version")
    if version != CLIP_VERSION:
        raise UnsupportedClipVersion(4, f"unsupported clip version {version}")
    r.u32("task_id")
    n = r.u32("frame count")
    if n != 1:
        raise BinaryFormatError(8, f"expected a single-frame payload, got {n}")
    wd = r.u32("width")
    h = r.u32("height")
    c = r.u32("channels")
    frame = r.f32_array(h * wd * c, "frame").reshape(h, wd, c)
    r.u64("seed")
    r.u32("source")
    r.u32("padded flag")
    r.expect_end()
    return validate_frame(frame)
