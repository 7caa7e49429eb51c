"""Dual-granularity reward engine over guidance-clip latents.

Two signals per step, both from cosine similarity in the encoder's latent
space.  The coarse term is the similarity *gain* toward a target guidance
frame whose index advances by a fixed stride once matched loosely; the fine
term pays the raw index of the best-matching guidance frame when the match
is near-exact and beyond the furthest index rewarded so far.  A weighted sum
combines them, optionally with the environment's sparse success bit.

Frame 0 of a clip depicts the initial state and is excluded: guidance
indices are 1-based over frames 1..l.  All similarity math runs in float64
so results are independent of whether frames or precomputed latents arrive
(the HTTP service sends latents).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import latent as latent_mod
from .guidance import GuidanceClip


class RewardError(ValueError):
    pass


@dataclass
class RewardConfig:
    alpha: float = 100.0        # coarse coefficient
    beta: float = 1.0           # fine coefficient
    theta: float = 10.0         # sparse coefficient
    tau_coarse: float = 0.85    # loose-match threshold advancing the target
    tau_fine: float = 0.98      # near-exact threshold firing the fine term
    step_s: int = 4             # target index stride
    sparse_enabled: bool = False

    def __post_init__(self):
        if not 0.0 < self.tau_coarse < self.tau_fine <= 1.0:
            raise RewardError(
                f"need 0 < tau_coarse < tau_fine <= 1, got tau_coarse="
                f"{self.tau_coarse} tau_fine={self.tau_fine}")
        if self.step_s < 1:
            raise RewardError(f"step_s must be >= 1, got {self.step_s}")
        for name in ("alpha", "beta", "theta"):
            if getattr(self, name) < 0:
                raise RewardError(f"{name} must be >= 0")


@dataclass
class EpisodeRewardState:
    """Per-episode bookkeeping.  embeddings[i-1] is guidance index i."""
    embeddings: np.ndarray    # (l, D) float64, rows unit-normalized
    i_target: int             # guidance index currently pursued, 1-based
    i_reached: int            # largest index rewarded at fine precision, 0 = none
    prev_sim: float           # last similarity against the CURRENT target
    step_count: int = 0

    @property
    def length(self) -> int:
        return self.embeddings.shape[0]


@dataclass(frozen=True)
class RewardBreakdown:
    """One step's rewards; index fields are the values after the update."""
    coarse: float
    fine: float
    sparse: int
    combined: float
    i_target: int
    i_reached: int
    best_index: int
    best_sim: float


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise RewardError("cosine similarity of a zero-norm vector")
    return float(a @ b) / (na * nb)


def _normalize_rows(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if (norms == 0.0).any():
        raise RewardError("zero-norm latent in guidance embeddings")
    return z / norms


def _normalize(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise RewardError(f"latent must be 1-D, got shape {z.shape}")
    n = float(np.linalg.norm(z))
    if n == 0.0:
        raise RewardError("zero-norm observation latent")
    return z / n


def guidance_latents(net: latent_mod.EncoderNet, clip: GuidanceClip) -> np.ndarray:
    """Unit-normalized float64 latents of clip frames 1..l (frame 0 skipped)."""
    return _normalize_rows(latent_mod.encode(net, clip.frames[1:]).astype(np.float64))


def state_from_latents(latents: np.ndarray, initial_latent, config: RewardConfig) -> EpisodeRewardState:
    """Episode state directly from latent rows (index i at row i-1)."""
    emb = _normalize_rows(latents)
    if emb.shape[0] < 2:
        raise RewardError("guidance must have at least 2 indexable frames")
    prev = float(emb[0] @ _normalize(initial_latent))
    return EpisodeRewardState(embeddings=emb, i_target=1, i_reached=0, prev_sim=prev)


def begin_episode(net: latent_mod.EncoderNet, clip: GuidanceClip,
                  initial_obs: np.ndarray, config: RewardConfig) -> EpisodeRewardState:
    """Encode the clip once and seed the baseline from the initial observation.

    The first step's coarse term then measures progress from the start state.
    """
    if initial_obs.shape != clip.frames.shape[1:]:
        raise RewardError(
            f"observation shape {initial_obs.shape} does not match clip "
            f"frames {clip.frames.shape[1:]}")
    emb = guidance_latents(net, clip)
    z0 = latent_mod.encode_single(net, initial_obs).astype(np.float64)
    return state_from_latents(emb, z0, config)


def step_reward(state: EpisodeRewardState, obs_latent, sparse: int,
                config: RewardConfig):
    """Advance the state machine one step.  Returns (state', RewardBreakdown).

    Order: coarse gain against the current target; target advance on loose
    match (rebaselining prev_sim against the new target); best-match fine
    term gated by the frontier; weighted combination.
    """
    zn = _normalize(obs_latent)
    sims = state.embeddings @ zn

    s_cur = float(sims[state.i_target - 1])
    coarse = s_cur - state.prev_sim

    i_target = state.i_target
    if s_cur > config.tau_coarse:
        i_target = min(i_target + config.step_s, state.length)
        prev_sim = float(sims[i_target - 1])
    else:
        prev_sim = s_cur

    best_row = int(np.argmax(sims))        # first max -> smallest index on ties
    best_index = best_row + 1
    best_sim = float(sims[best_row])
    fine = 0.0
    i_reached = state.i_reached
    if best_sim > config.tau_fine and best_index > state.i_reached:
        fine = float(best_index)
        i_reached = best_index

    sparse = 1 if sparse else 0
    combined = config.alpha * coarse + config.beta * fine
    if config.sparse_enabled:
        combined += config.theta * sparse

    new_state = replace(state, i_target=i_target, i_reached=i_reached,
                        prev_sim=prev_sim, step_count=state.step_count + 1)
    return new_state, RewardBreakdown(
        coarse=coarse, fine=fine, sparse=sparse, combined=combined,
        i_target=i_target, i_reached=i_reached,
        best_index=best_index, best_sim=best_sim)


def _naive_cos(a, b) -> float:
    dot = math.fsum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(math.fsum(float(x) * float(x) for x in a))
    nb = math.sqrt(math.fsum(float(y) * float(y) for y in b))
    if na == 0.0 or nb == 0.0:
        raise RewardError("cosine similarity of a zero-norm vector")
    return dot / (na * nb)


def oracle_episode(guidance, encoder, obs_sequence, sparse_sequence,
                   config: RewardConfig):
    """Reference implementation: plain loops, no caching, no vectorization.

    `guidance` is a GuidanceClip (with `encoder` an EncoderNet) or a raw
    (l, D) latent array (encoder ignored); `obs_sequence` holds frames or
    latents correspondingly.  Returns the per-step breakdown list.
    """
    if isinstance(guidance, GuidanceClip):
        refs = [latent_mod.encode_single(encoder, guidance.frames[i]).astype(np.float64)
                for i in range(1, guidance.frames.shape[0])]
        obs_lat = [latent_mod.encode_single(encoder, o).astype(np.float64)
                   for o in obs_sequence]
    else:
        refs = [np.asarray(row, dtype=np.float64) for row in guidance]
        obs_lat = [np.asarray(o, dtype=np.float64) for o in obs_sequence]
    l = len(refs)
    if l < 2:
        raise RewardError("guidance must have at least 2 indexable frames")
    if len(obs_lat) != len(sparse_sequence) + 1:
        raise RewardError("need one observation per step plus the initial one")

    i_target = 1
    i_reached = 0
    prev_sim = _naive_cos(obs_lat[0], refs[0])
    out = []
    for step_i, sparse in enumerate(sparse_sequence):
        obs = obs_lat[step_i + 1]
        s_cur = _naive_cos(obs, refs[i_target - 1])
        coarse = s_cur - prev_sim
        if s_cur > config.tau_coarse:
            i_target = i_target + config.step_s
            if i_target > l:
                i_target = l
            prev_sim = _naive_cos(obs, refs[i_target - 1])
        else:
            prev_sim = s_cur
        best_index, best_sim = 0, -2.0
        for i in range(1, l + 1):
            s_i = _naive_cos(obs, refs[i - 1])
            if s_i > best_sim:
                best_index, best_sim = i, s_i
        fine = 0.0
        if best_sim > config.tau_fine and best_index > i_reached:
            fine = float(best_index)
            i_reached = best_index
        sparse = 1 if sparse else 0
        combined = config.alpha * coarse + config.beta * fine
        if config.sparse_enabled:
            combined += config.theta * sparse
        out.append(RewardBreakdown(
            coarse=coarse, fine=fine, sparse=sparse, combined=combined,
            i_target=i_target, i_reached=i_reached,
            best_index=best_index, best_sim=best_sim))
    return out
