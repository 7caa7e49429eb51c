"""Compact deterministic actor-critic learner (TD3-flavored) on numpy.

Twin critics with clipped-noise target smoothing, a delayed actor, soft
target updates (actor and critics both keep slow copies), and n-step
returns assembled lazily from a ring replay buffer.  The learner is
reward-agnostic — the training harness decides what reward stream gets
stored.

Rewards are divided by a running scale (95th percentile of recent
magnitudes) before TD updates; raw values are what the logs carry.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import env
from .binio import BinaryFormatError, Reader, Writer
from .nn import Adam, init_linear, mlp_backward, mlp_forward

AGENT_MAGIC = b"DEGA"
AGENT_VERSION = 1


@dataclass
class AgentConfig:
    obs_dim: int = 6
    action_dim: int = 2
    discount: float = 0.98
    batch_size: int = 256
    n_step: int = 3
    capacity: int = 100_000
    warmup: int = 4000            # purely random action frames at the start
    noise_start: float = 1.0
    noise_end: float = 0.1
    noise_decay_steps: int = 50_000
    lr: float = 1e-3
    target_mix: float = 0.01      # soft-update fraction per update
    hidden: int = 128
    update_every: int = 2         # env steps between gradient updates
    actor_delay: int = 2          # critic updates per actor update
    target_noise: float = 0.2
    target_noise_clip: float = 0.5
    td_clip: float = 0.0          # Huber-style TD-error clip; 0 disables

    def validate(self) -> "AgentConfig":
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must be in (0, 1)")
        if self.n_step < 1:
            raise ValueError("n_step must be >= 1")
        if self.batch_size < 1 or self.capacity < self.batch_size:
            raise ValueError("capacity must cover at least one batch")
        if self.update_every < 1 or self.actor_delay < 1:
            raise ValueError("update_every and actor_delay must be >= 1")
        return self


@dataclass
class PolicyParams:
    actor: list          # [(w, b)] x3, tanh output in [-1, 1]
    critic1: list        # [(w, b)] x3 on concat(obs, action)
    critic2: list
    target1: list
    target2: list
    target_actor: list

    def tensors(self):
        out = []
        for layers in (self.actor, self.critic1, self.critic2,
                       self.target1, self.target2, self.target_actor):
            for w, b in layers:
                out.extend((w, b))
        return out


def _mlp_init(rng, dims):
    return [init_linear(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]


def _copy_layers(layers):
    return [(w.copy(), b.copy()) for w, b in layers]


def init_policy(cfg: AgentConfig, rng: np.random.Generator) -> PolicyParams:
    h = cfg.hidden
    actor = _mlp_init(rng, (cfg.obs_dim, h, h, cfg.action_dim))
    # Start the actor near zero output.  With a full-scale init the pre-tanh
    # activations blow past +-2 within the first few thousand updates and the
    # policy freezes into a saturated bang-bang controller (tanh gradient is
    # ~0 there, so it never comes back).
    w_last, b_last = actor[-1]
    actor[-1] = (w_last * 0.05, b_last)
    critic1 = _mlp_init(rng, (cfg.obs_dim + cfg.action_dim, h, h, 1))
    critic2 = _mlp_init(rng, (cfg.obs_dim + cfg.action_dim, h, h, 1))
    return PolicyParams(actor=actor, critic1=critic1, critic2=critic2,
                        target1=_copy_layers(critic1), target2=_copy_layers(critic2),
                        target_actor=_copy_layers(actor))


def actor_forward(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(obs, params.actor, tanh_out=True)
    return out


def critic_forward(layers, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(np.concatenate([obs, action], axis=1), layers)
    return out[:, 0]


def act(params: PolicyParams, obs: np.ndarray, noise_std: float,
        rng: np.random.Generator) -> np.ndarray:
    """Deterministic actor plus clipped Gaussian exploration noise."""
    a = actor_forward(params, obs.astype(np.float32)[None])[0]
    if noise_std > 0:
        a = a + np.clip(rng.normal(0.0, noise_std, size=a.shape), -1.0, 1.0)
    return np.clip(a, -1.0, 1.0).astype(np.float32)


class OUNoise:
    """Mean-reverting exploration noise with a tunable stationary std.

    White per-step noise almost never sustains the several consecutive
    directed steps that contact tasks need (an effector that jitters in
    place never discovers pushing), so exploration keeps a direction for
    roughly 1/theta steps instead.  sample(sigma) is scaled so the
    process's stationary std equals sigma, which lets the caller reuse an
    existing noise-std schedule unchanged.
    """

    def __init__(self, dim: int, theta: float = 0.15):
        self.dim = dim
        self.theta = theta
        self.state = np.zeros(dim)

    def reset(self) -> None:
        self.state[:] = 0.0

    def sample(self, sigma: float, rng: np.random.Generator) -> np.ndarray:
        drive = sigma * np.sqrt(self.theta * (2.0 - self.theta))
        self.state *= 1.0 - self.theta
        self.state += drive * rng.normal(size=self.dim)
        return self.state


def act_with_noise(params: PolicyParams, obs: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Actor output plus a caller-supplied noise vector, clipped to bounds."""
    a = actor_forward(params, obs.astype(np.float32)[None])[0]
    return np.clip(a + noise, -1.0, 1.0).astype(np.float32)


def noise_schedule(cfg: AgentConfig, step: int) -> float:
    if step >= cfg.noise_decay_steps:
        return cfg.noise_end
    frac = step / cfg.noise_decay_steps
    return cfg.noise_start + frac * (cfg.noise_end - cfg.noise_start)


class Replay:
    """Ring buffer of single-step transitions; n-step windows built at
    sample time and never across episode boundaries.

    `terminal` marks success-termination (no bootstrap); `boundary` marks
    any episode end including horizon truncation (window stops, bootstrap
    unless also terminal).
    """

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.action = np.zeros((capacity, act_dim), dtype=np.float32)
        self.reward = np.zeros(capacity, dtype=np.float64)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.boundary = np.zeros(capacity, dtype=bool)
        self.head = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def store(self, obs, action, reward, next_obs, terminal: bool, boundary: bool) -> None:
        i = self.head
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = terminal
        self.boundary[i] = boundary
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def recent_rewards(self, n: int) -> np.ndarray:
        n = min(n, self.size)
        idx = (self.head - 1 - np.arange(n)) % self.capacity
        return self.reward[idx]

    def sample_nstep(self, batch: int, n: int, gamma: float,
                     rng: np.random.Generator):
        """Returns (obs, action, n_step_return, bootstrap_obs, bootstrap_coeff).

        bootstrap_coeff is gamma^k for a k-step window, or 0 after a
        success-terminal end.
        """
        if self.size < batch:
            raise ValueError("replay buffer smaller than batch size")
        base = rng.integers(0, self.size, size=batch)
        if self.size == self.capacity:
            # oldest entry sits at head; reindex so windows walk real time
            base = (self.head + base) % self.capacity
        ret = np.zeros(batch, dtype=np.float64)
        last = base.copy()
        alive = np.ones(batch, dtype=bool)
        g = 1.0
        for j in range(n):
            t = (base + j) % self.capacity
            ret[alive] += g * self.reward[t[alive]]
            last[alive] = t[alive]
            nxt = (t + 1) % self.capacity
            stop = self.boundary[t] | (nxt == self.head)
            alive &= ~stop
            if not alive.any():
                break
            g *= gamma
        k = ((last - base) % self.capacity) + 1
        coeff = np.where(self.terminal[last], 0.0, gamma ** k)
        return (self.obs[base], self.action[base], ret,
                self.next_obs[last], coeff)


@dataclass
class RewardNormalizer:
    """Scale = max(95th percentile of recent |reward|, 1), refreshed lazily.

    The wide window keeps the scale slowly varying; short windows let it
    whipsaw once episodes shorten, which destabilises late training.
    """
    window: int = 20_000
    refresh_every: int = 500
    scale: float = 1.0
    _count: int = 0

    def observe(self, replay: Replay) -> None:
        self._count += 1
        if self._count % self.refresh_every:
            return
        recent = np.abs(replay.recent_rewards(self.window))
        if recent.size:
            self.scale = max(float(np.percentile(recent, 95)), 1.0)


@dataclass
class Learner:
    cfg: AgentConfig
    params: PolicyParams
    actor_opt: Adam
    critic_opt: Adam
    updates: int = 0
    last_actor_loss: float = 0.0


def make_learner(cfg: AgentConfig, seed: int) -> Learner:
    cfg.validate()
    params = init_policy(cfg, np.random.default_rng(seed))
    actor_tensors = [t for w, b in params.actor for t in (w, b)]
    critic_tensors = [t for layers in (params.critic1, params.critic2)
                      for w, b in layers for t in (w, b)]
    return Learner(cfg=cfg, params=params,
                   actor_opt=Adam(actor_tensors, lr=cfg.lr),
                   critic_opt=Adam(critic_tensors, lr=cfg.lr))


def _soft_update(target, online, mix: float) -> None:
    for (tw, tb), (w, b) in zip(target, online):
        tw *= 1.0 - mix
        tw += mix * w
        tb *= 1.0 - mix
        tb += mix * b


def update(learner: Learner, replay: Replay, rng: np.random.Generator,
           reward_scale: float = 1.0) -> dict:
    """One critic step (and possibly a delayed actor step).  Returns
    diagnostics {critic_loss, actor_loss, mean_q}."""
    cfg = learner.cfg
    p = learner.params
    obs, action, ret, next_obs, coeff = replay.sample_nstep(
        cfg.batch_size, cfg.n_step, cfg.discount, rng)
    ret = ret / reward_scale

    next_a, _ = mlp_forward(next_obs, p.target_actor, tanh_out=True)
    smoothing = np.clip(rng.normal(0.0, cfg.target_noise, size=next_a.shape),
                        -cfg.target_noise_clip, cfg.target_noise_clip)
    next_a = np.clip(next_a + smoothing, -1.0, 1.0).astype(np.float32)
    q_next = np.minimum(critic_forward(p.target1, next_obs, next_a),
                        critic_forward(p.target2, next_obs, next_a))
    y = (ret + coeff * q_next).astype(np.float32)

    x = np.concatenate([obs, action], axis=1)
    q1, c1 = mlp_forward(x, p.critic1)
    q2, c2 = mlp_forward(x, p.critic2)
    d1 = q1[:, 0] - y
    d2 = q2[:, 0] - y
    critic_loss = float((d1 * d1).mean() + (d2 * d2).mean())
    if cfg.td_clip > 0.0:
        # Huber gradient: spike returns (rare large milestone bonuses)
        # otherwise dominate every batch they land in.
        d1 = np.clip(d1, -cfg.td_clip, cfg.td_clip)
        d2 = np.clip(d2, -cfg.td_clip, cfg.td_clip)
    scale = np.float32(2.0 / cfg.batch_size)
    g1, _ = mlp_backward((d1 * scale)[:, None], p.critic1, c1)
    g2, _ = mlp_backward((d2 * scale)[:, None], p.critic2, c2)
    critic_grads = [t for gw, gb in g1 for t in (gw, gb)] + \
                   [t for gw, gb in g2 for t in (gw, gb)]
    critic_tensors = [t for layers in (p.critic1, p.critic2)
                      for w, b in layers for t in (w, b)]
    learner.critic_opt.step(critic_tensors, critic_grads)

    learner.updates += 1
    if learner.updates % cfg.actor_delay == 0:
        a_pi, actor_cache = mlp_forward(obs, p.actor, tanh_out=True)
        xa = np.concatenate([obs, a_pi], axis=1)
        qa, ca = mlp_forward(xa, p.critic1)
        learner.last_actor_loss = float(-qa.mean())
        dq = np.full_like(qa, -1.0 / cfg.batch_size)
        _, dxa = mlp_backward(dq, p.critic1, ca)
        da = dxa[:, cfg.obs_dim:]
        actor_grads, _ = mlp_backward(da, p.actor, actor_cache, tanh_out=True)
        actor_tensors = [t for w, b in p.actor for t in (w, b)]
        learner.actor_opt.step(actor_tensors,
                               [t for gw, gb in actor_grads for t in (gw, gb)])
        _soft_update(p.target1, p.critic1, cfg.target_mix)
        _soft_update(p.target2, p.critic2, cfg.target_mix)
        _soft_update(p.target_actor, p.actor, cfg.target_mix)

    return {"critic_loss": critic_loss,
            "actor_loss": learner.last_actor_loss,
            "mean_q": float(q1.mean())}


def evaluate(policy, task: env.TaskSpec, episodes: int, seed: int) -> float:
    """Success fraction of `policy(obs, state) -> action` over fresh resets,
    no exploration noise, no rendering."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    seeds = np.random.SeedSequence((seed, 0xEA7)).generate_state(episodes)
    wins = 0
    for ep_seed in seeds:
        state, _, obs = env.reset(task, int(ep_seed), render_frame=False)
        for _ in range(task.horizon):
            action = policy(obs, state)
            state, _, obs, _, done, info = env.step(state, action, task,
                                                    render_frame=False)
            if info["success"]:
                wins += 1
                break
            if done:
                break
    return wins / episodes


def policy_from_params(params: PolicyParams):
    def policy(obs, state):
        return act(params, obs, 0.0, None)
    return policy


def save_policy(params: PolicyParams, cfg: AgentConfig, path) -> None:
    w = Writer()
    w.magic(AGENT_MAGIC)
    w.u32(AGENT_VERSION)
    w.u32(cfg.obs_dim)
    w.u32(cfg.action_dim)
    w.u32(cfg.hidden)
    for t in params.tensors():
        w.tensor(t)
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


def load_policy(path):
    """Returns (params, obs_dim, action_dim, hidden)."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = Reader(data)
    r.magic(AGENT_MAGIC)
    version = r.u32("version")
    if version != AGENT_VERSION:
        raise BinaryFormatError(4, f"unsupported agent version {version}")
    obs_dim = r.u32("obs dim")
    act_dim = r.u32("action dim")
    hidden = r.u32("hidden")
    tensors = [r.tensor(f"tensor {i}") for i in range(36)]
    r.expect_end()
    groups = [tensors[i:i + 6] for i in range(0, 36, 6)]
    nets = [[(g[0], g[1]), (g[2], g[3]), (g[4], g[5])] for g in groups]
    params = PolicyParams(actor=nets[0], critic1=nets[1], critic2=nets[2],
                          target1=nets[3], target2=nets[4], target_actor=nets[5])
    if params.actor[0][0].shape != (obs_dim, hidden):
        raise BinaryFormatError(len(data), "tensor shapes disagree with header")
    return params, obs_dim, act_dim, hidden
