"""Run configuration: INI files, CLI overrides, and mode consistency.

A run is described by five INI sections — [run], [reward], [guidance],
[agent], [encoder] — all optional, all overridable from the command line.
The reward
mode rewrites coefficients so that, e.g., a sparse_only run cannot
accidentally leak guidance signal: the mode is authoritative over the
individual coefficients.

Per-task threshold profiles: the stock thresholds are tuned for rich image
streams; on these small renders the loose-match threshold stalls the target
pointer mid-trajectory (similarity to a frozen frame then degrades, turning
the coarse channel into drag).  The profiles below keep the pointer moving
and the near-exact matches firing; an explicit [reward] setting or CLI flag
always wins over a profile value.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .agent import AgentConfig
from .guidance import NoiseModel, ProviderConfig
from .latent import EncoderConfig
from .reward import RewardConfig

REWARD_MODES = ("sparse_only", "coarse_only", "fine_only", "dual",
                "dual_plus_sparse")

# task -> RewardConfig field overrides applied unless the user set the field.
# Loose coarse thresholds keep the target pointer moving on the contact
# tasks, and the small beta there stops fine-match spikes from dominating
# the running reward scale.
TASK_REWARD_PROFILES = {
    "reach": {"tau_coarse": 0.75, "tau_fine": 0.96},
    "push": {"tau_coarse": 0.55, "tau_fine": 0.96, "beta": 0.1},
    "pick_lite": {"tau_coarse": 0.55, "tau_fine": 0.96, "beta": 0.1},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: str = "push"
    mode: str = "dual"
    seeds: tuple = (0,)
    total_steps: int = 150_000
    eval_every: int = 2_000
    eval_episodes: int = 20
    out_dir: str = "runs/latest"
    encoder_path: str = ""
    reward: RewardConfig = None
    provider: ProviderConfig = None
    agent: AgentConfig = None
    encoder: EncoderConfig = None
    # fields the user set explicitly; profile defaults skip these
    explicit_reward_fields: tuple = ()

    def __post_init__(self):
        if self.reward is None:
            self.reward = RewardConfig()
        if self.provider is None:
            # training clips default to zero corruption: reward quality
            # drives the RL loop, and noise is an experiment knob
            self.provider = ProviderConfig(noise=NoiseModel(0.0, 0, 0.0))
        if self.agent is None:
            self.agent = AgentConfig()
        if self.encoder is None:
            self.encoder = EncoderConfig()

    def validate(self) -> "RunConfig":
        from . import env
        if self.task not in env.TASK_KINDS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.mode not in REWARD_MODES:
            raise ConfigError(f"unknown reward mode {self.mode!r}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.total_steps < 1 or self.eval_every < 1 or self.eval_episodes < 1:
            raise ConfigError("steps, cadence and episode counts must be >= 1")
        return self


def _apply_mode(reward: RewardConfig, mode: str) -> RewardConfig:
    """The mode overrides individual coefficients (it is the experiment's
    single source of truth for which channels are live)."""
    if mode == "sparse_only":
        return dataclasses.replace(reward, alpha=0.0, beta=0.0,
                                   sparse_enabled=True)
    if mode == "coarse_only":
        return dataclasses.replace(reward, beta=0.0, sparse_enabled=False)
    if mode == "fine_only":
        return dataclasses.replace(reward, alpha=0.0, sparse_enabled=False)
    if mode == "dual":
        return dataclasses.replace(reward, sparse_enabled=False)
    if mode == "dual_plus_sparse":
        return dataclasses.replace(reward, sparse_enabled=True)
    raise ConfigError(f"unknown reward mode {mode!r}")


def resolve(cfg: RunConfig) -> RunConfig:
    """Profile + mode application; returns a fully concrete config."""
    cfg.validate()
    profile = TASK_REWARD_PROFILES.get(cfg.task, {})
    updates = {k: v for k, v in profile.items()
               if k not in cfg.explicit_reward_fields}
    reward = dataclasses.replace(cfg.reward, **updates)
    reward = _apply_mode(reward, cfg.mode)
    return dataclasses.replace(cfg, reward=reward)


# ---------------------------------------------------------------------------
# INI parsing

_RUN_INTS = {"total_steps", "eval_every", "eval_episodes"}
_REWARD_FLOATS = {"alpha", "beta", "theta", "tau_coarse", "tau_fine"}
_AGENT_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(AgentConfig)}


def _parse_seeds(text: str) -> tuple:
    try:
        seeds = tuple(int(p) for p in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"bad seeds value {text!r}") from exc
    if not seeds:
        raise ConfigError("seeds must name at least one integer")
    return seeds


def load_ini(path) -> RunConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    return _from_parser(parser)


def _from_parser(parser: configparser.ConfigParser) -> RunConfig:
    cfg = RunConfig()
    if parser.has_section("run"):
        run = parser["run"]
        cfg.task = run.get("task", cfg.task)
        cfg.mode = run.get("mode", cfg.mode)
        if "seeds" in run:
            cfg.seeds = _parse_seeds(run["seeds"])
        for name in _RUN_INTS:
            if name in run:
                setattr(cfg, name, run.getint(name))
        cfg.out_dir = run.get("out_dir", cfg.out_dir)
        cfg.encoder_path = run.get("encoder", cfg.encoder_path)

    explicit = []
    if parser.has_section("reward"):
        sec = parser["reward"]
        kwargs = {}
        for name in _REWARD_FLOATS:
            if name in sec:
                kwargs[name] = sec.getfloat(name)
        if "step_s" in sec:
            kwargs["step_s"] = sec.getint("step_s")
        explicit = sorted(kwargs)
        try:
            cfg.reward = dataclasses.replace(cfg.reward, **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    cfg.explicit_reward_fields = tuple(explicit)

    if parser.has_section("guidance"):
        sec = parser["guidance"]
        noise = NoiseModel(
            gaussian_sigma=sec.getfloat("sigma", cfg.provider.noise.gaussian_sigma),
            jitter_bound=sec.getint("jitter", cfg.provider.noise.jitter_bound),
            blur_probability=sec.getfloat("blur_prob",
                                          cfg.provider.noise.blur_probability))
        cfg.provider = ProviderConfig(
            clip_length=sec.getint("clip_length", cfg.provider.clip_length),
            noise=noise)

    if parser.has_section("agent"):
        sec = parser["agent"]
        kwargs = {}
        for name in _AGENT_FIELD_TYPES:
            if name not in sec:
                continue
            current = getattr(cfg.agent, name)
            kwargs[name] = (sec.getint(name) if isinstance(current, int)
                            else sec.getfloat(name))
        cfg.agent = dataclasses.replace(cfg.agent, **kwargs)

    if parser.has_section("encoder"):
        sec = parser["encoder"]
        kwargs = {}
        for f in dataclasses.fields(EncoderConfig):
            if f.name not in sec:
                continue
            current = getattr(cfg.encoder, f.name)
            if isinstance(current, tuple):
                kwargs[f.name] = tuple(
                    int(x) for x in sec[f.name].split(","))
            elif isinstance(current, int):
                kwargs[f.name] = sec.getint(f.name)
            else:
                kwargs[f.name] = sec.getfloat(f.name)
        try:
            cfg.encoder = dataclasses.replace(cfg.encoder, **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def dump_ini(cfg: RunConfig, path) -> None:
    """Persist the *resolved* configuration beside the run artifacts."""
    parser = configparser.ConfigParser()
    parser["run"] = {
        "task": cfg.task,
        "mode": cfg.mode,
        "seeds": ", ".join(str(s) for s in cfg.seeds),
        "total_steps": str(cfg.total_steps),
        "eval_every": str(cfg.eval_every),
        "eval_episodes": str(cfg.eval_episodes),
        "out_dir": str(cfg.out_dir),
        "encoder": cfg.encoder_path or "",
    }
    parser["reward"] = {
        "alpha": repr(cfg.reward.alpha),
        "beta": repr(cfg.reward.beta),
        "theta": repr(cfg.reward.theta),
        "tau_coarse": repr(cfg.reward.tau_coarse),
        "tau_fine": repr(cfg.reward.tau_fine),
        "step_s": str(cfg.reward.step_s),
        "sparse_enabled": str(cfg.reward.sparse_enabled),
    }
    parser["guidance"] = {
        "clip_length": str(cfg.provider.clip_length),
        "sigma": repr(cfg.provider.noise.gaussian_sigma),
        "jitter": str(cfg.provider.noise.jitter_bound),
        "blur_prob": repr(cfg.provider.noise.blur_probability),
    }
    parser["agent"] = {
        "discount": repr(cfg.agent.discount),
        "batch_size": str(cfg.agent.batch_size),
        "n_step": str(cfg.agent.n_step),
        "warmup": str(cfg.agent.warmup),
        "lr": repr(cfg.agent.lr),
        "update_every": str(cfg.agent.update_every),
    }
    parser["encoder"] = {
        "dim": str(cfg.encoder.dim),
        "steps": str(cfg.encoder.steps),
        "batch_size": str(cfg.encoder.batch_size),
        "lr": repr(cfg.encoder.lr),
        "temperature": repr(cfg.encoder.temperature),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        parser.write(fh)
