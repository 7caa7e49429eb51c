"""Seeded end-to-end training runs and their on-disk artifacts.

A run directory is the unit of reproducibility.  It holds the resolved
config, the per-step reward log, the training-diagnostics log, the policy
checkpoint, a resume file with the complete mutable state of the loop, and
the post-training trace metrics.  Two invariants shape the code here:

* CSVs are byte-identical across reruns of the same seed.  All float cells
  go through one formatter, files are written in binary mode, and resuming
  truncates each log back to its last-checkpoint offset before appending.
* Interrupting a run anywhere and resuming continues it exactly.  The
  resume file therefore carries the replay ring, both Adam states, the
  reward-scale estimator, the exploration/sampling generator states and
  every counter — not just the policy weights.

Randomness is split into named streams keyed off the run seed so that the
reset sequence of episode k is identical across reward modes (paired-seed
comparisons) and independent of how often anything else draws.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from . import agent, env, guidance, latent, reward, svg
from . import config as config_mod
from .config import ConfigError

# Stream tags: (seed, STREAM_*, ...) -> SeedSequence.  Resets and guidance
# are additionally keyed by episode index so they are order-independent.
STREAM_RESET = 1
STREAM_GUIDANCE = 2
STREAM_LEARNER = 3
STREAM_EXPLORE = 4
STREAM_SAMPLE = 5
STREAM_EVAL = 6

REWARDS_COLUMNS = ("episode", "step", "coarse", "fine", "sparse", "combined",
                   "i_target", "i_reached", "best_index", "best_sim")
TRAIN_LOG_COLUMNS = ("step", "critic_loss", "actor_loss", "mean_q",
                     "episode_return", "success_rate")
FINAL_EVAL_COLUMNS = ("episode", "success", "steps", "path_deviation",
                      "closest_approach")
TRACE_COLUMNS = ("episode", "t", "eff_x", "eff_y", "obj_x", "obj_y")

CHECKPOINT_NAME = "checkpoint.dega"
RESUME_NAME = "resume.npz"
RESUME_VERSION = 1

ABLATION_MODES = ("coarse_only", "fine_only", "dual")
HEATMAP_INTERVALS = (1, 3, 5)

# Weight seed of the untrained comparison encoder.  Fixed so "random
# baseline" means the same network in every report.
FROZEN_BASELINE_SEED = 61453


def stream(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(key))


def stream_seed(*key) -> int:
    return int(np.random.SeedSequence(key).generate_state(1)[0])


# ---------------------------------------------------------------------------
# CSV plumbing


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.9g" % float(v)


def _line(values) -> bytes:
    return (",".join(_cell(v) for v in values) + "\n").encode()


def _header(columns) -> bytes:
    return (",".join(columns) + "\n").encode()


def read_csv_columns(path) -> dict:
    """CSV -> {column: list of floats}.  Every log we emit is numeric."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: [float(r[k]) for r in rows] for k in rows[0]}


def trapezoid_auc(xs, ys) -> float:
    """Area under the curve normalised by the x span (so a flat y=c line
    scores c regardless of cadence)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 2 or xs[-1] == xs[0]:
        return float(ys[-1]) if ys.size else 0.0
    area = 0.5 * np.sum((ys[1:] + ys[:-1]) * np.diff(xs))
    return float(area / (xs[-1] - xs[0]))


# ---------------------------------------------------------------------------
# Loop state and resume files


@dataclasses.dataclass
class LoopState:
    learner: agent.Learner
    replay: agent.Replay
    norm: agent.RewardNormalizer
    expl: np.random.Generator
    samp: np.random.Generator
    step: int = 0
    episode: int = 0
    eval_idx: int = 0
    # sums since the last train_log row
    agg: dict = dataclasses.field(default_factory=lambda: {
        "critic": 0.0, "actor": 0.0, "q": 0.0, "updates": 0,
        "ep_return": 0.0, "episodes": 0})


def _fresh_state(cfg, seed: int) -> LoopState:
    acfg = cfg.agent
    learner = agent.make_learner(acfg, stream_seed(seed, STREAM_LEARNER))
    replay = agent.Replay(acfg.capacity, acfg.obs_dim, acfg.action_dim)
    return LoopState(
        learner=learner, replay=replay, norm=agent.RewardNormalizer(),
        expl=stream(seed, STREAM_EXPLORE), samp=stream(seed, STREAM_SAMPLE))


def _save_resume(path: Path, st: LoopState, offsets: dict) -> None:
    arrays = {}
    for i, t in enumerate(st.learner.params.tensors()):
        arrays[f"p{i}"] = t
    for tag, opt in (("a", st.learner.actor_opt), ("c", st.learner.critic_opt)):
        for i, (m, v) in enumerate(zip(opt.m, opt.v)):
            arrays[f"{tag}m{i}"] = m
            arrays[f"{tag}v{i}"] = v
    rp = st.replay
    n = rp.size
    arrays.update(robs=rp.obs[:n], ract=rp.action[:n], rrew=rp.reward[:n],
                  rnext=rp.next_obs[:n], rterm=rp.terminal[:n],
                  rbound=rp.boundary[:n])
    meta = {
        "version": RESUME_VERSION,
        "step": st.step, "episode": st.episode, "eval_idx": st.eval_idx,
        "replay_head": rp.head, "replay_size": rp.size,
        "adam_t": [st.learner.actor_opt.t, st.learner.critic_opt.t],
        "updates": st.learner.updates,
        "last_actor_loss": st.learner.last_actor_loss,
        "norm_scale": st.norm.scale, "norm_count": st.norm._count,
        "expl_state": st.expl.bit_generator.state,
        "samp_state": st.samp.bit_generator.state,
        "offsets": offsets,
        "agg": st.agg,
    }
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)
    os.replace(tmp, path)


def _load_resume(path: Path, cfg, seed: int) -> tuple:
    """Rebuild a LoopState from a resume file.  Tensors are copied into the
    freshly constructed learner in place so the Adam instances keep aliasing
    the live parameters."""
    st = _fresh_state(cfg, seed)
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(z["meta"].item())
        if meta["version"] != RESUME_VERSION:
            raise ConfigError(f"unsupported resume file version {meta['version']}")
        for i, t in enumerate(st.learner.params.tensors()):
            t[...] = z[f"p{i}"]
        for tag, opt, t_val in (("a", st.learner.actor_opt, meta["adam_t"][0]),
                                ("c", st.learner.critic_opt, meta["adam_t"][1])):
            opt.t = t_val
            for i in range(len(opt.m)):
                opt.m[i][...] = z[f"{tag}m{i}"]
                opt.v[i][...] = z[f"{tag}v{i}"]
        rp = st.replay
        n = meta["replay_size"]
        rp.obs[:n] = z["robs"]
        rp.action[:n] = z["ract"]
        rp.reward[:n] = z["rrew"]
        rp.next_obs[:n] = z["rnext"]
        rp.terminal[:n] = z["rterm"]
        rp.boundary[:n] = z["rbound"]
        rp.head, rp.size = meta["replay_head"], n
    st.learner.updates = meta["updates"]
    st.learner.last_actor_loss = meta["last_actor_loss"]
    st.norm.scale = meta["norm_scale"]
    st.norm._count = meta["norm_count"]
    st.expl.bit_generator.state = meta["expl_state"]
    st.samp.bit_generator.state = meta["samp_state"]
    st.step, st.episode, st.eval_idx = meta["step"], meta["episode"], meta["eval_idx"]
    st.agg = meta["agg"]
    return st, meta["offsets"]


def _truncate(path: Path, offset: int) -> None:
    with open(path, "r+b") as fh:
        fh.truncate(offset)


# ---------------------------------------------------------------------------
# Trace-based evaluation (success + geometry metrics)


def _expert_path(task, state) -> np.ndarray:
    states, _ = guidance.scripted_expert(task, state)
    return np.array([s.effector for s in states])


def _approach_target(trace_obj, trace_goal, kind):
    # what "getting close" means per task: the object for contact tasks,
    # the goal itself for plain reaching
    return trace_goal if kind == env.REACH else trace_obj


def trace_eval(params, cfg, seed_val: int, out_dir: Path) -> dict:
    """Deterministic-policy evaluation with full position traces.

    Mirrors `agent.evaluate` episode for episode (same seed derivation,
    same termination) while additionally logging effector/object tracks
    and two geometry metrics per episode:

    * path_deviation — mean distance from the effector track to the
      scripted-expert effector path started from the same reset.
    * closest_approach — closest the effector came to the object (to the
      goal on the reach task).

    Writes final_eval.csv and traces.csv; returns the aggregate row.
    """
    task = env.make_task(cfg.task)
    policy = agent.policy_from_params(params)
    seeds = np.random.SeedSequence((seed_val, 0xEA7)).generate_state(cfg.eval_episodes)
    trace_rows, eval_rows = [], []
    wins = 0
    deviations, approaches = [], []
    for ep, ep_seed in enumerate(seeds):
        state, _, obs = env.reset(task, int(ep_seed), render_frame=False)
        expert_pts = _expert_path(task, state)
        eff_pts = [state.effector]
        obj_pts = [state.obj]
        goal = state.goal
        success = False
        t = 0
        trace_rows.append((ep, 0, *state.effector, *state.obj))
        for t in range(1, task.horizon + 1):
            action = policy(obs, state)
            state, _, obs, _, done, info = env.step(state, action, task,
                                                    render_frame=False)
            eff_pts.append(state.effector)
            obj_pts.append(state.obj)
            trace_rows.append((ep, t, *state.effector, *state.obj))
            if info["success"]:
                success = True
                break
            if done:
                break
        eff = np.array(eff_pts)
        diff = eff[:, None, :] - expert_pts[None, :, :]
        deviation = float(np.linalg.norm(diff, axis=2).min(axis=1).mean())
        target = _approach_target(np.array(obj_pts), goal[None, :], task.kind)
        approach = float(np.linalg.norm(eff - target, axis=1).min())
        wins += int(success)
        deviations.append(deviation)
        approaches.append(approach)
        eval_rows.append((ep, int(success), t, deviation, approach))
    with open(out_dir / "final_eval.csv", "wb") as fh:
        fh.write(_header(FINAL_EVAL_COLUMNS))
        for row in eval_rows:
            fh.write(_line(row))
    with open(out_dir / "traces.csv", "wb") as fh:
        fh.write(_header(TRACE_COLUMNS))
        for row in trace_rows:
            fh.write(_line(row))
    return {
        "success": wins / cfg.eval_episodes,
        "mean_path_deviation": float(np.mean(deviations)),
        "mean_closest_approach": float(np.mean(approaches)),
        "episodes": cfg.eval_episodes,
    }


# ---------------------------------------------------------------------------
# The training loop


def _load_encoder_net(cfg):
    if not cfg.encoder_path:
        raise ConfigError(
            f"reward mode {cfg.mode!r} needs an encoder checkpoint "
            "(set encoder_path)")
    params, _ = latent.load_params(cfg.encoder_path)
    return params.net


def run_training(cfg, seed: int, run_dir, stop_after: int | None = None) -> dict:
    """Train one seed into `run_dir`; returns the summary dict.

    Picks up from the directory's resume file when one exists, so calling
    this again after an interruption (or with a larger `stop_after`)
    continues the same run.  `stop_after` returns control at the first
    episode boundary past that step count without writing a checkpoint —
    the hook used by the interruption tests.
    """
    cfg = config_mod.resolve(cfg)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    task = env.make_task(cfg.task)
    acfg, rcfg, pcfg = cfg.agent, cfg.reward, cfg.provider
    need_frames = cfg.mode != "sparse_only"
    net = _load_encoder_net(cfg) if need_frames else None

    config_path = run_dir / "config.ini"
    if not config_path.exists():
        config_mod.dump_ini(cfg, config_path)

    rewards_path = run_dir / "rewards.csv"
    train_log_path = run_dir / "train_log.csv"
    resume_path = run_dir / RESUME_NAME
    summary_path = run_dir / "summary.json"

    if resume_path.exists():
        st, offsets = _load_resume(resume_path, cfg, seed)
        if st.step >= cfg.total_steps and summary_path.exists():
            return json.loads(summary_path.read_text())
        _truncate(rewards_path, offsets["rewards"])
        _truncate(train_log_path, offsets["train_log"])
        rewards_fh = open(rewards_path, "ab")
        train_log_fh = open(train_log_path, "ab")
    else:
        st = _fresh_state(cfg, seed)
        rewards_fh = open(rewards_path, "wb")
        rewards_fh.write(_header(REWARDS_COLUMNS))
        train_log_fh = open(train_log_path, "wb")
        train_log_fh.write(_header(TRAIN_LOG_COLUMNS))

    last_success = None
    try:
        while st.step < cfg.total_steps:
            if stop_after is not None and st.step >= stop_after:
                return {"complete": False, "seed": seed, "steps": st.step,
                        "episodes": st.episode}
            ep_seed = stream_seed(seed, STREAM_RESET, st.episode)
            state, frame, obs = env.reset(task, ep_seed, render_frame=need_frames)
            if need_frames:
                g_rng = stream(seed, STREAM_GUIDANCE, st.episode)
                clip = guidance.provide(pcfg, task, state, g_rng, seed=ep_seed)
                rstate = reward.begin_episode(net, clip, frame, rcfg)
            ep_return = 0.0
            rows = []
            for _ in range(task.horizon):
                if st.step < acfg.warmup:
                    action = st.expl.uniform(-1.0, 1.0, size=acfg.action_dim)
                    action = action.astype(np.float32)
                else:
                    sigma = agent.noise_schedule(acfg, st.step)
                    action = agent.act(st.learner.params, obs, sigma, st.expl)
                state, frame, next_obs, sparse, done, info = env.step(
                    state, action, task, render_frame=need_frames)
                if need_frames:
                    z = latent.encode_single(net, frame)
                    rstate, br = reward.step_reward(rstate, z, sparse, rcfg)
                    r = br.combined
                    row = (st.episode, st.step + 1, br.coarse, br.fine,
                           br.sparse, br.combined, br.i_target, br.i_reached,
                           br.best_index, br.best_sim)
                else:
                    r = rcfg.theta * sparse
                    row = (st.episode, st.step + 1, 0.0, 0.0, sparse, r,
                           1, 0, 0, 0.0)
                st.replay.store(obs, action, r, next_obs,
                                bool(info["success"]), bool(done))
                st.norm.observe(st.replay)
                st.step += 1
                ep_return += r
                obs = next_obs
                rows.append(row)
                if st.step >= acfg.warmup and st.step % acfg.update_every == 0:
                    metrics = agent.update(st.learner, st.replay, st.samp,
                                           st.norm.scale)
                    st.agg["critic"] += metrics["critic_loss"]
                    st.agg["actor"] += metrics["actor_loss"]
                    st.agg["q"] += metrics["mean_q"]
                    st.agg["updates"] += 1
                if done:
                    break
            st.episode += 1
            st.agg["ep_return"] += ep_return
            st.agg["episodes"] += 1
            for row in rows:
                rewards_fh.write(_line(row))
            rewards_fh.flush()

            while (st.eval_idx + 1) * cfg.eval_every <= st.step:
                st.eval_idx += 1
                grid_step = st.eval_idx * cfg.eval_every
                policy = agent.policy_from_params(st.learner.params)
                last_success = agent.evaluate(
                    policy, task, cfg.eval_episodes,
                    stream_seed(seed, STREAM_EVAL, st.eval_idx))
                ups = max(st.agg["updates"], 1)
                eps = max(st.agg["episodes"], 1)
                train_log_fh.write(_line((
                    grid_step, st.agg["critic"] / ups, st.agg["actor"] / ups,
                    st.agg["q"] / ups, st.agg["ep_return"] / eps,
                    last_success)))
                train_log_fh.flush()
                st.agg = {"critic": 0.0, "actor": 0.0, "q": 0.0, "updates": 0,
                          "ep_return": 0.0, "episodes": 0}
                agent.save_policy(st.learner.params, acfg,
                                  run_dir / CHECKPOINT_NAME)
                _save_resume(resume_path, st, {
                    "rewards": rewards_fh.tell(),
                    "train_log": train_log_fh.tell()})
    finally:
        rewards_fh.close()
        train_log_fh.close()

    agent.save_policy(st.learner.params, acfg, run_dir / CHECKPOINT_NAME)
    log = read_csv_columns(train_log_path)
    final = trace_eval(st.learner.params, cfg,
                       stream_seed(seed, STREAM_EVAL, st.eval_idx), run_dir)
    summary = {
        "complete": True,
        "task": cfg.task,
        "mode": cfg.mode,
        "seed": seed,
        "steps": st.step,
        "episodes": st.episode,
        "final_success": log["success_rate"][-1] if log else final["success"],
        "auc": trapezoid_auc(log.get("step", []), log.get("success_rate", [])),
        "final_eval": final,
    }
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def seed_dir(out_dir, seed: int) -> Path:
    return Path(out_dir) / f"seed{seed}"


def run_mode(cfg, out_dir) -> list:
    """All seeds of one reward mode, plus the per-mode success-curve SVG.

    The curve aggregates the stored CSVs (mean with min/max range across
    seeds); smoothing is applied at render time only.
    """
    cfg = config_mod.resolve(cfg)
    out_dir = Path(out_dir)
    summaries = [run_training(cfg, s, seed_dir(out_dir, s)) for s in cfg.seeds]
    emit_success_curves(
        [seed_dir(out_dir, s) for s in cfg.seeds], cfg.mode,
        out_dir / f"success_{cfg.mode}.svg")
    return summaries


def emit_success_curves(run_dirs, label: str, out_svg) -> None:
    per_seed = [read_csv_columns(Path(d) / "train_log.csv") for d in run_dirs]
    per_seed = [c for c in per_seed if c]
    if not per_seed:
        return
    n = min(len(c["step"]) for c in per_seed)
    xs = per_seed[0]["step"][:n]
    ys = np.array([c["success_rate"][:n] for c in per_seed])
    series = {f"{label} mean": (xs, ys.mean(axis=0).tolist())}
    if len(per_seed) > 1:
        series[f"{label} min"] = (xs, ys.min(axis=0).tolist())
        series[f"{label} max"] = (xs, ys.max(axis=0).tolist())
    svg.line_chart(series, out_svg, x_label="env steps", y_label="success rate",
                   smooth_window=10, y_range=(0.0, 1.0))


# ---------------------------------------------------------------------------
# Ablations


def run_ablation(cfg, out_dir) -> dict:
    """coarse_only / fine_only / dual with shared seeds.

    Seed pairing is structural: episode resets draw from (seed, episode)
    streams that never see the reward mode, so episode k starts from the
    same world state in all three arms.
    """
    out_dir = Path(out_dir)
    rows = []
    curves = {}
    for mode in ABLATION_MODES:
        mcfg = dataclasses.replace(cfg, mode=mode)
        summaries = run_mode(mcfg, out_dir / mode)
        for s in summaries:
            rows.append({
                "mode": mode, "seed": s["seed"],
                "final_success": s["final_success"], "auc": s["auc"],
                "path_deviation": s["final_eval"]["mean_path_deviation"],
                "closest_approach": s["final_eval"]["mean_closest_approach"],
            })
        logs = [read_csv_columns(seed_dir(out_dir / mode, s) / "train_log.csv")
                for s in config_mod.resolve(mcfg).seeds]
        n = min(len(c["step"]) for c in logs)
        xs = logs[0]["step"][:n]
        mean = np.array([c["success_rate"][:n] for c in logs]).mean(axis=0)
        curves[mode] = (xs, mean.tolist())
    with open(out_dir / "ablation.csv", "wb") as fh:
        cols = ("mode", "seed", "final_success", "auc", "path_deviation",
                "closest_approach")
        fh.write(_header(cols))
        for r in rows:
            fh.write(_line([r[c] for c in cols]))
    svg.line_chart(curves, out_dir / "ablation_curves.svg",
                   x_label="env steps", y_label="success rate",
                   smooth_window=10, y_range=(0.0, 1.0))
    table = ablation_table(rows)
    (out_dir / "table.txt").write_text(table)
    return {"rows": rows, "table": table}


def ablation_table(rows) -> str:
    """Mode-level means, one line per mode, fixed-width text."""
    cols = ("final_success", "auc", "path_deviation", "closest_approach")
    lines = ["%-12s %13s %8s %14s %16s" % (("mode",) + cols)]
    for mode in ABLATION_MODES:
        sel = [r for r in rows if r["mode"] == mode]
        if not sel:
            continue
        means = [np.mean([r[c] for r in sel]) for c in cols]
        lines.append("%-12s %13.3f %8.3f %14.4f %16.4f" % (mode, *means))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Heatmap diagnostics


def clip_similarity(net, clip_a, clip_b, interval: int = 1) -> np.ndarray:
    """Cosine-similarity matrix between two clips' frames, subsampled."""
    return latent.similarity_heatmap(net, clip_a.frames[::interval],
                                     clip_b.frames[::interval])


def frozen_baseline_net(enc_cfg):
    return latent.make_train_state(enc_cfg, FROZEN_BASELINE_SEED).params.net


def heatmap_report(net, enc_cfg, clip_a, clip_b, out_dir) -> dict:
    """Similarity matrices at several frame intervals, for the trained
    encoder and the frozen-random baseline, as CSV + SVG pairs plus a
    margins table.  The SVGs are rendered from the CSVs they sit next to.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nets = {"trained": net, "random": frozen_baseline_net(enc_cfg)}
    margins = []
    for name, enc in nets.items():
        for k in HEATMAP_INTERVALS:
            sims = clip_similarity(enc, clip_a, clip_b, k)
            csv_path = out_dir / f"heatmap_{name}_i{k}.csv"
            with open(csv_path, "wb") as fh:
                for row in sims:
                    fh.write(_line(row))
            loaded = np.array([[float(x) for x in ln.split(",")]
                               for ln in csv_path.read_text().splitlines()])
            svg.heatmap(loaded, out_dir / f"heatmap_{name}_i{k}.svg",
                        title=f"{name} interval {k}")
            margins.append((name, k, latent.diagonal_margin(sims)))
    with open(out_dir / "margins.csv", "wb") as fh:
        fh.write(_header(("encoder", "interval", "margin")))
        for name, k, m in margins:
            fh.write((f"{name},{k},{_cell(m)}\n").encode())
    return {(name, k): m for name, k, m in margins}


# ---------------------------------------------------------------------------
# Encoder pre-training and clip generation


def pretrain_encoder(cfg, out_path, pool_dir=None, generate: bool = False):
    """Contrastive pre-training on an expert clip pool.

    The pool comes from `pool_dir` (all .degc files in it) or, with
    `generate`, from four scripted-expert episodes of the configured task.
    Corruption augmentation always uses the provider defaults with jitter
    stripped — random shifts are already the encoder's own augmentation.
    Writes the encoder checkpoint plus a loss CSV next to it.
    """
    if pool_dir is not None:
        paths = sorted(Path(pool_dir).glob("*.degc"))
        if not paths:
            raise ConfigError(f"no .degc clips under {pool_dir}")
        clips = [guidance.load_clip(p) for p in paths]
    elif generate:
        task = env.make_task(cfg.task)
        base = cfg.seeds[0]
        clips = guidance.build_expert_pool(task, cfg.provider,
                                           seeds=range(base, base + 4))
    else:
        raise ConfigError("no clip pool given; pass --generate to build one "
                          "from the scripted experts")
    frames = guidance.pool_frames(clips)
    aug = guidance.frame_corruptor(guidance.training_noise(guidance.NoiseModel()))
    state = latent.pretrain(frames, cfg.encoder, seed=cfg.seeds[0],
                            corrupt_fn=aug)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    latent.save_params(state.params, cfg.encoder, out_path)
    loss_csv = out_path.with_suffix(".loss.csv")
    with open(loss_csv, "wb") as fh:
        fh.write(_header(("step", "loss")))
        for step, loss in state.losses:
            fh.write(_line((step, loss)))
    return state


def generate_clips(cfg, out_dir, count: int = 4, start_seed: int = 0) -> list:
    """Guidance clips for `count` consecutive reset seeds, written as .degc
    files.  Uses the provider config as-is, so a zero-noise provider yields
    an expert pool and a noisy one yields corrupted guidance samples."""
    task = env.make_task(cfg.task)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(count):
        s = start_seed + k
        state, _, _ = env.reset(task, s, render_frame=False)
        clip = guidance.provide(cfg.provider, task, state,
                                stream(s, STREAM_GUIDANCE), seed=s)
        path = out_dir / f"{task.kind}_seed{s}.degc"
        guidance.save_clip(clip, path)
        paths.append(path)
    return paths


def evaluate_checkpoint(ckpt_path, task_kind: str, episodes: int,
                        seed: int) -> float:
    params, _, _, _ = agent.load_policy(ckpt_path)
    task = env.make_task(task_kind)
    return agent.evaluate(agent.policy_from_params(params), task, episodes, seed)
