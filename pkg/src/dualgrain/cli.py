"""Command-line entry points for the experiment harness.

Every subcommand accepts the shared config flags (--config / --seed /
--out / --task / --reward-mode); flag values override the config file,
which overrides built-in defaults.  Exit codes: 0 success, 2 for
configuration and usage errors, 3 for runtime failures.
"""
from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import click

from . import guidance, harness, latent, server
from . import config as config_mod
from .binio import BinaryFormatError
from .config import ConfigError
from .guidance import NoiseModel, ProviderConfig


def _parse_noise(text: str) -> NoiseModel:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(
            f"--guidance-noise wants 'sigma,jitter,blur_prob', got {text!r}")
    try:
        return NoiseModel(gaussian_sigma=float(parts[0]),
                          jitter_bound=int(parts[1]),
                          blur_probability=float(parts[2]))
    except ValueError as exc:
        raise ConfigError(f"bad --guidance-noise value: {exc}") from exc


def shared_options(f):
    opts = [
        click.option("--config", "config_path", default=None,
                     help="INI config file."),
        click.option("--seed", "seed_text", default=None, metavar="N[,N...]",
                     help="Run seeds."),
        click.option("--out", "out_dir", default=None,
                     help="Output directory."),
        click.option("--task", default=None,
                     help="Task name (reach, push, pick_lite)."),
        click.option("--reward-mode", "mode", default=None,
                     help="Reward mode for training runs."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def build_config(config_path, seed_text, out_dir, task, mode,
                 guidance_noise=None, encoder=None):
    cfg = config_mod.load_ini(config_path) if config_path \
        else config_mod.RunConfig()
    updates = {}
    if task:
        updates["task"] = task
    if mode:
        updates["mode"] = mode
    if seed_text:
        updates["seeds"] = config_mod._parse_seeds(seed_text)
    if out_dir:
        updates["out_dir"] = out_dir
    if encoder:
        updates["encoder_path"] = encoder
    if guidance_noise is not None:
        updates["provider"] = ProviderConfig(
            clip_length=cfg.provider.clip_length,
            noise=_parse_noise(guidance_noise))
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    return cfg.validate()


def _require_encoder(cfg) -> None:
    if cfg.mode == "sparse_only":
        return
    if not cfg.encoder_path:
        raise ConfigError(
            f"mode {cfg.mode!r} needs --encoder (or encoder_path in the config)")
    if not Path(cfg.encoder_path).is_file():
        raise ConfigError(f"encoder checkpoint not found: {cfg.encoder_path}")


@click.group()
def cli():
    """Dual-granularity reward experiments."""


@cli.command("pretrain-encoder")
@shared_options
@click.option("--pool", "pool_dir", default=None,
              help="Directory of .degc expert clips.")
@click.option("--generate", is_flag=True,
              help="Build the pool from scripted experts in place.")
@click.option("--encoder-out", default=None,
              help="Checkpoint path (default OUT/encoder.dege).")
def cmd_pretrain_encoder(config_path, seed_text, out_dir, task, mode,
                         pool_dir, generate, encoder_out):
    """Contrastively pre-train the frame encoder on an expert clip pool."""
    cfg = build_config(config_path, seed_text, out_dir, task, mode)
    out = Path(encoder_out) if encoder_out else Path(cfg.out_dir) / "encoder.dege"
    state = harness.pretrain_encoder(cfg, out, pool_dir=pool_dir,
                                     generate=generate)
    final_loss = state.losses[-1][1] if state.losses else float("nan")
    click.echo(f"wrote {out} (final loss {final_loss:.4f})")


@cli.command("gen-guidance")
@shared_options
@click.option("--count", default=4, show_default=True,
              help="Number of clips.")
@click.option("--guidance-noise", default=None, metavar="SIGMA,JITTER,BLUR",
              help="Corruption model; omit for clean expert clips.")
def cmd_gen_guidance(config_path, seed_text, out_dir, task, mode, count,
                     guidance_noise):
    """Write guidance clips for consecutive reset seeds as .degc files."""
    cfg = build_config(config_path, seed_text, out_dir, task, mode,
                       guidance_noise=guidance_noise)
    out = Path(cfg.out_dir)
    paths = harness.generate_clips(cfg, out, count=count,
                                   start_seed=cfg.seeds[0])
    click.echo(f"wrote {len(paths)} clips under {out}")


@cli.command("train")
@shared_options
@click.option("--encoder", default=None, help="Encoder checkpoint (.dege).")
@click.option("--guidance-noise", default=None, metavar="SIGMA,JITTER,BLUR",
              help="Corrupt the per-episode guidance clips.")
def cmd_train(config_path, seed_text, out_dir, task, mode, encoder,
              guidance_noise):
    """Run the full training loop for each seed of one reward mode."""
    cfg = build_config(config_path, seed_text, out_dir, task, mode,
                       guidance_noise=guidance_noise, encoder=encoder)
    _require_encoder(cfg)
    config_mod.resolve(cfg)          # surface config errors before compute
    summaries = harness.run_mode(cfg, cfg.out_dir)
    for s in summaries:
        click.echo(f"seed {s['seed']}: final success {s['final_success']:.2f} "
                   f"({s['steps']} steps, {s['episodes']} episodes)")
    click.echo(f"artifacts under {cfg.out_dir}")


@cli.command("ablate")
@shared_options
@click.option("--encoder", default=None, help="Encoder checkpoint (.dege).")
def cmd_ablate(config_path, seed_text, out_dir, task, mode, encoder):
    """Train coarse_only / fine_only / dual with shared seeds and compare."""
    cfg = build_config(config_path, seed_text, out_dir, task, mode,
                       encoder=encoder)
    _require_encoder(dataclasses.replace(cfg, mode="dual"))
    result = harness.run_ablation(cfg, cfg.out_dir)
    click.echo(result["table"], nl=False)
    click.echo(f"artifacts under {cfg.out_dir}")


@cli.command("heatmap")
@click.option("--encoder", required=True, help="Encoder checkpoint (.dege).")
@click.option("--clip-a", required=True, help="First clip (.degc).")
@click.option("--clip-b", required=True, help="Second clip (.degc).")
@click.option("--out", "out_dir", default="heatmaps",
              help="Output directory.", show_default=True)
def cmd_heatmap(encoder, clip_a, clip_b, out_dir):
    """Frame-similarity matrices at intervals 1/3/5, trained vs random."""
    params, enc_cfg = latent.load_params(encoder)
    a = guidance.load_clip(clip_a)
    b = guidance.load_clip(clip_b)
    margins = harness.heatmap_report(params.net, enc_cfg, a, b, out_dir)
    for (name, k), m in sorted(margins.items()):
        click.echo(f"{name} encoder, interval {k}: diagonal margin {m:+.4f}")


@cli.command("eval")
@click.option("--checkpoint", required=True, help="Policy checkpoint (.dega).")
@click.option("--task", default="push", show_default=True)
@click.option("--episodes", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
def cmd_eval(checkpoint, task, episodes, seed):
    """Deterministic evaluation of a saved policy."""
    rate = harness.evaluate_checkpoint(checkpoint, task, episodes, seed)
    click.echo(f"success_rate {rate:.3f} over {episodes} episodes")


@cli.command("serve")
@click.option("--port", default=8080, show_default=True)
@click.option("--encoder", default=None,
              help="Encoder checkpoint; falls back to $DEG_ENCODER_PATH.")
def cmd_serve(port, encoder):
    """Serve the session-based reward API over HTTP."""
    if encoder and not Path(encoder).is_file():
        raise ConfigError(f"encoder checkpoint not found: {encoder}")
    try:
        httpd = server.make_server(port, encoder)
    except RuntimeError as exc:          # no checkpoint configured
        raise ConfigError(str(exc)) from exc
    host, bound_port = httpd.server_address[:2]
    click.echo(f"serving on {host}:{bound_port}")
    try:
        httpd.serve_forever()
    finally:
        httpd.server_close()


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.Abort:
        return 130
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (BinaryFormatError, OSError, ValueError, RuntimeError,
            guidance.ExpertFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
