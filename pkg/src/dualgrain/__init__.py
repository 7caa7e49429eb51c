"""Dual-granularity contrastive rewards from per-episode guidance clips.

A small, numpy-only stack: 2-D manipulation tasks (`env`), scripted
guidance-clip providers (`guidance`), a contrastive frame encoder
(`latent`), the coarse/fine reward machine (`reward`), a TD3-style
learner (`agent`), an HTTP reward service (`server`) and a seeded
experiment harness (`harness`, `cli`).
"""

__version__ = "0.1.0"

__all__ = [
    "agent",
    "binio",
    "config",
    "env",
    "frames",
    "guidance",
    "harness",
    "latent",
    "nn",
    "reward",
    "server",
    "svg",
]
