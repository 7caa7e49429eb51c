"""Contrastive frame encoder with a momentum target branch.

The encoder maps a frame to a D-dimensional latent.  Training pulls two
augmented views of the same frame together under a bilinear score: the online
branch embeds one view through the encoder plus a small head, the
slow-moving target branch embeds the other, and an InfoNCE softmax over the
batch supplies negatives.  Augmentation is random integer shift with edge
replication.  Rewards later use plain cosine similarity between raw encoder
outputs; the head and the bilinear matrix exist only inside the loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binio import BinaryFormatError, Reader, Writer
from .frames import random_shift
from .nn import (Adam, conv2d_backward, conv2d_forward, init_conv, init_linear,
                 mlp_backward, mlp_forward)

ENCODER_MAGIC = b"DEGE"
ENCODER_VERSION = 1


@dataclass
class EncoderConfig:
    height: int = 32
    width: int = 32
    channels: int = 1
    dim: int = 50
    conv_channels: tuple = (8, 16)
    head_hidden: int = 50
    lr: float = 1e-4
    batch_size: int = 128
    steps: int = 5000
    shift_bound: int = 4
    ema_momentum: float = 0.05   # fraction of online weights mixed per update
    ema_frequency: int = 2       # updates happen every this many steps
    temperature: float = 0.05    # softmax temperature of the training loss
    weight_decay: float = 0.0    # optional per-step multiplicative shrink

    def validate(self) -> "EncoderConfig":
        if self.height % 4 or self.width % 4:
            raise ValueError("frame sides must be divisible by 4 (two stride-2 convs)")
        if self.dim <= 0 or self.steps < 0 or self.batch_size <= 0:
            raise ValueError("dim, steps, batch_size must be positive")
        if not 0.0 < self.ema_momentum <= 1.0:
            raise ValueError("ema_momentum must be in (0, 1]")
        if self.ema_frequency < 1:
            raise ValueError("ema_frequency must be >= 1")
        if self.shift_bound < 0:
            raise ValueError("shift_bound must be >= 0")
        return self

    @property
    def flat_dim(self) -> int:
        return (self.height // 4) * (self.width // 4) * self.conv_channels[1]


@dataclass
class EncoderNet:
    """The encoder proper: conv -> relu -> conv -> relu -> flatten -> linear.

    The whole path is biasless (bias tensors exist for the file format but
    stay zero and receive no updates): with a black background, a biasless
    stack maps empty pixels to exactly zero, so latent direction is carried
    by scene content alone and uniform weight growth cannot saturate the
    cosine similarities the rewards depend on.
    """
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    proj_w: np.ndarray
    proj_b: np.ndarray

    def tensors(self):
        return [self.conv1_w, self.conv1_b, self.conv2_w, self.conv2_b,
                self.proj_w, self.proj_b]

    def weights(self):
        return [self.conv1_w, self.conv2_w, self.proj_w]

    def copy(self) -> "EncoderNet":
        return EncoderNet(*[t.copy() for t in self.tensors()])


@dataclass
class EncoderParams:
    """Online net, loss head, bilinear matrix, and the momentum target net."""
    net: EncoderNet
    head: list                 # [(w, b), (w, b)] relu MLP on top of the latent
    bilinear: np.ndarray       # (D, D) score matrix
    target: EncoderNet

    def trainable_tensors(self):
        out = list(self.net.weights())
        for w, b in self.head:
            out.extend((w, b))
        out.append(self.bilinear)
        return out

    def all_tensors(self):
        """Checkpoint layout: full online net (biases included, kept zero),
        head, bilinear, then the target net."""
        out = list(self.net.tensors())
        for w, b in self.head:
            out.extend((w, b))
        out.append(self.bilinear)
        out.extend(self.target.tensors())
        return out


def init_params(rng: np.random.Generator, cfg: EncoderConfig, dtype=np.float32) -> EncoderParams:
    c1, c2 = cfg.conv_channels
    net = EncoderNet(*init_conv(rng, cfg.channels, c1, dtype=dtype),
                     *init_conv(rng, c1, c2, dtype=dtype),
                     *init_linear(rng, cfg.flat_dim, cfg.dim, dtype=dtype))
    head = [init_linear(rng, cfg.dim, cfg.head_hidden, dtype=dtype),
            init_linear(rng, cfg.head_hidden, cfg.dim, dtype=dtype)]
    lim = 1.0 / np.sqrt(cfg.dim)
    bilinear = rng.uniform(-lim, lim, size=(cfg.dim, cfg.dim)).astype(dtype)
    return EncoderParams(net=net, head=head, bilinear=bilinear, target=net.copy())


def encode(net: EncoderNet, frames: np.ndarray) -> np.ndarray:
    """Latents for a batch of frames (N, H, W, C) -> (N, D)."""
    y1, _ = conv2d_forward(frames, net.conv1_w, net.conv1_b)
    a1 = np.maximum(y1, 0.0)
    y2, _ = conv2d_forward(a1, net.conv2_w, net.conv2_b)
    a2 = np.maximum(y2, 0.0)
    flat = a2.reshape(frames.shape[0], -1)
    return flat @ net.proj_w + net.proj_b


def encode_single(net: EncoderNet, frame: np.ndarray) -> np.ndarray:
    return encode(net, frame[None])[0]


def _encode_with_cache(net: EncoderNet, frames: np.ndarray):
    y1, c1 = conv2d_forward(frames, net.conv1_w, net.conv1_b)
    a1 = np.maximum(y1, 0.0)
    y2, c2 = conv2d_forward(a1, net.conv2_w, net.conv2_b)
    a2 = np.maximum(y2, 0.0)
    flat = a2.reshape(frames.shape[0], -1)
    z = flat @ net.proj_w + net.proj_b
    return z, (c1, y1, c2, y2, a2.shape, flat)


def _encode_backward(grad_z: np.ndarray, net: EncoderNet, cache):
    c1, y1, c2, y2, a2_shape, flat = cache
    g_proj_w = flat.T @ grad_z
    g_a2 = (grad_z @ net.proj_w.T).reshape(a2_shape)
    g_y2 = g_a2 * (y2 > 0)
    g_a1, g_conv2_w, _ = conv2d_backward(g_y2, c2)
    g_y1 = g_a1 * (y1 > 0)
    _, g_conv1_w, _ = conv2d_backward(g_y1, c1)
    return [g_conv1_w, g_conv2_w, g_proj_w]


def contrastive_logits(params: EncoderParams, anchors: np.ndarray,
                       positives: np.ndarray):
    """Score matrix head(E(anchors)) @ B @ E'(positives)^T and caches."""
    z, enc_cache = _encode_with_cache(params.net, anchors)
    q, head_cache = mlp_forward(z, params.head)
    k = encode(params.target, positives)
    logits = q @ params.bilinear @ k.T
    return logits, (z, enc_cache, q, head_cache, k)


def nce_loss_from_logits(logits: np.ndarray):
    """Mean -log softmax diagonal, row-stabilized.  Returns (loss, dlogits)."""
    m = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    loss = float(-log_probs[np.arange(m), np.arange(m)].mean())
    dlogits = exp / denom
    dlogits[np.arange(m), np.arange(m)] -= 1.0
    dlogits /= m
    return loss, dlogits.astype(logits.dtype, copy=False)


def contrastive_loss_and_grads(params: EncoderParams, anchors: np.ndarray,
                               positives: np.ndarray, temperature: float = 0.1):
    """Training loss plus gradients ordered like trainable_tensors().

    The training objective scores *unit-normalized* head and target
    embeddings through the bilinear matrix, scaled by a temperature: the
    softmax can then only separate the diagonal by spreading embedding
    *directions* apart, which is the cosine geometry the rewards read off
    the encoder.  (Scoring raw unnormalized embeddings instead lets the
    optimizer shrink the loss by inflating norms along a shared direction,
    which saturates every downstream cosine — measurably so at this frame
    size.)  `contrastive_logits` keeps the raw bilinear form for callers
    that want the unnormalized scores.
    """
    z, enc_cache = _encode_with_cache(params.net, anchors)
    q, head_cache = mlp_forward(z, params.head)
    k = encode(params.target, positives)

    qn = np.linalg.norm(q, axis=1, keepdims=True)
    qh = q / qn
    kh = k / np.linalg.norm(k, axis=1, keepdims=True)
    logits = (qh @ params.bilinear @ kh.T) / temperature

    loss, dlogits = nce_loss_from_logits(logits)
    dlogits = dlogits / temperature
    d_a = dlogits @ kh                      # d loss / d (qh @ B)
    g_bilinear = qh.T @ d_a
    dqh = d_a @ params.bilinear.T
    # through the row normalization: dq = (dqh - qh (qh . dqh)) / |q|
    dq = (dqh - qh * (qh * dqh).sum(axis=1, keepdims=True)) / qn
    head_grads, dz = mlp_backward(dq.astype(q.dtype, copy=False),
                                  params.head, head_cache)
    enc_grads = _encode_backward(dz, params.net, enc_cache)
    grads = list(enc_grads)
    for gw, gb in head_grads:
        grads.extend((gw, gb))
    grads.append(g_bilinear)
    return loss, grads


@dataclass
class TrainState:
    params: EncoderParams
    opt: Adam
    cfg: EncoderConfig
    step: int = 0
    losses: list = field(default_factory=list)


def make_train_state(cfg: EncoderConfig, seed: int, dtype=np.float32) -> TrainState:
    cfg.validate()
    params = init_params(np.random.default_rng(seed), cfg, dtype=dtype)
    opt = Adam(params.trainable_tensors(), lr=cfg.lr)
    return TrainState(params=params, opt=opt, cfg=cfg)


def _make_views(frames: np.ndarray, bound: int, rng: np.random.Generator,
                corrupt_fn=None) -> np.ndarray:
    """Independent augmentation per frame: optional corruption, then shift."""
    if bound == 0 and corrupt_fn is None:
        return frames
    out = np.empty_like(frames)
    for i in range(frames.shape[0]):
        f = frames[i]
        if corrupt_fn is not None:
            f = corrupt_fn(f, rng)
        if bound > 0:
            f = random_shift(f, bound, rng)
        out[i] = f
    return out


def train_step(state: TrainState, batch: np.ndarray, rng: np.random.Generator,
               corrupt_fn=None) -> float:
    """One contrastive update on a batch of frames (two fresh views each).

    `corrupt_fn(frame, rng)`, when given, runs before the random shift on
    each view independently — this is what teaches the encoder that a
    corrupted rendition of a frame is still that frame, the invariance the
    rewards rely on when guidance clips are noisy.
    """
    cfg = state.cfg
    anchors = _make_views(batch, cfg.shift_bound, rng, corrupt_fn)
    positives = _make_views(batch, cfg.shift_bound, rng, corrupt_fn)
    loss, grads = contrastive_loss_and_grads(state.params, anchors, positives,
                                             temperature=cfg.temperature)
    tensors = state.params.trainable_tensors()
    if cfg.weight_decay > 0:
        decay = np.float32(1.0 - cfg.weight_decay)
        for t in tensors:
            t *= decay
    state.opt.step(tensors, grads)
    state.step += 1
    if state.step % cfg.ema_frequency == 0:
        m = cfg.ema_momentum
        for tgt, src in zip(state.params.target.tensors(), state.params.net.tensors()):
            tgt *= 1.0 - m
            tgt += m * src
    return loss


def pretrain(frames_pool: np.ndarray, cfg: EncoderConfig, seed: int,
             corrupt_fn=None, log_every: int = 50) -> TrainState:
    """Full training run over a pool of frames; losses land in state.losses."""
    state = make_train_state(cfg, seed)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xE11C)))
    pool = frames_pool.astype(np.float32, copy=False)
    for _ in range(cfg.steps):
        idx = rng.integers(0, pool.shape[0], size=cfg.batch_size)
        loss = train_step(state, pool[idx], rng, corrupt_fn)
        if state.step % log_every == 0 or state.step == 1:
            state.losses.append((state.step, loss))
    return state


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities, rows of `a` against rows of `b`."""
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    return an @ bn.T


def similarity_heatmap(net: EncoderNet, frames_a: np.ndarray,
                       frames_b: np.ndarray) -> np.ndarray:
    """Cosine similarity of E(frames_a) rows against E(frames_b) columns."""
    return cosine_matrix(encode(net, frames_a).astype(np.float64),
                         encode(net, frames_b).astype(np.float64))


def diagonal_margin(sims: np.ndarray) -> float:
    """Mean on-diagonal similarity minus mean off-diagonal similarity.

    Large when index-matched frame pairs embed far closer than mismatched
    ones — the encoder-alignment diagnostic.
    """
    n = min(sims.shape)
    sq = sims[:n, :n]
    eye = np.eye(n, dtype=bool)
    return float(sq[eye].mean() - sq[~eye].mean())


def alignment_margin(net: EncoderNet, clean: np.ndarray, corrupted: np.ndarray) -> float:
    """Diagonal margin of the clean-vs-corrupted similarity heatmap."""
    return diagonal_margin(similarity_heatmap(net, clean, corrupted))


def save_params(params: EncoderParams, cfg: EncoderConfig, path) -> None:
    w = Writer()
    w.magic(ENCODER_MAGIC)
    w.u32(ENCODER_VERSION)
    w.u32(cfg.dim)
    w.u32(cfg.height)
    w.u32(cfg.width)
    w.u32(cfg.channels)
    for t in params.all_tensors():
        w.tensor(t)
    with open(path, "wb") as fh:
        fh.write(w.getvalue())


def load_params(path):
    """Read a checkpoint.  Returns (params, cfg)."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = Reader(data)
    r.magic(ENCODER_MAGIC)
    version = r.u32("version")
    if version != ENCODER_VERSION:
        raise BinaryFormatError(4, f"unsupported encoder version {version}")
    dim = r.u32("latent dim")
    h = r.u32("height")
    wd = r.u32("width")
    c = r.u32("channels")
    tensors = []
    for i in range(17):
        tensors.append(r.tensor(f"tensor {i}"))
    r.expect_end()
    net = EncoderNet(*tensors[0:6])
    head = [(tensors[6], tensors[7]), (tensors[8], tensors[9])]
    bilinear = tensors[10]
    target = EncoderNet(*tensors[11:17])
    if net.proj_w.shape[1] != dim or bilinear.shape != (dim, dim):
        raise BinaryFormatError(len(data), "tensor shapes disagree with header dim")
    c1 = net.conv1_w.shape[3]
    c2 = net.conv2_w.shape[3]
    cfg = EncoderConfig(height=h, width=wd, channels=c, dim=dim,
                        conv_channels=(c1, c2))
    if net.proj_w.shape[0] != cfg.flat_dim:
        raise BinaryFormatError(len(data), "projection shape disagrees with frame shape")
    params = EncoderParams(net=net, head=head, bilinear=bilinear, target=target)
    return params, cfg
