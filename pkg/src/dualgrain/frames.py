"""Raster frames and pixel-space augmentations.

A frame is a float32 ndarray of shape (height, width, channels) with values
in [0, 1].  Channels is 1 (grayscale) or 3.  All visual data in the toolkit
(environment renders, guidance clips, encoder inputs) uses this layout.
"""
from __future__ import annotations

import numpy as np

FRAME_DTYPE = np.float32


class FrameError(ValueError):
    """Raised when an array does not satisfy the frame contract."""


def validate_frame(frame: np.ndarray) -> np.ndarray:
    if not isinstance(frame, np.ndarray) or frame.ndim != 3:
        raise FrameError("frame must be an ndarray of shape (H, W, C)")
    h, w, c = frame.shape
    if h < 1 or w < 1 or c not in (1, 3):
        raise FrameError(f"bad frame shape {frame.shape}")
    if not np.isfinite(frame).all():
        raise FrameError("frame contains non-finite values")
    if frame.min() < 0.0 or frame.max() > 1.0:
        raise FrameError("frame values must lie in [0, 1]")
    return frame


def constant_frame(height: int, width: int, channels: int = 1, value: float = 0.0) -> np.ndarray:
    return np.full((height, width, channels), value, dtype=FRAME_DTYPE)


def shift_frame(frame: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate content by (dx, dy) pixels with edge replication.

    Positive dx moves content right, positive dy moves it down; pixels exposed
    at the opposite border repeat the nearest edge value.  Implemented by
    clipped coordinate lookup (the test oracle uses pad-then-crop instead).
    """
    h, w = frame.shape[:2]
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return frame[rows][:, cols]


def random_shift(frame: np.ndarray, bound: int, rng: np.random.Generator) -> np.ndarray:
    """Translate by integer offsets drawn uniformly from [-bound, bound]^2.

    Draw order is (dx, dy) from a single call, so the same generator state
    always yields the same shift.  bound = 0 is the identity.
    """
    if bound < 0:
        raise ValueError("shift bound must be >= 0")
    dx, dy = rng.integers(-bound, bound + 1, size=2)
    if dx == 0 and dy == 0:
        return frame.copy()
    return shift_frame(frame, int(dx), int(dy))


def box_blur3(frame: np.ndarray) -> np.ndarray:
    """3x3 box blur with edge-replicated borders."""
    padded = np.pad(frame, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(frame, dtype=np.float32)
    h, w = frame.shape[:2]
    for oy in range(3):
        for ox in range(3):
            out += padded[oy:oy + h, ox:ox + w]
    return out / 9.0
