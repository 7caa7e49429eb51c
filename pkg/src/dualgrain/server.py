"""Session-based HTTP reward service.

Exposes the reward engine over JSON so an external trainer can stream
per-step rewards without linking against this package.  One session holds
one guidance clip (embedded once at creation) and at most one live episode.
Latent-input steps reuse the caller's float64 vector untouched, so the HTTP
path reproduces in-process numbers bit for bit; frame inputs go through the
same encoder the in-process path uses.

Endpoints:
    POST   /v1/sessions           {"clip": <b64 DEGC>, "config": {...}}
    POST   /v1/sessions/ID/reset  {"frame": <b64 single-frame DEGC>}
    POST   /v1/sessions/ID/step   {"frame": ... | "latent": [...], "sparse": 0|1}
    DELETE /v1/sessions/ID
    GET    /v1/healthz

The encoder checkpoint comes from DEG_ENCODER_PATH unless a path is given
explicitly.  Sessions idle longer than the timeout are swept lazily on the
next store access.
"""
from __future__ import annotations

import base64
import binascii
import json
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from . import guidance, latent, reward
from .binio import BinaryFormatError

ENCODER_ENV_VAR = "DEG_ENCODER_PATH"
DEFAULT_IDLE_TIMEOUT = 600.0

_CONFIG_FIELDS = ("alpha", "beta", "theta", "tau_coarse", "tau_fine",
                  "step_s", "sparse_enabled")


class ApiError(Exception):
    """Maps straight onto an HTTP status + JSON error body."""

    def __init__(self, status: int, message: str, field_name: str | None = None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.field_name = field_name

    def body(self) -> dict:
        out = {"error": self.message}
        if self.field_name:
            out["field"] = self.field_name
        return out


@dataclass
class Session:
    id: str
    config: reward.RewardConfig
    latents: np.ndarray                 # unit rows, embedded once at create
    state: reward.EpisodeRewardState | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_used: float = field(default_factory=time.monotonic)


class RewardApp:
    """Shared state behind the HTTP handlers: encoder + session store."""

    def __init__(self, net: latent.EncoderNet, enc_cfg: latent.EncoderConfig,
                 idle_timeout: float = DEFAULT_IDLE_TIMEOUT):
        self.net = net
        self.enc_cfg = enc_cfg
        self.idle_timeout = idle_timeout
        self._sessions: dict[str, Session] = {}
        self._store_lock = threading.Lock()

    # -- session store ----------------------------------------------------
    def _sweep(self, now: float) -> None:
        dead = [sid for sid, s in self._sessions.items()
                if now - s.last_used > self.idle_timeout]
        for sid in dead:
            del self._sessions[sid]

    def _get(self, sid: str) -> Session:
        with self._store_lock:
            self._sweep(time.monotonic())
            sess = self._sessions.get(sid)
            if sess is None:
                raise ApiError(404, f"unknown session {sid}")
            sess.last_used = time.monotonic()
            return sess

    # -- request handlers -------------------------------------------------
    def create_session(self, payload: dict) -> tuple[int, dict]:
        cfg = _config_from_payload(payload.get("config", {}))
        if "clip" in payload:
            clip = _decode_clip(payload["clip"])
        elif "clip_path" in payload:
            try:
                clip = guidance.load_clip(payload["clip_path"])
            except (OSError, BinaryFormatError) as exc:
                raise ApiError(400, f"unreadable clip: {exc}") from exc
        else:
            raise ApiError(400, "request needs a clip or clip_path")
        enc = self.enc_cfg
        if clip.frames.shape[1:] != (enc.height, enc.width, enc.channels):
            raise ApiError(400, "clip frame shape does not match the encoder")
        try:
            latents = reward.guidance_latents(self.net, clip)
        except reward.RewardError as exc:
            raise ApiError(400, str(exc)) from exc
        sess = Session(id=uuid.uuid4().hex, config=cfg, latents=latents)
        with self._store_lock:
            self._sweep(time.monotonic())
            self._sessions[sess.id] = sess
        return 201, {"session_id": sess.id}

    def reset_episode(self, sid: str, payload: dict) -> tuple[int, dict]:
        sess = self._get(sid)
        z0 = self._observation_latent(payload, required=True)
        with sess.lock:
            try:
                sess.state = reward.state_from_latents(sess.latents, z0, sess.config)
            except reward.RewardError as exc:
                raise ApiError(400, str(exc)) from exc
            return 200, {"i_target": sess.state.i_target,
                         "prev_sim": sess.state.prev_sim}

    def step(self, sid: str, payload: dict) -> tuple[int, dict]:
        sess = self._get(sid)
        z = self._observation_latent(payload, required=True)
        sparse = payload.get("sparse", 0)
        if sparse not in (0, 1, True, False):
            raise ApiError(400, "sparse must be 0 or 1", "sparse")
        with sess.lock:
            if sess.state is None:
                raise ApiError(409, "episode not started; call reset first")
            try:
                sess.state, br = reward.step_reward(sess.state, z, int(sparse),
                                                    sess.config)
            except reward.RewardError as exc:
                raise ApiError(400, str(exc)) from exc
            return 200, {"coarse": br.coarse, "fine": br.fine,
                         "sparse": br.sparse, "combined": br.combined,
                         "i_target": br.i_target, "i_reached": br.i_reached,
                         "best_index": br.best_index, "best_sim": br.best_sim}

    def delete_session(self, sid: str) -> tuple[int, dict]:
        with self._store_lock:
            self._sessions.pop(sid, None)
        return 200, {"deleted": sid}

    # -- payload decoding -------------------------------------------------
    def _observation_latent(self, payload: dict, required: bool) -> np.ndarray:
        has_frame = "frame" in payload
        has_latent = "latent" in payload
        if has_frame and has_latent:
            raise ApiError(400, "give either a frame or a latent, not both")
        if has_latent:
            z = np.asarray(payload["latent"], dtype=np.float64)
            if z.ndim != 1 or z.shape[0] != self.enc_cfg.dim:
                raise ApiError(400,
                               f"latent must have dimension {self.enc_cfg.dim}",
                               "latent")
            return z
        if has_frame:
            frame = _decode_frame(payload["frame"])
            cfg = self.enc_cfg
            if frame.shape != (cfg.height, cfg.width, cfg.channels):
                raise ApiError(400, "frame shape does not match the encoder",
                               "frame")
            return latent.encode_single(self.net, frame).astype(np.float64)
        if required:
            raise ApiError(400, "request needs a frame or a latent")
        raise ApiError(400, "missing observation")


def _config_from_payload(raw) -> reward.RewardConfig:
    if not isinstance(raw, dict):
        raise ApiError(422, "config must be an object", "config")
    for key in raw:
        if key not in _CONFIG_FIELDS:
            raise ApiError(422, f"unknown config field {key!r}", key)
    kwargs = {}
    for key, value in raw.items():
        if key == "sparse_enabled":
            if not isinstance(value, bool):
                raise ApiError(422, "sparse_enabled must be a boolean", key)
            kwargs[key] = value
        elif key == "step_s":
            if not isinstance(value, int) or isinstance(value, bool):
                raise ApiError(422, "step_s must be an integer", key)
            kwargs[key] = value
        else:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ApiError(422, f"{key} must be a number", key)
            kwargs[key] = float(value)
    try:
        return reward.RewardConfig(**kwargs)
    except reward.RewardError as exc:
        message = str(exc)
        named = next((f for f in _CONFIG_FIELDS if f in message), None)
        raise ApiError(422, message, named) from exc


def _b64_bytes(text, what: str) -> bytes:
    if not isinstance(text, str):
        raise ApiError(400, f"{what} must be a base64 string", what)
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ApiError(400, f"{what} is not valid base64") from exc


def _decode_clip(text) -> guidance.GuidanceClip:
    data = _b64_bytes(text, "clip")
    try:
        return guidance.clip_from_bytes(data)
    except BinaryFormatError as exc:
        raise ApiError(400, f"malformed clip: {exc}") from exc


def _decode_frame(text) -> np.ndarray:
    data = _b64_bytes(text, "frame")
    try:
        return guidance.frame_from_bytes(data)
    except BinaryFormatError as exc:
        raise ApiError(400, f"malformed frame: {exc}") from exc


_SESSION_ROUTE = re.compile(r"^/v1/sessions/([0-9a-f]{32})$")
_ACTION_ROUTE = re.compile(r"^/v1/sessions/([0-9a-f]{32})/(reset|step)$")


class _Handler(BaseHTTPRequestHandler):
    # the app rides on the server object (see make_server)
    protocol_version = "HTTP/1.1"

    def _app(self) -> RewardApp:
        return self.server.app  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _reply(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _payload(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ApiError(400, f"request body is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ApiError(400, "request body must be a JSON object")
        return payload

    def _dispatch(self, fn) -> None:
        try:
            status, body = fn()
        except ApiError as exc:
            status, body = exc.status, exc.body()
        self._reply(status, body)

    def do_GET(self):
        if self.path == "/v1/healthz":
            self._reply(200, {"status": "ok"})
        else:
            self._reply(404, {"error": "no such route"})

    def do_POST(self):
        app = self._app()
        if self.path == "/v1/sessions":
            self._dispatch(lambda: app.create_session(self._payload()))
            return
        m = _ACTION_ROUTE.match(self.path)
        if m:
            sid, action = m.groups()
            fn = app.reset_episode if action == "reset" else app.step
            self._dispatch(lambda: fn(sid, self._payload()))
            return
        self._reply(404, {"error": "no such route"})

    def do_DELETE(self):
        m = _SESSION_ROUTE.match(self.path)
        if m:
            self._dispatch(lambda: self._app().delete_session(m.group(1)))
        else:
            self._reply(404, {"error": "no such route"})


def load_encoder(path=None):
    """(net, config) from an explicit path or DEG_ENCODER_PATH."""
    path = path or os.environ.get(ENCODER_ENV_VAR)
    if not path:
        raise RuntimeError(
            f"no encoder checkpoint: pass a path or set {ENCODER_ENV_VAR}")
    params, cfg = latent.load_params(path)
    return params.net, cfg


def make_server(port: int = 0, encoder_path=None,
                idle_timeout: float = DEFAULT_IDLE_TIMEOUT,
                host: str = "127.0.0.1") -> ThreadingHTTPServer:
    """Bound server, not yet serving; port 0 picks a free one."""
    net, enc_cfg = load_encoder(encoder_path)
    httpd = ThreadingHTTPServer((host, port), _Handler)
    httpd.app = RewardApp(net, enc_cfg, idle_timeout=idle_timeout)  # type: ignore[attr-defined]
    return httpd


def serve(port: int, encoder_path=None,
          idle_timeout: float = DEFAULT_IDLE_TIMEOUT) -> None:
    httpd = make_server(port, encoder_path, idle_timeout)
    try:
        httpd.serve_forever()
    finally:
        httpd.server_close()
