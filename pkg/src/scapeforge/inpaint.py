"""Inpainting backend contract: DDPM forward-process utilities, the wire
protocol (multipart over HTTP), a deterministic mock backend, and the client.

The generative reverse process lives behind the protocol; everything here is
verifiable without model weights.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .texturing import pull_push

log = logging.getLogger(__name__)

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 2e-2


@dataclass
class NoiseSchedule:
    betas: np.ndarray  # (T,) index 0 is step 1
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def T(self) -> int:
        return len(self.betas)


def make_schedule(T: int = DEFAULT_T, beta_start: float = DEFAULT_BETA_START,
                  beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Linear variance schedule with alpha_t = 1 - beta_t and running product alpha_bar."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0 < beta_start <= beta_end < 1):
        raise ValueError("require 0 < beta_start <= beta_end < 1")
    betas = np.linspace(beta_start, beta_end, T)
    alphas = 1.0 - betas
    return NoiseSchedule(betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas))


def forward_sample(x0: np.ndarray, t: int, noise: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form forward corruption: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise."""
    if not (1 <= t <= sched.T):
        raise ValueError(f"step {t} outside 1..{sched.T}")
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x0.shape:
        raise ValueError("noise shape must match x0")
    ab = sched.alpha_bars[t - 1]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise


# --- wire protocol ---------------------------------------------------------

@dataclass
class InpaintRequest:
    rgb: np.ndarray  # (H, W, 3) uint8
    mask: np.ndarray  # (H, W) bool, True = inpaint
    depth16: np.ndarray  # (H, W) uint16 inverse depth (near = bright)
    depth_min_m: float
    depth_max_m: float
    prompt: str = ""
    ip_image_id: str | None = None
    strength: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)
        self.mask = np.asarray(self.mask).astype(bool)
        self.depth16 = np.asarray(self.depth16, dtype=np.uint16)
        if not (self.rgb.shape[:2] == self.mask.shape == self.depth16.shape):
            raise ValueError("rgb/mask/depth dimensions disagree")

    def meta(self) -> dict:
        return {
            "seed": int(self.seed),
            "prompt": self.prompt,
            "ip_image_id": self.ip_image_id,
            "strength": float(self.strength),
            "depth_min_m": float(self.depth_min_m),
            "depth_max_m": float(self.depth_max_m),
        }

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization used for content-addressed seeding."""
        h = hashlib.blake2b(digest_size=16)
        h.update(json.dumps(self.meta(), sort_keys=True).encode())
        h.update(self.rgb.tobytes())
        h.update(self.mask.tobytes())
        h.update(self.depth16.tobytes())
        return h.digest()


@dataclass
class InpaintResponse:
    rgb: np.ndarray
    backend_id: str
    elapsed_ms: float
    fully_masked: bool = False


def validate_response(req: InpaintRequest, resp: InpaintResponse, tol: int = 2) -> list:
    """Check the backend contract; returns a list of violation strings."""
    problems = []
    if resp.rgb.shape != req.rgb.shape:
        problems.append(f"response shape {resp.rgb.shape} != request {req.rgb.shape}")
        return problems
    outside = ~req.mask
    if outside.any():
        diff = np.abs(resp.rgb[outside].astype(int) - req.rgb[outside].astype(int)).max()
        if diff > tol:
            problems.append(f"outside-mask pixels deviate by {diff} (> {tol})")
    return problems


def composite_response(req: InpaintRequest, resp: InpaintResponse) -> np.ndarray:
    """Client-side guarantee: final = mask * response + (1 - mask) * request."""
    return np.where(req.mask[..., None], resp.rgb, req.rgb)


def mock_inpaint(req: InpaintRequest, grain: float = 0.0, backend_id: str = "mock") -> InpaintResponse:
    """Deterministic stand-in backend: pull-push fill of masked pixels.

    grain (in [0, 2/255]) adds seeded noise to the filled region; output
    depends only on (request bytes, seed).
    """
    t0 = time.monotonic()
    rgb = req.rgb.copy()
    fully_masked = bool(req.mask.all())
    if fully_masked:
        rgb[req.mask] = 128
    elif req.mask.any():
        filled = pull_push(req.rgb, ~req.mask)
        vals = filled[req.mask]
        if grain > 0:
            digest = hashlib.blake2b(
                req.canonical_bytes() + req.seed.to_bytes(8, "little", signed=False),
                digest_size=8,
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            amp = min(grain, 2.0 / 255.0) * 255.0
            vals = vals + rng.uniform(-amp, amp, size=vals.shape)
        rgb[req.mask] = np.clip(np.round(vals), 0, 255).astype(np.uint8)
    return InpaintResponse(
        rgb=rgb,
        backend_id=backend_id,
        elapsed_ms=(time.monotonic() - t0) * 1000.0,
        fully_masked=fully_masked,
    )


# --- multipart codec -------------------------------------------------------

def encode_multipart(parts: list, boundary: str | None = None):
    """parts: [(name, content_type, payload bytes)]. Returns (body, content_type)."""
    boundary = boundary or ("sf" + uuid.uuid4().hex)
    buf = io.BytesIO()
    for name, ctype, payload in parts:
        buf.write(f"--{boundary}\r\n".encode())
        buf.write(
            f'Content-Disposition: form-data; name="{name}"; filename="{name}"\r\n'.encode()
        )
        buf.write(f"Content-Type: {ctype}\r\n\r\n".encode())
        buf.write(payload)
        buf.write(b"\r\n")
    buf.write(f"--{boundary}--\r\n".encode())
    return buf.getvalue(), f"multipart/form-data; boundary={boundary}"


def decode_multipart(body: bytes, content_type: str) -> dict:
    """Inverse of encode_multipart: returns {name: payload bytes}."""
    boundary = None
    for token in content_type.split(";"):
        token = token.strip()
        if token.startswith("boundary="):
            boundary = token[len("boundary="):].strip('"')
    if not boundary:
        raise ValueError("no multipart boundary in content type")
    delim = f"--{boundary}".encode()
    out = {}
    for chunk in body.split(delim):
        chunk = chunk.strip(b"\r\n")
        if not chunk or chunk == b"--":
            continue
        if b"\r\n\r\n" not in chunk:
            continue
        head, payload = chunk.split(b"\r\n\r\n", 1)
        name = None
        for line in head.split(b"\r\n"):
            line = line.decode(errors="replace")
            if line.lower().startswith("content-disposition"):
                for piece in line.split(";"):
                    piece = piece.strip()
                    if piece.startswith("name="):
                        name = piece[len("name="):].strip('"')
        if name is not None:
            out[name] = payload
    return out


def _png_bytes(arr: np.ndarray, mode: str) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")  # mode inferred from dtype
    return buf.getvalue()


def _png_load(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        arr = np.asarray(im)
    return arr


def request_to_multipart(req: InpaintRequest):
    parts = [
        ("meta", "application/json", json.dumps(req.meta(), sort_keys=True).encode()),
        ("rgb", "image/png", _png_bytes(req.rgb, "RGB")),
        ("mask", "image/png", _png_bytes((req.mask.astype(np.uint8) * 255), "L")),
        ("depth", "image/png", _png_bytes(req.depth16, "I;16")),
    ]
    return encode_multipart(parts)


def request_from_multipart(body: bytes, content_type: str) -> InpaintRequest:
    parts = decode_multipart(body, content_type)
    for need in ("meta", "rgb", "mask", "depth"):
        if need not in parts:
            raise ValueError(f"missing multipart part {need!r}")
    meta = json.loads(parts["meta"])
    rgb = _png_load(parts["rgb"])
    mask = _png_load(parts["mask"]) >= 128
    depth = _png_load(parts["depth"])
    if depth.dtype == np.int32:
        depth = depth.astype(np.uint16)
    return InpaintRequest(
        rgb=rgb, mask=mask, depth16=depth,
        depth_min_m=float(meta["depth_min_m"]), depth_max_m=float(meta["depth_max_m"]),
        prompt=meta.get("prompt", ""), ip_image_id=meta.get("ip_image_id"),
        strength=float(meta.get("strength", 1.0)), seed=int(meta.get("seed", 0)),
    )


def response_to_multipart(resp: InpaintResponse):
    meta = {
        "backend_id": resp.backend_id,
        "elapsed_ms": resp.elapsed_ms,
        "fully_masked": resp.fully_masked,
    }
    parts = [
        ("meta", "application/json", json.dumps(meta, sort_keys=True).encode()),
        ("rgb", "image/png", _png_bytes(resp.rgb, "RGB")),
    ]
    return encode_multipart(parts)


def response_from_multipart(body: bytes, content_type: str) -> InpaintResponse:
    parts = decode_multipart(body, content_type)
    meta = json.loads(parts["meta"])
    return InpaintResponse(
        rgb=_png_load(parts["rgb"]),
        backend_id=meta.get("backend_id", "unknown"),
        elapsed_ms=float(meta.get("elapsed_ms", 0.0)),
        fully_masked=bool(meta.get("fully_masked", False)),
    )


# --- client ----------------------------------------------------------------

@dataclass
class RetryPolicy:
    attempts: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 120.0


def remote_inpaint(endpoint: str, req: InpaintRequest,
                   retry: RetryPolicy | None = None) -> InpaintResponse:
    """POST the request over the wire protocol, validate, and composite so
    outside-mask pixels are bit-equal to the request."""
    import requests as _requests

    retry = retry or RetryPolicy()
    body, ctype = request_to_multipart(req)
    url = endpoint.rstrip("/") + "/v1/inpaint"
    last_err = None
    for attempt in range(retry.attempts):
        try:
            r = _requests.post(url, data=body, headers={"Content-Type": ctype},
                               timeout=retry.timeout_s)
            r.raise_for_status()
            resp = response_from_multipart(r.content, r.headers["Content-Type"])
            break
        except Exception as e:  # noqa: BLE001 - bounded retries then re-raise
            last_err = e
            if attempt + 1 < retry.attempts:
                time.sleep(retry.backoff_s * (2**attempt))
    else:
        raise RuntimeError(f"inpaint backend failed after {retry.attempts} attempts: {last_err}")

    if resp.rgb.shape != req.rgb.shape:
        raise ValueError(f"backend returned shape {resp.rgb.shape}, expected {req.rgb.shape}")
    problems = validate_response(req, resp)
    if problems:
        log.warning("backend contract violations (restored by composite): %s", problems)
    resp.rgb = composite_response(req, resp)
    return resp


def create_mock_backend_app(grain: float = 0.0, backend_id: str = "mock"):
    """FastAPI app serving the wire protocol on top of mock_inpaint."""
    # real (non-postponed) annotations are required for FastAPI to resolve
    # the Request parameter, so the handler is declared without one
    from fastapi import FastAPI, Request, Response

    app = FastAPI(title="scapeforge mock inpaint backend")

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "backend_id": backend_id}

    async def inpaint(request):
        body = await request.body()
        req = request_from_multipart(body, request.headers["content-type"])
        resp = mock_inpaint(req, grain=grain, backend_id=backend_id)
        out, ctype = response_to_multipart(resp)
        return Response(content=out, media_type=ctype)

    # postponed annotations (PEP 563) leave FastAPI unable to resolve a local
    # Request import from a string annotation; attach the real class instead
    inpaint.__annotations__ = {"request": Request}
    app.post("/v1/inpaint")(inpaint)

    return app
