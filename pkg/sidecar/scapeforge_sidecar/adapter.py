"""Wire-protocol adapter: multipart requests in, masked generation out.

The generator is pluggable: any callable taking an InpaintRequest and
returning an (H, W, 3) uint8 array can sit behind the protocol. The adapter
owns everything else — decoding, serialization of concurrent requests,
outside-mask compositing, and the error payload contract.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from scapeforge.inpaint import (InpaintRequest, InpaintResponse,
                                request_from_multipart, response_to_multipart)

log = logging.getLogger(__name__)

Generator = "callable taking InpaintRequest -> (H, W, 3) uint8 ndarray"


@dataclass
class BackendConfig:
    """Model identifiers and sampling knobs exposed to the deployer.

    Sampler, step count, and default strength are deliberately unset-able
    configuration: sensible values depend on the deployed weights."""

    inpaint_model: str = "inpaint-conditioner"
    depth_model: str = "depth-conditioner"
    image_prompt_model: str = "image-prompt-encoder"
    device: str = "cpu"
    sampler: str = "ddim"
    steps: int = 30
    default_strength: float = 1.0
    backend_id: str = "sidecar"

    def model_ids(self) -> dict:
        return {
            "inpaint_model": self.inpaint_model,
            "depth_model": self.depth_model,
            "image_prompt_model": self.image_prompt_model,
        }


@dataclass
class SidecarAdapter:
    """Runs one generation at a time and enforces the protocol contract."""

    generate: "callable"
    config: BackendConfig = field(default_factory=BackendConfig)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def handle(self, req: InpaintRequest) -> InpaintResponse:
        t0 = time.time()
        fully_masked = bool(req.mask.all())
        if not req.mask.any():
            # protocol contract: nothing to generate, echo the request
            out = req.rgb.copy()
        else:
            with self._lock:  # one generation at a time per device
                out = np.asarray(self.generate(req), dtype=np.uint8)
            if out.shape != req.rgb.shape:
                raise ValueError(
                    f"generator returned shape {out.shape}, expected {req.rgb.shape}"
                )
            # outside-mask preservation is the adapter's job, not the model's
            out = np.where(req.mask[..., None], out, req.rgb)
        return InpaintResponse(
            rgb=out,
            backend_id=self.config.backend_id,
            elapsed_ms=(time.time() - t0) * 1000.0,
            fully_masked=fully_masked,
        )


def create_sidecar_app(generate, config: BackendConfig | None = None):
    """FastAPI app implementing the inpaint wire protocol over a generator."""
    from fastapi import FastAPI, Request, Response
    from fastapi.responses import JSONResponse

    config = config or BackendConfig()
    adapter = SidecarAdapter(generate=generate, config=config)
    app = FastAPI(title="scapeforge diffusion sidecar")
    app.state.adapter = adapter

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "backend_id": config.backend_id,
            "device": config.device,
            "models": config.model_ids(),
            "sampler": config.sampler,
            "steps": config.steps,
        }

    async def inpaint(request):
        body = await request.body()
        try:
            req = request_from_multipart(body, request.headers["content-type"])
        except Exception as e:  # noqa: BLE001 - malformed request, not a server fault
            return JSONResponse(status_code=422, content={"error": str(e)})
        try:
            resp = adapter.handle(req)
        except MemoryError:
            return JSONResponse(status_code=503,
                                content={"error": "out of memory", "retry_after_s": 30},
                                headers={"Retry-After": "30"})
        except Exception as e:  # noqa: BLE001 - model failure -> protocol error payload
            log.exception("generation failed")
            return JSONResponse(status_code=503,
                                content={"error": str(e), "retry_after_s": 10},
                                headers={"Retry-After": "10"})
        out, ctype = response_to_multipart(resp)
        return Response(content=out, media_type=ctype)

    # postponed annotations (PEP 563) leave FastAPI unable to resolve a local
    # Request import from a string annotation; attach the real class instead
    inpaint.__annotations__ = {"request": Request}
    app.post("/v1/inpaint")(inpaint)

    return app
