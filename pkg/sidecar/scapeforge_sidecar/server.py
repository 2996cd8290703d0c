"""CLI entry point: serve the sidecar with a chosen generator.

Without a real model installed this serves the deterministic pull-push
generator, which is useful for smoke-testing deployments end to end.
"""

import argparse

from .adapter import BackendConfig, create_sidecar_app


def pull_push_generator(req):
    """Deterministic fallback generator (no model weights required)."""
    from scapeforge.inpaint import mock_inpaint

    return mock_inpaint(req, backend_id="sidecar-pullpush").rgb


def load_generator(spec: str):
    if spec == "pullpush":
        return pull_push_generator
    # "module:callable" — deployer-provided generator around real weights
    mod_name, _, attr = spec.partition(":")
    if not attr:
        raise SystemExit(f"generator spec {spec!r} must be 'pullpush' or 'module:callable'")
    import importlib

    return getattr(importlib.import_module(mod_name), attr)


def main(argv=None):
    ap = argparse.ArgumentParser(description="inpaint wire-protocol sidecar")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8601)
    ap.add_argument("--generator", default="pullpush",
                    help="'pullpush' or 'module:callable'")
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--sampler", default="ddim")
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--backend-id", default="sidecar")
    args = ap.parse_args(argv)

    config = BackendConfig(device=args.device, sampler=args.sampler,
                           steps=args.steps, backend_id=args.backend_id)
    app = create_sidecar_app(load_generator(args.generator), config)

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port)


if __name__ == "__main__":
    main()
