"""Inpaint wire-protocol adapter for depth-conditioned diffusion generators."""

from .adapter import BackendConfig, SidecarAdapter, create_sidecar_app

__all__ = ["BackendConfig", "SidecarAdapter", "create_sidecar_app"]
