"""scapeforge: terrain digital-twin texturing from DEMs, satellite imagery and webcams."""

__version__ = "0.1.0"
