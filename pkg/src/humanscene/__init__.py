"""Text-to-3D indoor scene synthesis with human-aware layout refinement."""

__version__ = "0.1.0"
