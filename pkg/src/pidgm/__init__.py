"""Physics-informed deep generative models trained by adversarial inference."""

__version__ = "0.1.0"
