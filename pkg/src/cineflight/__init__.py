"""Text-to-flight toolkit: shot grammar, trajectory synthesis, synthetic
camera observations, monocular VO, PID flight simulation and evaluation."""

__version__ = "0.1.0"
