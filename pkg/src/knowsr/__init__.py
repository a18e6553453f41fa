"""Multi-agent MADDPG with knowledge sharing among homogeneous agents."""

__version__ = "0.1.0"
