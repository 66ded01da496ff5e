"""Tick-replay scalping gym and cooperative four-agent reinforcement learning."""

__version__ = "0.1.0"
