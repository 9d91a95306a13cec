"""Separation assurance on structured airspace with PPO speed advisories and
an execution-time dropout/augmentation safety layer."""

__version__ = "0.1.0"
