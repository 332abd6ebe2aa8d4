"""Wireless-powered hybrid-RIS uplink: channel simulation, convex inner
solver for energies and slot lengths, and a PPO outer loop for element modes."""

__version__ = "0.1.0"
