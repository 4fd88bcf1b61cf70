"""Crowd simulation: world stepping, pedestrian behaviours, scenarios, environments."""
