"""Planners (child agents) that choose robot actions."""
