"""Safety-critical areas, intrusion cost and reward signals."""
