"""Trajectory prediction and conformal uncertainty quantification."""
