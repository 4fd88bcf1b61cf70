"""Policy network and constrained policy optimization."""
