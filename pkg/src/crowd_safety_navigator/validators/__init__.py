"""Validation modules."""
