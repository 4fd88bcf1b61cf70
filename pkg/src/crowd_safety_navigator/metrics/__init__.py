"""Episode traces and benchmark metrics."""
