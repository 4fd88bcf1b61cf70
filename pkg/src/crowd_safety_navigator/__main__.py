"""Entry point for python -m crowd_safety_navigator."""

from crowd_safety_navigator.cli import app

if __name__ == "__main__":
    app()
