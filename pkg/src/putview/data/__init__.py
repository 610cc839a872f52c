"""Bundled fixture programs, databases, scenarios and domains."""

from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent
RIDESHARING = DATA_DIR / "ridesharing"
TRAJECTORIES = DATA_DIR / "trajectories"
DOMAINS = DATA_DIR / "domains"
