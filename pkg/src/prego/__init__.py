"""Online procedural mistake detection from noisy per-frame action labels."""

__version__ = "0.1.0"
