"""Online rule learning for plan-writing agents in a text household world."""
from __future__ import annotations

__version__ = "0.1.0"
