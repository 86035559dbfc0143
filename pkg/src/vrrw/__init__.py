"""Vertex-reinforced random walks, w-urns and the time-line construction."""

__version__ = "0.1.0"
