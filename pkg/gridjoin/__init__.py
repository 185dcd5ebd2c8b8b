"""GridJoin - parallel epsilon-distance self-join on a sparse grid index."""

__version__ = "1.0.0"
