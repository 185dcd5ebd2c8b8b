from gridjoin.core.graph import STAGES, Graph

__all__ = ["Graph", "STAGES"]
