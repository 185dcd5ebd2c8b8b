import logging
import time
from typing import Any, Callable, Dict, MutableMapping, Sequence

logger = logging.getLogger(__name__)

Handler = Callable[[MutableMapping[str, Any]], None]

STAGES = ("load", "normalize", "reorder", "index", "tune", "estimate", "join", "verify",
          "simulate", "report")


class Graph:
    """
    Small directed graph modeling the linear join pipeline:
    load → normalize → reorder → index → tune → estimate → join → verify →
    simulate → report.
    Each node stores a callable that receives the shared run *context*.
    Stages without a handler are skipped.
    """

    def __init__(self, stages: Sequence[str] = STAGES):
        if len(set(stages)) != len(stages):
            raise ValueError("stage names must be unique")
        self._pipeline = list(stages)
        self._handlers: Dict[str, Handler] = {}

    @property
    def stages(self):
        return tuple(self._pipeline)

    def set_handler(self, name: str, fn: Handler):
        """
        Register a custom function for a node.
        fn must accept a single argument: the context mapping.
        """
        if name not in self._pipeline:
            raise ValueError(f"Unknown node {name!r}")
        self._handlers[name] = fn

    def walk(self, context: MutableMapping[str, Any]) -> Dict[str, float]:
        """Execute the pipeline in order; returns wall seconds per executed stage.

        The timings are also stored under ``context["timings"]``.
        """
        timings: Dict[str, float] = context.setdefault("timings", {})
        for name in self._pipeline:
            handler = self._handlers.get(name)
            if handler is None:
                logger.debug("Stage %s skipped", name)
                continue
            start = time.perf_counter()
            handler(context)
            timings[name] = time.perf_counter() - start
            logger.debug("Stage %s took %.3fs", name, timings[name])
        return timings
