import pytest

from gridjoin.core import STAGES, Graph


def test_stages_run_in_order():
    graph = Graph()
    seen = []
    for name in reversed(STAGES):
        graph.set_handler(name, lambda ctx, name=name: seen.append(name))
    timings = graph.walk({})
    assert seen == list(STAGES)
    assert list(timings) == list(STAGES)


def test_missing_handlers_are_skipped():
    graph = Graph()
    graph.set_handler("join", lambda ctx: ctx.update(pairs=3))
    context = {}
    timings = graph.walk(context)
    assert context["pairs"] == 3
    assert set(timings) == {"join"}
    assert context["timings"] is timings


def test_unknown_stage():
    with pytest.raises(ValueError):
        Graph().set_handler("compile", lambda ctx: None)


def test_duplicate_stage_names():
    with pytest.raises(ValueError):
        Graph(["load", "load"])


def test_handler_error_propagates():
    graph = Graph(["load", "join"])

    def fail(ctx):
        raise RuntimeError("boom")

    graph.set_handler("load", fail)
    graph.set_handler("join", lambda ctx: ctx.update(joined=True))
    context = {}
    with pytest.raises(RuntimeError):
        graph.walk(context)
    assert "joined" not in context
