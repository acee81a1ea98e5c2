import pytest

from cbsrv import EngineConfig, SeededRandom, run_partial_concurrent
from cbsrv.errors import MalformedTrace
from cbsrv.traceio import read_trace, trace_to_json, trace_to_text


@pytest.fixture()
def sample(task_partial):
    res = run_partial_concurrent(
        task_partial, EngineConfig(SeededRandom(6), max_steps=12))
    return res.trace


def test_text_round_trip(sample):
    text = trace_to_text(sample, ["currently-true", "false"])
    trace, verdicts = read_trace(text)
    assert trace == sample
    assert verdicts == ["currently-true", "false"]
    # byte-stable second rendering
    assert trace_to_text(trace, verdicts) == text


def test_json_round_trip(sample):
    doc = trace_to_json(sample, ["true"])
    trace, verdicts = read_trace(doc)
    assert trace == sample and verdicts == ["true"]


def test_malformed_inputs():
    with pytest.raises(MalformedTrace):
        read_trace("")
    with pytest.raises(MalformedTrace):
        read_trace("LABEL ex12")
    with pytest.raises(MalformedTrace):
        read_trace('# cbs-rv-trace@1\nSTATE [["a", {}]]\nLABEL x')
    with pytest.raises(MalformedTrace):
        read_trace('{"format": "something-else"}')
    with pytest.raises(MalformedTrace):
        read_trace('# cbs-rv-trace@1\nSTATE [["a", {}]]\nBOGUS x')
