import pytest

import cbsrv
from cbsrv import parse_model, render_model, validate
from cbsrv.errors import ModelSyntaxError, ValidationError
from cbsrv.modeltext import render_model_json
from cbsrv.semantics import to_partial
from cbsrv.transform import transform_system


def test_builtin_task_shape(task):
    assert [c.id for c in task.components] == \
        ["Worker1", "Worker2", "Worker3", "Generator"]
    assert len(task.interactions) == 10
    assert {a.id for a in task.interactions} == \
        {"ex12", "ex13", "ex23", "r1", "r2", "r3", "f1", "f2", "f3", "nt"}
    for w in task.components[:3]:
        assert len(w.transitions) == 3
    init = task.initial_state()
    assert [cs.location for cs in init] == ["free", "free", "free", "ready"]
    assert all(cs.valuation().get("x", 0) == 0 for cs in init)


def test_validate_builtin_models(task):
    assert validate(task) == []
    assert validate(cbsrv.builtin_readers_writers()) == []


def test_validation_catches_unknown_location():
    text = """
component C { ports p; locations a; initial a; transition a -p-> b; }
interaction i { ports: C.p; }
"""
    with pytest.raises(ValidationError) as err:
        parse_model(text)
    assert any(d.code == "UnknownLocation" for d in err.value.diagnostics)


def test_validation_catches_unbound_guard_variable():
    text = """
component C { ports p; locations a; initial a; transition a -p-> a [y > 0]; }
interaction i { ports: C.p; }
"""
    with pytest.raises(ValidationError) as err:
        parse_model(text)
    assert any(d.code == "UnboundVariable" for d in err.value.diagnostics)


def test_two_ports_of_one_component_rejected():
    text = """
component C { ports p, q; locations a; initial a;
  transition a -p-> a; transition a -q-> a; }
interaction i { ports: C.p, C.q; }
"""
    with pytest.raises(ValidationError) as err:
        parse_model(text)
    assert any(d.code == "MultiplePorts" for d in err.value.diagnostics)


def test_empty_interaction_set_is_valid():
    sys = parse_model("component C { ports p; locations a; initial a; "
                      "transition a -p-> a; }")
    assert validate(sys) == []
    assert cbsrv.enabled_interactions(sys, sys.initial_state()) == []


def test_syntax_error_carries_position():
    with pytest.raises(ModelSyntaxError) as err:
        parse_model("component C {\n  locations a@@;\n}")
    assert err.value.line >= 1


@pytest.mark.parametrize("loader", ["text", "json"])
def test_round_trip_all_bundled_models(loader, task):
    for sys in (task, cbsrv.builtin_readers_writers()):
        doc = render_model(sys) if loader == "text" else render_model_json(sys)
        assert parse_model(doc) == sys


def test_round_trip_partial_and_transformed(task):
    p = to_partial(task)
    assert parse_model(render_model(p)) == p
    tr = transform_system(p, monitored=["Worker1", "Worker3"])
    assert parse_model(render_model(tr)) == tr
    assert parse_model(render_model_json(tr)) == tr


def test_component_order_is_index_addressable(task):
    for i, comp in enumerate(task.components):
        assert task.component_index(comp.id) == i
