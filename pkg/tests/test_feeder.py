import json

import numpy as np
import pytest

from feederperc import feeder as fd
from feederperc.feeder import (
    Bus,
    FeederError,
    FeederModel,
    FeederParseError,
    FeederValidationError,
    Line,
    LoadSpec,
    PvSpec,
    builtin_feeder,
    load_feeder,
)
from feederperc.pipeline import data_path
from feederperc.profiles import PROFILE_LIBRARY, resample


def _write(tmp_path, doc):
    p = tmp_path / "f.json"
    p.write_text(json.dumps(doc))
    return p


def _doc(model):
    return fd.to_dict(model)


def test_bundled_synth123_file(synth123):
    m = load_feeder(data_path("synth123.json"))
    assert len(m.meter_ids) == 40
    assert m == synth123


def test_twobus():
    m = builtin_feeder("twobus")
    assert len(m.buses) == 2
    assert [b.kind for b in m.buses].count("swing") == 1
    assert [b.kind for b in m.buses].count("load") == 1


def test_unknown_builtin():
    with pytest.raises(FeederError, match="unknown built-in"):
        builtin_feeder("nosuch")


def test_synth123_structure(synth123):
    assert len(synth123.buses) == 123
    assert len(synth123.meter_ids) == 40
    assert len(synth123.active_lines) == 122
    assert synth123.swing.id == 150
    assert 150 not in synth123.meter_ids
    assert sum(1 for b in synth123.buses if b.load) == 85


def test_synth123_peak_load(synth123):
    total = sum(
        b.load.base_p * b.load.scale * resample(PROFILE_LIBRARY[b.load.profile_id], 96)
        for b in synth123.buses
        if b.load
    )
    assert abs(total.max() - 3524.557) <= 0.05 * 3524.557


def test_two_swing_buses(tmp_path, twobus):
    doc = _doc(twobus)
    doc["buses"][1]["kind"] = "swing"
    doc["buses"][1]["load"] = None
    with pytest.raises(FeederValidationError, match="multiple swing buses"):
        load_feeder(_write(tmp_path, doc))


def test_disconnected_bus(tmp_path, twobus):
    doc = _doc(twobus)
    doc["buses"].append({"id": 3, "kind": "junction"})
    with pytest.raises(FeederValidationError, match="unreachable bus"):
        load_feeder(_write(tmp_path, doc))


def test_loop_rejected(tmp_path, twobus):
    doc = _doc(twobus)
    doc["buses"].append({"id": 3, "kind": "junction"})
    doc["lines"] += [{"from": 2, "to": 3, "resistance": 0.1}, {"from": 1, "to": 3, "resistance": 0.1}]
    with pytest.raises(FeederValidationError, match="not radial"):
        load_feeder(_write(tmp_path, doc))


def test_open_line_disconnects(tmp_path, twobus):
    doc = _doc(twobus)
    doc["lines"][0]["status"] = 0
    with pytest.raises(FeederValidationError, match="unreachable"):
        load_feeder(_write(tmp_path, doc))


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n "buses": [\n  {"id": 1,,}\n ]\n}')
    with pytest.raises(FeederParseError, match="line 3"):
        load_feeder(p)


def test_parse_error_names_field(tmp_path, twobus):
    doc = _doc(twobus)
    del doc["lines"][0]["resistance"]
    with pytest.raises(FeederParseError, match=r"lines\[0\]\.resistance"):
        load_feeder(_write(tmp_path, doc))


def test_missing_file(tmp_path):
    with pytest.raises(FeederParseError):
        load_feeder(tmp_path / "none.json")


@pytest.mark.parametrize(
    "kwargs, msg",
    [
        (dict(from_bus=1, to_bus=1, resistance=0.1), "from == to"),
        (dict(from_bus=1, to_bus=2, resistance=0.0), "resistance"),
        (dict(from_bus=1, to_bus=2, resistance=0.1, reactance=-1), "reactance"),
        (dict(from_bus=1, to_bus=2, resistance=float("inf")), "resistance"),
    ],
)
def test_line_invariants(kwargs, msg):
    with pytest.raises(FeederValidationError, match=msg):
        Line(**kwargs)


def test_load_and_pv_invariants():
    with pytest.raises(FeederValidationError):
        LoadSpec(10.0, 1.0, "flat", scale=0.0)
    with pytest.raises(FeederValidationError):
        LoadSpec(-1.0, 1.0, "flat")
    with pytest.raises(FeederValidationError):
        PvSpec(q_lb=1.0, q_ub=0.0)
    with pytest.raises(FeederValidationError, match="requires a load"):
        Bus(2, "load")


def test_default_pv_rating():
    assert PvSpec().rated_kw == pytest.approx(30.0, abs=1e-12)


def test_round_trip(tmp_path, synth123):
    p = tmp_path / "s.json"
    fd.save_feeder(synth123, p)
    again = load_feeder(p)
    assert again == synth123
    assert fd.dumps(again) == fd.dumps(synth123)


def test_model_is_hashable_and_frozen(twobus):
    hash(twobus)
    with pytest.raises(Exception):
        twobus.v_lb = 0.9


def test_tree_order_parents(synth123):
    order, parent, upline = fd.tree_order(synth123)
    assert order[0] == 150
    assert len(order) == 123
    seen = {150}
    for b in order[1:]:
        assert parent[b] in seen
        seen.add(b)


def test_line_status_outside_range():
    with pytest.raises(FeederValidationError):
        Line(1, 2, 0.1, status=2)


def test_meters_sorted(synth123):
    assert synth123.meter_ids == sorted(synth123.meter_ids)
    assert np.all(np.diff(synth123.meter_ids) > 0)


def test_voltage_bounds_checked(twobus):
    with pytest.raises(FeederValidationError):
        FeederModel(twobus.buses, twobus.lines, v_lb=1.1, v_ub=1.0)
