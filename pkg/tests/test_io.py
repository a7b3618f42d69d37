from __future__ import annotations

import json
import math

import numpy as np
import pytest

from metamob.core import MovementEvent, canonicalize_trajectories
from metamob.fitting import binned_curve
from metamob.io import (TrajectoryFormatError, dumps, format_float, parse_mapping, read_events,
                        read_network, write_curve, write_events, write_network)
from metamob.network import build_network
from metamob.simulate import SimConfig, run_simulation

from conftest import trajs_of


def test_float_formatting_is_fixed_precision():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(2.0) == "2.0"
    assert format_float(1e300) == "1.0000000000000001e+300"
    assert format_float(math.inf) == "null"
    for x in (0.1, 1 / 3, 2.5e-12, 123456.789):
        assert float(format_float(x)) == x


def test_dumps_is_canonical():
    obj = {"b": [1, 2.0, np.float64(0.5)], "a": {"z": None, "y": True}, 3: "x"}
    assert dumps(obj) == '{"3":"x","a":{"y":true,"z":null},"b":[1,2.0,0.5]}'
    assert json.loads(dumps(obj, indent=2)) == json.loads(dumps(obj))
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_simulate_file_round_trip(tmp_path):
    res = run_simulation(SimConfig(agents=25, locations=200, steps=10, seed=3))
    path = tmp_path / "run.ndjson"
    write_events(path, res.events, {"config": res.config.to_dict()})
    log = read_events(path)
    assert log.generated and log.meta["config"]["agents"] == 25
    assert log.events == res.events
    assert canonicalize_trajectories(log.events) == canonicalize_trajectories(res.events)


def test_csv_with_column_mapping(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("user,when,land,extra\nu1,5,\"1,2\",x\nu1,1,\"0,0\",y\n")
    log = read_events(path, parse_mapping("agent=user,t=when,loc=land"))
    assert not log.generated
    trajs = canonicalize_trajectories(log.events)
    assert trajs["u1"].locations == ["0,0", "1,2"]


@pytest.mark.parametrize("text,line", [
    ('{"agent":"a","t":1,"loc":"A"}\n{"agent":"a","t":2}\n', 2),
    ('{"agent":"a","t":1,"loc":"A"}\n\n{not json\n', 3),
    ('{"agent":"a","t":-4,"loc":"A"}\n', 1),
    ('{"agent":"a","t":1.5,"loc":"A"}\n', 1),
    ('[1,2]\n', 1),
    ('{"agent":"a","t":1,"loc":"A"}\n{"meta":{}}\n', 2),
])
def test_malformed_ndjson_reports_line(tmp_path, text, line):
    path = tmp_path / "bad.ndjson"
    path.write_text(text)
    with pytest.raises(TrajectoryFormatError) as err:
        read_events(path)
    assert err.value.lineno == line
    assert f"line {line}" in str(err.value)


def test_malformed_csv_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("agent,t,loc\na,1,A\na,x,B\n")
    with pytest.raises(TrajectoryFormatError) as err:
        read_events(path)
    assert err.value.lineno == 3
    path.write_text("agent,time,loc\na,1,A\n")
    with pytest.raises(TrajectoryFormatError):
        read_events(path)


def test_mapping_errors():
    with pytest.raises(ValueError):
        parse_mapping("agent=x,who=y")
    with pytest.raises(ValueError):
        parse_mapping("agent")


def test_empty_input(tmp_path):
    path = tmp_path / "empty.ndjson"
    path.write_text("")
    assert read_events(path).events == []


def test_network_tables_round_trip(tmp_path):
    net = build_network(trajs_of({"a": list("ABAC"), "b": list("CCB")}))
    edges, nodes = write_network(net, tmp_path / "n")
    assert edges.read_text().splitlines()[0] == "src,dst,weight_events,weight_agents"
    assert nodes.read_text().splitlines()[0] == "loc,visitors,events,self_transitions,degree"
    assert "C,2,3,1,2" in nodes.read_text().splitlines()
    back = read_network(tmp_path / "n")
    assert back.nodes == net.nodes and back.edges == net.edges


def test_curve_csv(tmp_path):
    path = tmp_path / "c.csv"
    write_curve(path, binned_curve([1, 2, 3], [1.0, 0.5, 0.25]))
    lines = path.read_text().splitlines()
    assert lines[0] == "bin_center,value,count"
    assert lines[1] == "1.0,1.0,1"
    assert len(lines) == 3


def test_write_events_format(tmp_path):
    path = tmp_path / "e.ndjson"
    write_events(path, [MovementEvent("a17", 42, "L993")], {"x": 0.5})
    assert path.read_text() == '{"meta":{"x":0.5}}\n{"agent":"a17","t":42,"loc":"L993"}\n'
