import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memkernel.errors import ConfigurationError, DataError
from memkernel.forward import SpaceTimeField
from memkernel.grid import RadialGrid, TimeGrid
from memkernel.io import (
    atomic_write_text,
    load_config,
    read_field,
    read_key_values,
    read_profile,
    write_field,
    write_key_values,
    write_profile,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (4, 6), elements=finite))
def test_field_round_trip_is_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("io") / "f.csv"
    fld = SpaceTimeField(RadialGrid(1.0, 2.0, 6), TimeGrid(0.7, 3), values)
    back = read_field(write_field(path, fld))
    assert np.array_equal(back.values, fld.values)
    assert back.grid.n_nodes == 6 and back.tgrid.n_nodes == 4
    assert np.allclose(back.grid.nodes, fld.grid.nodes, rtol=0, atol=1e-15)


def test_field_layout(tmp_path):
    fld = SpaceTimeField(RadialGrid(1.0, 2.0, 3), TimeGrid(1.0, 1), np.arange(6.0).reshape(2, 3))
    lines = write_field(tmp_path / "f.csv", fld).read_text().splitlines()
    assert lines[0] == "t,r,value"
    assert lines[1:4] == ["0,1,0", "0,1.5,1", "0,2,2"]
    assert lines[4] == "1,1,3"


def test_profile_round_trip(tmp_path):
    tg = TimeGrid(1.0, 4)
    vals = np.exp(-tg.nodes)
    t, v = read_profile(write_profile(tmp_path / "g.csv", tg, vals))
    assert np.array_equal(t, tg.nodes) and np.array_equal(v, vals)


def test_key_values(tmp_path):
    path = write_key_values(tmp_path / "d.csv", {"a": 0.1, "ok": True, "n": 3, "name": "picard"})
    assert path.read_text() == "key,value\na,0.10000000000000001\nok,true\nn,3\nname,picard\n"
    assert read_key_values(path)["ok"] == "true"


def test_atomic_write_creates_parents_and_leaves_no_temp(tmp_path):
    target = tmp_path / "deep" / "dir" / "x.txt"
    atomic_write_text(target, "hello\n")
    assert target.read_text() == "hello\n"
    assert [p.name for p in target.parent.iterdir()] == ["x.txt"]


@pytest.mark.parametrize(
    ("text", "match"),
    [
        ("t,r\n0,1\n", "header"),
        ("t,r,value\n0,1\n", "columns"),
        ("t,r,value\n0,1,x\n0,2,1\n", "could not convert"),
        ("t,r,value\n0,1,0\n0,2,0\n1,1,0\n", "grid"),
        ("t,r,value\n0,1,0\n0,1.2,0\n0,2,0\n1,1,0\n1,1.2,0\n1,2,0\n", "uniform"),
        ("t,r,value\n0.5,1,0\n0.5,2,0\n1,1,0\n1,2,0\n", "start at 0"),
        ("t,r,value\n0,2,0\n0,1,0\n1,2,0\n1,1,0\n", "ordered"),
    ],
)
def test_malformed_fields(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataError, match=match):
        read_field(path)


def test_config_comments_and_errors():
    parser = load_config(text="[grids]\nn_r = 16  # radial\n")
    assert parser["grids"]["n_r"] == "16"
    with pytest.raises(ConfigurationError):
        load_config(text="n_r = 16\n")
