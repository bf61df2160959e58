import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sidelink_sim import l2s
from sidelink_sim.errors import InvalidInputError, TableParseError


def make_table(rows=None):
    snr = np.arange(-2.0, 3.0)
    vel = [100.0, 300.0, 500.0]
    if rows is None:
        rows = [[0.9, 0.1, 0.01, 1e-4, 0.0], [1.0, 0.5, 0.1, 0.01, 0.0], [1.0, 1.0, 1.0, 1.0, 1.0]]
    return l2s.L2sTable(snr, vel, rows, {"seed": 1})


def test_grid_points_are_exact():
    t = make_table()
    for i, v in enumerate(t.velocities_kmh):
        for j, s in enumerate(t.snr_grid_db):
            assert t.lookup(s, v) == t.bler[i, j]


def test_log_linear_midpoint():
    assert l2s.lookup(make_table(), -0.5, 100) == pytest.approx(10 ** -1.5, rel=1e-12)
    assert round(make_table().lookup(-0.5, 100), 4) == 0.0316


def test_clamps_at_both_edges():
    t = make_table()
    assert t.lookup(-50, 100) == 0.9
    assert t.lookup(2.0001, 500) == 0.0
    assert t.lookup(99, 300) == 0.0


def test_zero_entries_floor_and_refloor():
    t = make_table()
    # Between 1e-4 and 0 (floored to 1e-6) the result stays positive until the knot.
    assert 1e-6 < t.lookup(1.5, 100) < 1e-4
    assert t.lookup(2.0, 100) == 0.0


def test_array_lookup_matches_scalar():
    t = make_table()
    s = np.linspace(-3, 3, 25)
    assert np.allclose(t.lookup(s, 300), [t.lookup(x, 300) for x in s])


def test_velocity_snapping_ties_go_low():
    t = make_table()
    assert t.snapped_velocity(200) == 100
    assert t.snapped_velocity(201) == 300
    assert t.snapped_velocity(400) == 300
    assert t.snapped_velocity(1e4) == 500


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=30))
def test_lookup_non_increasing_for_monotone_rows(points):
    t = make_table()
    s = np.sort(np.asarray(points))
    for v in t.velocities_kmh:
        assert np.all(np.diff(t.lookup(s, v)) <= 1e-15)


def test_continuity_at_knots():
    t = make_table()
    for s in t.snr_grid_db[1:-1]:
        assert t.lookup(s - 1e-9, 300) == pytest.approx(t.lookup(s + 1e-9, 300), rel=1e-6)


def test_invalid_tables_rejected():
    with pytest.raises(InvalidInputError):
        l2s.L2sTable([], [], np.zeros((0, 0)))
    with pytest.raises(InvalidInputError):
        l2s.L2sTable([0, 1], [100], [[0.5, 1.5]])
    with pytest.raises(InvalidInputError):
        l2s.L2sTable([1, 0], [100], [[0.5, 0.1]])


def test_save_load_roundtrip(tmp_path):
    t = make_table()
    t.bler[1, 1] = 1 / 3
    l2s.save(t, tmp_path / "t.json")
    back = l2s.load(tmp_path / "t.json")
    assert back == t.canonical()
    assert back.bler[1, 1] == 0.333333333
    assert back.metadata == {"seed": 1}


def test_non_monotone_row_loads_with_warning(tmp_path):
    t = make_table([[0.9, 0.2, 0.3, 0.0, 0.0], [1, 1, 1, 1, 1], [1, 1, 1, 1, 1]])
    assert t.non_monotone and t.monotonicity_violations() == [(100.0, 0.0, pytest.approx(0.1))]
    l2s.save(t, tmp_path / "t.json")
    with pytest.warns(RuntimeWarning):
        back = l2s.load(tmp_path / "t.json")
    assert back.non_monotone
    assert 0.2 < back.lookup(-0.5, 100) < 0.3


def test_truncated_file_names_missing_section(tmp_path):
    text = json.dumps(make_table().to_dict(), indent=1, sort_keys=True)
    cut = text[:text.index('"metadata"')]
    (tmp_path / "t.json").write_text(cut)
    with pytest.raises(TableParseError) as exc:
        l2s.load(tmp_path / "t.json")
    assert exc.value.location == "metadata"
    assert "metadata" in str(exc.value)


def test_malformed_entries_report_location():
    d = make_table().to_dict()
    d["bler"][2][3] = "x"
    with pytest.raises(TableParseError) as exc:
        l2s.table_from_dict(d)
    assert exc.value.location == "bler[2][3]"
    d = make_table().to_dict()
    del d["velocities_kmh"]
    with pytest.raises(TableParseError, match="velocities_kmh"):
        l2s.table_from_dict(d)


def test_clean_table_loads_without_warning(tmp_path):
    l2s.save(make_table(), tmp_path / "t.json")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        l2s.load(tmp_path / "t.json")
