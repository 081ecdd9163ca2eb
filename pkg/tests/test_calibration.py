import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chargeloc.calibration import (
    CalibrationError, GridSpec, SessionsData, grid_search, kl_by_station, kl_divergence, load_sessions,
    predicted_shares, sessions_from_rows, write_sessions,
)
from chargeloc.instance import load_instance


@pytest.fixture(scope="module")
def calib(data_dir):
    return load_instance(data_dir / "calib.json")


@pytest.fixture(scope="module")
def sessions(data_dir):
    return load_sessions(data_dir / "calib_sessions.csv")


def test_kl_examples():
    assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == pytest.approx(0.0, abs=1e-12)
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), rel=1e-9)
    expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
    assert kl_divergence([0.5, 0.5], [0.9, 0.1]) == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(0.5108, abs=1e-4)


def test_kl_smoothing_keeps_it_finite():
    assert math.isfinite(kl_divergence([0.5, 0.5], [1.0, 0.0]))


def test_kl_errors():
    with pytest.raises(CalibrationError):
        kl_divergence([0.5, 0.5], [1.0])
    with pytest.raises(CalibrationError):
        kl_by_station({"a": 1.0}, {"b": 1.0})


simplex = st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8).filter(lambda v: sum(v) > 1e-3)


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_kl_nonnegative_zero_iff_equal(data):
    p = np.array(data.draw(simplex))
    q = np.array(data.draw(st.lists(st.floats(1e-3, 1.0), min_size=len(p), max_size=len(p))))
    assert kl_divergence(p, q) >= 0
    assert kl_divergence(p, p) == pytest.approx(0.0, abs=1e-9)


def test_sessions_mean_per_day(tmp_path):
    rows = [{"station_id": "b", "date": "d1", "sessions": "4"}, {"station_id": "a", "date": "d1", "sessions": "2"},
            {"station_id": "b", "date": "d2", "sessions": "6"}]
    data = sessions_from_rows(rows)
    assert data.station_ids == ("a", "b")
    assert data.daily_sessions.tolist() == [1.0, 5.0]
    path = tmp_path / "s.csv"
    write_sessions(path, ["a", "b"], [1.0, 5.0], ["d1", "d2"])
    assert load_sessions(path).daily_sessions.tolist() == [1.0, 5.0]


def test_sessions_validation(tmp_path):
    with pytest.raises(CalibrationError):
        SessionsData(("a",), np.array([0.0]), 1)
    with pytest.raises(CalibrationError):
        sessions_from_rows([{"station_id": "a", "date": "x", "sessions": "-1"}])
    p = tmp_path / "bad.csv"
    p.write_text("station,date,count\n")
    with pytest.raises(CalibrationError):
        load_sessions(p)
    p.write_text("station_id,date,sessions\n")
    with pytest.raises(CalibrationError):
        load_sessions(p)


def test_grid_parsing(tmp_path):
    g = GridSpec.standard()
    assert len(g.cells()) == 6 * 6 * 6
    assert GridSpec.parse("alpha=0;beta=10,20;theta_inv=0").cells() == [(0.0, 10.0, 0.0), (0.0, 20.0, 0.0)]
    p = tmp_path / "g.json"
    p.write_text('{"alpha": [1], "beta": [2], "theta_inv": [3]}')
    assert GridSpec.parse(str(p)).cells() == [(1.0, 2.0, 3.0)]
    with pytest.raises(CalibrationError):
        GridSpec.parse("alpha=;beta=1;theta_inv=0")


def test_single_cell_grid(calib, sessions):
    res = grid_search(calib, sessions, GridSpec((0.0,), (10.0,), (0.0,)))
    assert len(res.ranking) == 1
    assert res.report_csv().count("\n") == 2


def test_unknown_station(calib):
    with pytest.raises(CalibrationError):
        grid_search(calib, SessionsData(("zz",), np.array([1.0]), 1), GridSpec((0.0,), (0.0,), (0.0,)))


def test_serial_equals_parallel(calib, sessions):
    g = GridSpec((0.0, 10.0), (10.0, 20.0), (0.0, 1.0))
    a = grid_search(calib, sessions, g, workers=1)
    b = grid_search(calib, sessions, g, workers=3)
    assert [(c.triplet, c.kl) for c in a.ranking] == [(c.triplet, c.kl) for c in b.ranking]
    assert all(x.kl <= y.kl for x, y in zip(a.ranking, a.ranking[1:]))


def test_failed_cells_are_recorded(calib, sessions, monkeypatch):
    import chargeloc.calibration as cal

    real = cal.predicted_shares

    def flaky(instance, ids, backend):
        if instance.disutility.alpha == 10.0:
            raise RuntimeError("solver exploded")
        return real(instance, ids, backend)

    monkeypatch.setattr(cal, "predicted_shares", flaky)
    res = grid_search(calib, sessions, GridSpec((0.0, 10.0), (10.0,), (0.0,)))
    assert len(res.ranking) == 1 and len(res.failures) == 1
    assert "solver exploded" in res.failures[0].error


def test_observed_shares_come_from_true_triplet(calib, sessions):
    pred = predicted_shares(calib.with_disutility(0, 10, 0), sessions.station_ids)
    assert kl_divergence(sessions.shares, pred) <= 1e-9
