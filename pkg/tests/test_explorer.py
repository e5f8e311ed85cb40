import csv
import json

import pytest

from phaselimit.explorer import (
    Limits, SweepConfig, SweptParameter, random_scheme, run_trial, search_counterexample, sweep, trial_seed,
)
from phaselimit.fixtures import bragg_two_level, two_level
from phaselimit.manifold import solve_offsets
from phaselimit.scheme import scheme_to_dict, serialize_scheme


def test_seed_zero_minimal_limits_is_two_level():
    s = random_scheme(0, (2, 1, 1))
    assert len(s.levels) == 2 and len(s.lasers) == 1 and len(s.transitions) == 1


def test_random_scheme_deterministic():
    for seed in range(20):
        assert serialize_scheme(random_scheme(seed)) == serialize_scheme(random_scheme(seed))


def test_random_schemes_always_accepted():
    for seed in range(1000):
        s = random_scheme(trial_seed(99, seed), (8, 4, 3))
        assert solve_offsets(s)
        assert len(s.levels) <= 8 and len(s.lasers) <= 4
        for la in s.laser_names:
            assert 1 <= len(s.transitions_of(la)) <= 3


def test_random_detunings_in_range():
    dets = [lv.detuning for seed in range(300) for lv in random_scheme(seed).levels]
    zeros = sum(d == 0 for d in dets)
    assert 0.1 < zeros / len(dets) < 0.3
    assert all(d == 0 or 1e3 <= abs(d) <= 1e9 for d in dets)


def test_limits_validated():
    with pytest.raises(ValueError):
        Limits(9, 1, 1)
    with pytest.raises(ValueError):
        Limits(2, 0, 1)


def test_single_trial_deterministic():
    a = search_counterexample(17, 1)
    b = search_counterexample(17, 1)
    assert a == b and a.accepted == 1


def test_worker_count_independence():
    a = search_counterexample(5, 40, workers=1, keep_rows=True)
    b = search_counterexample(5, 40, workers=3, keep_rows=True)
    assert a == b


def test_two_level_search_ratio_range():
    res = search_counterexample(1, 300, (2, 1, 1))
    assert not res.violations
    assert 0.85 <= res.best_ratio <= 1.0 + 1e-9


def test_trial_rows_carry_seed():
    t = run_trial(trial_seed(3, 4))
    assert all(r["seed"] == t["seed"] for r in t["rows"])
    assert run_trial(t["seed"]) == t


def write_template(tmp_path, scheme):
    p = tmp_path / "scheme.json"
    p.write_text(serialize_scheme(scheme))
    return str(p)


def test_sweep_detuning_ratio_approaches_one(tmp_path):
    cfg = SweepConfig.from_dict({
        "template": write_template(tmp_path, two_level()),
        "state": {"dressed": 0},
        "parameters": [{"name": "levels.e.detuning", "values": [1.0, 10.0, 100.0]}],
    })
    rows = sweep(cfg)
    ratios = [r["ratio"] for r in rows]
    assert all(r["status"] == "ok" for r in rows)
    assert ratios == sorted(ratios) and ratios[-1] > 0.9999


def test_empty_sweep_single_row():
    rows = sweep(SweepConfig(scheme_to_dict(two_level()), []))
    assert len(rows) == 1 and rows[0]["status"] == "ok"


def test_sweep_flags_rejected_cell():
    doc = scheme_to_dict(bragg_two_level())
    doc["levels"].append({"name": "f", "detuning": 0.5})
    cfg = SweepConfig(doc, [SweptParameter("transitions.1.upper", ["e", "f", "g"])], state={"dressed": 0})
    rows = sweep(cfg)
    status = {r["cell"]: r["status"] for r in rows}
    assert len(rows) == 4  # one row per laser for the accepted cell
    assert status[0] == "rejected: Bragg cycle"
    assert status[1] == "ok"
    assert status[2].startswith("invalid")


def test_sweep_range_grid_and_validation():
    p = SweptParameter.from_dict({"name": "x", "range": [1.0, 100.0], "grid": 3, "scale": "log"})
    assert p.values == pytest.approx([1, 10, 100])
    with pytest.raises(ValueError):
        SweptParameter.from_dict({"name": "x", "range": [2.0, 1.0], "grid": 3})
    with pytest.raises(ValueError):
        SweptParameter.from_dict({"name": "x", "range": [1.0, 2.0], "grid": 0})


def test_sweep_resumes(tmp_path):
    out = tmp_path / "out.csv"
    params = [SweptParameter("levels.e.detuning", [1.0, 2.0, 3.0])]
    cfg = SweepConfig(scheme_to_dict(two_level()), params, state={"dressed": 0}, output=str(out))
    first = sweep(cfg)
    assert len(first) == 3
    # drop the last row as if the run had been interrupted
    lines = out.read_text().splitlines()
    out.write_text("\n".join(lines[:-1]) + "\n")
    again = sweep(cfg)
    assert [r["cell"] for r in again] == [2]
    with open(out) as fh:
        cells = sorted(int(r["cell"]) for r in csv.DictReader(fh))
    assert cells == [0, 1, 2]


def test_sweep_bad_path_recorded_in_row():
    rows = sweep(SweepConfig(scheme_to_dict(two_level()), [SweptParameter("levels.nope.detuning", [1.0])]))
    assert rows[0]["status"].startswith("invalid")
