import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phaselimit.fixtures import bragg_two_level, lambda_scheme, two_level
from phaselimit.manifold import (
    ManifoldMap, Rejection, brute_force_accepts, cycle_tally, enumerate_manifold,
    enumerate_simple_cycles, solve_offsets, solve_offsets_bfs,
)
from phaselimit.scheme import LaserSpec, LevelScheme, LevelSpec, PhysicalSettings, TransitionSpec


def random_multigraph(rng, max_levels=6, max_lasers=3, max_edges=8):
    n = int(rng.integers(2, max_levels + 1))
    m = int(rng.integers(1, max_lasers + 1))
    edges = set()
    for _ in range(int(rng.integers(1, max_edges + 1))):
        a, b = rng.choice(n, 2, replace=False)
        edges.add((int(rng.integers(0, m)), int(a), int(b)))
    return LevelScheme(
        [LevelSpec(f"l{i}", 0.0) for i in range(n)],
        [LaserSpec(f"m{j}", 1.0) for j in range(m)],
        [TransitionSpec(f"m{j}", f"l{a}", f"l{b}", rabi_frequency=1.0, decay_rate=1.0) for j, a, b in sorted(edges)],
        PhysicalSettings.natural(),
    )


def test_two_level_accepted():
    mm = solve_offsets(two_level())
    assert isinstance(mm, ManifoldMap)
    assert mm.as_dict() == {"p": {"g": 0, "e": -1}}


def test_lambda_offsets():
    mm = solve_offsets(lambda_scheme(), anchor="1")
    assert mm.as_dict() == {"a": {"1": 0, "2": -1, "3": -1}, "b": {"1": 0, "2": 0, "3": 1}}


def test_bragg_rejected_with_two_cycle():
    s = bragg_two_level()
    r = solve_offsets(s)
    assert isinstance(r, Rejection) and not r
    assert len(r.cycle) == 2 and sorted(r.cycle) == [0, 1]
    assert r.reason == "Bragg cycle"
    tally = cycle_tally(s, r.cycle, r.start)
    assert np.array_equal(tally, r.tally) and np.any(tally != 0)
    assert sorted(r.tally) == [-1, 1]


def test_anchor_changes_offsets_by_a_constant_column():
    s = lambda_scheme()
    base = solve_offsets(s, "1")
    for anchor in s.level_names:
        mm = solve_offsets(s, anchor)
        diff = mm.offsets - base.offsets
        assert np.all(diff == diff[:, [0]])
        assert np.all(mm.column(anchor) == 0)


def test_offsets_satisfy_every_edge(rng):
    for _ in range(200):
        s = random_multigraph(rng)
        mm = solve_offsets(s)
        if not mm:
            continue
        for t in s.transitions:
            d = mm.column(t.upper) - mm.column(t.lower)
            e = np.zeros(len(s.lasers), int)
            e[s.laser_index(t.laser)] = -1
            assert np.array_equal(d, e)


def test_union_find_matches_brute_force_and_bfs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        s = random_multigraph(rng)
        uf, bfs = solve_offsets(s), solve_offsets_bfs(s)
        assert bool(uf) == brute_force_accepts(s) == bool(bfs)
        if uf:
            assert np.array_equal(uf.offsets, bfs.offsets)
        else:
            assert np.any(cycle_tally(s, uf.cycle, uf.start) != 0)


def test_cycle_tally_requires_closed_walk():
    s = lambda_scheme()
    with pytest.raises(ValueError):
        cycle_tally(s, (0,), "1")


def test_enumerate_simple_cycles_counts():
    assert enumerate_simple_cycles(two_level()) == []
    assert len(enumerate_simple_cycles(bragg_two_level())) == 1


def test_disconnected_level_warns(caplog):
    s = LevelScheme(
        [LevelSpec("g", 0.0), LevelSpec("e", 0.0), LevelSpec("x", 0.0)],
        [LaserSpec("p", 1.0)],
        [TransitionSpec("p", "g", "e", rabi_frequency=1.0, decay_rate=1.0)],
        PhysicalSettings.natural(),
    )
    with caplog.at_level("WARNING"):
        mm = solve_offsets(s)
    assert "x" not in mm.reachable
    assert "x" in caplog.text


def test_enumerate_manifold_photon_numbers():
    mm = solve_offsets(lambda_scheme())
    basis = enumerate_manifold(mm, [10, 20])
    photons = {b.level: tuple(b.photons) for b in basis}
    assert photons == {"1": (10, 20), "2": (9, 20), "3": (9, 21)}
    with pytest.raises(ValueError):
        enumerate_manifold(mm, [0, 0])


@given(st.permutations(range(3)))
def test_verdict_independent_of_transition_order(perm):
    s = lambda_scheme()
    t = [s.transitions[i % 2] for i in perm if i < 2]
    s2 = LevelScheme(s.levels, s.lasers, t, s.settings)
    assert solve_offsets(s2, "1").as_dict() == solve_offsets(s, "1").as_dict()
