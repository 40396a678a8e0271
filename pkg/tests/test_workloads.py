import random
import statistics

import numpy as np
import pytest

from edgesim.workloads import (Arrivals, WorkloadSpec, default_daily_profile, default_rate_map,
                               plan_drop, stream)


def times(spec, stop=1000.0, seed=1):
    arr = Arrivals(spec, stop, stream(seed, "t"), stream(seed, "s"))
    out = []
    while (x := arr.pop()) is not None:
        out.append(x)
    return out


def test_streams_are_independent_and_reproducible():
    assert stream(1, "a").random() == stream(1, "a").random()
    assert stream(1, "a").random() != stream(1, "b").random()
    assert stream(1, "a").random() != stream(2, "a").random()


def test_poisson_rate():
    got = times(WorkloadSpec("Poisson", "f", (10,), rate=2.0), stop=2000.0)
    assert len(got) / 2000.0 == pytest.approx(2.0, rel=0.05)


def test_uniform_interval_mean():
    got = times(WorkloadSpec("UniformInterval", "f", (10,), mean_interval=0.2), stop=500.0)
    gaps = np.diff([t for t, _ in got])
    assert gaps.mean() == pytest.approx(0.2, rel=0.05)
    assert gaps.max() <= 0.4


def test_session_is_periodic_with_one_size():
    got = times(WorkloadSpec("Session", "f", (1, 2, 3), period=0.033, start=1.0, stop=2.0))
    ts = [t for t, _ in got]
    assert ts[0] == 1.0 and ts[-1] < 2.0
    assert np.allclose(np.diff(ts), 0.033)
    assert len({s for _, s in got}) == 1


def test_sizes_drawn_from_set():
    got = times(WorkloadSpec("Poisson", "f", (5, 7), rate=10.0), stop=50.0)
    assert {s for _, s in got} == {5, 7}


@pytest.mark.parametrize("bad", [
    dict(kind="Burst", cls="f", sizes=(1,)),
    dict(kind="Poisson", cls="f", sizes=(1,)),
    dict(kind="Poisson", cls="f", sizes=(), rate=1.0),
    dict(kind="UniformInterval", cls="f", sizes=(1,), mean_interval=0.0),
    dict(kind="Session", cls="f", sizes=(1,), start=2.0, stop=1.0),
])
def test_workload_validation(bad):
    with pytest.raises(ValueError):
        WorkloadSpec(**bad)


def test_workload_round_trip():
    spec = WorkloadSpec("Poisson", "f", (1, 2), rate=3.0, chain={"class": "g", "size": 10})
    assert WorkloadSpec.from_dict(spec.to_dict()) == spec


def test_default_maps():
    m = default_rate_map()
    assert m.shape == (10, 10) and m.mean() == pytest.approx(1.0) and (m > 0).all()
    p = default_daily_profile()
    assert len(p) == 144 and p.mean() == pytest.approx(1.0) and (p > 0).all()
    # night is quieter than the afternoon
    assert p[:24].mean() < p[84:96].mean()


def test_uniform_map_cells_statistically_equal():
    counts = np.zeros((3, 3))
    rng = random.Random(5)
    for _ in range(300):
        plan = plan_drop(rng, np.ones((3, 3)), np.ones(1), 3, 0.05, 10.0)
        for s in plan.sessions:
            counts[s["cell"]] += 1
    expected = counts.sum() / 9
    # each cell within 4 standard deviations of a fair share
    assert np.all(np.abs(counts - expected) < 4 * np.sqrt(expected))


def test_single_active_cell():
    rate_map = np.zeros((3, 3))
    rate_map[1, 2] = 1.0
    rng = random.Random(9)
    cells = set()
    for _ in range(20):
        cells |= {s["cell"] for s in plan_drop(rng, rate_map, np.ones(1), 3, 0.5, 10.0).sessions}
    assert cells == {(1, 2)}


def test_drop_sessions_respect_bounds():
    rng = random.Random(2)
    for _ in range(20):
        plan = plan_drop(rng, default_rate_map(), default_daily_profile(), 3, 0.05, 10.0)
        assert 0 <= plan.origin[0] <= 7 and 0 <= plan.origin[1] <= 7
        for s in plan.sessions:
            assert 0.0 <= s["start"] <= s["stop"] <= 10.0
            assert 5000 <= s["size"] <= 15000
    with pytest.raises(ValueError):
        plan_drop(rng, np.ones((2, 2)), np.ones(1), 3, 0.1, 1.0)


def test_prefill_matches_steady_state_occupancy():
    # mean number of sessions in progress = rate * mean length
    rng = random.Random(11)
    lam = 0.02
    counts = []
    for _ in range(400):
        plan = plan_drop(rng, np.ones((1, 1)), np.ones(1), 1, lam, 1e-9)
        counts.append(sum(1 for s in plan.sessions if s["start"] < 0.033))
    assert statistics.fmean(counts) == pytest.approx(lam * 45.0, rel=0.2)
