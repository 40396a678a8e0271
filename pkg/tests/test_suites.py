import json
import math

import numpy as np
import pytest
from scipy import stats

from edgesim import suites


def test_mean_ci():
    m, lo, hi = suites.mean_ci([1.0, 2.0, 3.0])
    half = stats.t.ppf(0.975, 2) * 1.0 / math.sqrt(3)
    assert m == 2.0 and (lo, hi) == pytest.approx((2 - half, 2 + half))
    assert suites.mean_ci([5.0])[0] == 5.0 and math.isnan(suites.mean_ci([5.0])[1])
    assert all(math.isnan(x) for x in suites.mean_ci([]))


def test_intervals_overlap():
    assert suites.intervals_overlap((0, 0, 1), (0, 1, 2))
    assert not suites.intervals_overlap((0, 0, 1), (0, 1.5, 2))
    assert suites.intervals_overlap((0, 0, 1), (0, 1.5, 2), slack=0.6)


def test_small_suite_tables_and_files(tmp_path):
    res = suites.clique_suite(reps=2, duration=6.0, policies=("Est", "Legacy"), others=(1,))
    assert [(g["case"], g["policy"]) for g in res.groups] == [(1, "Est"), (1, "Legacy")]
    assert len(res.runs(1, "Est")) == 2
    assert res.runs(1, "Est")[0]["seed"] != res.runs(1, "Est")[1]["seed"]
    rows = res.table()
    assert {"p90_mean", "p90_low", "p90_high"} <= set(rows[0])
    assert "Legacy" in res.format_table()
    paths = res.write(str(tmp_path))
    assert [p.rsplit("/", 1)[1] for p in paths] == ["clique-table.csv", "clique-runs.csv",
                                                     "clique-summary.json"]
    json.loads((tmp_path / "clique-summary.json").read_text())


def test_example_design():
    d = suites.example_design(replications=3)
    assert d.k == 6 and d.replications == 3
    assert set(f.name for f in d.factors) <= set(suites.DESIGN_FACTORS)


def test_design_responses_shape():
    d = suites.example_design(replications=1)
    d.factors = d.factors[:1]
    y = suites.design_responses(d, duration=4.0)
    assert y.shape == (2, 1) and np.all(np.isfinite(y))
