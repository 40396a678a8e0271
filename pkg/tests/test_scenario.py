import copy
import math

import pytest

from edgesim import scenarios
from edgesim.policies import PolicyKind
from edgesim.scenario import ConfigError, Scenario

BASE = {
    "duration": 10.0,
    "topology": {"nodes": [{"id": "c", "role": "Client"}, {"id": "k", "role": "Computer"}],
                 "links": [{"a": "c", "b": "k", "capacity": 1e8, "latency": 1e-6}]},
    "classes": [{"name": "f"}],
    "computers": [{"node": "k", "cores": 2, "containers": [{"class": "f", "ops_slope": 1.0}]}],
    "policy": {"kind": "Est"},
    "clients": [{"id": "c", "workload": {"kind": "Poisson", "class": "f", "sizes": [10],
                                         "rate": 1.0}}],
}


def with_change(path, value):
    cfg = copy.deepcopy(BASE)
    node = cfg
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    return cfg


@pytest.mark.parametrize("path,value,field", [
    (("policy", "kind"), "Random", "policy.kind"),
    (("duration",), -1.0, "duration"),
    (("warmup",), 1.0, "warmup"),
    (("seed",), -3, "seed"),
    (("computers", 0, "node"), "nowhere", "computers[0].node"),
    (("computers", 0, "cores"), 0, "computers[0].cores"),
    (("computers", 0, "containers", 0, "class"), "zzz", "computers[0].containers[0].class"),
    (("clients", 0, "workload", "class"), "zzz", "clients[0].workload.class"),
    (("clients", 0, "workload", "rate"), 0.0, "clients[0].workload"),
    (("clients", 0, "terminals"), ["x"], "clients[0].terminals"),
    (("policy", "params"), {"window": 3}, "policy.params.window"),
    (("topology",), {"builder": "ring"}, "topology.builder"),
])
def test_validation_names_the_field(path, value, field):
    with pytest.raises(ConfigError) as err:
        Scenario.from_dict(with_change(path, value))
    assert str(err.value).startswith(field)


def test_unknown_and_missing_sections():
    with pytest.raises(ConfigError, match="^extra: unknown section"):
        Scenario.from_dict({**BASE, "extra": 1})
    cfg = dict(BASE)
    del cfg["policy"]
    with pytest.raises(ConfigError, match="^policy: missing"):
        Scenario.from_dict(cfg)
    with pytest.raises(ConfigError, match="not valid JSON"):
        Scenario.from_json("{")


def test_defaults_are_filled_and_echoed():
    sc = Scenario.from_dict(BASE)
    d = sc.to_dict()
    assert d["warmup"] == 0.1 and d["seed"] == 1 and d["drain"] == 5.0
    assert d["computers"][0]["memory"] == "inf"
    assert math.isinf(sc.computers["k"].memory)
    assert sc.policy is PolicyKind.EST
    assert sc.window == (1.0, 10.0)


@pytest.mark.parametrize("sc", [
    Scenario.from_dict(BASE),
    scenarios.limitations("Network", "RPI"),
    scenarios.clique(3, "RR", eyes=True),
    scenarios.fattree("Centralized"),
], ids=["edge-list", "limitations", "clique", "fattree"])
def test_round_trip(sc):
    again = Scenario.from_json(sc.to_json())
    assert again.to_dict() == sc.to_dict()
    assert again.config_hash() == sc.config_hash()


def test_config_hash_tracks_content():
    a = Scenario.from_dict(BASE)
    assert a.replace(duration=11.0).config_hash() != a.config_hash()
    assert a.replace(policy="Legacy").policy is PolicyKind.LEGACY


def test_centralized_needs_a_root():
    with pytest.raises(ConfigError, match="^policy.kind: Centralized"):
        Scenario.from_dict(with_change(("policy", "kind"), "Centralized"))


def test_bundled_families():
    assert len(scenarios.limitations("Baseline").clients) == 1
    assert len(scenarios.limitations("CPU").clients) == 7
    assert scenarios.limitations("CPU").computers["rhs"].cores == 1
    assert scenarios.limitations("Memory").computers["rhs"].memory == 100e6
    assert len(scenarios.limitations("Network").background) == 1
    with pytest.raises(ValueError):
        scenarios.limitations("Disk")
    cl = scenarios.clique(4)
    assert [cl.computers[f"n{i}"].cores for i in range(1, 5)] == [1, 2, 3, 4]
    assert sum(c.tagged for c in cl.clients) == 4
    ft = scenarios.fattree()
    assert len(ft.computers) == 9 and ft.drop.region == 3
    assert scenarios.with_policy(ft, "Probe").policy_params == {}
