"""Bundled scenario families and their calibration.

Computers are simulated with a core speed of 1e9 operations per second, so
``ops_offset`` and ``ops_slope`` read directly as nanoseconds of single-core
work. Calibration choices:

* face detection (limitations and clique families): 5 ms fixed cost plus
  2000 ops per input byte, i.e. 45 ms for a 320x240 picture (20 kB), 125 ms
  for 640x480 (60 kB), 245 ms for 1024x768 (120 kB) and 365 ms for
  1280x960 (180 kB); 50 MB of memory plus 100 bytes per input byte; the
  response is 5% of the request. Eye detection uses the same cost model
  on a 10 kB face crop (25 ms).
* augmented reality (fat-tree family): 5 ms fixed cost plus 2000 ops per
  byte, so 15 ms at 5000 B and 35 ms at 15000 B; responses as large as
  requests.
"""

from __future__ import annotations

import copy

from edgesim.scenario import Scenario

CORE_SPEED = 1e9

PICTURES = {"320x240": 20_000, "640x480": 60_000, "1024x768": 120_000, "1280x960": 180_000}
FACE = {"ops_offset": 5e6, "ops_slope": 2000.0, "mem_offset": 50e6, "mem_slope": 100.0}
FACE_OUTPUT_RATIO = 0.05
# eye detection runs on the cropped face
EYES_SIZE = 10_000
AR = {"ops_offset": 5e6, "ops_slope": 2000.0, "mem_offset": 20e6, "mem_slope": 100.0}
AR_SIZES = tuple(range(5000, 15001, 1000))
# worst tolerable round trip for one AR frame
AR_TARGET = 0.075

LIMITATION_CASES = ("Baseline", "CPU", "Memory", "Network")
LIMITATION_POLICIES = ("Probe", "RPI", "Est")
CLIQUE_POLICIES = ("Est", "RR", "Legacy")
FATTREE_POLICIES = ("Est", "Centralized", "Probe", "Legacy")
# new AR sessions per second per unit of rate-map activity
FATTREE_SESSIONS = 0.02


def _container(cls: str, calib: dict, workers: int) -> dict:
    return {"class": cls, "workers": workers, **calib}


def limitations(case: str, policy: str = "Est", duration: float = 120.0, seed: int = 1) -> Scenario:
    """Two edge computers behind a root; the tagged client can use either.

    The left computer offers ``f1`` and ``f2``, the right one ``f2`` and
    ``f3``. Interfering clients on each side ask for the class only their
    own computer offers; the tagged client on the root asks for ``f2``.
    """
    if case not in LIMITATION_CASES:
        raise ValueError(f"case must be one of {LIMITATION_CASES}, got {case!r}")
    interferers = 0 if case == "Baseline" else 3
    lhs = {"node": "lhs", "cores": 3, "core_speed": CORE_SPEED, "memory": None,
           "containers": [_container("f1", FACE, 8), _container("f2", FACE, 8)]}
    rhs = {"node": "rhs", "cores": 3, "core_speed": CORE_SPEED, "memory": None,
           "containers": [_container("f2", FACE, 8), _container("f3", FACE, 8)]}
    if case == "CPU":
        rhs["cores"] = 1
    if case == "Memory":
        # room for a single face-detection task at a time
        rhs["memory"] = 100e6
    clients = [{
        "id": "tagged", "tagged": True,
        "workload": {"kind": "UniformInterval", "class": "f2",
                     "sizes": [PICTURES["320x240"]], "mean_interval": 0.2}}]
    all_sizes = sorted(PICTURES.values())
    for side, cls in (("l", "f1"), ("r", "f3")):
        for i in range(1, interferers + 1):
            clients.append({
                "id": f"{side}{i}",
                "workload": {"kind": "UniformInterval", "class": cls, "sizes": all_sizes,
                             "mean_interval": 1.0}})
    background = []
    if case == "Network":
        background.append({"a": "root", "b": "lhs", "fraction": 0.8, "on": 3.0, "period": 5.0})
    cfg = {
        "name": f"limitations-{case}-{policy}",
        "duration": duration, "seed": seed,
        "topology": {"builder": "dumbbell_het",
                     "params": {"lhs_clients": interferers, "rhs_clients": interferers}},
        "classes": [{"name": c, "output_ratio": FACE_OUTPUT_RATIO} for c in ("f1", "f2", "f3")],
        "computers": [lhs, rhs],
        "policy": {"kind": policy},
        "clients": clients,
        "background": background,
    }
    return Scenario.from_dict(cfg)


def clique(others: int, policy: str = "Est", duration: float = 120.0, seed: int = 1,
           other_rate: float = 4.0, roam_interval: float = 10.0, eyes: bool = False,
           policy_params: dict | None = None) -> Scenario:
    """Four fully meshed edge nodes; the computer on node i has i cores.

    One tagged client per node sends a 640x480 picture per second on
    average. ``others`` further clients roam across the nodes, moving to a
    random one every ``roam_interval`` seconds, with random picture sizes.
    With ``eyes`` every face detection is followed by an eye detection on
    the face crop (a second, smaller lambda).
    """
    n = 4
    extra_terminals = []
    clients = []
    chain = {"class": "eyes", "size": EYES_SIZE} if eyes else None
    for i in range(1, n + 1):
        clients.append({"id": f"c{i}", "tagged": True,
                        "workload": {"kind": "Poisson", "class": "face",
                                     "sizes": [PICTURES["640x480"]], "rate": 1.0,
                                     "chain": chain}})
    for j in range(1, others + 1):
        terms = []
        for i in range(1, n + 1):
            tid = f"o{j}@n{i}"
            extra_terminals.append({"id": tid, "to": f"n{i}"})
            terms.append(tid)
        clients.append({"id": f"o{j}", "terminals": terms, "roam_interval": roam_interval,
                        "workload": {"kind": "Poisson", "class": "face",
                                     "sizes": sorted(PICTURES.values()), "rate": other_rate,
                                     "chain": chain}})
    classes = [{"name": "face", "output_ratio": FACE_OUTPUT_RATIO}]
    containers = [_container("face", FACE, 8)]
    if eyes:
        classes.append({"name": "eyes", "output_ratio": FACE_OUTPUT_RATIO})
        containers.append(_container("eyes", FACE, 8))
    computers = [{"node": f"n{i}", "cores": i, "core_speed": CORE_SPEED, "memory": None,
                  "containers": containers} for i in range(1, n + 1)]
    params = _policy_params(policy, sorted(PICTURES.values()))
    if policy_params:
        params.update(policy_params)
    cfg = {
        "name": f"clique-{others}-{policy}",
        "duration": duration, "seed": seed,
        "topology": {"builder": "clique", "params": {"n": n}, "terminals": extra_terminals},
        "classes": classes,
        "computers": computers,
        "policy": {"kind": policy, "params": params},
        "clients": clients,
    }
    return Scenario.from_dict(cfg)


def fattree(policy: str = "Est", duration: float = 10.0, seed: int = 1,
            sessions_per_unit: float = FATTREE_SESSIONS) -> Scenario:
    """Nine two-core base stations in three pods; AR sessions dropped on a 3x3 grid."""
    computers = []
    for p in range(1, 4):
        for b in range(1, 4):
            computers.append({"node": f"bs{p}.{b}", "cores": 2, "core_speed": CORE_SPEED,
                              "memory": None, "containers": [_container("ar", AR, 64)]})
    buckets = [float(s) for s in AR_SIZES]
    cfg = {
        "name": f"fattree-{policy}",
        "duration": duration, "seed": seed,
        "topology": {"builder": "fat_tree", "params": {"pods": 3, "bs_per_pod": 3, "sectors": 3}},
        "classes": [{"name": "ar", "output_ratio": 1.0}],
        "computers": computers,
        "policy": {"kind": policy, "params": _policy_params(policy, buckets)},
        "clients": [],
        "drop": {"class": "ar", "sizes": list(AR_SIZES), "sessions_per_unit": sessions_per_unit,
                 "region": 3, "session_range": [30.0, 60.0], "period": 0.033},
        "load_sample_interval": 0.0,
    }
    return Scenario.from_dict(cfg)


def _policy_params(policy: str, buckets) -> dict:
    if policy.lower() in ("est", "centralized"):
        return {"buckets": list(buckets)}
    return {}


def with_policy(scenario: Scenario, policy: str) -> Scenario:
    """Same scenario under another policy (bucket settings kept where they apply)."""
    cfg = copy.deepcopy(scenario.to_dict())
    buckets = cfg["policy"]["params"].get("buckets")
    cfg["policy"] = {"kind": policy,
                     "params": _policy_params(policy, buckets) if buckets else {}}
    cfg["name"] = cfg["name"].rsplit("-", 1)[0] + f"-{policy}"
    return Scenario.from_dict(cfg)
