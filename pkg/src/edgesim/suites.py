"""Experiment families: replicated runs, confidence intervals, comparison tables."""

from __future__ import annotations

import csv
import json
import math
import os
import statistics
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from edgesim import scenarios
from edgesim.engine import RunResult, derive_seed, monte_carlo_drops, run_many
from edgesim.factorial import Factor, FactorialDesign


def mean_ci(values, confidence: float = 0.95) -> tuple[float, float, float]:
    """Sample mean with a Student-t confidence interval (NaN bounds for n < 2)."""
    values = [float(v) for v in values]
    if not values:
        return math.nan, math.nan, math.nan
    m = statistics.fmean(values)
    if len(values) < 2:
        return m, math.nan, math.nan
    half = stats.t.ppf(0.5 + confidence / 2, len(values) - 1) * statistics.stdev(values) \
        / math.sqrt(len(values))
    return m, m - half, m + half


def intervals_overlap(a: tuple, b: tuple, slack: float = 0.0) -> bool:
    """True when two (mean, low, high) intervals share a point (within ``slack``)."""
    return a[1] <= b[2] + slack and b[1] <= a[2] + slack


def summarize(result: RunResult) -> dict:
    """The compact per-run record kept by suites (picklable, JSON friendly)."""
    return {
        "seed": result.seed,
        "p90": result.percentile(90),
        "samples": len(result.delays),
        "issued": result.issued,
        "ok": result.ok,
        "no_destination": result.no_destination,
        "dropped": result.dropped,
        "throughput": result.total_throughput,
        "utilization": dict(result.utilization),
        "busy_cores": dict(result.mean_busy_cores),
        "tagged_executed": dict(result.tagged_executed),
        "sessions": result.drop_info["sessions"] if result.drop_info else None,
        "events": result.events,
        "config_hash": result.config_hash,
    }


@dataclass
class SuiteResult:
    family: str
    # one dict per (case, policy) with the replicated per-run summaries
    groups: list[dict] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def group(self, case, policy: str) -> dict:
        for g in self.groups:
            if g["case"] == case and g["policy"] == policy:
                return g
        raise KeyError((case, policy))

    def runs(self, case, policy: str) -> list[dict]:
        return self.group(case, policy)["runs"]

    def p90_ci(self, case, policy: str) -> tuple[float, float, float]:
        return mean_ci(r["p90"] for r in self.runs(case, policy) if not math.isnan(r["p90"]))

    def table(self) -> list[dict]:
        """One row per (case, policy): mean and 95% CI of the main metrics."""
        rows = []
        for g in self.groups:
            runs = g["runs"]
            row = {"case": g["case"], "policy": g["policy"], "runs": len(runs)}
            p90 = [r["p90"] for r in runs if not math.isnan(r["p90"])]
            row["p90_mean"], row["p90_low"], row["p90_high"] = mean_ci(p90)
            row["throughput_mean"], row["throughput_low"], row["throughput_high"] = mean_ci(
                r["throughput"] for r in runs)
            for node in runs[0]["utilization"]:
                row[f"load_{node}"] = statistics.fmean(r["utilization"][node] for r in runs)
                row[f"busy_{node}"] = statistics.fmean(r["busy_cores"][node] for r in runs)
            if self.family == "fattree":
                row["dissatisfied"] = sum(
                    r["p90"] > scenarios.AR_TARGET for r in runs if not math.isnan(r["p90"])
                ) / len(runs)
            rows.append(row)
        return rows

    def format_table(self) -> str:
        rows = self.table()
        lines = [f"{'case':>10} {'policy':>12} {'p90 [ms] (95% CI)':>30} "
                 f"{'throughput [Mb/s]':>20}  loads"]
        for r in rows:
            ci = (f"{r['p90_mean'] * 1e3:9.2f} ({r['p90_low'] * 1e3:8.2f}, "
                  f"{r['p90_high'] * 1e3:8.2f})")
            loads = " ".join(f"{k[5:]}={v:.2f}" for k, v in r.items() if k.startswith("load_"))
            extra = f" dissatisfied={r['dissatisfied']:.2f}" if "dissatisfied" in r else ""
            lines.append(f"{str(r['case']):>10} {r['policy']:>12} {ci:>30} "
                         f"{r['throughput_mean'] / 1e6:20.3f}  {loads}{extra}")
        return "\n".join(lines)

    def write(self, out_dir: str) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        table = self.table()
        paths = [os.path.join(out_dir, f"{self.family}-table.csv"),
                 os.path.join(out_dir, f"{self.family}-runs.csv"),
                 os.path.join(out_dir, f"{self.family}-summary.json")]
        columns = list(dict.fromkeys(k for row in table for k in row))
        with open(paths[0], "w", newline="") as fh:
            w = csv.DictWriter(fh, columns, lineterminator="\n")
            w.writeheader()
            for row in table:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "policy", "replication", "seed", "p90", "samples", "issued", "ok",
                        "no_destination", "dropped", "throughput_bps", "sessions"])
            for g in self.groups:
                for i, r in enumerate(g["runs"]):
                    w.writerow([g["case"], g["policy"], i, r["seed"], repr(r["p90"]),
                                r["samples"], r["issued"], r["ok"], r["no_destination"],
                                r["dropped"], repr(r["throughput"]),
                                "" if r["sessions"] is None else r["sessions"]])
        with open(paths[2], "w") as fh:
            json.dump({"family": self.family, "params": self.params, "groups": self.groups},
                      fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        return paths


def _json_default(x):
    if isinstance(x, float):
        return repr(x)
    raise TypeError(type(x))


def _replicate(build, cases, policies, reps, seed, parallel) -> list[dict]:
    jobs, keys = [], []
    for case in cases:
        for policy in policies:
            sc = build(case, policy)
            for i in range(reps):
                jobs.append((sc, derive_seed(seed, i)))
                keys.append((case, policy))
    results = run_many(jobs, parallel, summarize)
    groups = {}
    for key, res in zip(keys, results):
        groups.setdefault(key, []).append(res)
    return [{"case": c, "policy": p, "runs": runs} for (c, p), runs in groups.items()]


def limitations_suite(reps: int = 10, seed: int = 1, duration: float = 120.0,
                      parallel: int = 1, policies=scenarios.LIMITATION_POLICIES,
                      cases=scenarios.LIMITATION_CASES) -> SuiteResult:
    groups = _replicate(lambda c, p: scenarios.limitations(c, p, duration=duration),
                        cases, policies, reps, seed, parallel)
    return SuiteResult("limitations", groups, {"reps": reps, "seed": seed, "duration": duration})


def clique_suite(reps: int = 10, seed: int = 1, duration: float = 120.0, parallel: int = 1,
                 policies=scenarios.CLIQUE_POLICIES, others=(1, 2, 3, 4)) -> SuiteResult:
    groups = _replicate(lambda c, p: scenarios.clique(c, p, duration=duration),
                        others, policies, reps, seed, parallel)
    return SuiteResult("clique", groups, {"reps": reps, "seed": seed, "duration": duration})


def fattree_suite(drops: int = 50, seed: int = 1, duration: float = 10.0, parallel: int = 1,
                  policies=scenarios.FATTREE_POLICIES,
                  sessions_per_unit: float = scenarios.FATTREE_SESSIONS) -> SuiteResult:
    groups = []
    for policy in policies:
        sc = scenarios.fattree(policy, duration=duration, sessions_per_unit=sessions_per_unit)
        runs = monte_carlo_drops(sc, drops, seed, parallel, summarize)
        groups.append({"case": "drops", "policy": policy, "runs": runs})
    return SuiteResult("fattree", groups, {"drops": drops, "seed": seed, "duration": duration,
                                           "sessions_per_unit": sessions_per_unit})


SUITES = {"limitations": limitations_suite, "clique": clique_suite, "fattree": fattree_suite}


# -- factorial study over the clique scenario --------------------------------

def example_design(replications: int = 10) -> FactorialDesign:
    """Six two-level factors of the Est dispatcher study on the clique scenario."""
    return FactorialDesign([
        Factor("latency_window", 10, 100),
        Factor("ptime_window", 10, 100),
        Factor("latency_lifetime", 1.0, 10.0),
        Factor("ptime_lifetime", 1.0, 10.0),
        Factor("others", 1, 4),
        Factor("app", "face", "face+eyes"),
    ], replications)


# factors a simulated design may vary; the rest keep the clique defaults
EST_FACTORS = ("latency_window", "ptime_window", "latency_lifetime", "ptime_lifetime")
DESIGN_FACTORS = frozenset(EST_FACTORS + ("others", "app"))


def _cell_scenario(settings: dict, duration: float):
    params = {k: settings[k] for k in EST_FACTORS if k in settings}
    return scenarios.clique(int(settings.get("others", 4)), "Est", duration=duration,
                            eyes=settings.get("app", "face") == "face+eyes",
                            policy_params=params)


def design_responses(design: FactorialDesign, seed: int = 1, duration: float = 60.0,
                     parallel: int = 1, metric: str = "p90"):
    """Run every cell of a clique design ``design.replications`` times; returns 2^k x r."""
    jobs = []
    for cell in range(design.cells):
        sc = _cell_scenario(design.settings(cell), duration)
        for i in range(design.replications):
            jobs.append((sc, derive_seed(seed, i)))
    runs = run_many(jobs, parallel, summarize)
    values = [r[metric] for r in runs]
    return np.array(values, dtype=float).reshape(design.cells, design.replications)
