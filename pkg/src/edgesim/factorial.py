"""Two-level full factorial designs with replications (2^k r).

Every factor has a low (-1) and a high (+1) level. Experiment ``i`` runs
factor ``j`` at its high level when bit ``j`` of ``i`` is set. Effect
columns are indexed the same way: column ``m`` is the product of the sign
columns of the factors in bit mask ``m`` (column 0 is the mean).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class Factor:
    name: str
    low: object
    high: object


@dataclass
class FactorialDesign:
    factors: list[Factor]
    replications: int = 1

    def __post_init__(self):
        if not self.factors:
            raise ValueError("a design needs at least one factor")
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValueError(f"factor names must be unique: {names}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    @property
    def k(self) -> int:
        return len(self.factors)

    @property
    def cells(self) -> int:
        return 1 << self.k

    def sign_matrix(self) -> np.ndarray:
        """2^k x 2^k matrix of +/-1; row = experiment, column = effect."""
        n = self.cells
        rows = np.arange(n)
        levels = np.array([np.where(rows >> j & 1, 1, -1) for j in range(self.k)])
        out = np.ones((n, n), dtype=int)
        for m in range(1, n):
            for j in range(self.k):
                if m >> j & 1:
                    out[:, m] *= levels[j]
        return out

    def effect_names(self) -> list[str]:
        names = ["I"]
        for m in range(1, self.cells):
            names.append("*".join(f.name for j, f in enumerate(self.factors) if m >> j & 1))
        return names

    def settings(self, cell: int) -> dict:
        """Factor values of experiment ``cell``."""
        return {f.name: (f.high if cell >> j & 1 else f.low) for j, f in enumerate(self.factors)}

    def to_dict(self) -> dict:
        return {"factors": [{"name": f.name, "low": f.low, "high": f.high} for f in self.factors],
                "replications": self.replications}

    @classmethod
    def from_dict(cls, data: dict) -> FactorialDesign:
        factors = [Factor(f["name"], f["low"], f["high"]) for f in data["factors"]]
        return cls(factors, int(data.get("replications", 1)))


@dataclass
class Effects:
    names: list[str]
    q: np.ndarray
    # share of total variation per effect (column 0 excluded), in percent
    allocation: dict[str, float]
    residual_share: float
    sst: float
    sse: float
    dof: int
    confidence: float
    # None when there is a single replication
    intervals: dict[str, tuple[float, float]] | None
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.q)))

    def significant(self, name: str) -> bool | None:
        if self.intervals is None:
            return None
        lo, hi = self.intervals[name]
        return not lo <= 0.0 <= hi


def _as_matrix(design: FactorialDesign, responses) -> np.ndarray:
    y = np.asarray(responses, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != design.cells:
        raise ValueError(f"need {design.cells} rows of responses, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise ValueError("responses must be complete and finite")
    return y


def effects(design: FactorialDesign, responses, confidence: float = 0.95) -> Effects:
    """Effects, allocation of variation and confidence intervals.

    ``responses`` is a 2^k x r matrix (one row per experiment).
    """
    y = _as_matrix(design, responses)
    n, r = y.shape
    signs = design.sign_matrix()
    means = y.mean(axis=1)
    q = signs.T @ means / n
    grand = y.mean()
    sst = float(((y - grand) ** 2).sum())
    sse = float(((y - means[:, None]) ** 2).sum())
    names = design.effect_names()
    notes = []
    if sst > 0:
        allocation = {names[m]: float(100.0 * n * r * q[m] ** 2 / sst) for m in range(1, n)}
        residual_share = 100.0 * sse / sst
    else:
        allocation = {names[m]: 0.0 for m in range(1, n)}
        residual_share = 100.0
        notes.append("no variation in the responses; allocation is degenerate")
    dof = n * (r - 1)
    intervals = None
    if r > 1:
        s_q = math.sqrt(sse / dof) / math.sqrt(n * r)
        t = stats.t.ppf(0.5 + confidence / 2.0, dof)
        intervals = {names[m]: (float(q[m] - t * s_q), float(q[m] + t * s_q)) for m in range(n)}
    else:
        notes.append("single replication: confidence intervals unavailable")
    return Effects(names, q, allocation, residual_share, sst, sse, dof, confidence,
                   intervals, notes)


@dataclass
class Residuals:
    predicted: np.ndarray  # per cell
    residuals: np.ndarray  # 2^k x r
    qq: list[tuple[float, float]]  # (normal quantile, ordered residual)


def residual_diagnostics(design: FactorialDesign, responses, q) -> Residuals:
    """Residuals against the model predictions, plus normal Q-Q pairs."""
    y = _as_matrix(design, responses)
    predicted = design.sign_matrix() @ np.asarray(q, dtype=float)
    res = y - predicted[:, None]
    ordered = np.sort(res.ravel())
    m = ordered.size
    theo = stats.norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    return Residuals(predicted, res, list(zip(theo.tolist(), ordered.tolist())))


# -- CSV in and out ---------------------------------------------------------

def _level(factor: Factor, value: str) -> int:
    """-1 or +1 for a CSV cell holding a factor value or a +/- symbol."""
    text = str(value).strip()
    if text == str(factor.low):
        return -1
    if text == str(factor.high):
        return 1
    try:
        x = float(text)
        if x == float(factor.low):
            return -1
        if x == float(factor.high):
            return 1
    except (TypeError, ValueError):
        pass
    if text in ("+", "+1", "1", "high"):
        return 1
    if text in ("-", "-1", "low"):
        return -1
    raise ValueError(f"{factor.name}: {value!r} is neither {factor.low!r} nor {factor.high!r}")


def read_responses(design: FactorialDesign, path: str, column: str = "response") -> np.ndarray:
    """Responses from a CSV with one column per factor and one response column."""
    cells: dict[int, list[float]] = {i: [] for i in range(design.cells)}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [f.name for f in design.factors if f.name not in reader.fieldnames] + (
            [] if column in reader.fieldnames else [column])
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for row in reader:
            cell = 0
            for j, f in enumerate(design.factors):
                if _level(f, row[f.name]) > 0:
                    cell |= 1 << j
            cells[cell].append(float(row[column]))
    counts = {len(v) for v in cells.values()}
    if len(counts) != 1 or 0 in counts:
        raise ValueError(f"{path}: every cell needs the same number of replications, "
                         f"got {sorted(len(v) for v in cells.values())}")
    return np.array([cells[i] for i in range(design.cells)])


def write_responses(design: FactorialDesign, responses, path: str, column: str = "response"):
    y = _as_matrix(design, responses)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f.name for f in design.factors] + ["replication", column])
        for cell in range(design.cells):
            values = design.settings(cell)
            for rep in range(y.shape[1]):
                w.writerow([values[f.name] for f in design.factors] + [rep, repr(float(y[cell, rep]))])


def write_analysis(design: FactorialDesign, responses, out_dir: str, prefix: str = "") -> list[str]:
    """Write effects, residuals and Q-Q CSVs; returns their paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    eff = effects(design, responses)
    diag = residual_diagnostics(design, responses, eff.q)
    paths = [os.path.join(out_dir, prefix + name)
             for name in ("effects.csv", "residuals.csv", "qq.csv", "effects.json")]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["effect", "q", "allocation_pct", "ci_low", "ci_high", "significant"])
        for m, name in enumerate(eff.names):
            alloc = "" if m == 0 else repr(eff.allocation[name])
            if eff.intervals is None:
                lo = hi = sig = ""
            else:
                lo, hi = map(repr, eff.intervals[name])
                sig = int(eff.significant(name))
            w.writerow([name, repr(float(eff.q[m])), alloc, lo, hi, sig])
        w.writerow(["residual", "", repr(eff.residual_share), "", "", ""])
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "replication", "predicted", "residual"])
        for cell in range(design.cells):
            for rep in range(diag.residuals.shape[1]):
                w.writerow([cell, rep, repr(float(diag.predicted[cell])),
                            repr(float(diag.residuals[cell, rep]))])
    with open(paths[2], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["normal_quantile", "residual"])
        for a, b in diag.qq:
            w.writerow([repr(a), repr(b)])
    with open(paths[3], "w") as fh:
        json.dump({"design": design.to_dict(), "q": eff.as_dict(),
                   "allocation_pct": eff.allocation, "residual_pct": eff.residual_share,
                   "dof": eff.dof, "notes": eff.notes,
                   "intervals": eff.intervals}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths
