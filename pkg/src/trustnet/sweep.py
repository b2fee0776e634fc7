"""Scale and weight-sensitivity sweeps over seeded scenario runs."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .config import DEFAULT_FLEET, ScenarioConfig, build_config, scaled_fleet, to_plain
from .metrics import MetricsReport, build_report
from .sim import Simulation, SimStats

log = logging.getLogger(__name__)

# sweepable parameter name -> config key path
PARAMS = {
    "gamma": "weights.gamma",
    "epsilon": "weights.epsilon",
    "delta": "weights.delta",
    "theta": "weights.theta",
    "mu": "weights.mu",
    "omega": "weights.omega",
    "lambda": "weights.lambda_decay",
    "t_thresh": "thresholds.t_thresh",
}
# weight groups that must sum to one; a lone gamma implies epsilon = 1 - gamma
_SIMPLEX = (("gamma", "epsilon"), ("delta", "theta", "mu"))
_TOL = 1e-9


class GridError(ValueError):
    pass


@dataclass
class ScalePoint:
    size: int
    seed: int
    report: MetricsReport
    stats: SimStats


@dataclass
class SensitivityRow:
    params: dict[str, float]
    accuracy: float
    fpr: float
    reports: list[MetricsReport] = field(default_factory=list)


# ------------------------------------------------------------------ scale


def scale_config(base: ScenarioConfig, size: int) -> ScenarioConfig:
    """``base`` with its fleet replicated to ``size`` devices, class mix preserved."""
    if not (2 <= size <= 10_000):
        raise GridError(f"scale size {size} outside [2, 10000]")
    plain = to_plain(base)
    plain["devices"] = []
    plain["fleet"] = scaled_fleet(base.fleet or DEFAULT_FLEET, size)
    return build_config(plain)


def run_scale_sweep(
    base: ScenarioConfig, sizes: Sequence[int], seeds: Sequence[int] | None = None
) -> list[ScalePoint]:
    """One run per (size, seed); the attacks of ``base`` are kept at every size."""
    seeds = [base.seed] if seeds is None else list(seeds)
    out = []
    for size in sizes:
        cfg = scale_config(base, size)
        for seed in seeds:
            sim = Simulation(_with_seed(cfg, seed))
            runlog = sim.run()
            out.append(ScalePoint(size, seed, build_report(runlog), sim.stats))
    return out


def _with_seed(cfg: ScenarioConfig, seed: int) -> ScenarioConfig:
    plain = to_plain(cfg)
    plain["seed"] = seed
    return build_config(plain)


# ------------------------------------------------------------ sensitivity


def _frange(lo: float, hi: float, step: float) -> list[float]:
    if step <= 0 or hi < lo:
        raise GridError(f"bad range {lo}:{hi}:{step}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 10) for k in range(n)]


def parse_grid(spec: str) -> dict[str, list[float]]:
    """Parse ``name=lo:hi:step`` or ``name=v1,v2,...`` terms separated by ``;``."""
    grid: dict[str, list[float]] = {}
    for term in filter(None, (t.strip() for t in spec.split(";"))):
        if "=" not in term:
            raise GridError(f"grid term {term!r} must look like name=lo:hi:step")
        name, values = (s.strip() for s in term.split("=", 1))
        if name not in PARAMS:
            raise GridError(f"unknown sweep parameter {name!r}; choose from {', '.join(PARAMS)}")
        try:
            if ":" in values:
                lo, hi, step = (float(v) for v in values.split(":"))
                grid[name] = _frange(lo, hi, step)
            else:
                grid[name] = [float(v) for v in values.split(",")]
        except ValueError:
            raise GridError(f"cannot parse values of grid term {term!r}") from None
    if not grid:
        raise GridError("empty grid")
    return grid


def grid_points(grid: Mapping[str, Sequence[float]]) -> list[dict[str, float]]:
    """Cartesian product of the grid, completed and filtered by the weight simplexes."""
    names = list(grid)
    points = []
    skipped = 0
    for values in itertools.product(*(grid[n] for n in names)):
        point = dict(zip(names, values))
        if "gamma" in point and "epsilon" not in point:
            point["epsilon"] = round(1.0 - point["gamma"], 10)
        ok = True
        for group in _SIMPLEX:
            present = [g for g in group if g in point]
            if present and (len(present) != len(group) or abs(math.fsum(point[g] for g in group) - 1.0) > _TOL):
                ok = False
        if ok:
            points.append(point)
        else:
            skipped += 1
    if skipped:
        log.warning("skipped %d grid points whose weights do not sum to one", skipped)
    return points


def point_overrides(point: Mapping[str, float]) -> list[str]:
    return [f"{PARAMS[k]}={v!r}" for k, v in point.items()]


def run_sensitivity_sweep(
    scenarios: Sequence[ScenarioConfig], grid: Mapping[str, Sequence[float]] | str
) -> list[SensitivityRow]:
    """Mean per-tick accuracy and false positive rate over ``scenarios`` at each grid point."""
    if isinstance(grid, str):
        grid = parse_grid(grid)
    plains = [to_plain(s) for s in scenarios]
    rows = []
    for point in grid_points(grid):
        overrides = tuple(point_overrides(point))
        reports = [build_report(Simulation(build_config(p, overrides), overrides).run()) for p in plains]
        acc = [r.accuracy if r.accuracy is not None else 0.0 for r in reports]
        fpr = [r.false_positive_rate for r in reports]
        rows.append(SensitivityRow(point, math.fsum(acc) / len(acc), math.fsum(fpr) / len(fpr), reports))
    return rows


def best_rows(rows: Sequence[SensitivityRow], key: str) -> list[SensitivityRow]:
    """Rows attaining the best value: maximum accuracy or minimum fpr."""
    if key == "accuracy":
        target = max(r.accuracy for r in rows)
        return [r for r in rows if r.accuracy == target]
    if key == "fpr":
        target = min(r.fpr for r in rows)
        return [r for r in rows if r.fpr == target]
    raise ValueError(f"unknown key {key!r}")
