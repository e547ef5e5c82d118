"""Parameter families around the circular (H-system) drive, sweeps and grid search.

Every family is anchored to a base circular drive
H = w0 Jz + (sqrt(2)/2) A [cos(wt) Jx + sin(wt) Jy]
and moves one scan parameter p:

phi_distribution      strength split (A cos p, A sin p) between x and y
theta_parallel        share A sin p moved onto a z drive at frequency w
phiz_scan             z-drive phase, at fixed tilt theta
omegaz_scan           z-drive frequency, at fixed tilt theta
perturb_wx / _wy      w -> w + p on one axis
perturb_wxy_opposite  w_x = w + p, w_y = w - p
perturb_phx / _phy    phase shift p on one axis
perturb_phxy_opposite phase +p on x and -p on y
"""
from __future__ import annotations

import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .drive_model import DriveConfig
from .errors import NonConvergence
from .propagator import SaturationTrace, default_dt, evolve

FAMILIES = (
    "phi_distribution",
    "theta_parallel",
    "phiz_scan",
    "omegaz_scan",
    "perturb_wx",
    "perturb_wy",
    "perturb_wxy_opposite",
    "perturb_phx",
    "perturb_phy",
    "perturb_phxy_opposite",
)

# p value at which a family reduces to the base drive, where one exists
NEUTRAL = {
    "phi_distribution": math.pi / 4,
    "theta_parallel": 0.0,
    "perturb_wx": 0.0,
    "perturb_wy": 0.0,
    "perturb_wxy_opposite": 0.0,
    "perturb_phx": 0.0,
    "perturb_phy": 0.0,
    "perturb_phxy_opposite": 0.0,
}

DEFAULT_TILT = math.acos(0.8)


def _family_index(family: str) -> int:
    try:
        return FAMILIES.index(family)
    except ValueError:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}") from None


def check_base(base: DriveConfig):
    """Reject anything but a zero-phase circular drive in the xy plane."""
    ok = (
        base.ax > 0
        and math.isclose(base.ax, base.ay, rel_tol=1e-12)
        and base.az == 0
        and base.wx > 0
        and base.wx == base.wy
        and base.phx == 0
        and math.isclose(base.phy, -math.pi / 2, rel_tol=1e-12)
    )
    if not ok:
        raise ValueError(
            "sweep base must be a circular drive: ax == ay > 0, az = 0, "
            "wx == wy > 0, phx = 0, phy = -pi/2"
        )


def _domain(family: str, base: DriveConfig) -> tuple[float, float]:
    w = base.wx
    if family == "phi_distribution":
        return -math.pi / 4, 3 * math.pi / 4
    if family == "theta_parallel":
        return -math.pi / 2, math.pi / 2
    if family == "omegaz_scan":
        return 0.0, math.inf
    if family in ("perturb_wx", "perturb_wy", "perturb_wxy_opposite"):
        return -w, w
    return -2 * math.pi, 2 * math.pi


def _tilted(base: DriveConfig, theta: float, **z_drive) -> DriveConfig:
    a = base.total_strength
    az = a * math.sin(theta)
    if az == 0:
        z_drive = {}
    return replace(base, ax=base.ax * math.cos(theta), ay=base.ay * math.cos(theta),
                   az=az, **z_drive)


def make_config(family: str, base: DriveConfig, p: float, theta: float = DEFAULT_TILT) -> DriveConfig:
    """Family member at scan value ``p``.

    At a family's neutral value the base config itself is returned, so
    reference rows are bit-identical to the unperturbed drive.
    """
    _family_index(family)
    check_base(base)
    lo, hi = _domain(family, base)
    # bounds tolerate round-off from decimal grids such as -0.785398163397
    slack = 1e-9
    if family == "theta_parallel":
        ok = lo - slack <= p < hi
    else:
        ok = lo - slack <= p <= hi + slack
    if not (ok and math.isfinite(p)):
        raise ValueError(f"{family}: p={p!r} outside [{lo:g}, {hi:g}]")
    if NEUTRAL.get(family) == p:
        return base
    w = base.wx
    if family == "phi_distribution":
        a = base.total_strength
        return replace(base, ax=a * math.cos(p), ay=a * math.sin(p))
    if family == "theta_parallel":
        return _tilted(base, p, wz=w, phz=0.0)
    if family == "phiz_scan":
        return _tilted(base, theta, wz=w, phz=p)
    if family == "omegaz_scan":
        return _tilted(base, theta, wz=p, phz=0.0)
    if family == "perturb_wx":
        return replace(base, wx=w + p)
    if family == "perturb_wy":
        return replace(base, wy=w + p)
    if family == "perturb_wxy_opposite":
        return replace(base, wx=w + p, wy=w - p)
    if family == "perturb_phx":
        return replace(base, phx=base.phx + p)
    if family == "perturb_phy":
        return replace(base, phy=base.phy + p)
    return replace(base, phx=base.phx + p, phy=base.phy - p)


def _strictly_increasing(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d sequence")
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return arr


@dataclass(frozen=True, eq=False)
class SweepSpec:
    family: str
    base: DriveConfig
    param_grid: np.ndarray
    t_grid: np.ndarray
    theta: float = DEFAULT_TILT

    def __post_init__(self):
        _family_index(self.family)
        check_base(self.base)
        object.__setattr__(self, "param_grid", _strictly_increasing(self.param_grid, "param_grid"))
        t_grid = _strictly_increasing(self.t_grid, "t_grid")
        if t_grid[0] < 0:
            raise ValueError("t_grid must be non-negative")
        object.__setattr__(self, "t_grid", t_grid)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "base": self.base.to_dict(),
            "param_grid": self.param_grid.tolist(),
            "t_grid": self.t_grid.tolist(),
            "theta": self.theta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        return cls(
            family=data["family"],
            base=DriveConfig.from_dict(data["base"]),
            param_grid=data["param_grid"],
            t_grid=data["t_grid"],
            theta=float(data.get("theta", DEFAULT_TILT)),
        )


@dataclass(frozen=True, eq=False)
class SaturationMap:
    spec: SweepSpec
    values: np.ndarray
    config_hashes: tuple = field(default=())

    def row_trace(self, index: int) -> SaturationTrace:
        base = self.spec.base
        eta = self.values[index]
        return SaturationTrace(
            self.spec.t_grid, eta, base.n_units * base.omega0 * eta,
            self.config_hashes[index] if self.config_hashes else "",
        )

    def to_csv(self) -> str:
        """Long-form rows in grid order; rows that are entirely NaN (failed) are omitted."""
        buf = io.StringIO()
        buf.write("param,t,eta\n")
        for p, row in zip(self.spec.param_grid, self.values):
            if np.all(np.isnan(row)):
                continue
            for t, eta in zip(self.spec.t_grid, row):
                buf.write(f"{p:.12g},{t:.12g},{eta:.12g}\n")
        return buf.getvalue()

    def sidecar_json(self) -> str:
        return json.dumps(self.spec.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_csv(cls, text: str, spec: SweepSpec) -> "SaturationMap":
        lines = text.strip().splitlines()
        if lines[0].strip() != "param,t,eta":
            raise ValueError(f"unexpected map header {lines[0]!r}")
        data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        shape = (len(spec.param_grid), len(spec.t_grid))
        return cls(spec, data[:, 2].reshape(shape))


def _sample(trace: SaturationTrace, t_grid: np.ndarray) -> np.ndarray:
    # nearest recorded step; error at most half a step
    times = trace.times
    n = len(times) - 1
    idx = np.clip(np.rint(t_grid / times[-1] * n).astype(int), 0, n)
    return trace.eta[idx]


def _run_row(args):
    index, config, t_final, dt, tol, t_grid = args
    try:
        trace = evolve(config, t_final, dt, tol=tol)
    except NonConvergence as exc:
        raise NonConvergence(str(exc), row=index) from exc
    return _sample(trace, t_grid)


def sweep_row(spec: SweepSpec, index: int, dt: float | None = None, tol: float | None = None):
    """Saturation of one family member sampled on the spec's time grid."""
    config = make_config(spec.family, spec.base, float(spec.param_grid[index]), spec.theta)
    step = default_dt(config) if dt is None else dt
    return _run_row((index, config, float(spec.t_grid[-1]), step, tol, spec.t_grid))


def run_sweep(
    spec: SweepSpec, dt: float | None = None, tol: float | None = None, workers: int | None = None
) -> SaturationMap:
    """Evolve every family member and sample its saturation on ``spec.t_grid``.

    Rows are independent; with ``workers`` > 1 they run in a process pool but
    are always returned in grid order.
    """
    configs = [make_config(spec.family, spec.base, float(p), spec.theta) for p in spec.param_grid]
    t_final = float(spec.t_grid[-1])
    jobs = [
        (i, cfg, t_final, default_dt(cfg) if dt is None else dt, tol, spec.t_grid)
        for i, cfg in enumerate(configs)
    ]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_row, jobs))
    else:
        rows = [_run_row(job) for job in jobs]
    return SaturationMap(spec, np.vstack(rows), tuple(c.config_hash for c in configs))


def time_to_threshold(trace: SaturationTrace, threshold: float, atol: float = 0.0) -> float | None:
    """First time eta reaches ``threshold - atol``, interpolated linearly; None if never."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    level = threshold - atol
    hits = np.flatnonzero(trace.eta >= level)
    if hits.size == 0:
        return None
    k = int(hits[0])
    if k == 0:
        return float(trace.times[0])
    t0, t1 = trace.times[k - 1], trace.times[k]
    e0, e1 = trace.eta[k - 1], trace.eta[k]
    return float(t0 + (level - e0) * (t1 - t0) / (e1 - e0))


class OptimumResult(NamedTuple):
    family: str
    p: float
    time: float


def evaluate_candidates(
    threshold: float,
    base: DriveConfig,
    families,
    grids: dict,
    t_final: float,
    dt: float | None = None,
    atol: float = 0.0,
    theta: float = DEFAULT_TILT,
) -> list[tuple[str, float, float | None]]:
    """Time to threshold for every (family, p), in family then grid order."""
    families = list(families)
    if not families:
        raise ValueError("no families to search")
    results = []
    for family in families:
        grid = np.asarray(grids[family], dtype=float)
        if grid.size == 0:
            raise ValueError(f"empty grid for {family}")
        for p in grid:
            config = make_config(family, base, float(p), theta)
            trace = evolve(config, t_final, dt)
            results.append((family, float(p), time_to_threshold(trace, threshold, atol)))
    return results


def pick_best(candidates) -> OptimumResult | None:
    """Earliest time wins; ties go to smaller |p|, then to the earlier family in FAMILIES."""
    best_key, best = None, None
    for family, p, t in candidates:
        if t is None:
            continue
        key = (t, abs(p), _family_index(family))
        if best_key is None or key < best_key:
            best_key, best = key, OptimumResult(family, p, t)
    return best


def grid_optimize(
    threshold: float,
    base: DriveConfig,
    families,
    grids: dict,
    t_final: float,
    dt: float | None = None,
    atol: float = 0.0,
    theta: float = DEFAULT_TILT,
) -> OptimumResult | None:
    """Exhaustive search for the earliest time to reach ``threshold``.

    Returns None when no candidate reaches the threshold within ``t_final``.
    """
    return pick_best(
        evaluate_candidates(threshold, base, families, grids, t_final, dt, atol, theta)
    )
