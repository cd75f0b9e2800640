"""Density sweeps and grid-search optimizers over the Monte Carlo engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import mcengine
from .mcengine import AseEstimate, CoverageEstimate, Scenario
from .rng import derive_seed

Evaluator = Callable[[Scenario], "tuple[CoverageEstimate, AseEstimate]"]

# seed index offset of each refinement pass, so refined points never reuse a
# seed of the coarse grid
_REFINE_SEED_BASE = 1_000_000


class Axis(str, Enum):
    BS_DENSITY = "bs_density"
    UE_DENSITY = "ue_density"


class OptimizationError(RuntimeError):
    pass


def log_grid(lo: float, hi: float, points_per_decade: int) -> np.ndarray:
    """Log-spaced grid from ``lo`` to ``hi`` inclusive."""
    if not (lo > 0 and hi > 0 and lo <= hi):
        raise ValueError(f"need 0 < min <= max, got {lo!r}, {hi!r}")
    if int(points_per_decade) != points_per_decade or points_per_decade < 1:
        raise ValueError("points_per_decade must be an integer >= 1")
    if lo == hi:
        return np.array([float(lo)])
    span = math.log10(hi / lo) * points_per_decade
    n = int(math.floor(span + 1e-9))
    g = lo * 10.0 ** (np.arange(n + 1) / points_per_decade)
    if g[-1] < hi * (1 - 1e-9):
        g = np.append(g, hi)
    else:
        g[-1] = hi
    return g


@dataclass(frozen=True)
class SweepSpec:
    """Log-grid sweep of one density axis around a base scenario.

    ``min == max`` gives a one-point sweep.  ``grid`` overrides the log grid.
    """

    base: Scenario
    axis: Axis = Axis.BS_DENSITY
    min: float = 1e2
    max: float = 1e6
    points_per_decade: int = 10
    grid: tuple | None = None
    seed_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis(self.axis))
        if self.grid is None:
            log_grid(self.min, self.max, self.points_per_decade)
        else:
            g = np.asarray(self.grid, dtype=float)
            if g.size == 0 or np.any(~(g > 0)) or np.any(np.diff(g) <= 0):
                raise ValueError("grid must be positive and strictly increasing")
            object.__setattr__(self, "grid", tuple(float(x) for x in g))

    def densities(self) -> np.ndarray:
        if self.grid is not None:
            return np.asarray(self.grid)
        return log_grid(self.min, self.max, self.points_per_decade)

    def scenario_at(self, i: int, density: float) -> Scenario:
        seed = derive_seed(self.base.master_seed, self.seed_offset + i)
        key = "bs_density_per_km2" if self.axis is Axis.BS_DENSITY else "ue_density_per_km2"
        return self.base.replace(**{key: float(density)}, master_seed=seed)


@dataclass
class SweepPoint:
    density: float
    scenario: Scenario
    coverage: CoverageEstimate | None = None
    ase: AseEstimate | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list[SweepPoint] = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def valid(self) -> list[SweepPoint]:
        return [p for p in self.points if p.ok]

    @property
    def densities(self) -> np.ndarray:
        return np.array([p.density for p in self.points])

    def column(self, name: str) -> np.ndarray:
        """``coverage``, ``coverage_ci``, ``ase``, ``ase_ci`` or ``active`` (NaN on error rows)."""
        get = {
            "coverage": lambda p: p.coverage.probability,
            "coverage_ci": lambda p: p.coverage.ci95_halfwidth,
            "ase": lambda p: p.ase.ase_bps_hz_km2,
            "ase_ci": lambda p: p.ase.ci95_halfwidth,
            "active": lambda p: p.ase.active_bs_density_per_km2,
        }[name]
        return np.array([get(p) if p.ok else math.nan for p in self.points])


@dataclass
class OptimizationResult:
    optimum_density: float
    optimum_ase: float
    peak_ase: float
    peak_density: float
    epsilon: float | None
    sweeps: list[SweepResult]

    def points(self) -> list[SweepPoint]:
        """All evaluated points, sorted by density."""
        pts = [p for s in self.sweeps for p in s.points]
        return sorted(pts, key=lambda p: p.density)


def default_evaluator(workers: int = 1) -> Evaluator:
    def run(scn: Scenario):
        return mcengine.evaluate(scn, workers=workers)
    return run


def sweep(spec: SweepSpec, evaluator: Evaluator | None = None, workers: int = 1,
          on_point: Callable[[SweepPoint], None] | None = None) -> SweepResult:
    """Evaluate coverage and ASE at every grid point.

    Engine failures at a point are recorded on that point and the sweep
    carries on.  ``on_point`` is called after each point, in grid order.
    """
    ev = evaluator or default_evaluator(workers)
    out = SweepResult(spec)
    for i, d in enumerate(spec.densities()):
        pt = SweepPoint(float(d), spec.scenario_at(i, d))
        try:
            pt.coverage, pt.ase = ev(pt.scenario)
        except (ArithmeticError, ValueError, RuntimeError, MemoryError) as exc:
            pt.error = f"{type(exc).__name__}: {exc}"
        out.points.append(pt)
        if on_point is not None:
            on_point(pt)
    return out


def _joint_ci(a: SweepPoint, b: SweepPoint) -> float:
    return math.hypot(a.ase.ci95_halfwidth, b.ase.ci95_halfwidth)


def guarded_argmax(points: Sequence[SweepPoint]) -> SweepPoint:
    """Grid-order scan; a point replaces the incumbent only if it beats it by the joint CI."""
    best = None
    for p in points:
        if best is None or p.ase.ase_bps_hz_km2 > best.ase.ase_bps_hz_km2 + _joint_ci(p, best):
            best = p
    if best is None:
        raise OptimizationError("no valid grid points")
    return best


def is_unimodal(values, ci, familywise: bool = True) -> bool:
    """True when the column has a single significant peak.

    Before the peak no value falls significantly below an earlier one,
    after it none rises significantly above an earlier one.  ``ci`` holds
    95% half-widths of independent estimates.  With ``familywise`` the
    pairwise tests are Bonferroni-corrected so the whole check runs at 95%
    rather than each of the O(n^2) comparisons.
    """
    v = np.asarray(values, dtype=float)
    c = np.asarray(ci, dtype=float)
    if v.size < 3:
        return True
    if familywise:
        pairs = v.size * (v.size - 1) / 2
        c = c * special.ndtri(1.0 - 0.025 / pairs) / special.ndtri(0.975)
    p = int(np.argmax(v))
    for lo, hi, sign in ((0, p + 1, 1), (p, v.size, -1)):
        seg, sc = v[lo:hi], c[lo:hi]
        for j in range(1, seg.size):
            joint = np.hypot(sc[:j], sc[j])
            if np.any(sign * (seg[:j] - seg[j]) > joint):
                return False
    return True


def _sweep_grid(base, axis, grid, evaluator, workers, offset):
    spec = SweepSpec(base, axis, grid=tuple(grid), seed_offset=offset)
    return sweep(spec, evaluator, workers)


def _between(lo: float, hi: float, n: int) -> np.ndarray:
    # n log-spaced points strictly inside (lo, hi)
    return lo * (hi / lo) ** (np.arange(1, n + 1) / (n + 1))


def optimize_bs_density(rho: float, epsilon: float, base: Scenario, grid=None,
                        evaluator: Evaluator | None = None, workers: int = 1,
                        refine: int = 1, refine_points: int = 4) -> OptimizationResult:
    """Smallest BS density whose ASE is within ``epsilon`` of the peak ASE."""
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1)")
    if not base.idle_mode:
        raise ValueError("optimize_bs_density needs an idle-mode scenario")
    base = base.replace(ue_density_per_km2=float(rho))
    grid = log_grid(1e2, 1e6, 5) if grid is None else np.asarray(grid, dtype=float)
    sweeps = [_sweep_grid(base, Axis.BS_DENSITY, grid, evaluator, workers, 0)]
    valid = sweeps[0].valid()
    if not valid:
        raise OptimizationError("the sweep produced no valid points")
    peak = guarded_argmax(valid)
    target = (1.0 - epsilon) * peak.ase.ase_bps_hz_km2

    def first_ok(pts):
        for p in sorted(pts, key=lambda q: q.density):
            if p.ase.ase_bps_hz_km2 >= target:
                return p
        return None

    best = first_ok(valid)
    for level in range(refine):
        below = [p for p in valid if p.density < best.density]
        if not below:
            break
        lo = max(below, key=lambda p: p.density).density
        extra = _sweep_grid(base, Axis.BS_DENSITY, _between(lo, best.density, refine_points),
                            evaluator, workers, _REFINE_SEED_BASE * (level + 1))
        sweeps.append(extra)
        valid = valid + extra.valid()
        best = first_ok(valid)
    peak_ase = max(peak.ase.ase_bps_hz_km2, best.ase.ase_bps_hz_km2)
    return OptimizationResult(best.density, best.ase.ase_bps_hz_km2, peak_ase, peak.density,
                              epsilon, sweeps)


def optimize_ue_density(lam: float, base: Scenario, grid=None,
                        evaluator: Evaluator | None = None, workers: int = 1,
                        refine: int = 1, refine_points: int = 3) -> OptimizationResult:
    """Scheduled-UE density with the largest ASE at BS density ``lam``."""
    if not base.idle_mode:
        raise ValueError("optimize_ue_density needs an idle-mode scenario")
    base = base.replace(bs_density_per_km2=float(lam))
    grid = log_grid(1e2, 1e4, 10) if grid is None else np.asarray(grid, dtype=float)
    sweeps = [_sweep_grid(base, Axis.UE_DENSITY, grid, evaluator, workers, 0)]
    valid = sweeps[0].valid()
    if not valid:
        raise OptimizationError("the sweep produced no valid points")
    best = guarded_argmax(valid)
    for level in range(refine):
        ds = sorted(p.density for p in valid)
        i = ds.index(best.density)
        new = []
        if i > 0:
            new.extend(_between(ds[i - 1], best.density, refine_points))
        if i + 1 < len(ds):
            new.extend(_between(best.density, ds[i + 1], refine_points))
        if not new:
            break
        extra = _sweep_grid(base, Axis.UE_DENSITY, sorted(new), evaluator, workers,
                            _REFINE_SEED_BASE * (level + 1))
        sweeps.append(extra)
        valid = sorted(valid + extra.valid(), key=lambda p: p.density)
        # the incumbent keeps its place unless a refined point clearly beats it
        challengers = [best] + [p for p in extra.valid()]
        best = guarded_argmax(challengers)
    a = best.ase.ase_bps_hz_km2
    return OptimizationResult(best.density, a, a, best.density, None, sweeps)
