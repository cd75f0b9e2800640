"""Homogeneous Poisson point processes on a disk window."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Region:
    """Disk window of radius ``radius_km`` centred at the origin."""

    radius_km: float

    def __post_init__(self):
        if not math.isfinite(self.radius_km) or self.radius_km <= 0:
            raise ValueError(f"region radius must be positive and finite, got {self.radius_km!r}")

    @property
    def area_km2(self) -> float:
        return math.pi * self.radius_km**2


@dataclass
class PointSet:
    """Points in km, shape ``(n, 2)``, plus the intensity that generated them."""

    points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    density_per_km2: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 2)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("points must have shape (n, 2)")
        self.points = pts

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def radii(self) -> np.ndarray:
        return np.hypot(self.points[:, 0], self.points[:, 1])


def uniform_in_disk(rng: np.random.Generator, n: int, radius: float,
                    center=(0.0, 0.0)) -> np.ndarray:
    """``n`` i.i.d. uniform points in a disk (radius R*sqrt(u), angle 2*pi*v)."""
    u = rng.random(n)
    v = rng.random(n)
    r = radius * np.sqrt(u)
    t = 2.0 * np.pi * v
    out = np.empty((n, 2))
    out[:, 0] = center[0] + r * np.cos(t)
    out[:, 1] = center[1] + r * np.sin(t)
    return out


def sample_hppp(density_per_km2: float, region: Region, rng: np.random.Generator) -> PointSet:
    """Sample an HPPP of the given intensity restricted to ``region``.

    The count is Poisson(density * area); positions are then placed
    uniformly on the disk.
    """
    if not math.isfinite(density_per_km2) or density_per_km2 < 0:
        raise ValueError(f"density must be finite and non-negative, got {density_per_km2!r}")
    if not isinstance(region, Region):
        raise TypeError("region must be a Region")
    n = int(rng.poisson(density_per_km2 * region.area_km2))
    return PointSet(uniform_in_disk(rng, n, region.radius_km), density_per_km2)


def with_typical_ue(ues: PointSet) -> PointSet:
    """Append the typical UE at the origin (last row)."""
    pts = np.vstack([ues.points, np.zeros((1, 2))])
    return PointSet(pts, ues.density_per_km2)
