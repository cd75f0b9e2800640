"""Closed-form coverage baselines for validating the Monte Carlo engine.

Nothing here touches the simulation code; the two cases are computed
from first principles so that agreement with the engine means something.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from scipy import integrate

from .channel import PathLossModel, path_loss_db


class CaseId(str, Enum):
    INTERFERENCE_LIMITED_SINGLE_SLOPE = "InterferenceLimitedSingleSlope"
    ISOLATED_CELL_SNR = "IsolatedCellSnr"


@dataclass(frozen=True)
class OracleCase:
    """One analytically solvable configuration and its parameters."""

    case_id: CaseId
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "case_id", CaseId(self.case_id))
        p = self.params
        if self.case_id is CaseId.INTERFERENCE_LIMITED_SINGLE_SLOPE:
            if not p.get("alpha", 0) > 2:
                raise ValueError("alpha must be > 2")
            if not p.get("gamma0_linear", 0) > 0:
                raise ValueError("gamma0_linear must be > 0")
        elif not p.get("distance_km", 0) > 0:
            raise ValueError("distance_km must be > 0")

    def value(self) -> float:
        p = self.params
        if self.case_id is CaseId.INTERFERENCE_LIMITED_SINGLE_SLOPE:
            return coverage_closed_form(p["alpha"], p["gamma0_linear"])
        return isolated_cell_coverage(p["distance_km"], p.get("tx_dbm", 24.0),
                                      p.get("noise_dbm", -95.0),
                                      p.get("model", PathLossModel.dual_slope()),
                                      p.get("gamma0_linear", 1.0), p.get("los", True))


def interference_functional(alpha: float, gamma0_linear: float) -> float:
    """gamma^{2/a} * integral from gamma^{-2/a} to inf of du / (1 + u^{a/2})."""
    if not alpha > 2:
        raise ValueError(f"alpha must be > 2 (the integral diverges otherwise), got {alpha!r}")
    if not gamma0_linear > 0:
        raise ValueError("gamma0_linear must be > 0")
    lo = gamma0_linear ** (-2.0 / alpha)
    k = alpha / 2.0
    # t = u^(1-k) maps [lo, inf) onto (0, lo^(1-k)] with a bounded integrand,
    # which stays well conditioned as alpha approaches 2
    top = lo ** (1.0 - k)
    power = k / (k - 1.0)
    val, _ = integrate.quad(lambda t: 1.0 / (1.0 + t**power), 0.0, top,
                            epsabs=1e-13, epsrel=1e-11, limit=200)
    return gamma0_linear ** (2.0 / alpha) * val / (k - 1.0)


def coverage_closed_form(alpha: float, gamma0_linear: float) -> float:
    """Coverage of nearest-BS association in an HPPP with Rayleigh fading,
    a single path-loss slope ``alpha`` and no noise.  Independent of density.
    """
    return 1.0 / (1.0 + interference_functional(alpha, gamma0_linear))


def coverage_closed_form_alpha4(gamma0_linear: float) -> float:
    """The alpha = 4 special case via the arctan reduction."""
    s = math.sqrt(gamma0_linear)
    return 1.0 / (1.0 + s * (math.pi / 2.0 - math.atan(1.0 / s)))


def isolated_cell_coverage(distance_km: float, tx_dbm: float, noise_dbm: float | None,
                           model: PathLossModel, gamma0_linear: float,
                           los: bool = True) -> float:
    """P(h > gamma0 N / S) = exp(-gamma0 N / S) for one BS, unit-mean exponential h."""
    if not distance_km > 0:
        raise ValueError("distance_km must be > 0")
    if noise_dbm is None or gamma0_linear == 0:
        return 1.0
    d = math.hypot(distance_km, model.height_diff_m / 1000.0)
    s_mw = 10.0 ** ((tx_dbm - path_loss_db(d, los, model)) / 10.0)
    n_mw = 10.0 ** (noise_dbm / 10.0)
    return math.exp(-gamma0_linear * n_mw / s_mw)
