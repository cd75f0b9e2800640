"""Path loss, LoS probability and Rayleigh fading.

Distances are in km throughout, heights and near-field distances in m.
All evaluators broadcast over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


class Variant(str, Enum):
    SINGLE_SLOPE = "single-slope"
    DUAL_SLOPE = "dual-slope"
    NEAR_FIELD = "near-field"
    HEIGHT_AWARE = "height-aware"


class LosForm(str, Enum):
    # 0.5 - min(0.5, 5 exp(-r1/r)) + min(0.5, 5 exp(-r/r2)): continuous, monotone
    TR36828 = "3gpp"
    # two branches split at d1, each clamped to [0, 1]
    PIECEWISE = "piecewise"


@dataclass(frozen=True)
class LosProbabilityFn:
    """Distance-dependent LoS probability of a BS-to-UE link."""

    d1_km: float = 0.156
    r1_km: float = 0.156
    r2_km: float = 0.03
    form: LosForm = LosForm.TR36828
    clamp: bool = True

    def __post_init__(self):
        object.__setattr__(self, "form", LosForm(self.form))
        for name in ("d1_km", "r1_km", "r2_km"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be positive, got {v!r}")

    def __call__(self, r_km):
        return los_probability(r_km, self)

    @property
    def horizon_km(self) -> float:
        """Distance beyond which the LoS probability stays below ``LOS_NEGLIGIBLE``."""
        # both forms reduce to 5 exp(-r / r2) far out
        return max(self.d1_km, self.r2_km * math.log(5.0 / LOS_NEGLIGIBLE))


# LoS probability treated as zero when bounding association searches; the
# expected number of LoS BSs past the horizon is ~1e-10 even at 1e6 BSs/km2
LOS_NEGLIGIBLE = 1e-15


def los_probability(r_km, f: LosProbabilityFn = LosProbabilityFn()):
    """LoS probability at 2D distance ``r_km`` (> 0)."""
    r = np.asarray(r_km, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise ValueError("LoS probability needs finite distances > 0")
    near = 5.0 * np.exp(-f.r1_km / r)
    far = 5.0 * np.exp(-r / f.r2_km)
    if f.form is LosForm.TR36828:
        p = 0.5 - np.minimum(0.5, near) + np.minimum(0.5, far)
    else:
        p = np.where(r <= f.d1_km, 1.0 - near, far)
    p = np.clip(p, 0.0, 1.0)
    return p if p.ndim else float(p)


@dataclass(frozen=True)
class PathLossModel:
    """One of the four path-loss regimes.

    Slopes are in dB per decade of distance (10 x the path-loss exponent).
    ``near_field_distance_m`` caps the distance from below; it is required for
    NEAR_FIELD and optional for HEIGHT_AWARE.  ``height_diff_m`` is the BS-to-UE
    antenna height difference used by HEIGHT_AWARE.
    """

    variant: Variant = Variant.DUAL_SLOPE
    intercept_db: float = 145.4
    exponent: float = 3.75
    los_intercept_db: float = 103.8
    los_slope_db: float = 20.9
    nlos_intercept_db: float = 145.4
    nlos_slope_db: float = 37.5
    los_probability: LosProbabilityFn = field(default_factory=LosProbabilityFn)
    near_field_distance_m: float | None = None
    height_diff_m: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if min(self.exponent, self.los_slope_db, self.nlos_slope_db) < 0:
            raise ValueError("path-loss exponents must be >= 0")
        if self.variant is Variant.NEAR_FIELD and self.near_field_distance_m is None:
            raise ValueError("near-field model needs near_field_distance_m")
        if self.near_field_distance_m is not None and not self.near_field_distance_m > 0:
            raise ValueError("near_field_distance_m must be > 0")
        if not (math.isfinite(self.height_diff_m) and self.height_diff_m >= 0):
            raise ValueError("height_diff_m must be >= 0")
        if self.variant is not Variant.HEIGHT_AWARE and self.height_diff_m != 0:
            raise ValueError("height_diff_m is only meaningful for the height-aware model")

    # constructors ----------------------------------------------------------
    @classmethod
    def single_slope(cls, intercept_db: float = 145.4, exponent: float = 3.75) -> "PathLossModel":
        return cls(Variant.SINGLE_SLOPE, intercept_db=intercept_db, exponent=exponent)

    @classmethod
    def dual_slope(cls, **kw) -> "PathLossModel":
        return cls(Variant.DUAL_SLOPE, **kw)

    @classmethod
    def near_field(cls, near_field_m: float = 1.0, **kw) -> "PathLossModel":
        return cls(Variant.NEAR_FIELD, near_field_distance_m=near_field_m, **kw)

    @classmethod
    def height_aware(cls, height_diff_m: float = 8.5, near_field_m: float | None = None,
                     **kw) -> "PathLossModel":
        return cls(Variant.HEIGHT_AWARE, height_diff_m=height_diff_m,
                   near_field_distance_m=near_field_m, **kw)

    def with_(self, **kw) -> "PathLossModel":
        return replace(self, **kw)

    # evaluation ------------------------------------------------------------
    @property
    def has_los_states(self) -> bool:
        return self.variant is not Variant.SINGLE_SLOPE

    @property
    def near_field_km(self) -> float:
        return 0.0 if self.near_field_distance_m is None else self.near_field_distance_m / 1000.0

    def lines(self):
        """(intercept_db, slope_db) of every path-loss line the model can use."""
        if self.variant is Variant.SINGLE_SLOPE:
            return [(self.intercept_db, 10.0 * self.exponent)]
        return [(self.los_intercept_db, self.los_slope_db),
                (self.nlos_intercept_db, self.nlos_slope_db)]

    def effective_distance_km(self, r_2d_km):
        if self.variant is Variant.HEIGHT_AWARE:
            return np.hypot(r_2d_km, self.height_diff_m / 1000.0)
        return np.asarray(r_2d_km, dtype=float)

    def los_prob(self, r_2d_km):
        if not self.has_los_states:
            return np.ones_like(np.asarray(r_2d_km, dtype=float))
        return np.asarray(los_probability(r_2d_km, self.los_probability))

    def link_path_loss_db(self, r_2d_km, los):
        """Path loss of a link given its ground distance and LoS state."""
        return path_loss_db(self.effective_distance_km(r_2d_km), los, self)

    def reach_km(self, pl_db):
        """Largest ground distance at which some link state still has path loss <= ``pl_db``.

        Beyond the returned distance every BS is strictly weaker than a
        link with path loss ``pl_db`` (up to ties on a flat near-field cap),
        except for LoS links past the LoS horizon, whose probability is
        below ``LOS_NEGLIGIBLE``.  Returns 0 where no distance qualifies.
        """
        pl = np.asarray(pl_db, dtype=float)
        reach = np.zeros_like(pl)
        hkm = self.height_diff_m / 1000.0
        dnf = self.near_field_km
        for k, (a, b) in enumerate(self.lines()):
            if b == 0:
                d = np.where(pl >= a, np.inf, 0.0)
            else:
                d = 10.0 ** ((pl - a) / b)
            if dnf > 0:
                d = np.where(d >= dnf, d, 0.0)
            r = np.sqrt(np.maximum(d * d - hkm * hkm, 0.0))
            r = np.where(d >= hkm, r, 0.0)
            if k == 0 and self.has_los_states:
                r = np.minimum(r, self.los_probability.horizon_km)
            reach = np.maximum(reach, r)
        return reach

    def mean_gain(self, r_2d_km):
        """LoS-averaged linear path gain (fading has unit mean)."""
        r = np.asarray(r_2d_km, dtype=float)
        if not self.has_los_states:
            return 10.0 ** (-self.link_path_loss_db(r, True) / 10.0)
        p = self.los_prob(r)
        gl = 10.0 ** (-self.link_path_loss_db(r, True) / 10.0)
        gn = 10.0 ** (-self.link_path_loss_db(r, False) / 10.0)
        return p * gl + (1.0 - p) * gn

    def mean_square_gain(self, r_2d_km):
        r = np.asarray(r_2d_km, dtype=float)
        if not self.has_los_states:
            return 10.0 ** (-self.link_path_loss_db(r, True) / 5.0)
        p = self.los_prob(r)
        gl = 10.0 ** (-self.link_path_loss_db(r, True) / 5.0)
        gn = 10.0 ** (-self.link_path_loss_db(r, False) / 5.0)
        return p * gl + (1.0 - p) * gn

    @property
    def label(self) -> str:
        return self.variant.value


def path_loss_db(d_km, los, model: PathLossModel):
    """Path loss in dB at distance ``d_km`` for the given LoS state.

    For the height-aware model ``d_km`` must already be the 3D distance.
    """
    d = np.asarray(d_km, dtype=float)
    if np.any(~(d > 0)):
        raise ValueError("path loss needs distances > 0")
    if model.near_field_distance_m is not None:
        d = np.maximum(d, model.near_field_km)
    logd = np.log10(d)
    if model.variant is Variant.SINGLE_SLOPE:
        pl = model.intercept_db + 10.0 * model.exponent * logd
    else:
        los = np.asarray(los, dtype=bool)
        pl = np.where(los,
                      model.los_intercept_db + model.los_slope_db * logd,
                      model.nlos_intercept_db + model.nlos_slope_db * logd)
    return pl if np.ndim(pl) else float(pl)


@dataclass
class LinkGain:
    path_loss_db: float | np.ndarray
    los: bool | np.ndarray
    fading_power: float | np.ndarray

    def __post_init__(self):
        if np.any(~(np.asarray(self.fading_power) > 0)):
            raise ValueError("fading power must be > 0")
        if np.any(~np.isfinite(np.asarray(self.path_loss_db, dtype=float))):
            raise ValueError("path loss must be finite")


def draw_link(r_2d_km, model: PathLossModel, rng: np.random.Generator) -> LinkGain:
    """LoS state, path loss and unit-mean exponential fading for link(s) at ``r_2d_km``."""
    r = np.asarray(r_2d_km, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("link distance must be > 0")
    if model.has_los_states:
        los = rng.random(r.shape) < model.los_prob(r)
    else:
        los = np.ones(r.shape, dtype=bool)
    h = rng.standard_exponential(r.shape)
    # exponential draws of exactly 0 are possible in principle
    h = np.where(h > 0, h, np.finfo(float).tiny)
    pl = model.link_path_loss_db(r, los)
    if r.ndim == 0:
        return LinkGain(float(pl), bool(los), float(h))
    return LinkGain(pl, los, h)


def received_power_dbm(tx_power_dbm, link: LinkGain):
    return tx_power_dbm - np.asarray(link.path_loss_db) + 10.0 * np.log10(link.fading_power)


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(mw)
