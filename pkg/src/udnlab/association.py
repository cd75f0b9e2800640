"""Serving-BS selection and idle-mode activity."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import PathLossModel, path_loss_db
from .pointprocess import PointSet


class NoCoverageError(RuntimeError):
    """Raised when a UE has no BS to associate with."""


class Rule(str, Enum):
    NEAREST = "nearest"
    STRONGEST = "strongest"


@dataclass(frozen=True)
class AssociationPolicy:
    rule: Rule = Rule.STRONGEST

    def __post_init__(self):
        object.__setattr__(self, "rule", Rule(self.rule))


@dataclass
class AssociationMap:
    serving: np.ndarray      # BS index per UE
    r_2d_km: np.ndarray
    r_3d_km: np.ndarray
    los: np.ndarray
    path_loss_db: np.ndarray

    def __len__(self):
        return len(self.serving)


def effective_distance_km(r_2d_km, height_diff_m):
    """BS-to-UE distance including the antenna height difference."""
    r = np.asarray(r_2d_km, dtype=float)
    if np.any(r < 0):
        raise ValueError("ground distance must be >= 0")
    out = np.hypot(r, np.asarray(height_diff_m, dtype=float) / 1000.0)
    return out if np.ndim(out) else float(out)


def select_serving(group, bs, r_2d, pl, rule: Rule):
    """Winning row per group among candidate (group, bs) pairs.

    Strongest: lowest path loss, then smaller ground distance, then smaller
    BS index.  Nearest: smaller ground distance, then smaller BS index.
    Returns ``(groups, rows)`` with groups sorted ascending.
    """
    group = np.asarray(group)
    if group.size == 0:
        return group[:0], np.zeros(0, dtype=np.intp)
    if Rule(rule) is Rule.NEAREST:
        order = np.lexsort((bs, r_2d, group))
    else:
        order = np.lexsort((bs, r_2d, pl, group))
    g = group[order]
    first = np.ones(g.size, dtype=bool)
    first[1:] = g[1:] != g[:-1]
    return g[first], order[first]


def associate(ues: PointSet, bss: PointSet, policy: AssociationPolicy,
              model: PathLossModel, los=None) -> AssociationMap:
    """Associate every UE with one BS.

    ``los`` is an optional ``(n_ue, n_bs)`` boolean matrix of link states
    (all LoS when omitted).  Fading never enters the decision.
    """
    if len(bss) == 0:
        raise NoCoverageError("no BS available")
    n_ue, n_bs = len(ues), len(bss)
    if n_ue == 0:
        empty = np.zeros(0)
        return AssociationMap(np.zeros(0, dtype=np.intp), empty, empty,
                              np.zeros(0, dtype=bool), empty)
    diff = ues.points[:, None, :] - bss.points[None, :, :]
    r2d = np.hypot(diff[..., 0], diff[..., 1])
    if los is None:
        los = np.ones((n_ue, n_bs), dtype=bool)
    los = np.broadcast_to(np.asarray(los, dtype=bool), (n_ue, n_bs))
    d3 = model.effective_distance_km(r2d)
    # ground distance 0 with no height offset: treat as the closest representable distance
    d3 = np.maximum(d3, np.finfo(float).tiny)
    pl = path_loss_db(d3, los, model)
    grp = np.repeat(np.arange(n_ue), n_bs)
    bs_idx = np.tile(np.arange(n_bs), n_ue)
    _, rows = select_serving(grp, bs_idx, r2d.ravel(), np.asarray(pl).ravel(), policy.rule)
    serving = bs_idx[rows]
    ue = np.arange(n_ue)
    return AssociationMap(serving, r2d[ue, serving], d3[ue, serving],
                          los[ue, serving].copy(), np.asarray(pl)[ue, serving])


def mark_active(assoc: AssociationMap, bss) -> np.ndarray:
    """Activity flag per BS: active iff it serves at least one UE."""
    n_bs = bss if isinstance(bss, (int, np.integer)) else len(bss)
    active = np.zeros(n_bs, dtype=bool)
    active[np.asarray(assoc.serving, dtype=np.intp)] = True
    return active
