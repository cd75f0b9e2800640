"""Monte Carlo estimation of typical-UE coverage and network ASE.

One trial is one independent network realization seen from a typical UE
at the origin.  Trials are simulated in blocks so that geometry can be
vectorized, but every random number a trial consumes comes from its own
counter-derived stream (:func:`udnlab.rng.trial_generator`) or from the
keyed link hash, so a trial's outcome does not depend on which block or
worker ran it.

Full-load scenarios (no idle mode) sample every BS of the window; the
interference of BSs beyond the window is added as its exact mean, and the
window is sized so that the neglected fluctuation of that far field is
small.  Idle-mode scenarios sample the UEs of the window and only the BSs
that can matter for association: the BS process is realised on a union of
disks (one big disk, or one disk per UE at very high BS density) and the
search around a UE is widened, with fresh exact sampling of the uncovered
area, whenever a BS outside the searched disk could still beat the
incumbent.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, spatial, special

from . import rng as rngmod
from .association import AssociationPolicy, NoCoverageError, Rule, select_serving
from .channel import PathLossModel, dbm_to_mw, mw_to_dbm
from .pointprocess import Region, uniform_in_disk

# expected BSs inside the first association search disk of a UE
SEARCH_NEIGHBOURS = 12
# std of the far-field interference relative to near interference + noise;
# the far field's mean is added exactly, only its fluctuation is dropped
TAIL_TOL = 1e-2
# smallest window, in expected transmitting BSs
MIN_WINDOW_TX = 200
IDLE_MIN_WINDOW_TX = 20
MAX_WINDOW_KM = 50.0
MAX_SEARCH_KM = 200.0
POINTS_PER_BLOCK = 1_000_000
_Z_SEP = 1.0e4  # km between stacked trials in the 3D search trees


@dataclass(frozen=True)
class Scenario:
    """Full description of one Monte Carlo experiment.

    ``ue_density_per_km2`` is only used with ``idle_mode``; ``math.inf``
    means every BS transmits.  ``noise_dbm=None`` switches noise off.
    ``region=None`` lets the engine size the simulation window.
    """

    bs_density_per_km2: float
    ue_density_per_km2: float = math.inf
    tx_power_dbm: float = 24.0
    noise_dbm: float | None = -95.0
    path_loss_model: PathLossModel = field(default_factory=PathLossModel.dual_slope)
    association: AssociationPolicy = field(default_factory=AssociationPolicy)
    idle_mode: bool = False
    sinr_threshold_db: float = 0.0
    region: Region | None = None
    trials: int = 10_000
    master_seed: int = 0

    def __post_init__(self):
        lam = self.bs_density_per_km2
        if not (isinstance(lam, (int, float)) and math.isfinite(lam) and lam > 0):
            raise ValueError(f"bs_density_per_km2 must be > 0, got {lam!r}")
        rho = self.ue_density_per_km2
        if math.isnan(rho) or rho <= 0:
            raise ValueError(f"ue_density_per_km2 must be > 0, got {rho!r}")
        if self.idle_mode and not math.isfinite(rho):
            raise ValueError("idle mode needs a finite ue_density_per_km2")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        if self.noise_dbm is not None and not math.isfinite(self.noise_dbm):
            raise ValueError("noise_dbm must be finite or None")
        if not math.isfinite(self.tx_power_dbm):
            raise ValueError("tx_power_dbm must be finite")
        if math.isnan(self.sinr_threshold_db) or self.sinr_threshold_db == math.inf:
            raise ValueError("sinr_threshold_db must be finite or -inf")

    def replace(self, **kw) -> "Scenario":
        return replace(self, **kw)

    @property
    def noise_mw(self) -> float:
        return 0.0 if self.noise_dbm is None else float(dbm_to_mw(self.noise_dbm))

    @property
    def tx_mw(self) -> float:
        return float(dbm_to_mw(self.tx_power_dbm))

    @property
    def threshold_linear(self) -> float:
        return 10.0 ** (self.sinr_threshold_db / 10.0)


@dataclass
class SinrSample:
    sinr_linear: float
    signal_dbm: float
    interference_dbm: float
    serving_los: bool
    n_interferers: int


@dataclass
class CoverageEstimate:
    probability: float
    ci95_halfwidth: float
    trials: int


@dataclass
class AseEstimate:
    ase_bps_hz_km2: float
    ci95_halfwidth: float
    active_bs_density_per_km2: float


@dataclass
class Deployment:
    """One realization, kept for inspection (coordinates in km)."""

    bs_points: np.ndarray
    ue_points: np.ndarray          # row 0 is the typical UE
    serving: np.ndarray            # BS row per UE, -1 when unserved
    active: np.ndarray             # bool per BS
    window_km: float


@dataclass
class TrialBatch:
    """Per-trial outcomes of one scenario, in trial order."""

    scenario: Scenario
    sinr: np.ndarray
    signal_mw: np.ndarray
    interference_mw: np.ndarray
    serving_los: np.ndarray
    uncovered: np.ndarray
    n_interferers: np.ndarray
    cond_log_coverage: np.ndarray   # NaN unless run with conditional=True
    cond_rate: np.ndarray
    n_ue: np.ndarray
    active_density: np.ndarray

    @property
    def trials(self) -> int:
        return self.sinr.size

    def _need_conditional(self, threshold_db):
        if np.isnan(self.cond_rate).any():
            raise ValueError("batch was simulated without conditional=True")
        if threshold_db is not None and threshold_db != self.scenario.sinr_threshold_db:
            raise ValueError("conditional estimates exist only at the scenario threshold")

    def coverage(self, threshold_db: float | None = None,
                 method: str = "direct") -> CoverageEstimate:
        """Coverage estimate.

        ``direct`` counts trials with SINR above the threshold.
        ``conditional`` averages the per-trial coverage probability given
        the geometry (fading integrated out); it estimates the same
        quantity with far less variance and resolves probabilities far
        below 1 / trials.
        """
        if method == "conditional":
            self._need_conditional(threshold_db)
            p_i = np.exp(self.cond_log_coverage)
            n = p_i.size
            sd = float(p_i.std(ddof=1)) if n > 1 else 0.0
            return CoverageEstimate(float(p_i.mean()), 1.96 * sd / math.sqrt(n), n)
        if method != "direct":
            raise ValueError(f"unknown method {method!r}")
        thr = self.scenario.sinr_threshold_db if threshold_db is None else threshold_db
        hit = self.sinr > 10.0 ** (thr / 10.0)
        n = hit.size
        p = float(hit.mean())
        if n * p * (1 - p) < 10:
            warnings.warn(f"normal-approximation CI unreliable (n={n}, p={p:.4g})",
                          RuntimeWarning, stacklevel=2)
        return CoverageEstimate(p, 1.96 * math.sqrt(p * (1 - p) / n), n)

    def log10_conditional_coverage(self) -> float:
        """log10 of the conditional coverage estimate, exact when it underflows."""
        self._need_conditional(None)
        lse = special.logsumexp(self.cond_log_coverage) - math.log(self.trials)
        return float(lse / math.log(10.0))

    def ase(self, method: str = "direct") -> AseEstimate:
        scn = self.scenario
        g0 = scn.threshold_linear
        if method == "conditional":
            self._need_conditional(None)
            rate = self.cond_rate
        elif method == "direct":
            rate = np.where(self.sinr > g0, np.log2(1.0 + self.sinr), 0.0)
        else:
            raise ValueError(f"unknown method {method!r}")
        n = rate.size
        a = self.active_density
        r_mean = float(rate.mean())
        a_mean = float(a.mean())
        if n > 1:
            var_r = float(rate.var(ddof=1))
            var_a = float(a.var(ddof=1))
            cov = float(np.cov(a, rate)[0, 1]) if var_a > 0 and var_r > 0 else 0.0
        else:
            var_r = var_a = cov = 0.0
        var = (r_mean**2 * var_a + a_mean**2 * var_r + 2 * a_mean * r_mean * cov) / n
        return AseEstimate(a_mean * r_mean, 1.96 * math.sqrt(max(var, 0.0)), a_mean)


def sinr_from_links(signal_mw: float, interferer_mw, noise_mw: float) -> float:
    """S / (sum(I) + N) for one UE."""
    denom = float(np.sum(interferer_mw)) + noise_mw
    if denom == 0:
        return math.inf
    return float(signal_mw) / denom


# ---------------------------------------------------------------------------
# window sizing


@dataclass(frozen=True)
class Window:
    radius_km: float
    search_km: float
    tail_mw: float
    mode: str            # "full", "disk" or "local"
    bs_radius_km: float  # radius of the BS disk in "full"/"disk" mode
    inner_km: float      # radius used to count active BSs


def _gain_integral(model: PathLossModel, a: float, b: float, square: bool = False) -> float:
    """Integral of (mean or mean-square) path gain times r over [a, b] km."""
    fn = model.mean_square_gain if square else model.mean_gain

    def integrand(s):
        r = math.exp(s)
        return float(fn(r)) * r * r

    b = min(b, 1.0e4)
    if b <= a:
        return 0.0
    edges = np.unique(np.clip(np.log([a, 0.001, 0.01, 0.1, 1.0, 10.0, b]), math.log(a), math.log(b)))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        total += integrate.quad(integrand, lo, hi, limit=200, epsrel=1e-8)[0]
    return total


@lru_cache(maxsize=256)
def _window(model: PathLossModel, lam: float, rho: float, idle: bool, noise_mw: float,
            tx_mw: float, rule: Rule, fixed_radius: float | None) -> Window:
    search = math.sqrt(SEARCH_NEIGHBOURS / (math.pi * lam))
    # density of transmitting BSs; in idle mode only used for the far field
    lam_tx = activation_approximation(lam, rho) * lam if idle else lam
    r0 = 1.0 / math.sqrt(math.pi * lam_tx)
    scale = 2.0 * math.pi * lam_tx * tx_mw

    def inner(R):
        return scale * _gain_integral(model, r0, R) + noise_mw

    if fixed_radius is not None:
        radius = fixed_radius
    else:
        n_min = IDLE_MIN_WINDOW_TX if idle else MIN_WINDOW_TX
        radius = max(math.sqrt(n_min / (math.pi * lam_tx)), 2.0 * r0)
        while radius < MAX_WINDOW_KM:
            var = 2.0 * scale * tx_mw * _gain_integral(model, radius, math.inf, square=True)
            if math.sqrt(var) <= TAIL_TOL * inner(radius):
                break
            radius *= 1.1
        radius = min(radius, MAX_WINDOW_KM)

    inner_km = radius - min(0.5 * radius, search)
    tail = scale * _gain_integral(model, radius, math.inf)
    if not idle:
        return Window(radius, search, tail, "full", radius, inner_km)
    cost_disk = lam * math.pi * (radius + search) ** 2
    overlap = 1.0 + rho * math.pi * search**2
    cost_local = rho * math.pi * radius**2 * SEARCH_NEIGHBOURS * overlap
    mode = "disk" if cost_disk <= cost_local else "local"
    return Window(radius, search, tail, mode, radius + search, inner_km)


def window_for(scn: Scenario) -> Window:
    """Simulation window the engine uses for ``scn``."""
    fixed = None if scn.region is None else scn.region.radius_km
    return _window(scn.path_loss_model, float(scn.bs_density_per_km2),
                   float(scn.ue_density_per_km2), bool(scn.idle_mode), scn.noise_mw, scn.tx_mw,
                   scn.association.rule, fixed)


# ---------------------------------------------------------------------------
# block simulation


def _segments(counts):
    offsets = np.zeros(len(counts) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    owner = np.repeat(np.arange(len(counts)), counts)
    local = np.arange(offsets[-1]) - offsets[owner]
    return offsets, owner, local


def _points3d(xy, trial):
    return np.column_stack([xy, trial.astype(float) * _Z_SEP])


def _link_los(model, keys, trial, ue_local, bs_local, r2d):
    if not model.has_los_states:
        return np.ones(r2d.shape, dtype=bool)
    u = rngmod.link_uniforms(keys[trial], ue_local, bs_local)
    return u < model.los_prob(np.maximum(r2d, 1e-12))


def _safe(r):
    return np.maximum(r, 1e-12)


def _finish(scn, gens, tid, r2d, los, serving_mask, tail_mw, conditional=False):
    """SINR of the typical UE of every trial from its transmitting links.

    ``tid``/``bs_row_local`` identify transmitting BSs sorted by (trial, BS
    index); fading is drawn from each trial's stream in that order.
    """
    B = len(gens)
    counts = np.bincount(tid, minlength=B)
    h = np.concatenate([g.standard_exponential(int(c)) for g, c in zip(gens, counts)]) \
        if counts.sum() else np.zeros(0)
    h = np.maximum(h, np.finfo(float).tiny)
    pl = scn.path_loss_model.link_path_loss_db(_safe(r2d), los)
    mean_rx = scn.tx_mw * 10.0 ** (-pl / 10.0)
    rx = mean_rx * h
    sig = np.zeros(B)
    slos = np.zeros(B, dtype=bool)
    sig[tid[serving_mask]] = rx[serving_mask]
    slos[tid[serving_mask]] = los[serving_mask]
    interf = np.bincount(tid, weights=np.where(serving_mask, 0.0, rx), minlength=B) + tail_mw
    n_int = counts - np.bincount(tid[serving_mask], minlength=B)
    covered = np.zeros(B, dtype=bool)
    covered[tid[serving_mask]] = True
    denom = interf + scn.noise_mw
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = np.where(covered, sig / denom, 0.0)
    sinr = np.where(covered & (denom == 0), np.inf, sinr)
    if conditional:
        cond = _conditional(scn, tid, mean_rx, serving_mask, covered, tail_mw, B)
    else:
        cond = (np.full(B, np.nan), np.full(B, np.nan))
    return sinr, sig, interf, slos, ~covered, n_int, *cond


# log-spaced SINR grid (in nats above the threshold) for the conditional rate
_RATE_GRID = np.linspace(0.0, 24.0, 49)


def _conditional(scn, tid, mean_rx, serving_mask, covered, tail_mw, B):
    """Fading-averaged coverage and rate of every trial given its geometry.

    With unit-mean exponential fading on every link,
    P(SINR > x | geometry) = exp(-x (N + tail) / S) * prod_i 1 / (1 + x I_i / S)
    where S and I_i are mean received powers.  Returns the log of that
    probability at the threshold and E[log2(1 + SINR) 1{SINR > threshold}].
    """
    s_bar = np.zeros(B)
    s_bar[tid[serving_mask]] = mean_rx[serving_mask]
    it = tid[~serving_mask]
    ratio = mean_rx[~serving_mask] / np.where(covered, s_bar, 1.0)[it]
    floor = (scn.noise_mw + tail_mw) / np.where(covered, s_bar, 1.0)

    def log_p(x):
        return -x * floor - np.bincount(it, weights=np.log1p(x * ratio), minlength=B)

    g0 = scn.threshold_linear
    log_cov = np.where(covered, log_p(g0), -np.inf)
    lo = max(g0, 1e-6)
    xs = lo * np.exp(_RATE_GRID)
    vals = np.stack([np.exp(log_p(x)) * x / (1.0 + x) for x in xs])
    tail_int = integrate.simpson(vals, x=_RATE_GRID, axis=0) / math.log(2.0)
    rate = math.log2(1.0 + g0) * np.exp(log_cov) + tail_int
    rate = np.where(covered, rate, 0.0)
    return log_cov, rate


def _full_load_block(scn: Scenario, win: Window, gens, conditional=False):
    B = len(gens)
    lam = scn.bs_density_per_km2
    mean_n = lam * math.pi * win.radius_km**2
    keys = np.zeros(B, dtype=np.uint64)
    pts, counts = [], np.zeros(B, dtype=np.int64)
    for i, g in enumerate(gens):
        keys[i] = rngmod.draw_key(g)
        n = int(g.poisson(mean_n))
        counts[i] = n
        pts.append(uniform_in_disk(g, n, win.radius_km))
    xy = np.concatenate(pts) if counts.sum() else np.zeros((0, 2))
    _, tid, local = _segments(counts)
    r2d = np.hypot(xy[:, 0], xy[:, 1])
    model = scn.path_loss_model
    los = _link_los(model, keys, tid, np.zeros_like(local), local, r2d)
    pl = model.link_path_loss_db(_safe(r2d), los)
    _, rows = select_serving(tid, local, r2d, pl, scn.association.rule)
    serving = np.zeros(tid.size, dtype=bool)
    serving[rows] = True
    out = _finish(scn, gens, tid, r2d, los, serving, win.tail_mw, conditional)
    active = np.full(B, lam)
    n_ue = np.ones(B, dtype=np.int64)
    return out, n_ue, active, (xy, counts, rows, tid)


class _BsField:
    """BSs of one block realised on a growing union of disks."""

    def __init__(self):
        self.xy = np.zeros((0, 2))
        self.trial = np.zeros(0, dtype=np.int64)
        self.local = np.zeros(0, dtype=np.int64)
        self.disk_xy = np.zeros((0, 2))
        self.disk_trial = np.zeros(0, dtype=np.int64)
        self.disk_r = np.zeros(0)
        self.disk_order = np.zeros(0, dtype=np.int64)
        self.next_local = None
        self.next_order = None
        self._tree = None

    def add(self, B, gens, lam, trial, centers, radii):
        """Add disks (grouped by trial, in order) and sample BSs on their new area."""
        if self.next_local is None:
            self.next_local = np.zeros(B, dtype=np.int64)
            self.next_order = np.zeros(B, dtype=np.int64)
        trial = np.asarray(trial, dtype=np.int64)
        order = np.empty(trial.size, dtype=np.int64)
        new_pts, new_owner = [], []
        for t in np.unique(trial):
            sel = np.flatnonzero(trial == t)
            order[sel] = self.next_order[t] + np.arange(sel.size)
            self.next_order[t] += sel.size
            g = gens[t]
            counts = g.poisson(lam * math.pi * radii[sel] ** 2)
            tot = int(counts.sum())
            rr = np.repeat(radii[sel], counts)
            u = g.random(tot)
            v = g.random(tot)
            r = rr * np.sqrt(u)
            a = 2.0 * np.pi * v
            c = np.repeat(centers[sel], counts, axis=0)
            p = np.column_stack([c[:, 0] + r * np.cos(a), c[:, 1] + r * np.sin(a)])
            new_pts.append(p)
            new_owner.append(np.repeat(sel, counts))
        self.disk_xy = np.concatenate([self.disk_xy, centers])
        self.disk_trial = np.concatenate([self.disk_trial, trial])
        self.disk_r = np.concatenate([self.disk_r, radii])
        first_new = self.disk_order.size
        self.disk_order = np.concatenate([self.disk_order, order])
        p = np.concatenate(new_pts) if new_pts else np.zeros((0, 2))
        owner = (np.concatenate(new_owner) if new_owner else np.zeros(0, dtype=np.int64)) + first_new
        ptrial = self.disk_trial[owner]
        keep = np.ones(p.shape[0], dtype=bool)
        multi = self.disk_trial.size and np.bincount(self.disk_trial).max() > 1
        if p.shape[0] and multi:
            dtree = spatial.cKDTree(_points3d(self.disk_xy, self.disk_trial))
            ptree = spatial.cKDTree(_points3d(p, ptrial))
            pairs = ptree.sparse_distance_matrix(dtree, float(self.disk_r.max()), output_type="ndarray")
            if pairs.size:
                pi = pairs["i"].astype(np.int64)
                dj = pairs["j"].astype(np.int64)
                d = np.hypot(p[pi, 0] - self.disk_xy[dj, 0], p[pi, 1] - self.disk_xy[dj, 1])
                same = self.disk_trial[dj] == ptrial[pi]
                earlier = self.disk_order[dj] < self.disk_order[owner[pi]]
                hit = same & earlier & (d < self.disk_r[dj])
                keep[pi[hit]] = False
        p, ptrial = p[keep], ptrial[keep]
        # BS index within trial follows generation order
        srt = np.argsort(ptrial, kind="stable")
        p, ptrial = p[srt], ptrial[srt]
        cnt = np.bincount(ptrial, minlength=B)
        _, _, loc = _segments(cnt)
        loc = loc + np.repeat(self.next_local, cnt)
        self.next_local += cnt
        self.xy = np.concatenate([self.xy, p])
        self.trial = np.concatenate([self.trial, ptrial])
        self.local = np.concatenate([self.local, loc])
        self._tree = None

    @property
    def tree(self):
        if self._tree is None:
            self._tree = spatial.cKDTree(_points3d(self.xy, self.trial))
        return self._tree


def _idle_block(scn: Scenario, win: Window, gens, keep=False, conditional=False):
    B = len(gens)
    lam, rho = scn.bs_density_per_km2, scn.ue_density_per_km2
    model = scn.path_loss_model
    rule = scn.association.rule
    R = win.radius_km
    keys = np.zeros(B, dtype=np.uint64)
    ue_pts, ue_counts = [], np.zeros(B, dtype=np.int64)
    for i, g in enumerate(gens):
        keys[i] = rngmod.draw_key(g)
        n = int(g.poisson(rho * math.pi * R * R))
        ue_counts[i] = n + 1
        ue_pts.append(np.vstack([np.zeros((1, 2)), uniform_in_disk(g, n, R)]))
    ue_xy = np.concatenate(ue_pts)
    _, ue_t, ue_local = _segments(ue_counts)
    n_ue = ue_xy.shape[0]

    field_ = _BsField()
    search = np.full(n_ue, win.search_km)
    if win.mode == "disk":
        field_.add(B, gens, lam, np.arange(B), np.zeros((B, 2)), np.full(B, win.bs_radius_km))
        covered = win.bs_radius_km - np.hypot(ue_xy[:, 0], ue_xy[:, 1])
    else:
        field_.add(B, gens, lam, ue_t, ue_xy, search.copy())
        covered = search.copy()

    ue3 = _points3d(ue_xy, ue_t)
    serving = np.full(n_ue, -1, dtype=np.int64)
    pending = np.arange(n_ue)
    while pending.size:
        sub = spatial.cKDTree(ue3[pending])
        pairs = sub.sparse_distance_matrix(field_.tree, float(search[pending].max()),
                                           output_type="ndarray")
        ui = pending[pairs["i"].astype(np.int64)]
        bj = pairs["j"].astype(np.int64)
        r2d = np.hypot(ue_xy[ui, 0] - field_.xy[bj, 0], ue_xy[ui, 1] - field_.xy[bj, 1])
        ok = (r2d <= search[ui]) & (field_.trial[bj] == ue_t[ui])
        ui, bj, r2d = ui[ok], bj[ok], r2d[ok]
        los = _link_los(model, keys, ue_t[ui], ue_local[ui], field_.local[bj], r2d)
        pl = model.link_path_loss_db(_safe(r2d), los)
        grp, rows = select_serving(ui, field_.local[bj], r2d, pl, rule)
        if rule is Rule.NEAREST:
            reach = r2d[rows]
        else:
            reach = model.reach_km(pl[rows])
        need = np.full(n_ue, np.nan)
        need[pending] = 2.0 * search[pending]
        done = reach <= search[grp]
        serving[grp[done]] = bj[rows[done]]
        need[grp[done]] = np.nan
        grow = grp[~done]
        need[grow] = np.maximum(reach[~done], search[grow]) * (1 + 1e-9) + 1e-12
        pending = np.flatnonzero(~np.isnan(need))
        if not pending.size:
            break
        lost = pending[need[pending] > MAX_SEARCH_KM]
        serving[lost] = -1
        pending = pending[need[pending] <= MAX_SEARCH_KM]
        search[pending] = need[pending]
        ext = pending[search[pending] > covered[pending]]
        if ext.size and win.mode == "disk":
            # grow the trial's centred disk; per-UE disks would overlap heavily here
            dist = np.hypot(ue_xy[:, 0], ue_xy[:, 1])
            grow_r = np.zeros(B)
            np.maximum.at(grow_r, ue_t[ext], dist[ext] + search[ext])
            tr = np.flatnonzero(grow_r > 0)
            field_.add(B, gens, lam, tr, np.zeros((tr.size, 2)), grow_r[tr])
            disk_r = np.zeros(B)
            np.maximum.at(disk_r, field_.disk_trial, field_.disk_r)
            covered = np.maximum(covered, disk_r[ue_t] - dist)
        elif ext.size:
            ext = ext[np.lexsort((ue_local[ext], ue_t[ext]))]
            field_.add(B, gens, lam, ue_t[ext], ue_xy[ext], search[ext].copy())
            covered[ext] = search[ext]

    # everything below depends only on the (trial, BS index) ordering
    srv = serving[serving >= 0]
    act_rows = np.unique(srv)
    act_rows = act_rows[np.lexsort((field_.local[act_rows], field_.trial[act_rows]))]
    tid = field_.trial[act_rows]
    bloc = field_.local[act_rows]
    r_act = np.hypot(field_.xy[act_rows, 0], field_.xy[act_rows, 1])
    los0 = _link_los(model, keys, tid, np.zeros_like(bloc), bloc, r_act)
    typ_srv = serving[ue_local == 0]           # one entry per trial
    serving_mask = act_rows == typ_srv[tid]
    out = _finish(scn, gens, tid, r_act, los0, serving_mask, win.tail_mw, conditional)
    # network activity excludes the typical UE, which is an added probe
    others = np.unique(serving[(serving >= 0) & (ue_local != 0)])
    r_oth = np.hypot(field_.xy[others, 0], field_.xy[others, 1])
    inner = others[r_oth <= win.inner_km]
    active_density = np.bincount(field_.trial[inner], minlength=B) / (math.pi * win.inner_km**2)
    dep = None
    if keep:
        t0 = field_.trial == 0
        rows0 = np.flatnonzero(t0)
        remap = np.full(field_.trial.size, -1, dtype=np.int64)
        remap[rows0] = np.arange(rows0.size)
        s0 = serving[ue_t == 0]
        active0 = np.zeros(rows0.size, dtype=bool)
        active0[remap[s0[s0 >= 0]]] = True
        dep = Deployment(field_.xy[rows0], ue_xy[ue_t == 0],
                         np.where(s0 >= 0, remap[np.maximum(s0, 0)], -1), active0, R)
    return out, ue_counts, active_density, dep


def _block_size(scn: Scenario, win: Window) -> int:
    if win.mode == "full":
        per = scn.bs_density_per_km2 * math.pi * win.radius_km**2
    else:
        ue = scn.ue_density_per_km2 * math.pi * win.radius_km**2
        if win.mode == "disk":
            per = ue * 4 + scn.bs_density_per_km2 * math.pi * win.bs_radius_km**2
        else:
            per = ue * (4 + 2 * SEARCH_NEIGHBOURS)
    return int(min(4096, max(1, POINTS_PER_BLOCK // max(per, 1.0))))


def _simulate(scn: Scenario, gens, keep=False, conditional=False):
    win = window_for(scn)
    if scn.idle_mode:
        out, n_ue, active, dep = _idle_block(scn, win, gens, keep, conditional)
    else:
        out, n_ue, active, extra = _full_load_block(scn, win, gens, conditional)
        dep = None
        if keep:
            xy, counts, rows, tid = extra
            n0 = int(counts[0])
            srv = rows[tid[rows] == 0]
            serving = np.array([int(srv[0])] if srv.size else [-1])
            act = np.ones(n0, dtype=bool)
            dep = Deployment(xy[:n0], np.zeros((1, 2)), serving, act, win.radius_km)
    return out, n_ue, active, dep


def _run_range(scn: Scenario, start: int, stop: int, stream: int, conditional=False):
    win = window_for(scn)
    bs = _block_size(scn, win)
    parts = []
    for lo in range(start, stop, bs):
        hi = min(stop, lo + bs)
        gens = [rngmod.trial_generator(scn.master_seed, t, stream) for t in range(lo, hi)]
        out, n_ue, active, _ = _simulate(scn, gens, conditional=conditional)
        parts.append((*out, n_ue, active))
    return [np.concatenate(c) for c in zip(*parts)]


def run_trials(scn: Scenario, trials: int | None = None, stream: int = 0,
               workers: int = 1, conditional: bool = False) -> TrialBatch:
    """Simulate ``trials`` realizations (default ``scn.trials``).

    ``conditional`` also records the fading-averaged coverage and rate of
    each trial (see :meth:`TrialBatch.coverage`).  The result is
    bit-identical for any ``workers`` count.
    """
    n = int(scn.trials if trials is None else trials)
    if n < 1:
        raise ValueError("trials must be >= 1")
    workers = max(1, int(workers))
    if workers == 1 or n < 2 * workers:
        cols = _run_range(scn, 0, n, stream, conditional)
    else:
        cuts = np.linspace(0, n, workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_run_range, scn, int(a), int(b), stream, conditional)
                    for a, b in zip(cuts[:-1], cuts[1:]) if b > a]
            results = [f.result() for f in futs]
        cols = [np.concatenate(c) for c in zip(*results)]
    return TrialBatch(scn, *cols)


def run_fixed_layout(scn: Scenario, bs_xy, los=None, trials: int | None = None,
                     stream: int = 0, conditional: bool = False) -> TrialBatch:
    """Trials over a fixed full-load BS layout (km) seen from the origin.

    Only fading, and LoS states unless ``los`` forces them, vary between
    trials.  No far-field interference is added.
    """
    xy = np.asarray(bs_xy, dtype=float).reshape(-1, 2)
    if xy.shape[0] == 0:
        raise NoCoverageError("no BS in the layout")
    n = int(scn.trials if trials is None else trials)
    model = scn.path_loss_model
    r2d = np.hypot(xy[:, 0], xy[:, 1])
    parts = []
    step = max(1, POINTS_PER_BLOCK // xy.shape[0])
    for lo in range(0, n, step):
        gens = [rngmod.trial_generator(scn.master_seed, t, stream) for t in range(lo, min(n, lo + step))]
        B = len(gens)
        keys = np.array([rngmod.draw_key(g) for g in gens], dtype=np.uint64)
        tid = np.repeat(np.arange(B), xy.shape[0])
        local = np.tile(np.arange(xy.shape[0]), B)
        rr = np.tile(r2d, B)
        if los is None:
            ll = _link_los(model, keys, tid, np.zeros_like(local), local, rr)
        else:
            ll = np.tile(np.broadcast_to(np.asarray(los, dtype=bool), r2d.shape), B)
        pl = model.link_path_loss_db(_safe(rr), ll)
        _, rows = select_serving(tid, local, rr, pl, scn.association.rule)
        serving = np.zeros(tid.size, dtype=bool)
        serving[rows] = True
        out = _finish(scn, gens, tid, rr, ll, serving, 0.0, conditional)
        parts.append((*out, np.ones(B, dtype=np.int64), np.full(B, math.nan)))
    cols = [np.concatenate(c) for c in zip(*parts)]
    return TrialBatch(scn, *cols)


def sample_sinr(scn: Scenario, rng: np.random.Generator) -> SinrSample:
    """One full realization seen by the typical UE."""
    (sinr, sig, interf, slos, unc, nint, _, _), _, _, _ = _simulate(scn, [rng])
    if unc[0]:
        raise NoCoverageError("no BS serves the typical UE in this realization")
    return SinrSample(float(sinr[0]), float(mw_to_dbm(sig[0])), float(mw_to_dbm(interf[0])),
                      bool(slos[0]), int(nint[0]))


def sample_deployment(scn: Scenario, rng: np.random.Generator) -> tuple[SinrSample | None, Deployment]:
    """Like :func:`sample_sinr` but also returns the realization."""
    (sinr, sig, interf, slos, unc, nint, _, _), _, _, dep = _simulate(scn, [rng], keep=True)
    s = None if unc[0] else SinrSample(float(sinr[0]), float(mw_to_dbm(sig[0])),
                                       float(mw_to_dbm(interf[0])), bool(slos[0]), int(nint[0]))
    return s, dep


def coverage_probability(scn: Scenario, workers: int = 1) -> CoverageEstimate:
    return run_trials(scn, workers=workers).coverage()


def ase(scn: Scenario, workers: int = 1) -> AseEstimate:
    return run_trials(scn, workers=workers).ase()


def evaluate(scn: Scenario, workers: int = 1, stream: int = 0):
    """Coverage and ASE from the same set of trials."""
    batch = run_trials(scn, workers=workers, stream=stream)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cov = batch.coverage()
    return cov, batch.ase()


# ---------------------------------------------------------------------------
# idle-mode activation


def activation_approximation(lam: float, rho: float, q: float = 3.5) -> float:
    """Literature approximation of the probability that a BS has a UE."""
    return 1.0 - (1.0 + rho / (q * lam)) ** (-q)


def empirical_activation(lam: float, rho: float, trials: int, rng=0,
                         expected_bs: int = 400) -> float:
    """Mean fraction of BSs with at least one UE under nearest-BS association.

    ``rng`` is a Generator or an integer master seed (one stream per trial).
    """
    if not (lam > 0 and rho > 0):
        raise ValueError("densities must be > 0")
    r_in = math.sqrt(expected_bs / (math.pi * lam))
    r_out = r_in + 4.0 / math.sqrt(math.pi * lam)
    fractions = np.empty(trials)
    for t in range(trials):
        g = rng if isinstance(rng, np.random.Generator) else rngmod.trial_generator(int(rng), t, 7)
        bs = uniform_in_disk(g, int(g.poisson(lam * math.pi * r_out**2)), r_out)
        ue = uniform_in_disk(g, int(g.poisson(rho * math.pi * r_out**2)), r_out)
        inside = np.hypot(bs[:, 0], bs[:, 1]) <= r_in
        if not inside.any():
            fractions[t] = np.nan
            continue
        active = np.zeros(bs.shape[0], dtype=bool)
        if ue.shape[0] and bs.shape[0]:
            _, idx = spatial.cKDTree(bs).query(ue)
            active[idx] = True
        fractions[t] = active[inside].mean()
    return float(np.nanmean(fractions))
