"""Independent numerical-integration coverage for the LoS/NLoS models.

Strongest-mean-power association over an HPPP with independent LoS marks,
Rayleigh fading and full load.  Written from the PPP void probability and
the probability generating functional only; it shares no code with the
Monte Carlo engine apart from the path-loss constants passed in.
"""

import math

import numpy as np
from scipy import integrate


class Model:
    def __init__(self, height_m=0.0, near_field_m=None, los_form="3gpp",
                 aL=103.8, bL=20.9, aN=145.4, bN=37.5):
        self.h = height_m / 1000.0
        self.dnf = 0.0 if near_field_m is None else near_field_m / 1000.0
        self.form = los_form
        self.aL, self.bL, self.aN, self.bN = aL, bL, aN, bN

    def p(self, r):
        near = 5 * math.exp(-0.156 / r)
        far = 5 * math.exp(-r / 0.03)
        if self.form == "3gpp":
            v = 0.5 - min(0.5, near) + min(0.5, far)
        else:
            v = 1 - near if r <= 0.156 else far
        return min(1.0, max(0.0, v))

    def d(self, r):
        return max(math.sqrt(r * r + self.h * self.h), self.dnf)

    def gL(self, r):
        return 10 ** (-(self.aL + self.bL * math.log10(self.d(r))) / 10)

    def gN(self, r):
        return 10 ** (-(self.aN + self.bN * math.log10(self.d(r))) / 10)

    def r_for_gain(self, g, a, b):
        # ground distance at which line (a, b) reaches gain g (0 if closer than any)
        d = 10 ** ((-10 * math.log10(g) - a) / b)
        if d <= max(self.h, self.dnf):
            return 0.0
        return math.sqrt(max(d * d - self.h * self.h, 0.0))


def coverage(model, lam, gamma0_db=0.0, tx_dbm=24.0, noise_dbm=-95.0, rmax=20.0):
    g0 = 10 ** (gamma0_db / 10)
    P = 10 ** (tx_dbm / 10)
    N = 0.0 if noise_dbm is None else 10 ** (noise_dbm / 10)
    two_pi_lam = 2 * math.pi * lam

    def A(kind, r):
        if r <= 0:
            return 0.0
        f = (lambda t: model.p(t) * t) if kind == "L" else (lambda t: (1 - model.p(t)) * t)
        pts = [x for x in (0.01, 0.05, 0.1, 0.156, 0.3) if x < r]
        return two_pi_lam * integrate.quad(f, 0, r, points=pts or None, limit=200)[0]

    def laplace(gs, rL, rN):
        def fL(t):
            gi = model.gL(t)
            return model.p(t) * g0 * gi / (gs + g0 * gi) * t

        def fN(t):
            gi = model.gN(t)
            return (1 - model.p(t)) * g0 * gi / (gs + g0 * gi) * t

        s = 0.0
        for f, lo in ((fL, rL), (fN, rN)):
            edges = sorted({lo, *[x for x in (0.01, 0.03, 0.1, 0.3, 1.0, 3.0) if x > lo], rmax})
            for a, b in zip(edges[:-1], edges[1:]):
                s += integrate.quad(f, a, b, limit=200)[0]
        return math.exp(-two_pi_lam * s)

    def integrand(r, kind):
        if kind == "L":
            gs = model.gL(r)
            dens = two_pi_lam * r * model.p(r) * math.exp(-A("L", r))
            r_other = model.r_for_gain(gs, model.aN, model.bN)
            void = math.exp(-A("N", r_other))
            rL, rN = r, r_other
        else:
            gs = model.gN(r)
            dens = two_pi_lam * r * (1 - model.p(r)) * math.exp(-A("N", r))
            r_other = model.r_for_gain(gs, model.aL, model.bL)
            void = math.exp(-A("L", r_other))
            rL, rN = r_other, r
        if dens * void == 0:
            return 0.0
        return dens * void * math.exp(-g0 * N / (P * gs)) * laplace(gs, rL, rN)

    scale = 1 / math.sqrt(math.pi * lam)
    total = 0.0
    for kind in ("L", "N"):
        edges = sorted({1e-7, *[scale * k for k in (0.1, 0.5, 1, 2, 4, 8)],
                        0.05, 0.1, 0.156, 0.3, 1.0, 3.0})
        edges = [e for e in edges if e <= 3.0]
        for a, b in zip(edges[:-1], edges[1:]):
            total += integrate.quad(integrand, a, b, args=(kind,), limit=100, epsrel=1e-6)[0]
    return total
