"""Reproducible random streams.

Every Monte Carlo trial owns a Philox stream keyed by ``(master_seed,
stream, trial)``, so trial ``i`` draws the same numbers no matter how the
trials are batched or spread over workers.  Per-link marks such as the
LoS state are not drawn from a stream at all: they come from a keyed
counter hash of the link endpoints, which makes the mark of a link the
same wherever and whenever it is looked up inside a trial.
"""

from __future__ import annotations

import os

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_M3 = np.uint64(0xD6E8FEB86659FD93)

SEED_ENV_VAR = "UDNLAB_SEED"


def trial_generator(master_seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one trial of one experiment stream."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream), int(trial)))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(master_seed: int, index: int) -> int:
    """Child seed for sub-experiment ``index`` (e.g. one grid point of a sweep)."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(0x5EED, int(index)))
    return int(seq.generate_state(1, np.uint64)[0] >> np.uint64(1))


def default_seed(fallback: int = 0) -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return fallback
    return int(raw)


def _mix(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; bijective on uint64
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def link_uniforms(key, a, b) -> np.ndarray:
    """Uniform [0, 1) variates addressed by ``(key, a, b)``.

    ``a`` and ``b`` are non-negative integer arrays (broadcast together),
    typically a UE index and a BS index inside one trial.
    """
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(np.uint64(key) + (a + np.uint64(1)) * _GOLDEN)
        z = _mix(z ^ ((b + np.uint64(1)) * _M3))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def draw_key(rng: np.random.Generator) -> np.uint64:
    return rng.integers(0, 2**64 - 1, dtype=np.uint64, endpoint=True)
