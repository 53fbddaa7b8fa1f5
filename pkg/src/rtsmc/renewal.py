"""Discretised renewal process: forward simulation and the direct R inverse.

Incident infections follow j_t = R_t * sum_k w_k * j_{t-k} with w the
discretised generation-time distribution.  ``invert_rt`` solves the same
relation for R_t and serves as a noise-free oracle in validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .delays import DelayPMF
from .errors import InsufficientHistory, InvalidSpec

POISSON_DRAW = "poisson"
DETERMINISTIC_MEAN = "deterministic"


@dataclass(frozen=True)
class InfectionHistory:
    """Daily incident infections, most recent last."""

    counts: np.ndarray = field(repr=False)
    day0: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        if counts.ndim != 1 or counts.size == 0:
            raise InvalidSpec("counts must be a non-empty 1-d vector")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise InvalidSpec("counts must be finite and non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __len__(self):
        return len(self.counts)


def _counts_of(history) -> np.ndarray:
    if isinstance(history, InfectionHistory):
        return history.counts
    return np.asarray(history, dtype=float)


def infection_force(history, w: DelayPMF):
    """sum_k w_k * j_{t-k} where the history ends at j_{t-1}.

    Accepts a 1-d history vector (or InfectionHistory) or a 2-d array of
    stacked histories, one row per particle.
    """
    counts = _counts_of(history)
    span, off = w.span, w.offset_start
    if counts.shape[-1] < span:
        raise InsufficientHistory(
            f"history of length {counts.shape[-1]} shorter than kernel span {span}"
        )
    window = counts[..., counts.shape[-1] - span : counts.shape[-1] - off + 1]
    return window @ w.probs[::-1]


def renewal_mean(R, history, w: DelayPMF):
    """Expected infections for the day after the history ends, R * force."""
    if w.offset_start < 1:
        raise InvalidSpec("generation-time kernel must have offset_start >= 1")
    if np.any(np.asarray(R) < 0):
        raise InvalidSpec("R must be non-negative")
    return R * infection_force(history, w)


def simulate_infections(
    R_path,
    w: DelayPMF,
    j_init: float = 1.0,
    mode: str = DETERMINISTIC_MEAN,
    rng_seed=None,
    init_history: str = "point",
) -> InfectionHistory:
    """Iterate the renewal recursion forward over a path of R values.

    With ``init_history="point"`` day 0 is seeded with ``j_init`` and
    earlier days contribute nothing; with ``"constant"`` the whole
    pre-history window is held at ``j_init`` (the recursion starts from a
    steady state instead of a single index case).  In ``poisson`` mode
    each day's count is drawn from Poisson(mean); in ``deterministic``
    mode the real-valued mean is carried forward.

    ``rng_seed`` may be an integer seed or a ``numpy.random.Generator``.
    """
    R_path = np.asarray(R_path, dtype=float)
    if R_path.ndim != 1 or R_path.size == 0:
        raise InvalidSpec("R_path must be a non-empty vector")
    if j_init < 0:
        raise InvalidSpec("j_init must be >= 0")
    if mode not in (POISSON_DRAW, DETERMINISTIC_MEAN):
        raise InvalidSpec(f"unknown mode {mode!r}")
    if init_history not in ("point", "constant"):
        raise InvalidSpec(f"unknown init_history {init_history!r}")
    if w.offset_start < 1:
        raise InvalidSpec("generation-time kernel must have offset_start >= 1")
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )

    horizon = len(R_path)
    span = w.span
    if init_history == "constant":
        j = np.full(span + horizon, float(j_init))
    else:
        # zero-padded so early days see an empty past
        j = np.zeros(span + horizon)
        j[span] = j_init
    lags = w.days  # day offsets carrying mass
    for t in range(1, horizon):
        mean = R_path[t] * float(np.dot(w.probs, j[span + t - lags]))
        if mode == POISSON_DRAW:
            j[span + t] = rng.poisson(mean)
        else:
            j[span + t] = mean
    return InfectionHistory(counts=j[span:], day0=0)


def invert_rt(j, w: DelayPMF) -> np.ndarray:
    """Direct-ratio R_t = j_t / sum_k w_k j_{t-k}.

    Defined only where the full kernel window is covered by real history
    (t >= span) and the denominator is positive; other entries are NaN.
    """
    counts = _counts_of(j)
    span = w.span
    out = np.full(len(counts), np.nan)
    lags = w.days
    for t in range(span, len(counts)):
        denom = float(np.dot(w.probs, counts[t - lags]))
        if denom > 0:
            out[t] = counts[t] / denom
    return out
