"""Monte-Carlo empirical Rademacher complexity over sampled hypothesis sets.

A hypothesis sample is a finite set of scalar functions evaluated on a fixed
sample set, stored as a [num_hypotheses, n] value matrix. The complexity
estimate averages, over random sign vectors, the best sample correlation any
hypothesis achieves. For two hypothesis samples the sum class (all pairwise
sums) can never out-correlate the two classes separately on any single sign
draw; ``subadditivity_check`` verifies that per-draw inequality explicitly
(by enumerating the pairwise sums, not by the algebraic shortcut) and
compares the Monte-Carlo estimates of both sides under shared draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Rng
from .errors import ContractError


@dataclass
class HypothesisSample:
    """Finite hypothesis set as an evaluation matrix over a fixed sample set."""

    values: np.ndarray  # [num_hypotheses, n]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ContractError(
                f"hypothesis matrix must be [num_hypotheses >= 1, n >= 1], "
                f"got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ContractError("hypothesis values must be finite")

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass
class RademacherEstimate:
    estimate: float
    stderr: float
    num_draws: int


@dataclass
class SubadditivityResult:
    r_sum_class: RademacherEstimate  # complexity of the pairwise-sum class
    r1: RademacherEstimate
    r2: RademacherEstimate
    margin: float  # (r1 + r2) - r_sum_class, under shared draws
    combined_stderr: float  # stderr of the per-draw margin
    per_draw_holds: bool  # sup-subadditivity on every single draw
    holds: bool  # expectation inequality within 3 * combined_stderr


def _sup_correlations(h: HypothesisSample, sigmas: np.ndarray) -> np.ndarray:
    """Best (1/n) sum_i sigma_i f(x_i) per draw; sigmas is [draws, n]."""
    scores = h.values @ sigmas.T / h.n  # [num_hypotheses, draws]
    return scores.max(axis=0)


def _estimate(sups: np.ndarray) -> RademacherEstimate:
    t = sups.size
    return RademacherEstimate(
        estimate=float(sups.mean()),
        stderr=float(sups.std(ddof=1) / np.sqrt(t)) if t > 1 else float("inf"),
        num_draws=t,
    )


def empirical_rademacher(
    h: HypothesisSample, num_sigma_draws: int, rng: Rng
) -> RademacherEstimate:
    """Monte-Carlo estimate of the empirical Rademacher complexity."""
    if num_sigma_draws < 100:
        raise ContractError(f"need at least 100 sigma draws, got {num_sigma_draws}")
    sigmas = rng.rademacher((num_sigma_draws, h.n))
    return _estimate(_sup_correlations(h, sigmas))


def pairwise_sum_class(h1: HypothesisSample, h2: HypothesisSample) -> HypothesisSample:
    """All pairwise sums f + g as an explicit hypothesis matrix."""
    if h1.n != h2.n:
        raise ContractError(f"sample sizes disagree: {h1.n} vs {h2.n}")
    summed = h1.values[:, None, :] + h2.values[None, :, :]
    return HypothesisSample(summed.reshape(-1, h1.n))


def subadditivity_check(
    h1: HypothesisSample,
    h2: HypothesisSample,
    num_sigma_draws: int,
    rng: Rng,
    chunk: int = 2048,
) -> SubadditivityResult:
    """Estimate both sides of the sum-class complexity inequality.

    All three estimates share the same sigma draws (a paired comparison, so
    the margin's variance is far below that of the estimates themselves).
    The sum-class supremum is computed by explicit enumeration over all
    hypothesis pairs, chunked over draws to bound memory.
    """
    if h1.n != h2.n:
        raise ContractError(f"sample sizes disagree: {h1.n} vs {h2.n}")
    if num_sigma_draws < 100:
        raise ContractError(f"need at least 100 sigma draws, got {num_sigma_draws}")
    n = h1.n
    sigmas = rng.rademacher((num_sigma_draws, n))

    sups1 = _sup_correlations(h1, sigmas)
    sups2 = _sup_correlations(h2, sigmas)
    sums = h1.values[:, None, :] + h2.values[None, :, :]
    sums = sums.reshape(-1, n)
    sup_sum = np.empty(num_sigma_draws)
    for start in range(0, num_sigma_draws, chunk):
        block = sigmas[start : start + chunk]
        sup_sum[start : start + chunk] = (sums @ block.T / n).max(axis=0)

    diffs = (sups1 + sups2) - sup_sum
    per_draw_holds = bool(np.all(diffs >= -1e-12))
    est_sum = _estimate(sup_sum)
    est1 = _estimate(sups1)
    est2 = _estimate(sups2)
    combined_stderr = float(diffs.std(ddof=1) / np.sqrt(num_sigma_draws))
    margin = float(diffs.mean())
    # the 1e-12 absorbs float summation noise when both sides coincide exactly
    holds = (
        est_sum.estimate
        <= est1.estimate + est2.estimate + 3.0 * combined_stderr + 1e-12
    )
    return SubadditivityResult(
        r_sum_class=est_sum,
        r1=est1,
        r2=est2,
        margin=margin,
        combined_stderr=combined_stderr,
        per_draw_holds=per_draw_holds,
        holds=holds,
    )


def exhaustive_rademacher(h: HypothesisSample) -> float:
    """Exact complexity by enumerating all 2^n sign vectors (oracle, n <= 20)."""
    n = h.n
    if n > 20:
        raise ContractError(f"exhaustive enumeration limited to n <= 20, got {n}")
    codes = np.arange(2**n, dtype=np.uint32)
    bits = ((codes[:, None] >> np.arange(n)[None, :]) & 1).astype(np.float64)
    sigmas = 2.0 * bits - 1.0
    return float(_sup_correlations(h, sigmas).mean())
