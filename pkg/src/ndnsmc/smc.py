"""Statistical model checking over seeded trace runs.

Probability estimation draws a fixed number of independent traces given by
the additive-error Chernoff-Hoeffding bound and reports the fraction
satisfying a Boolean monitor (plus mean and standard error for numeric
monitors). Hypothesis testing is Wald's sequential probability ratio test
on the Bernoulli trace outcomes. Per-trace seeds derive from (master seed,
trace index) so aggregation is insensitive to execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .forwarder import AccountingError, Counters, satisfaction_rate
from .kernel import derive_seed


def required_samples(alpha: float, delta_conf: float) -> int:
    """Chernoff-Hoeffding sample count: Pr(|p_hat - p| > alpha) <= delta."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if not 0.0 < delta_conf < 1.0:
        raise ValueError("delta_conf must be in (0, 1)")
    return max(1, math.ceil(math.log(2.0 / delta_conf) / (2.0 * alpha ** 2)))


# ---------------------------------------------------------------------------
# Monitors
# ---------------------------------------------------------------------------


class AllSatisfied:
    """True iff every Interest in the counting window was satisfied."""

    boolean = True

    def evaluate(self, counters: Counters) -> bool:
        if counters.ratio_sent <= 0:
            raise AccountingError("no Interests in the counting window")
        return counters.ratio_satisfied == counters.ratio_sent


class SatisfactionRatio:
    """Satisfied fraction of Interests in the counting window."""

    boolean = False

    def evaluate(self, counters: Counters) -> float:
        return satisfaction_rate(counters)


class EventuallyBounded:
    """True iff an event of the given kind occurs by the deadline tick."""

    boolean = True

    def __init__(self, kind: str, deadline: int):
        self.kind = kind
        self.deadline = deadline

    def evaluate(self, trace) -> bool:
        return any(ev[0] <= self.deadline and ev[1] == self.kind
                   for ev in trace.events)


def evaluate_monitor(result, monitor):
    """Apply a monitor to a completed trace's counters (or trace)."""
    return monitor.evaluate(result)


# ---------------------------------------------------------------------------
# Probability estimation
# ---------------------------------------------------------------------------


@dataclass
class SmcEstimate:
    """Estimate with its precision/confidence parameters and sample count.

    p_hat is the Boolean-monitor probability (None for purely numeric
    monitors); mean/stderr summarize the per-trace outcome values.
    """

    p_hat: Optional[float]
    alpha: float
    delta_conf: float
    n: int
    mean: float
    stderr: float
    seeds: tuple = ()
    outcomes: tuple = ()


def estimate(runner: Callable[[int], object], monitor, alpha: float = 0.1,
             delta_conf: float = 0.1, master_seed: int = 0,
             n_traces: Optional[int] = None) -> SmcEstimate:
    """Run N seeded traces and estimate Pr(monitor) / the monitor mean.

    runner(seed) must produce whatever the monitor evaluates (Counters for
    the satisfaction monitors). n_traces overrides the bound-derived count
    for desk-scale runs; the estimate's guarantee then follows the actual N.
    """
    n = required_samples(alpha, delta_conf) if n_traces is None else n_traces
    if n < 1:
        raise ValueError("need at least one trace")
    by_index = {}
    seeds = []
    for i in range(n):
        seed = derive_seed(master_seed, i)
        seeds.append(seed)
        by_index[i] = monitor.evaluate(runner(seed))
    values = [float(by_index[i]) for i in range(n)]
    mean = sum(values) / n
    if n > 1:
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = float("nan")
    p_hat = mean if getattr(monitor, "boolean", False) else None
    return SmcEstimate(p_hat=p_hat, alpha=alpha, delta_conf=delta_conf,
                       n=n, mean=mean, stderr=stderr, seeds=tuple(seeds),
                       outcomes=tuple(values))


# ---------------------------------------------------------------------------
# Sequential hypothesis testing
# ---------------------------------------------------------------------------

ACCEPT_ABOVE = "accept p >= theta+w"
ACCEPT_BELOW = "accept p <= theta-w"
UNDECIDED = "undecided"


@dataclass
class SprtConfig:
    """Wald test of p >= theta+w against p <= theta-w."""

    theta: float
    half_width: float = 0.01
    alpha_err: float = 0.05
    beta_err: float = 0.05
    max_samples: int = 10 ** 5

    def validate(self) -> "SprtConfig":
        lo, hi = self.theta - self.half_width, self.theta + self.half_width
        if not 0.0 < lo < hi < 1.0:
            raise ValueError("need 0 < theta-w < theta+w < 1")
        if not (0.0 < self.alpha_err < 1.0 and 0.0 < self.beta_err < 1.0):
            raise ValueError("error bounds must be in (0, 1)")
        if self.max_samples < 1:
            raise ValueError("max_samples must be >= 1")
        return self


@dataclass
class SprtResult:
    verdict: str
    samples: int
    log_likelihood_ratio: float
    config: SprtConfig = field(repr=False, default=None)


def sprt(runner: Callable[[int], object], monitor, cfg: SprtConfig,
         master_seed: int = 0) -> SprtResult:
    """Sequential probability ratio test on Boolean trace outcomes."""
    cfg.validate()
    p0 = cfg.theta - cfg.half_width
    p1 = cfg.theta + cfg.half_width
    upper = math.log((1.0 - cfg.beta_err) / cfg.alpha_err)
    lower = math.log(cfg.beta_err / (1.0 - cfg.alpha_err))
    inc_true = math.log(p1 / p0)
    inc_false = math.log((1.0 - p1) / (1.0 - p0))
    llr = 0.0
    for i in range(cfg.max_samples):
        outcome = bool(monitor.evaluate(runner(derive_seed(master_seed, i))))
        llr += inc_true if outcome else inc_false
        if llr >= upper:
            return SprtResult(ACCEPT_ABOVE, i + 1, llr, cfg)
        if llr <= lower:
            return SprtResult(ACCEPT_BELOW, i + 1, llr, cfg)
    return SprtResult(UNDECIDED, cfg.max_samples, llr, cfg)
