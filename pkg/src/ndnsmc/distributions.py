"""Latency distribution library and measurement-fitting pipeline.

Distributions are immutable values sampled with a caller-supplied numpy
Generator; all draws are in nanoseconds and clamped to >= 0. The fitting
side turns a positive latency sample into either a direct parametric fit
(screened by probability-plot correlation) or a box-cox-normal law, and
validates the choice by regenerating a sample and reporting the two-sample
Kolmogorov-Smirnov distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps


class FitError(Exception):
    pass


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

_FAMILIES = ("dirac", "uniform", "normal", "lognormal", "weibull", "gamma",
             "empirical", "boxcox_normal")


@dataclass(frozen=True)
class Distribution:
    """One latency law; `family` selects which parameters are meaningful.

    dirac: a          uniform: a, b          normal: a=mu, b=sigma
    lognormal: a=mu_log, b=sigma_log         weibull/gamma: a=shape, b=scale
    empirical: samples (sorted)              boxcox_normal: lam, a=ybar, b=sbar
    """

    family: str
    a: float = 0.0
    b: float = 0.0
    lam: float = 0.0
    samples: Optional[tuple] = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family in ("normal", "weibull", "gamma") and not self.b > 0:
            raise ValueError(f"{self.family}: scale/sigma must be > 0")
        if self.family == "weibull" and not self.a > 0:
            raise ValueError("weibull: shape must be > 0")
        if self.family == "gamma" and not self.a > 0:
            raise ValueError("gamma: shape must be > 0")
        if self.family == "lognormal" and not self.b > 0:
            raise ValueError("lognormal: sigma must be > 0")
        if self.family == "empirical":
            if not self.samples:
                raise ValueError("empirical: needs at least one sample")
            object.__setattr__(self, "samples", tuple(sorted(self.samples)))

    def sample(self, rng: np.random.Generator) -> float:
        """One non-negative draw."""
        f = self.family
        if f == "dirac":
            x = self.a
        elif f == "uniform":
            x = rng.uniform(self.a, self.b)
        elif f == "normal":
            x = rng.normal(self.a, self.b)
        elif f == "lognormal":
            x = rng.lognormal(self.a, self.b)
        elif f == "weibull":
            x = self.b * rng.weibull(self.a)
        elif f == "gamma":
            x = rng.gamma(self.a, self.b)
        elif f == "empirical":
            x = self.samples[rng.integers(len(self.samples))]
        else:  # boxcox_normal
            zt = self.a + self.b * rng.standard_normal()
            x = inverse_boxcox(zt, self.lam)
        return x if x > 0.0 else 0.0

    def mean(self) -> float:
        """Analytic mean where available (clamping at 0 ignored)."""
        f = self.family
        if f == "dirac":
            return self.a
        if f == "uniform":
            return 0.5 * (self.a + self.b)
        if f == "normal":
            return self.a
        if f == "lognormal":
            return math.exp(self.a + 0.5 * self.b ** 2)
        if f == "weibull":
            return self.b * math.gamma(1.0 + 1.0 / self.a)
        if f == "gamma":
            return self.a * self.b
        if f == "empirical":
            return float(np.mean(self.samples))
        raise ValueError(f"no closed-form mean for {f}")

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "empirical":
            d["samples"] = list(self.samples)
        elif self.family == "boxcox_normal":
            d.update(lam=self.lam, ybar=self.a, sbar=self.b)
        elif self.family == "dirac":
            d["value"] = self.a
        else:
            d.update(a=self.a, b=self.b)
        return d

    @staticmethod
    def from_dict(d: dict) -> "Distribution":
        family = d["family"]
        if family == "empirical":
            return Distribution(family, samples=tuple(d["samples"]))
        if family == "boxcox_normal":
            return Distribution(family, a=d["ybar"], b=d["sbar"], lam=d["lam"])
        if family == "dirac":
            return Distribution(family, a=d["value"])
        return Distribution(family, a=d.get("a", 0.0), b=d.get("b", 0.0))


def dirac(value: float) -> Distribution:
    return Distribution("dirac", a=value)


def lognormal_from_mean(mean: float, sigma_log: float) -> Distribution:
    """Lognormal with the given arithmetic mean and log-space sigma."""
    if mean <= 0:
        raise ValueError("mean must be > 0")
    mu = math.log(mean) - 0.5 * sigma_log ** 2
    return Distribution("lognormal", a=mu, b=sigma_log)


def sample(dist: Distribution, rng: np.random.Generator) -> float:
    return dist.sample(rng)


# ---------------------------------------------------------------------------
# Box-cox transform
# ---------------------------------------------------------------------------


def boxcox(y, lam: float):
    """Power transform (y^lam - 1)/lam; natural log at lam == 0.

    Computed as expm1(lam*log(y))/lam, which stays accurate as lam -> 0.
    Domain: y > 0.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("box-cox requires strictly positive values")
    if abs(lam) < 1e-12:  # the log limit, before denormals poison expm1/lam
        out = np.log(y)
    else:
        out = np.expm1(lam * np.log(y)) / lam
    return float(out) if out.ndim == 0 else out


def inverse_boxcox(v, lam: float):
    """Inverse of boxcox; values outside the transform's range clamp to 0."""
    v = np.asarray(v, dtype=float)
    if abs(lam) < 1e-12:
        out = np.exp(v)
    else:
        base = lam * v
        ok = base > -1.0
        out = np.where(ok, np.exp(np.log1p(np.where(ok, base, 0.0)) / lam),
                       0.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Probability-plot correlation
# ---------------------------------------------------------------------------


def plotting_positions(n: int) -> np.ndarray:
    """Filliben's median-based uniform order statistic approximations."""
    if n < 1:
        raise ValueError("need n >= 1")
    m = (np.arange(1, n + 1) - 0.3175) / (n + 0.365)
    m[0] = 1.0 - 0.5 ** (1.0 / n)
    m[-1] = 0.5 ** (1.0 / n)
    return m


_GAMMA_SHAPE_GRID = np.exp(np.linspace(math.log(0.3), math.log(60.0), 40))


def _corr(x: np.ndarray, y: np.ndarray) -> float:
    sx = x - x.mean()
    sy = y - y.mean()
    denom = math.sqrt(float(sx @ sx) * float(sy @ sy))
    if denom == 0.0:
        raise FitError("zero variance in probability plot")
    return float(sx @ sy) / denom


def ppcc(samples, family: str) -> float:
    """Correlation between sorted data and a family's theoretical quantiles.

    Families: normal, lognormal, weibull, gamma. The lognormal and weibull
    plots are shape-free on the log scale; the gamma value is the maximum
    over a fixed shape grid.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size < 3:
        raise FitError("ppcc needs at least 3 samples")
    if x[0] == x[-1]:
        raise FitError("ppcc undefined for constant samples")
    m = plotting_positions(x.size)
    if family == "normal":
        return _corr(x, sps.norm.ppf(m))
    if family == "lognormal":
        if x[0] <= 0:
            raise FitError("lognormal ppcc requires positive samples")
        return _corr(np.log(x), sps.norm.ppf(m))
    if family == "weibull":
        if x[0] <= 0:
            raise FitError("weibull ppcc requires positive samples")
        # ln X is Gumbel-distributed; shape only scales the plot.
        return _corr(np.log(x), np.log(-np.log(1.0 - m)))
    if family == "gamma":
        if x[0] <= 0:
            raise FitError("gamma ppcc requires positive samples")
        best = -1.0
        for shape in _GAMMA_SHAPE_GRID:
            r = _corr(x, sps.gamma.ppf(m, shape))
            if r > best:
                best = r
        return best
    raise ValueError(f"unknown ppcc family {family!r}")


def boxcox_lambda_search(samples, grid_lo: float = -2.0, grid_hi: float = 2.0,
                         step: float = 0.01) -> tuple[float, float]:
    """Grid-search the power that maximizes the normal ppcc of the
    transformed data; returns (lambda, ppcc at lambda)."""
    x = np.sort(np.asarray(samples, dtype=float))
    if np.any(x <= 0):
        raise FitError("box-cox search requires positive samples")
    logs = np.log(x)
    m = plotting_positions(x.size)
    q = sps.norm.ppf(m)
    best_lam, best_r = 0.0, -1.0
    n_steps = int(round((grid_hi - grid_lo) / step))
    for i in range(n_steps + 1):
        lam = grid_lo + i * step
        if abs(lam) < 1e-12:
            t = logs
        else:
            t = (np.exp(lam * logs) - 1.0) / lam
        if t[0] == t[-1]:
            continue
        r = _corr(t, q)
        if r > best_r:
            best_lam, best_r = lam, r
    return best_lam, best_r


# ---------------------------------------------------------------------------
# Fitting pipeline
# ---------------------------------------------------------------------------


@dataclass
class FitReport:
    """Outcome of the fitting decision procedure."""

    chosen: Distribution
    ppcc_by_family: dict[str, float]
    lam: Optional[float] = None
    ybar: Optional[float] = None
    sbar: Optional[float] = None
    ks_distance: float = float("nan")
    threshold: float = 0.99
    n: int = 0


_SCREEN_FAMILIES = ("lognormal", "weibull", "gamma")


def _fit_family_params(x: np.ndarray, family: str) -> Distribution:
    m = plotting_positions(x.size)
    if family == "normal":
        return Distribution("normal", a=float(x.mean()), b=float(x.std(ddof=1)))
    if family == "lognormal":
        logs = np.log(x)
        return Distribution("lognormal", a=float(logs.mean()),
                            b=float(logs.std(ddof=1)))
    if family == "weibull":
        # ln x ~ ln(scale) + (1/shape) * ln(-ln(1-m)): linear regression.
        gx = np.log(-np.log(1.0 - m))
        logs = np.log(np.sort(x))
        slope, intercept = np.polyfit(gx, logs, 1)
        return Distribution("weibull", a=float(1.0 / slope),
                            b=float(math.exp(intercept)))
    if family == "gamma":
        best_shape, best_r = None, -1.0
        q = None
        xs = np.sort(x)
        for shape in _GAMMA_SHAPE_GRID:
            qq = sps.gamma.ppf(m, shape)
            r = _corr(xs, qq)
            if r > best_r:
                best_shape, best_r, q = float(shape), r, qq
        scale, _ = np.polyfit(q, xs, 1)
        return Distribution("gamma", a=best_shape, b=float(max(scale, 1e-12)))
    raise ValueError(family)


def fit(samples, threshold: float = 0.99, seed: int = 0) -> FitReport:
    """Decision procedure for choosing a latency law from measurements.

    1. Accept a normal fit if the normal ppcc reaches the threshold.
    2. Otherwise screen lognormal/weibull/gamma by ppcc and take the best
       one that reaches the threshold.
    3. Otherwise search a box-cox power over [-2, 2] maximizing the normal
       ppcc of the transformed data and keep (lambda, mean, sd).
    The chosen law is validated by regenerating an equally sized sample
    (seeded) and recording the two-sample KS distance.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 100:
        raise FitError("fit needs at least 100 samples")
    if np.any(x <= 0):
        raise FitError("fit requires strictly positive samples")
    if float(x.min()) == float(x.max()):
        raise FitError("fit undefined for constant samples")

    reports: dict[str, float] = {}
    reports["normal"] = ppcc(x, "normal")
    chosen = None
    lam = ybar = sbar = None

    if reports["normal"] >= threshold:
        chosen = _fit_family_params(x, "normal")
    else:
        for fam in _SCREEN_FAMILIES:
            reports[fam] = ppcc(x, fam)
        best_fam = max(_SCREEN_FAMILIES, key=lambda f: reports[f])
        if reports[best_fam] >= threshold:
            chosen = _fit_family_params(x, best_fam)
        else:
            lam, r = boxcox_lambda_search(x)
            reports["boxcox_normal"] = r
            t = boxcox(x, lam)
            ybar = float(np.mean(t))
            sbar = float(np.std(t, ddof=1))
            chosen = Distribution("boxcox_normal", a=ybar, b=sbar, lam=lam)

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    regen = np.array([chosen.sample(rng) for _ in range(x.size)])
    ks = float(sps.ks_2samp(x, regen).statistic)
    return FitReport(chosen=chosen, ppcc_by_family=reports, lam=lam,
                     ybar=ybar, sbar=sbar, ks_distance=ks,
                     threshold=threshold, n=int(x.size))


def read_measurements(path) -> np.ndarray:
    """One latency (ns) per line; blank lines and '#' comments ignored."""
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            values.append(float(line))
    return np.asarray(values, dtype=float)
