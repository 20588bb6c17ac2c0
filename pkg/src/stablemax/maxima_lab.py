"""Normalized maxima experiments, limit-law tests and dominance diagnostics."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import special, stats

from .bn_engine import BnTable
from .representations import MixedMovingAverage, ProductShift, RenewalMarkovShift, Representation
from .simulator import TruncationError, simulate_paths, supports_direct
from .stable_core import FrechetLaw, RandomStream, c_alpha, d_alpha, frechet_cdf, sample_positive_stable

__all__ = [
    "MaximaSample",
    "LimitVerdict",
    "partial_maxima",
    "run_maxima_experiment",
    "ks_against_frechet",
    "ks_against_sample",
    "fit_frechet_scale",
    "estimate_kx",
    "estimate_kx0",
    "estimate_rn",
    "rn_exact",
    "rn_limit",
    "check_dominance_trends",
    "tail_lower_bound_check",
    "subgaussian_limit_sample",
    "frechet_limit_law",
]

DEFAULT_KS_THRESHOLD = 0.05


@dataclass
class MaximaSample:
    """Replicates of ``M_n / c_n``."""

    n: int
    normalization: str
    c_n: float
    values: np.ndarray
    one_sided: bool = False
    uncertified: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size < 2:
            raise ValueError("a maxima sample needs at least two replicates")
        if not self.one_sided and np.any(self.values < 0):
            raise ValueError("two-sided maxima are nonnegative")

    @property
    def R(self) -> int:
        return int(self.values.size)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,replicate,value,normalization\n")
        for k, v in enumerate(self.values):
            buf.write(f"{self.n},{k},{v:.17g},{self.normalization}\n")
        return buf.getvalue()


@dataclass
class LimitVerdict:
    ks: float
    reference: dict
    threshold: float
    passed: bool
    R: int

    def to_json(self) -> str:
        return json.dumps(
            {"ks": self.ks, "threshold": self.threshold, "pass": self.passed, "R": self.R, "reference": self.reference},
            sort_keys=True,
        )


def partial_maxima(path, one_sided: bool = False) -> float:
    """``max |X_k|``, or ``max X_k`` when ``one_sided``."""
    x = np.asarray(getattr(path, "values", path), dtype=float)
    if x.size == 0:
        raise ValueError("empty path")
    return float(x.max() if one_sided else np.abs(x).max())


def _max_reduce(path, one_sided):
    return partial_maxima(path, one_sided), path.certified


def _normalizer(rep, n, normalization):
    if normalization == "n_alpha":
        return "n_alpha", n ** (1.0 / rep.alpha)
    if normalization == "bn":
        return "bn", rep.bn_alpha(n) ** (1.0 / rep.alpha)
    c = float(normalization)
    if not c > 0:
        raise ValueError("custom normalization must be positive")
    return "custom", c


def run_maxima_experiment(
    rep: Representation,
    n: int,
    replicates: int,
    normalization="n_alpha",
    stream=0,
    sampler="auto",
    policy=None,
    one_sided=False,
    workers=1,
    max_uncertified=0.01,
) -> MaximaSample:
    """``replicates`` independent values of ``M_n / c_n``.

    Replicate ``k`` uses replicate stream ``k``.  Raises
    :class:`TruncationError` (with the sample attached) if more than
    ``max_uncertified`` of the series paths missed the truncation tolerance.
    """
    if replicates < 2:
        raise ValueError("need at least two replicates")
    kind, c_n = _normalizer(rep, n, normalization)
    base = stream if isinstance(stream, RandomStream) else RandomStream(int(stream))
    if sampler == "auto":
        sampler = "direct" if supports_direct(rep) else "lepage"
    out = simulate_paths(
        rep, n, replicates, base, sampler=sampler, policy=policy, workers=workers,
        reduce=partial(_max_reduce, one_sided=one_sided),
    )
    vals = np.array([m for m, _ in out]) / c_n
    bad = sum(1 for _, ok in out if not ok)
    sample = MaximaSample(n, kind, c_n, vals, one_sided, bad, {"sampler": sampler, "seed": base.seed})
    if bad > max_uncertified * replicates:
        raise TruncationError(f"{bad} of {replicates} paths missed the truncation tolerance", partial=sample)
    return sample


def frechet_limit_law(rep: Representation, normalization="n_alpha", one_sided=False) -> FrechetLaw:
    """Frechet reference for the normalized maxima of ``rep``.

    ``n_alpha`` applies to mixed moving averages (scale
    ``C_alpha^(1/alpha) K_X``, or ``K_X^(0)`` one-sided); ``bn`` gives
    ``C_alpha^(1/alpha)``.
    """
    ca = c_alpha(rep.alpha) ** (1.0 / rep.alpha)
    if normalization == "bn":
        return FrechetLaw(rep.alpha, ca)
    if not isinstance(rep, MixedMovingAverage):
        raise ValueError("the n^(1/alpha) Frechet limit is stated for mixed moving averages")
    k = estimate_kx0(rep) if one_sided else estimate_kx(rep)
    return FrechetLaw(rep.alpha, ca * k)


def ks_against_frechet(sample: MaximaSample, law: FrechetLaw, threshold=DEFAULT_KS_THRESHOLD) -> LimitVerdict:
    """One-sample KS distance against the Frechet CDF."""
    ks = float(stats.kstest(sample.values, lambda z: frechet_cdf(law, z)).statistic)
    return LimitVerdict(ks, law.describe(), threshold, ks < threshold, sample.R)


def ks_against_sample(sample: MaximaSample, reference, threshold=DEFAULT_KS_THRESHOLD, label="reference") -> LimitVerdict:
    """Two-sample KS distance against an independent reference sample."""
    ref = np.asarray(reference, dtype=float)
    ks = float(stats.ks_2samp(sample.values, ref).statistic)
    return LimitVerdict(ks, {"law": label, "size": int(ref.size)}, threshold, ks < threshold, sample.R)


def fit_frechet_scale(values, alpha: float) -> float:
    """Maximum likelihood scale for a Frechet law with known index:
    ``mean(z^-alpha)^(-1/alpha)``."""
    z = np.asarray(values, dtype=float)
    return float(np.mean(z ** (-alpha)) ** (-1.0 / alpha))


def subgaussian_limit_sample(alpha: float, size: int, stream) -> np.ndarray:
    """Independent draws from the limit law of ``M_n / b_n`` for the
    sub-Gaussian process ``A^(1/2) Z_n``.

    Since ``b_n ~ (2 log n)^(1/2) / d_alpha`` and
    ``max_{k<n} |Z_k| ~ (2 log n)^(1/2)``, the limit is ``d_alpha A^(1/2)``.
    """
    return d_alpha(alpha) * np.sqrt(sample_positive_stable(alpha / 2.0, stream, size=size))


# ---------------------------------------------------------------------------
# kernel constants
# ---------------------------------------------------------------------------


def estimate_kx(mma: MixedMovingAverage) -> float:
    """``(sum_w weight(w) sup_k |f(w, k)|^alpha)^(1/alpha)``."""
    if not isinstance(mma, MixedMovingAverage):
        raise TypeError("K_X is defined for mixed moving averages")
    return mma.kx_alpha() ** (1.0 / mma.alpha)


def estimate_kx0(mma: MixedMovingAverage) -> float:
    """One-sided analogue of :func:`estimate_kx` (half the mass on each of
    the positive and negative envelopes)."""
    if not isinstance(mma, MixedMovingAverage):
        raise TypeError("K_X is defined for mixed moving averages")
    return mma.kx0_alpha() ** (1.0 / mma.alpha)


# ---------------------------------------------------------------------------
# dominance probability
# ---------------------------------------------------------------------------


def _collisions(left, right, pairs, n, epsilon):
    """Rows ``i`` whose two profiles both exceed ``epsilon`` at a shared index."""
    mark = np.zeros(pairs * n, dtype=bool)
    sel = np.abs(left.vals) > epsilon
    mark[left.rows[sel] * n + left.cols[sel]] = True
    sel = np.abs(right.vals) > epsilon
    key = right.rows[sel] * n + right.cols[sel]
    hit = np.zeros(pairs, dtype=bool)
    hit[right.rows[sel][mark[key]]] = True
    return hit


def estimate_rn(rep: Representation, n: int, epsilon: float = 0.5, samples: int = 10_000, stream=0, chunk=None):
    """Monte Carlo probability that two independent tilted points share a
    window index where both normalized profiles exceed ``epsilon``.

    Returns ``(estimate, standard error)``.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if samples < 1000:
        raise ValueError("need at least 1000 pairs")
    base = stream if isinstance(stream, RandomStream) else RandomStream(int(stream))
    chunk = chunk or max(1, min(samples, 10_000_000 // n))
    hits = 0
    done = 0
    i = 0
    while done < samples:
        b = min(chunk, samples - done)
        left = rep.sample_profiles(n, b, base.child("rn", i, "left").generator())
        right = rep.sample_profiles(n, b, base.child("rn", i, "right").generator())
        hits += int(_collisions(left, right, b, n, epsilon).sum())
        done += b
        i += 1
    p = hits / samples
    return p, math.sqrt(max(p * (1.0 - p), 1.0 / samples) / samples)


def rn_exact(rep: RenewalMarkovShift, n: int) -> float:
    """Exact collision probability for the renewal indicator kernel (any
    ``epsilon < 1``), from the renewal sequence of two independent chains."""
    if not isinstance(rep, RenewalMarkovShift):
        raise TypeError("exact r_n is available for the renewal family")
    return rep.pair_window_mass(n) / rep.bn_alpha(n) ** 2


def rn_limit(gamma: float) -> float:
    """Large-``n`` limit of the renewal collision probability (period 1)."""
    g = float(gamma)
    if g >= 0.5:
        return 0.0
    lg = 2 * special.gammaln(1 + g) + 2 * special.gammaln(1 - g) - special.gammaln(1 + 2 * g) - special.gammaln(1 - 2 * g)
    return math.exp(lg)


# ---------------------------------------------------------------------------
# sufficient conditions and tail bound
# ---------------------------------------------------------------------------


def _trend(values):
    d = np.diff(np.asarray(values, dtype=float))
    if np.all(d > 0):
        return "increasing"
    if np.all(d < 0):
        return "decreasing"
    if np.all(d == 0):
        return "constant"
    return "mixed"


def _big_kernel_mass(rep: ProductShift, level: float) -> float:
    """``m{|f| > level}`` for a product shift (probability base measure)."""
    x = level / rep.coef
    if rep.law == "rademacher":
        return 1.0 if x < 1.0 else 0.0
    if rep.law == "pareto":
        return 1.0 if x < 1.0 else x ** -rep.pareto_theta
    return float(2.0 * special.ndtr(-x))


def check_dominance_trends(rep: Representation, table: BnTable, epsilon: float = 0.5) -> dict:
    """Grid trends of ``b_n / n^(1/(2 alpha))`` and, on probability base
    spaces, of ``n^(1/2) m{|f| > epsilon b_n}``.  Reports trends only."""
    ns, bn = table.ns, table.values
    ratio = bn / ns ** (1.0 / (2.0 * rep.alpha))
    out = {"n": ns.tolist(), "bn_over_root": ratio.tolist(), "bn_over_root_trend": _trend(ratio)}
    if isinstance(rep, ProductShift):
        mass = np.array([math.sqrt(n) * _big_kernel_mass(rep, epsilon * b) for n, b in zip(ns, bn)])
        out.update({"root_n_big_mass": mass.tolist(), "root_n_big_mass_trend": _trend(mass), "big_mass": "computed"})
    else:
        out.update({"root_n_big_mass": None, "root_n_big_mass_trend": None, "big_mass": "not applicable"})
    return out


def tail_lower_bound_check(sample: MaximaSample, alpha: float, xs=None, min_exceedances: int = 20, slack: float = 3.0):
    """Check ``P(M_n/b_n > x) >= (1 - exp(-C_alpha x^-alpha)) / 2`` on a grid.

    Grid points with fewer than ``min_exceedances`` sample exceedances are
    skipped.  Returns a dict with per-point rows and an overall ``holds``.
    """
    if sample.normalization != "bn":
        raise ValueError("the lower bound is stated for b_n-normalized maxima")
    v = sample.values
    R = sample.R
    if xs is None:
        xs = np.quantile(v, np.linspace(0.05, 0.99, 25))
    ca = c_alpha(alpha)
    rows = []
    holds = True
    for x in np.asarray(xs, dtype=float):
        if x <= 0:
            continue
        count = int(np.sum(v > x))
        if count < min_exceedances:
            rows.append({"x": float(x), "skipped": True})
            continue
        emp = count / R
        bound = 0.5 * -math.expm1(-ca * x ** -alpha)
        se = math.sqrt(bound * (1.0 - bound) / R)
        ok = emp >= bound - slack * se
        holds &= ok
        rows.append({"x": float(x), "empirical": emp, "bound": bound, "stderr": se, "ok": bool(ok), "skipped": False})
    return {"holds": bool(holds), "rows": rows, "R": R}
