"""Exact and Monte Carlo ``b_n``, growth fits, and first-entrance bookkeeping."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .representations import Representation, RenewalMarkovShift
from .stable_core import RandomStream, as_generator

__all__ = [
    "BnRow",
    "BnTable",
    "bn_exact",
    "bn_table",
    "bn_monte_carlo",
    "growth_exponent",
    "check_growth_condition",
    "FiniteSystem",
    "cycle_system",
    "KacLedger",
    "kac_decomposition",
    "marcus_ratio",
    "marcus_normalizer",
]


@dataclass(frozen=True)
class BnRow:
    n: int
    bn: float
    method: str
    stderr: float = 0.0


@dataclass
class BnTable:
    """Rows ``(n, b_n, method, stderr)`` for one model."""

    alpha: float
    rows: list = field(default_factory=list)

    @property
    def ns(self) -> np.ndarray:
        return np.array([r.n for r in self.rows], dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.bn for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "bn", "method", "stderr"])
        for r in self.rows:
            w.writerow([r.n, f"{r.bn:.17g}", r.method, f"{r.stderr:.17g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, alpha: float) -> "BnTable":
        rows = [
            BnRow(int(d["n"]), float(d["bn"]), d["method"], float(d["stderr"]))
            for d in csv.DictReader(io.StringIO(text))
        ]
        return cls(alpha, rows)


def bn_exact(rep: Representation, n: int) -> float:
    """``b_n`` from the family's exact formula."""
    if not rep.exact_bn:
        raise ValueError(f"{rep.kind} has no exact b_n engine")
    return rep.bn_alpha(n) ** (1.0 / rep.alpha)


def bn_table(rep: Representation, ns, method="exact", samples=None, stream=None) -> BnTable:
    """Tabulate ``b_n`` over a grid, exactly or by Monte Carlo.

    Monte Carlo rows use sub-stream ``i`` of ``stream`` for grid point ``i``.
    """
    ns = np.asarray(ns, dtype=np.int64)
    if ns.ndim != 1 or ns.size == 0 or np.any(ns < 1):
        raise ValueError("n-grid must be a nonempty list of positive integers")
    table = BnTable(rep.alpha)
    if method == "exact":
        vals = rep.bn_alpha_grid(ns) ** (1.0 / rep.alpha)
        table.rows = [BnRow(int(n), float(v), "exact") for n, v in zip(ns, vals)]
    elif method == "mc":
        if samples is None or stream is None:
            raise ValueError("Monte Carlo tables need samples and a stream")
        base = stream if isinstance(stream, RandomStream) else RandomStream(int(stream))
        for i, n in enumerate(ns):
            est, se = bn_monte_carlo(rep, int(n), samples, base.child("bn_mc", i))
            table.rows.append(BnRow(int(n), est, "mc", se))
    else:
        raise ValueError(f"unknown method {method!r}")
    return table


def bn_monte_carlo(rep: Representation, n: int, samples: int, stream, chunk: int = 100_000):
    """Unbiased estimate of ``b_n^alpha`` reported as ``b_n`` with a
    delta-method standard error.

    Draws are accumulated chunk by chunk in a fixed order.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    rng = as_generator(stream)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        y = rep.integrand_draws(n, b, rng)
        total += math.fsum(y)
        total_sq += math.fsum(y * y)
        done += b
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0) * samples / (samples - 1)
    se_alpha = math.sqrt(var / samples)
    a = rep.alpha
    est = mean ** (1.0 / a)
    # d/dy y^(1/a) = y^(1/a - 1) / a
    se = mean ** (1.0 / a - 1.0) / a * se_alpha if mean > 0 else 0.0
    return est, se


def growth_exponent(table: BnTable) -> float:
    """Least-squares slope of ``log b_n`` against ``log n`` over the top half
    of the grid."""
    ns, vals = table.ns, table.values
    if len(ns) < 4:
        raise ValueError("growth fit needs at least 4 grid points")
    if np.any(np.diff(ns) <= 0):
        raise ValueError("n-grid must be strictly increasing")
    if ns[-1] < 100 * ns[0]:
        raise ValueError("growth fit needs a grid spanning at least two decades")
    half = len(ns) // 2
    x = np.log(ns[half:].astype(float))
    y = np.log(vals[half:])
    if x.size < 2:
        x, y = np.log(ns.astype(float)), np.log(vals)
    return float(np.polyfit(x, y, 1)[0])


def check_growth_condition(table: BnTable, theta: float, c: float):
    """Whether ``b_n >= c n^theta`` on every row; returns ``(ok, first bad n)``."""
    if not (theta > 0 and c > 0):
        raise ValueError("theta and c must be positive")
    for r in table.rows:
        if r.bn < c * r.n**theta:
            return False, r.n
    return True, None


# ---------------------------------------------------------------------------
# first-entrance decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteSystem:
    """Bijection ``perm`` of ``{0..K-1}`` with invariant weights ``mass``."""

    perm: tuple
    mass: tuple

    def __post_init__(self):
        p = np.asarray(self.perm)
        if sorted(p.tolist()) != list(range(len(p))):
            raise ValueError("map must be a permutation of its state space")
        m = np.asarray(self.mass, dtype=float)
        if m.shape != p.shape or np.any(m < 0):
            raise ValueError("need one nonnegative weight per state")
        if not np.allclose(m[p], m, rtol=0, atol=0):
            raise ValueError("weights are not invariant under the map")


def cycle_system(K: int) -> FiniteSystem:
    """Rotation ``i -> i + 1 mod K`` with uniform probability weights."""
    if K < 1:
        raise ValueError("cycle length must be positive")
    return FiniteSystem(tuple((i + 1) % K for i in range(K)), tuple([1.0 / K] * K))


@dataclass
class KacLedger:
    """First-entrance masses for a set ``A`` over ``k = 0..n-1``.

    ``entry[k] = m(A_k)`` with ``A_0 = A`` and ``A_k`` the points outside
    ``A`` entering it first at step ``k``; ``ret[k] = m(R_k)`` with ``R_k``
    the points of ``A`` first returning at step ``k`` (``ret[0] = 0``).
    """

    entry: np.ndarray
    ret: np.ndarray
    occupation: float
    ret_tail: np.ndarray  # m(A_k) by the return-time tail sum

    @property
    def occupation_residual(self) -> float:
        """Relative gap between the occupation mass and ``sum_k m(A_k)``."""
        s = math.fsum(self.entry)
        return abs(self.occupation - s) / max(abs(self.occupation), 1e-300)

    @property
    def return_residual(self) -> float:
        """Largest relative gap between ``m(A_k)`` and its return-tail sum."""
        k = np.arange(1, len(self.entry))
        if k.size == 0:
            return 0.0
        diff = np.abs(self.entry[k] - self.ret_tail[k])
        scale = np.maximum(np.abs(self.entry[k]), 1e-300)
        return float(np.max(np.where(self.entry[k] == 0, diff, diff / scale)))

    def to_csv(self) -> str:
        lines = ["k,m_Ak,m_Rk"]
        for k, (a, r) in enumerate(zip(self.entry, self.ret)):
            lines.append(f"{k},{a:.17g},{r:.17g}")
        return "\n".join(lines) + "\n"


def _kac_finite(system: FiniteSystem, A, n: int) -> KacLedger:
    perm = np.asarray(system.perm)
    mass = np.asarray(system.mass, dtype=float)
    K = len(perm)
    in_a = np.zeros(K, dtype=bool)
    in_a[list(A)] = True
    if mass[in_a].sum() <= 0:
        raise ValueError("set A has zero mass")
    # first hitting time of A (0 on A) and first return time from A
    hit = np.full(K, -1)
    ret_time = np.full(K, -1)
    for x in range(K):
        y, t = x, 0
        while not in_a[y] and t < K:
            y, t = perm[y], t + 1
        if in_a[y]:
            hit[x] = t
        if in_a[x]:
            y, t = perm[x], 1
            while not in_a[y]:
                y, t = perm[y], t + 1
            ret_time[x] = t
    horizon = max(n, K + 1)
    entry = np.array([math.fsum(mass[hit == k]) for k in range(horizon)])
    ret = np.array([0.0] + [math.fsum(mass[in_a & (ret_time == k)]) for k in range(1, horizon)])
    tail = np.array([math.fsum(ret[k + 1 :]) for k in range(horizon)])
    occ = math.fsum(mass[(hit >= 0) & (hit < n)])
    return KacLedger(entry[:n], ret[:n], occ, tail[:n])


def _kac_renewal(rep: RenewalMarkovShift, n: int) -> KacLedger:
    # A = {x_0 = 0}: A_k is the single ladder state k, R_k = {tau = k}
    k = np.arange(n)
    entry = rep.survival(k)
    ret = np.where(k == 0, 0.0, rep.return_probs(np.maximum(k, 1)))
    # m(A_k) = sum_{j=k+1}^{N} m(R_j) + m(A_N) with N = n
    p_tail = rep.return_probs(np.arange(1, n + 1))
    tail = np.empty(n)
    s_n = float(rep.survival(n))
    for i in range(n):
        tail[i] = math.fsum(np.append(p_tail[i:], s_n))
    occ = rep.bn_alpha(n)
    return KacLedger(entry, ret, occ, tail)


def kac_decomposition(system, A=None, n: int = 10) -> KacLedger:
    """First-entrance ledger for a finite permutation system (set ``A`` of
    states) or for a renewal shift (``A = {x_0 = 0}``)."""
    if n < 1:
        raise ValueError("n must be positive")
    if isinstance(system, RenewalMarkovShift):
        if A not in (None, "zero", {0}, (0,), [0]):
            raise ValueError("renewal ledgers use A = {x_0 = 0}")
        return _kac_renewal(system, n)
    if isinstance(system, FiniteSystem):
        if not A:
            raise ValueError("set A has zero mass")
        return _kac_finite(system, A, n)
    raise TypeError("kac_decomposition needs a FiniteSystem or a renewal shift")


# ---------------------------------------------------------------------------
# moment envelopes
# ---------------------------------------------------------------------------


def marcus_normalizer(alpha: float, n: int) -> float:
    """Regime-dependent slowly varying factor of the moment envelope."""
    if alpha > 1.0:
        conj = alpha / (alpha - 1.0)
        return max(math.log(n), 1.0) ** (1.0 / conj)
    if alpha == 1.0:
        return max(1.0, math.log(math.log(n))) if n > 1 else 1.0
    return 1.0


def marcus_ratio(rep: Representation, table: BnTable, p: float, replicates: int, stream, sampler="auto", policy=None):
    """``(E M_n^p)^(1/p) / b_n`` over the grid of ``table``.

    Returns a list of dicts with keys ``n, ratio, stderr, normalized``.
    """
    from .maxima_lab import run_maxima_experiment

    if not 0 < p < rep.alpha:
        raise ValueError("moment order p must lie in (0, alpha)")
    base = stream if isinstance(stream, RandomStream) else RandomStream(int(stream))
    out = []
    for i, row in enumerate(table.rows):
        ms = run_maxima_experiment(
            rep, row.n, replicates, normalization=row.bn, stream=base.child("marcus", i), sampler=sampler, policy=policy
        )
        y = ms.values**p
        mean = float(np.mean(y))
        se_mean = float(np.std(y, ddof=1) / math.sqrt(len(y)))
        ratio = mean ** (1.0 / p)
        se = ratio / (p * mean) * se_mean
        out.append(
            {"n": row.n, "ratio": ratio, "stderr": se, "normalized": ratio / marcus_normalizer(rep.alpha, row.n)}
        )
    return out
