"""Path sampling: truncated LePage series and direct samplers.

The series for a window of length ``n`` is

    X_k = b_n C_alpha^(1/alpha) sum_j eps_j Gamma_j^(-1/alpha) v_j[k]

with Rademacher signs ``eps_j``, unit-rate Poisson arrivals ``Gamma_j`` and
i.i.d. normalized profiles ``v_j`` drawn from the tilted law.  The random
signs make the series symmetric, so no centering is needed for any alpha.

For alpha near 2 the dropped terms ``j > J`` add up to a non-negligible
amount even when each is tiny.  By default that remainder is replaced by a
centered Gaussian vector with the same conditional covariance
``E[v v^T] Gamma_J^(1 - 2/alpha) / (2/alpha - 1)``, realized as
``sum_i Z_i v'_i`` over extra independent profiles ``v'_i`` (exactly Gaussian
whenever ``|v'| = 1``, as for ``n = 1``).

Every path owns the replicate stream ``stream.replicate(k)`` and splits it
into the sub-streams ``"arrivals"``, ``"signs"`` and ``"profiles"``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from .representations import MixedMovingAverage, ProductShift, Representation
from .stable_core import RandomStream, c_alpha, sample_positive_stable, sample_sas

__all__ = [
    "TruncationPolicy",
    "PathSample",
    "TruncationError",
    "choose_truncation",
    "lepage_path",
    "direct_path",
    "simulate_paths",
    "ordered_map",
    "marginal_check",
    "paths_to_jsonl",
    "supports_direct",
]


class TruncationError(RuntimeError):
    """Raised when too many paths miss the truncation tolerance."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class TruncationPolicy:
    """Series truncation control: at least ``j_min`` terms, stop once
    ``(Gamma_1 / Gamma_J)^(1/alpha) <= rho``, never more than ``j_cap``."""

    j_min: int = 10
    rho: float = 1e-3
    j_cap: int = 100_000
    compensate: bool = True
    compensation_terms: int = 64

    def __post_init__(self):
        if self.j_min < 10:
            raise ValueError("j_min must be at least 10")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.j_cap < self.j_min:
            raise ValueError("j_cap must be at least j_min")


@dataclass
class PathSample:
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def certified(self) -> bool:
        return self.meta.get("certified", True)

    def to_json(self) -> str:
        return json.dumps({"x": [float(f"{v:.17g}") for v in self.values], "meta": self.meta}, sort_keys=True)


def choose_truncation(alpha: float, policy: TruncationPolicy) -> int:
    """Preview truncation level ``max(j_min, ceil(rho^-alpha))``, capped."""
    return int(min(policy.j_cap, max(policy.j_min, math.ceil(policy.rho**-alpha))))


def _arrivals(alpha, policy, rng):
    """Arrivals up to the per-path stopping level, and whether it was reached."""
    block = choose_truncation(alpha, policy)
    gam = np.cumsum(rng.standard_exponential(block))
    target = gam[0] * policy.rho**-alpha
    while gam[-1] < target and len(gam) < policy.j_cap:
        more = gam[-1] + np.cumsum(rng.standard_exponential(min(block, policy.j_cap - len(gam))))
        gam = np.concatenate([gam, more])
    reached = np.flatnonzero(gam >= target)
    if reached.size:
        J = max(policy.j_min, int(reached[0]) + 1)
        return gam[:J], True
    return gam[: policy.j_cap], False


def _bn_for(rep, n, bn):
    if bn is not None:
        return float(bn)
    return rep.bn_alpha(n) ** (1.0 / rep.alpha)


def lepage_path(rep: Representation, n: int, policy=None, stream=None, flip_signs=False, bn=None) -> PathSample:
    """One path of the truncated series; see the module docstring."""
    policy = policy or TruncationPolicy()
    if not isinstance(stream, RandomStream):
        raise TypeError("lepage_path needs a RandomStream")
    alpha = rep.alpha
    bn = _bn_for(rep, n, bn)
    gam, ok = _arrivals(alpha, policy, stream.child("arrivals").generator())
    J = len(gam)
    eps = stream.child("signs").generator().choice(np.array([-1.0, 1.0]), size=J)
    if flip_signs:
        eps = -eps
    prof = rep.sample_profiles(n, J, stream.child("profiles").generator())
    scale = bn * c_alpha(alpha) ** (1.0 / alpha)
    coef = scale * eps * gam ** (-1.0 / alpha)
    values = np.bincount(prof.cols, weights=coef[prof.rows] * prof.vals, minlength=n)
    if policy.compensate:
        sub = stream.child("remainder")
        m = policy.compensation_terms
        rem_var = gam[-1] ** (1.0 - 2.0 / alpha) / (2.0 / alpha - 1.0)
        z = sub.child("weights").generator().standard_normal(m)
        if flip_signs:
            z = -z
        extra = rep.sample_profiles(n, m, sub.child("profiles").generator())
        wz = scale * math.sqrt(rem_var / m) * z
        values = values + np.bincount(extra.cols, weights=wz[extra.rows] * extra.vals, minlength=n)
    ratio = (gam[0] / gam[-1]) ** (1.0 / alpha)
    meta = {
        "seed": stream.seed,
        "stream_index": stream.index,
        "sampler": "lepage",
        "J": J,
        "certified": bool(ok),
        "tail_ratio": ratio,
        "tail_diagnostic": gam[-1] ** (-1.0 / alpha) * bn * c_alpha(alpha) ** (1.0 / alpha),
    }
    return PathSample(values, meta)


def supports_direct(rep: Representation) -> bool:
    return isinstance(rep, MixedMovingAverage) or (isinstance(rep, ProductShift) and rep.law == "gaussian")


def direct_path(rep: Representation, n: int, stream) -> PathSample:
    """Exact path without series truncation.

    Sub-Gaussian: ``X_k = A^(1/2) Z_k`` with one positive (alpha/2)-stable
    ``A``.  Mixed moving average: ``X_k = sum_{w,i} f(w, i - k) xi_{w,i}``
    with independent SaS innovations of scale ``weight(w)^(1/alpha)``.
    """
    if not isinstance(stream, RandomStream):
        raise TypeError("direct_path needs a RandomStream")
    if n < 1:
        raise ValueError("window length n must be at least 1")
    meta = {"seed": stream.seed, "stream_index": stream.index, "sampler": "direct", "J": 0, "certified": True}
    if isinstance(rep, ProductShift) and rep.law == "gaussian":
        a = sample_positive_stable(rep.alpha / 2.0, stream.child("mixing"))
        z = stream.child("gaussians").generator().standard_normal(n)
        return PathSample(math.sqrt(a) * z, meta)
    if isinstance(rep, MixedMovingAverage):
        x = np.zeros(n)
        for w, atom in enumerate(rep.atoms):
            k = np.asarray(atom.kernel, dtype=float)
            # innovations at positions offset .. offset + len - 1 + n - 1
            xi = sample_sas(rep.alpha, atom.weight ** (1.0 / rep.alpha), stream.child("innovations", w), size=len(k) + n - 1)
            for i, fi in enumerate(k):
                if fi != 0.0:
                    x += fi * xi[i : i + n]
        return PathSample(x, meta)
    raise ValueError(f"no direct sampler for {rep.kind}")


def _one_path(k, rep, n, sampler, policy, base, flip_signs, bn):
    stream = base.replicate(k)
    if sampler == "direct":
        return direct_path(rep, n, stream)
    return lepage_path(rep, n, policy, stream, flip_signs=flip_signs, bn=bn)


def ordered_map(func, items, workers=1, chunksize=8):
    """``list(map(func, items))``, optionally spread over worker processes.
    Results come back in input order whatever the worker count."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) < 2:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=chunksize))


def simulate_paths(
    rep, n, count, stream, sampler="auto", policy=None, flip_signs=False, bn=None, workers=1, start=0, reduce=None
):
    """Paths for replicates ``start .. start + count - 1``.

    ``reduce`` (a picklable function of a :class:`PathSample`) is applied in
    the worker so that only its result travels back; the default keeps the
    whole path.
    """
    if count < 1:
        raise ValueError("need at least one path")
    base = stream if isinstance(stream, RandomStream) else RandomStream(int(stream))
    if sampler == "auto":
        sampler = "direct" if supports_direct(rep) else "lepage"
    if sampler not in ("direct", "lepage"):
        raise ValueError(f"unknown sampler {sampler!r}")
    if sampler == "lepage" and bn is None:
        bn = _bn_for(rep, n, None)
    func = partial(_reduced_path, rep=rep, n=n, sampler=sampler, policy=policy or TruncationPolicy(),
                   base=base, flip_signs=flip_signs, bn=bn, reduce=reduce)
    return ordered_map(func, range(start, start + count), workers)


def _reduced_path(k, rep, n, sampler, policy, base, flip_signs, bn, reduce):
    path = _one_path(k, rep, n, sampler, policy, base, flip_signs, bn)
    return path if reduce is None else reduce(path)


def _first_value(path):
    return path.values[0], path.certified


def marginal_check(rep, n, paths, stream, sampler="lepage", policy=None, reference_size=100_000, workers=1):
    """Two-sample KS distance between ``X_0`` of simulated paths and an
    independent SaS sample with the marginal scale ``||f||_alpha``."""
    base = stream if isinstance(stream, RandomStream) else RandomStream(int(stream))
    out = simulate_paths(rep, n, paths, base.child("paths"), sampler=sampler, policy=policy, workers=workers,
                         reduce=_first_value)
    x0 = np.array([v for v, _ in out])
    uncertified = sum(1 for _, ok in out if not ok)
    ref = sample_sas(rep.alpha, rep.marginal_scale, base.child("reference"), size=reference_size)
    ks = float(stats.ks_2samp(x0, ref).statistic)
    return {"ks": ks, "paths": paths, "reference_size": reference_size, "uncertified": uncertified}


def paths_to_jsonl(paths) -> str:
    return "".join(p.to_json() + "\n" for p in paths)
