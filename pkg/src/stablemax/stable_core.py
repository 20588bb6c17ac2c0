"""Stable-law and extreme-value primitives.

Everything downstream draws randomness through :class:`RandomStream`, a
counter-based (Philox) stream keyed by ``(seed, index, path)``.  Replicate
``k`` of an experiment always uses stream index ``k``, so results do not
depend on how replicates are scheduled across workers.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

__all__ = [
    "StabilityIndex",
    "FrechetLaw",
    "RandomStream",
    "as_generator",
    "c_alpha",
    "frechet_cdf",
    "frechet_quantile",
    "sample_sas",
    "sample_positive_stable",
    "poisson_arrivals",
    "gaussian_abs_moment",
    "d_alpha",
]

_C_ALPHA_BAND = 1e-4


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha!r}")
    return alpha


@dataclass(frozen=True)
class StabilityIndex:
    """Index of stability ``alpha`` in (0, 2)."""

    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_alpha(self.alpha))

    @property
    def conjugate(self) -> float:
        """Hoelder conjugate ``alpha / (alpha - 1)``; only defined for alpha > 1."""
        if self.alpha <= 1.0:
            raise ValueError("conjugate exponent is only defined for alpha > 1")
        return self.alpha / (self.alpha - 1.0)

    def __float__(self):
        return self.alpha


def _stream_key(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be nonnegative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


@dataclass(frozen=True)
class RandomStream:
    """Reproducible random stream identified by ``(seed, index, path)``.

    Distinct identifiers give independent Philox streams; identical
    identifiers reproduce the same draws bit for bit.  ``path`` holds the
    labels of nested sub-streams (see :meth:`child`).
    """

    seed: int
    index: int = 0
    path: tuple = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if int(self.index) < 0:
            raise ValueError("stream index must be nonnegative")
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "index", int(self.index))
        object.__setattr__(self, "path", tuple(_stream_key(k) for k in self.path))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.index,) + self.path)
        return np.random.Generator(np.random.Philox(seq))

    def child(self, *keys) -> "RandomStream":
        """Sub-stream for a named purpose (e.g. ``"signs"``, ``"arrivals"``)."""
        return RandomStream(self.seed, self.index, self.path + tuple(keys))

    def replicate(self, k: int) -> "RandomStream":
        """Stream owned by replicate ``k`` (same path, index ``k``)."""
        return RandomStream(self.seed, k, self.path)


def as_generator(stream) -> np.random.Generator:
    """Accept a :class:`RandomStream`, a numpy ``Generator`` or an int seed."""
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, RandomStream):
        return stream.generator()
    if isinstance(stream, (int, np.integer)):
        return RandomStream(int(stream)).generator()
    raise TypeError(f"cannot build a random generator from {type(stream).__name__}")


def _c_alpha_closed(alpha: float) -> float:
    return (1.0 - alpha) / (special.gamma(2.0 - alpha) * math.cos(math.pi * alpha / 2.0))


def c_alpha(alpha: float) -> float:
    """Stable tail constant ``(int_0^inf x^-alpha sin x dx)^-1``.

    The closed form is 0/0 at alpha = 1, so inside ``|alpha - 1| <= 1e-4``
    the value is the quadratic through the closed form at ``1 -+ 1e-4`` and
    the limit ``2/pi`` at 1.
    """
    alpha = _check_alpha(alpha)
    h = _C_ALPHA_BAND
    if abs(alpha - 1.0) > h:
        return _c_alpha_closed(alpha)
    lo, mid, hi = _c_alpha_closed(1.0 - h), 2.0 / math.pi, _c_alpha_closed(1.0 + h)
    t = (alpha - 1.0) / h
    return mid + 0.5 * t * (hi - lo) + 0.5 * t * t * (hi - 2.0 * mid + lo)


@dataclass(frozen=True)
class FrechetLaw:
    """Frechet law with CDF ``exp(-(z/scale)^-alpha)`` for z > 0."""

    alpha: float
    scale: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("Frechet tail index must be positive")
        if not self.scale > 0:
            raise ValueError("Frechet scale must be positive")

    def cdf(self, z):
        return frechet_cdf(self, z)

    def quantile(self, p):
        return frechet_quantile(self, p)

    def sample(self, size, stream) -> np.ndarray:
        rng = as_generator(stream)
        # z^-alpha / scale^-alpha is unit exponential
        return self.scale * rng.standard_exponential(size) ** (-1.0 / self.alpha)

    def describe(self) -> dict:
        return {"law": "frechet", "alpha": self.alpha, "scale": self.scale}


def frechet_cdf(law: FrechetLaw, z):
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    pos = z > 0
    with np.errstate(over="ignore", divide="ignore"):
        out[pos] = np.exp(-((z[pos] / law.scale) ** (-law.alpha)))
    return out if out.ndim else float(out)


def frechet_quantile(law: FrechetLaw, p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("Frechet quantile needs 0 < p < 1")
    out = law.scale * (-np.log(p)) ** (-1.0 / law.alpha)
    return out if out.ndim else float(out)


def sample_sas(alpha: float, scale: float, stream, size=None):
    """Symmetric alpha-stable draws with characteristic function
    ``exp(-scale^alpha |t|^alpha)`` (Chambers-Mallows-Stuck).

    With ``V ~ U(-pi/2, pi/2)`` and ``W ~ Exp(1)``::

        X = sin(alpha V) / cos(V)^(1/alpha) * (cos((1 - alpha) V) / W)^((1 - alpha)/alpha)

    which reduces to ``tan(V)`` at alpha = 1.  The draws are linear in
    ``scale`` for a fixed stream.
    """
    alpha = _check_alpha(alpha)
    if not scale > 0:
        raise ValueError("scale must be positive")
    rng = as_generator(stream)
    v = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    w = rng.standard_exponential(size)
    if alpha == 1.0:
        x = np.tan(v)
    else:
        x = (
            np.sin(alpha * v)
            / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha)
        )
    return scale * x


def sample_positive_stable(half_alpha: float, stream, size=None):
    """Positive stable draws ``A`` with ``E exp(-t A) = exp(-t^half_alpha)``.

    Kanter's representation: with ``U ~ U(0, pi)`` and ``E ~ Exp(1)``::

        A = sin(a U) / sin(U)^(1/a) * (sin((1 - a) U) / E)^((1 - a)/a)
    """
    a = float(half_alpha)
    if not 0.0 < a < 1.0:
        raise ValueError("positive stable index must lie in (0, 1)")
    rng = as_generator(stream)
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    return np.sin(a * u) / np.sin(u) ** (1.0 / a) * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)


def poisson_arrivals(count: int, stream, size=None) -> np.ndarray:
    """First ``count`` arrival times of a unit-rate Poisson process.

    With ``size`` given, returns an array of shape ``(size, count)``.
    """
    if count < 1:
        raise ValueError("need at least one arrival")
    rng = as_generator(stream)
    shape = (count,) if size is None else (size, count)
    return np.cumsum(rng.standard_exponential(shape), axis=-1)


def gaussian_abs_moment(p: float, method: str = "closed") -> float:
    """``E|Z|^p`` for a standard normal ``Z``.

    ``method="quad"`` integrates ``2 x^p phi(x)`` with relative tolerance
    1e-9 instead of using ``2^(p/2) Gamma((p+1)/2) / sqrt(pi)``.
    """
    if not p > 0:
        raise ValueError("moment order must be positive")
    if method == "closed":
        return 2.0 ** (p / 2.0) * special.gamma((p + 1.0) / 2.0) / math.sqrt(math.pi)
    if method == "quad":
        norm = math.sqrt(2.0 / math.pi)
        val, _ = integrate.quad(
            lambda x: norm * x**p * math.exp(-0.5 * x * x), 0.0, np.inf, epsrel=1e-9, epsabs=0.0, limit=200
        )
        return val
    raise ValueError(f"unknown method {method!r}")


def d_alpha(alpha: float) -> float:
    """Sub-Gaussian normalizer ``sqrt(2) (E|Z|^alpha)^(1/alpha)``."""
    alpha = _check_alpha(alpha)
    return math.sqrt(2.0) * gaussian_abs_moment(alpha) ** (1.0 / alpha)
