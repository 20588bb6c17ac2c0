"""Concrete stationary SaS models and the shared representation contract.

Each family knows how to

* evaluate its kernel window ``(f_0(x), ..., f_{n-1}(x))`` at a point of its
  own sampling domain,
* compute ``b_n^alpha`` exactly (the L^alpha mass of the window maximum),
* draw Monte Carlo replicates of that integral, and
* sample normalized profiles ``f(U) / max_i |f_i(U)|`` with ``U`` drawn from
  the tilted law whose density against the control measure is
  ``max_j |f_j|^alpha / b_n^alpha``.

All built-in families use the trivial cocycle (``a_n = 1``).
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, signal, special

from .stable_core import _check_alpha, as_generator, d_alpha

__all__ = [
    "Profiles",
    "Representation",
    "MixedMovingAverage",
    "RenewalMarkovShift",
    "DyadicRepresentation",
    "ProductShift",
    "make_mixed_ma",
    "make_renewal_shift",
    "make_dyadic",
    "make_product_shift",
    "sample_normalized_profile",
    "kernel_window",
    "representation_from_dict",
    "longest_zero_run_tail",
    "series_reciprocal",
]

CONSERVATIVE = "conservative"
DISSIPATIVE = "dissipative"


@dataclass
class Profiles:
    """A batch of normalized profiles in coordinate form.

    Profile ``rows[i]`` has value ``vals[i]`` at window index ``cols[i]``;
    unlisted entries are zero.
    """

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    size: int
    n: int

    def dense(self) -> np.ndarray:
        out = np.zeros((self.size, self.n))
        out[self.rows, self.cols] = self.vals
        return out

    @classmethod
    def from_dense(cls, arr: np.ndarray) -> "Profiles":
        size, n = arr.shape
        rows = np.repeat(np.arange(size), n)
        cols = np.tile(np.arange(n), size)
        return cls(rows, cols, arr.ravel(), size, n)

    @classmethod
    def concat(cls, parts, n) -> "Profiles":
        rows, cols, vals, offset = [], [], [], 0
        for p in parts:
            rows.append(p.rows + offset)
            cols.append(p.cols)
            vals.append(p.vals)
            offset += p.size
        return cls(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), offset, n)


class Representation(abc.ABC):
    """Shared contract for the built-in model families."""

    kind: str = ""
    flow_class: str = ""
    exact_bn: bool = True

    def __init__(self, alpha: float):
        self.alpha = _check_alpha(alpha)
        self._cache: dict = {}

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache"] = {}
        return state

    # -- b_n --------------------------------------------------------------
    @abc.abstractmethod
    def bn_alpha(self, n: int) -> float:
        """Exact ``b_n^alpha``."""

    def bn_alpha_grid(self, ns) -> np.ndarray:
        return np.array([self.bn_alpha(int(n)) for n in ns], dtype=float)

    @abc.abstractmethod
    def integrand_draws(self, n: int, size: int, rng) -> np.ndarray:
        """I.i.d. draws whose mean is ``b_n^alpha``."""

    # -- tilted law ---------------------------------------------------------
    @abc.abstractmethod
    def sample_profiles(self, n: int, size: int, rng) -> Profiles:
        """``size`` independent normalized profiles under the tilted law."""

    @abc.abstractmethod
    def kernel_window(self, point, n: int) -> np.ndarray:
        """``(f_0(x), ..., f_{n-1}(x))`` at a point of the sampling domain."""

    @abc.abstractmethod
    def f_norm_alpha(self) -> float:
        """``||f||_alpha^alpha``, the alpha-th power of the marginal scale."""

    @abc.abstractmethod
    def to_dict(self) -> dict:
        ...

    @property
    def marginal_scale(self) -> float:
        return self.f_norm_alpha() ** (1.0 / self.alpha)

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


def _check_n(n) -> int:
    n = int(n)
    if n < 1:
        raise ValueError("window length n must be at least 1")
    return n


# ---------------------------------------------------------------------------
# mixed moving average
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    """One atom ``w`` of the mixing space: ``f(w, offset + i) = kernel[i]``."""

    weight: float
    kernel: tuple
    offset: int = 0

    @property
    def lo(self) -> int:
        return self.offset

    @property
    def hi(self) -> int:
        return self.offset + len(self.kernel) - 1


class MixedMovingAverage(Representation):
    """``X_n = sum_w sum_x f(w, x - n) M(w, x)`` with finitely many atoms.

    The control measure gives mass ``weight`` to every ``(w, x)``.  A point of
    the sampling domain is a pair ``(atom index, x)``.
    """

    kind = "mixed_ma"
    flow_class = DISSIPATIVE

    def __init__(self, alpha, atoms):
        super().__init__(alpha)
        if not atoms:
            raise ValueError("a mixed moving average needs at least one atom")
        self.atoms = []
        for a in atoms:
            if not a.weight > 0:
                raise ValueError("atom weights must be positive")
            self.atoms.append(a)
        self._trimmed = [self._trim(a) for a in self.atoms]
        if all(t is None for t in self._trimmed):
            raise ValueError("kernel has no nonzero entry")

    @staticmethod
    def _trim(atom):
        k = np.asarray(atom.kernel, dtype=float)
        nz = np.flatnonzero(k)
        if nz.size == 0:
            return None
        lo = atom.offset + int(nz[0])
        return lo, k[nz[0] : nz[-1] + 1]

    @property
    def m_supp(self) -> int:
        """Smallest ``m`` with every kernel supported in ``[-m, m]``."""
        m = 0
        for t in self._trimmed:
            if t is not None:
                lo, k = t
                m = max(m, abs(lo), abs(lo + len(k) - 1))
        return m

    def g_alpha(self) -> np.ndarray:
        """``sup_k |f(w, k)|^alpha`` per atom."""
        return np.array(
            [0.0 if t is None else float(np.max(np.abs(t[1]))) ** self.alpha for t in self._trimmed]
        )

    def kx_alpha(self) -> float:
        return math.fsum(a.weight * g for a, g in zip(self.atoms, self.g_alpha()))

    def kx0_alpha(self) -> float:
        total = []
        for a, t in zip(self.atoms, self._trimmed):
            if t is None:
                continue
            k = t[1]
            gp = max(float(np.max(k)), 0.0)
            gm = max(float(np.max(-k)), 0.0)
            total.append(a.weight * 0.5 * (gp**self.alpha + gm**self.alpha))
        return math.fsum(total)

    def f_norm_alpha(self) -> float:
        return math.fsum(
            a.weight * float(np.sum(np.abs(t[1]) ** self.alpha))
            for a, t in zip(self.atoms, self._trimmed)
            if t is not None
        )

    def _segments(self, n):
        """Window-maximum table for every atom.

        Returns a list of ``(atom index, xs, values, block)`` where ``values``
        are ``max_{k<n} |f(w, x-k)|^alpha`` at the positions ``xs`` and
        ``block = (x_start, count, value)`` covers the run of positions whose
        window contains the whole support.
        """
        key = ("segments", n)
        if key in self._cache:
            return self._cache[key]
        out = []
        for w, t in enumerate(self._trimmed):
            if t is None:
                continue
            lo, k = t
            a = np.abs(k) ** self.alpha
            span = len(k) - 1
            if n > span:
                left_x = np.arange(lo, lo + span)
                left_v = np.maximum.accumulate(a)[:span]
                right_x = np.arange(lo + n, lo + span + n)
                right_v = np.maximum.accumulate(a[::-1])[::-1][1:]
                xs = np.concatenate([left_x, right_x])
                vals = np.concatenate([left_v, right_v])
                block = (lo + span, n - span, float(a.max()))
            else:
                padded = np.concatenate([np.zeros(n - 1), a, np.zeros(n - 1)])
                windows = np.lib.stride_tricks.sliding_window_view(padded, n)
                vals = windows.max(axis=1)
                xs = np.arange(lo, lo + span + n)
                block = (lo, 0, 0.0)
            out.append((w, xs, vals, block))
        self._cache[key] = out
        return out

    def bn_alpha(self, n):
        n = _check_n(n)
        terms = []
        for w, _, vals, (_, count, gval) in self._segments(n):
            nu = self.atoms[w].weight
            terms.append(nu * math.fsum(vals))
            terms.append(nu * count * gval)
        return math.fsum(terms)

    def _window_max_alpha(self, w, x, n):
        lo, k = self._trimmed[w]
        a = np.abs(k) ** self.alpha
        idx = np.arange(len(k))
        d = lo + idx[None, :]
        inside = (d <= x[:, None]) & (d >= x[:, None] - n + 1)
        return np.where(inside, a[None, :], 0.0).max(axis=1)

    def integrand_draws(self, n, size, rng):
        n = _check_n(n)
        rng = as_generator(rng)
        live = [w for w, t in enumerate(self._trimmed) if t is not None]
        mass = np.array([self.atoms[w].weight * (len(self._trimmed[w][1]) - 1 + n) for w in live])
        total = mass.sum()
        which = rng.choice(len(live), size=size, p=mass / total)
        out = np.empty(size)
        for j, w in enumerate(live):
            sel = np.flatnonzero(which == j)
            if sel.size == 0:
                continue
            lo, k = self._trimmed[w]
            x = lo + rng.integers(0, len(k) - 1 + n, size=sel.size)
            out[sel] = total * self._window_max_alpha(w, x, n)
        return out

    def _point_table(self, n):
        key = ("points", n)
        if key in self._cache:
            return self._cache[key]
        atoms, starts, counts, weights = [], [], [], []
        for w, xs, vals, (x0, count, gval) in self._segments(n):
            nu = self.atoms[w].weight
            atoms.extend([w] * len(xs))
            starts.extend(xs.tolist())
            counts.extend([1] * len(xs))
            weights.extend((nu * vals).tolist())
            if count > 0:
                atoms.append(w)
                starts.append(x0)
                counts.append(count)
                weights.append(nu * count * gval)
        weights = np.asarray(weights)
        table = (np.asarray(atoms), np.asarray(starts), np.asarray(counts), np.cumsum(weights))
        self._cache[key] = table
        return table

    def sample_points(self, n, size, rng):
        """Draw ``size`` points ``(atom, x)`` from the tilted law."""
        n = _check_n(n)
        rng = as_generator(rng)
        atoms, starts, counts, cum = self._point_table(n)
        item = np.searchsorted(cum, rng.random(size) * cum[-1], side="right")
        item = np.minimum(item, len(cum) - 1)
        x = starts[item] + (rng.random(size) * counts[item]).astype(np.int64)
        return atoms[item], x

    def sample_profiles(self, n, size, rng):
        w_idx, x = self.sample_points(n, size, rng)
        return self._profiles_at(w_idx, x, n)

    def _profiles_at(self, w_idx, x, n):
        rows, cols, vals = [], [], []
        for w in np.unique(w_idx):
            sel = np.flatnonzero(w_idx == w)
            lo, k = self._trimmed[w]
            ks = x[sel, None] - (lo + np.arange(len(k)))[None, :]
            v = np.broadcast_to(k, ks.shape)
            ok = (ks >= 0) & (ks < n) & (v != 0)
            peak = np.where(ok, np.abs(v), 0.0).max(axis=1)
            r, c = np.nonzero(ok)
            rows.append(sel[r])
            cols.append(ks[r, c])
            vals.append(v[r, c] / peak[r])
        rows = np.concatenate(rows)
        order = np.argsort(rows, kind="stable")
        return Profiles(rows[order], np.concatenate(cols)[order], np.concatenate(vals)[order], len(x), n)

    def kernel_window(self, point, n):
        w, x = point
        if not 0 <= int(w) < len(self.atoms):
            raise ValueError("point does not name an atom of this representation")
        atom = self.atoms[int(w)]
        out = np.zeros(_check_n(n))
        for k in range(n):
            i = int(x) - k - atom.offset
            if 0 <= i < len(atom.kernel):
                out[k] = atom.kernel[i]
        return out

    def to_dict(self):
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "atoms": [
                {"weight": a.weight, "kernel": [float(v) for v in a.kernel], "offset": a.offset}
                for a in self.atoms
            ],
        }


def make_mixed_ma(alpha, atoms) -> MixedMovingAverage:
    """Build a mixed moving average.

    ``atoms`` items may be :class:`Atom` instances, ``(weight, kernel)`` or
    ``(weight, kernel, offset)`` tuples, or dicts with those keys.
    """
    built = []
    for a in atoms:
        if isinstance(a, Atom):
            built.append(a)
        elif isinstance(a, dict):
            built.append(Atom(float(a["weight"]), tuple(float(v) for v in a["kernel"]), int(a.get("offset", 0))))
        else:
            weight, kernel, *rest = a
            built.append(Atom(float(weight), tuple(float(v) for v in kernel), int(rest[0]) if rest else 0))
    return MixedMovingAverage(alpha, built)


# ---------------------------------------------------------------------------
# power-series helpers (renewal sequences)
# ---------------------------------------------------------------------------


def series_reciprocal(a, size: int) -> np.ndarray:
    """First ``size`` coefficients of ``1 / A(s)`` for the power series ``A``."""
    a = np.asarray(a, dtype=float)
    if a[0] == 0:
        raise ValueError("series with zero constant term has no reciprocal")
    b = np.array([1.0 / a[0]])
    m = 1
    while m < size:
        m = min(2 * m, size)
        ab = signal.fftconvolve(a[:m], b)[:m]
        corr = -ab
        corr[0] += 2.0
        b = signal.fftconvolve(b, corr)[:m]
    return b[:size]


# ---------------------------------------------------------------------------
# null-recurrent renewal (ladder) chain
# ---------------------------------------------------------------------------


class RenewalMarkovShift(Representation):
    """Indicator-of-zero kernel over a null-recurrent ladder chain.

    From state 0 the chain jumps to ``tau - 1`` where ``tau`` is the return
    time, then counts down to 0 one step at a time.  The invariant measure is
    ``pi_j = P_0(tau > j)``.  Return-time tails are stored as the survival
    function ``S(k) = P_0(tau > k)``: an explicit head for ``k <= K`` and an
    analytic regularly varying tail of index ``-(1 - gamma)`` beyond it,

    * ``"power"``:  ``S(k) = c k^-(1-gamma)``
    * ``"smooth"``: ``S(k) = c ((k+1)^gamma - k^gamma)``

    with ``c`` fixed by continuity at ``K``.  The smooth tail with an empty
    head gives ``b_n^alpha = n^gamma`` exactly.
    """

    kind = "renewal"
    flow_class = CONSERVATIVE

    def __init__(self, alpha, gamma, head_probs=(), tail="power"):
        super().__init__(alpha)
        gamma = float(gamma)
        if not 0.0 < gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if tail not in ("power", "smooth"):
            raise ValueError("tail must be 'power' or 'smooth'")
        head = np.asarray(head_probs, dtype=float)
        if np.any(head < 0):
            raise ValueError("return-time probabilities must be nonnegative")
        surv_head = 1.0 - np.concatenate([[0.0], np.cumsum(head)])
        if surv_head[-1] <= 0:
            raise ValueError("head probabilities must sum to less than 1")
        self.gamma = gamma
        self.head_probs = tuple(float(p) for p in head)
        self.tail = tail
        self._surv_head = surv_head
        k = len(head)
        if tail == "power":
            self._c = 1.0 if k == 0 else surv_head[-1] * k ** (1.0 - gamma)
        else:
            self._c = surv_head[-1] / ((k + 1) ** gamma - k**gamma)

    @property
    def head_length(self) -> int:
        return len(self.head_probs)

    def survival(self, k) -> np.ndarray:
        """``S(k) = P_0(tau > k)`` for integer ``k >= 0``."""
        k = np.asarray(k, dtype=np.int64)
        K = self.head_length
        kf = np.maximum(k, 1).astype(float)
        if self.tail == "power":
            tail = self._c * kf ** (self.gamma - 1.0)
        else:
            # (k+1)^g - k^g without cancellation
            tail = self._c * kf**self.gamma * np.expm1(self.gamma * np.log1p(1.0 / kf))
        head = self._surv_head[np.minimum(k, K)]
        out = np.where(k <= K, head, tail)
        return np.where(k == 0, 1.0, out)

    def return_probs(self, k) -> np.ndarray:
        """``p_k = P_0(tau = k)`` for ``k >= 1``."""
        k = np.asarray(k, dtype=np.int64)
        return self.survival(k - 1) - self.survival(k)

    def invariant_weights(self, k) -> np.ndarray:
        return self.survival(k)

    def _cum_survival(self, n):
        arr = self._cache.get("cumsurv")
        if arr is None or len(arr) < n:
            size = max(n, 1024, 0 if arr is None else 2 * len(arr))
            arr = np.cumsum(self.survival(np.arange(size)))
            self._cache["cumsurv"] = arr
        return arr

    def bn_alpha(self, n):
        n = _check_n(n)
        key = ("bn", n)
        if key not in self._cache:
            self._cache[key] = math.fsum(self.survival(np.arange(n)))
        return self._cache[key]

    def bn_alpha_grid(self, ns):
        ns = np.asarray(ns, dtype=np.int64)
        return self._cum_survival(int(ns.max()))[ns - 1].astype(float)

    def asymptotic_bn_alpha(self, n) -> float:
        """Leading term ``c n^gamma / gamma`` of ``b_n^alpha``; with
        ``S(k) ~ c k^-(1-gamma)`` this equals
        ``n^gamma / (L Gamma(1+gamma) Gamma(1-gamma))`` where
        ``P_0(x_n = 0) ~ L n^-gamma``."""
        c = self._c if self.tail == "power" else self._c * self.gamma
        return c * n**self.gamma / self.gamma

    _TABLE = 1 << 14

    def _survival_table(self):
        tab = self._cache.get("survtab")
        if tab is None:
            tab = self.survival(np.arange(max(self._TABLE, self.head_length + 1)))
            self._cache["survtab"] = tab
        return tab

    def _invert_tail(self, u, lo_k, cap):
        """Smallest ``k >= lo_k`` with ``S(k) < u`` (capped at ``cap + 1``)
        for ``u <= S(lo_k)`` in the analytic tail."""
        coef = self._c if self.tail == "power" else self._c * self.gamma
        # power: S(k) < u  iff  k > t;  smooth: the crossing lies in [t - 1, t]
        t = np.minimum((coef / u) ** (1.0 / (1.0 - self.gamma)), float(cap + 1))
        c = np.clip(np.floor(t).astype(np.int64), lo_k, cap + 1)
        s_c = np.where(c <= cap, self.survival(c), -np.inf)
        ans = np.where(s_c < u, c, c + 1)
        ans = np.minimum(ans, cap + 1)
        # confirm S(ans - 1) >= u > S(ans); fix the rare rounding misses
        chk = np.where(ans == c, c - 1, ans)
        s_chk = np.where(chk <= cap, self.survival(np.maximum(chk, 0)), -np.inf)
        ok = np.where(ans == c, (chk < lo_k) | (s_chk >= u), s_chk < u)
        bad = np.flatnonzero(~ok)
        if bad.size:
            lo = np.full(bad.size, lo_k, dtype=np.int64)
            hi = np.full(bad.size, cap + 1, dtype=np.int64)
            ub = u[bad]
            while True:
                open_ = np.flatnonzero(hi - lo > 1)
                if open_.size == 0:
                    break
                mid = (lo[open_] + hi[open_]) // 2
                above = self.survival(mid) >= ub[open_]
                lo[open_] = np.where(above, mid, lo[open_])
                hi[open_] = np.where(above, hi[open_], mid)
            ans[bad] = hi
        return ans

    def sample_return_times(self, size, rng, cap):
        """Return times truncated at ``cap``: values in ``1..cap`` are exact,
        ``cap + 1`` stands for ``tau > cap``.

        Inverts ``S``: small values by table lookup, the analytic tail from
        its closed form with an exact integer correction.
        """
        rng = as_generator(rng)
        u = rng.random(size)
        tab = self._survival_table()
        out = np.searchsorted(-tab, -u, side="right")
        far = np.flatnonzero(out >= len(tab))
        if far.size:
            out[far] = self._invert_tail(u[far], len(tab) - 1, cap)
        return np.minimum(out, cap + 1)

    def first_visit_table(self, n):
        return self._cum_survival(n)[:n]

    def sample_visit_sets(self, n, size, rng):
        """Visit times of the window under the tilted law, as unsorted
        ``(rows, cols)`` coordinate pairs."""
        n = _check_n(n)
        rng = as_generator(rng)
        cum = self.first_visit_table(n)
        first = np.searchsorted(cum, rng.random(size) * cum[-1], side="right")
        first = np.minimum(first, n - 1)
        rows = [np.arange(size)]
        cols = [first]
        active = np.arange(size)
        pos = first.copy()
        # draw return times in batches sized by the mean number of visits
        batch = int(math.ceil(0.5 * n / self.bn_alpha(n))) + 2
        while active.size:
            steps = self.sample_return_times(active.size * batch, rng, cap=n).reshape(active.size, batch)
            at = pos[:, None] + np.cumsum(steps, axis=1)
            inside = at < n
            r, c = np.nonzero(inside)
            rows.append(active[r])
            cols.append(at[r, c])
            more = inside[:, -1]
            active, pos = active[more], at[more, -1]
            batch = batch + batch // 2
        return np.concatenate(rows), np.concatenate(cols)

    def sample_profiles(self, n, size, rng):
        rows, cols = self.sample_visit_sets(n, size, rng)
        return Profiles(rows, cols, np.ones(len(rows)), size, n)

    def sample_chain_path(self, x0, n, rng):
        """A forward path ``x_0..x_{n-1}`` of the ladder chain from ``x0``."""
        rng = as_generator(rng)
        path = np.empty(n, dtype=np.int64)
        state = int(x0)
        for t in range(n):
            path[t] = state
            if state == 0:
                state = int(self.sample_return_times(1, rng, cap=n + 1)[0]) - 1
            else:
                state -= 1
        return path

    def first_hit_time(self, states) -> np.ndarray:
        """First time ``t >= 0`` with ``x_t = 0`` from each starting state."""
        return np.asarray(states, dtype=np.int64)

    def integrand_draws(self, n, size, rng):
        # importance sampling over starting states 0..n-1 (uniform); states
        # >= n cannot reach 0 inside the window
        n = _check_n(n)
        rng = as_generator(rng)
        x0 = rng.integers(0, n, size=size)
        hit = self.first_hit_time(x0) < n
        return n * self.invariant_weights(x0) * hit

    def kernel_window(self, point, n):
        path = np.asarray(point)
        if path.ndim != 1 or len(path) < n or np.any(path < 0):
            raise ValueError("renewal points are chain paths of length >= n")
        return (path[:n] == 0).astype(float)

    def f_norm_alpha(self):
        return 1.0

    def pair_window_mass(self, n) -> float:
        """Mass of the window-visit set of the product chain of two
        independent copies: ``sum_{k<n} P_(0,0)(tau* > k)``.  Divided by
        ``b_n^(2 alpha)`` this is the exact collision probability of two
        independent tilted points."""
        n = _check_n(n)
        k = np.arange(n + 1)
        dec = -self.return_probs(k)
        dec[0] = 1.0
        u = series_reciprocal(dec, n + 1)
        u2 = u * u
        dec2 = np.diff(np.concatenate([[0.0], u2]))
        surv2 = series_reciprocal(dec2, n)
        return float(np.sum(surv2[:n]))

    def to_dict(self):
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "head_probs": list(self.head_probs),
            "tail": self.tail,
        }


def make_renewal_shift(alpha, gamma, head_probs=(), tail="power") -> RenewalMarkovShift:
    return RenewalMarkovShift(alpha, gamma, head_probs, tail)


# ---------------------------------------------------------------------------
# dyadic map
# ---------------------------------------------------------------------------


def longest_zero_run_tail(r: int, max_len: int) -> np.ndarray:
    """``Q[L] = P(L fair bits contain r consecutive zeros)`` for ``L = 0..max_len``.

    Uses ``Q_L = Q_{L-1} + 2^-(r+1) (1 - Q_{L-r-1})`` for ``L > r`` with
    ``Q_r = 2^-r``, run as a linear filter.  Only additions of nonnegative
    terms occur, so tiny probabilities keep full relative precision.
    """
    if r < 1:
        raise ValueError("run length must be at least 1")
    x = np.zeros(max_len + 1)
    if r <= max_len:
        x[r] = 2.0**-r
        x[r + 1 :] = 2.0 ** -(r + 1)
    den = np.zeros(r + 2)
    den[0], den[1], den[r + 1] = 1.0, -1.0, 2.0 ** -(r + 1)
    return signal.lfilter([1.0], den, x)


class DyadicRepresentation(Representation):
    """Kernel ``h_{K(x)}`` over the dyadic map ``x -> {2x}`` on (0, 1].

    ``K(x)`` is the position of the first 1 in the binary expansion of ``x``.
    A point of the sampling domain is a bit array ``(x_1, x_2, ...)``.
    Weights are ``h_k = 2^(theta k)`` or an explicit nondecreasing list that
    stays constant after its last entry.

    ``b_n^alpha = E h_{R_n}^alpha`` where ``R_n = max_{j<n} K(phi^j x)`` is one
    plus the longest zero run starting in positions ``1..n``.
    """

    kind = "dyadic"
    flow_class = CONSERVATIVE

    def __init__(self, alpha, theta=None, h=None):
        super().__init__(alpha)
        if (theta is None) == (h is None):
            raise ValueError("give exactly one of theta or an explicit h sequence")
        if theta is not None:
            theta = float(theta)
            if theta < 0:
                raise ValueError("h must be nondecreasing (theta >= 0)")
            if theta * self.alpha >= 1.0:
                raise ValueError("sum h_k^alpha 2^-k diverges: need theta < 1/alpha")
            self.theta, self.h = theta, None
        else:
            h = np.asarray(h, dtype=float)
            if h.ndim != 1 or h.size == 0:
                raise ValueError("explicit h must be a nonempty sequence")
            if np.any(h < 0) or np.any(np.diff(h) < 0):
                raise ValueError("h must be nonnegative and nondecreasing")
            if h[-1] == 0:
                raise ValueError("h vanishes identically")
            self.theta, self.h = None, h

    def h_alpha(self, m) -> np.ndarray:
        """``h_m^alpha`` for integer ``m >= 1``."""
        m = np.asarray(m, dtype=np.int64)
        if self.h is None:
            return 2.0 ** (self.theta * self.alpha * m.astype(float))
        return self.h[np.minimum(m, len(self.h)) - 1] ** self.alpha

    def _log2_h_alpha(self, m):
        return self.theta * self.alpha * m

    def _tail_bound(self, cap, n_max):
        """Bound on ``sum_{m > cap} (h_m^a - h_{m-1}^a) P(R_n >= m)`` using
        ``P(R_n >= m) <= n 2^-(m-1)``."""
        if self.h is not None:
            return 0.0 if cap >= len(self.h) else math.inf
        rate = 1.0 - self.theta * self.alpha
        log2_term = math.log2(2.0 * n_max) - rate * (cap + 1) - math.log2(1.0 - 2.0**-rate)
        return 2.0**log2_term

    def _cap(self, n_max):
        cap = int(math.ceil(math.log2(max(n_max, 2)))) + 64
        if self.h is not None:
            return max(cap, len(self.h))
        base = self.h_alpha(1).item()
        while self._tail_bound(cap, n_max) > 1e-13 * base:
            cap += 16
            if cap > 4000:
                raise ValueError("theta too close to 1/alpha for a certified longest-run sum")
        return cap

    def run_tail_probs(self, ns, cap=None):
        """``P(R_n >= m)`` for every ``n`` in ``ns`` and ``m = 1..cap``.

        Returns an array of shape ``(len(ns), cap)``; column ``m - 1``
        holds ``m``.
        """
        ns = np.atleast_1d(np.asarray(ns, dtype=np.int64))
        n_max = int(ns.max())
        cap = self._cap(n_max) if cap is None else cap
        out = np.ones((len(ns), cap))
        for m in range(2, cap + 1):
            q = longest_zero_run_tail(m - 1, n_max + m - 2)
            out[:, m - 1] = q[ns + m - 2]
        return out

    def bn_alpha_grid(self, ns):
        ns = np.atleast_1d(np.asarray(ns, dtype=np.int64))
        if np.any(ns < 1):
            raise ValueError("window length n must be at least 1")
        tails = self.run_tail_probs(ns)
        cap = tails.shape[1]
        ha = self.h_alpha(np.arange(1, cap + 1))
        incr = np.diff(ha, prepend=0.0)
        return tails @ incr

    def bn_alpha(self, n):
        return float(self.bn_alpha_grid([_check_n(n)])[0])

    def bn_alpha_error_bound(self, n) -> float:
        return self._tail_bound(self._cap(n), n)

    def f_norm_alpha(self):
        return self.bn_alpha(1)

    def run_law(self, n):
        """``(m values, P(R_n = m))`` up to the certified cap."""
        key = ("runlaw", n)
        if key not in self._cache:
            tails = self.run_tail_probs([n])[0]
            pmf = tails - np.append(tails[1:], 0.0)
            self._cache[key] = (np.arange(1, len(tails) + 1), np.maximum(pmf, 0.0))
        return self._cache[key]

    # -- sampling ------------------------------------------------------------
    def _run_tables(self, n, r):
        """Lookup tables for sampling a bit string given that the longest zero
        run starting in positions 1..n has length exactly ``r``.

        The string is cut into blocks ``0^Z 1``.  Before the first block with
        ``Z = r`` every block has ``Z < r``; from then on ``Z <= r`` for blocks
        starting at or before n.  Returns ``(start_cum, fill, free)`` where

        * ``fill[f]``: probability that ``f`` fair bits split exactly into
          blocks with ``Z < r``;
        * ``free[t]``: probability that no run of ``r + 1`` zeros starts in
          positions ``t..n`` (1-based ``t``, any ``t <= n + r + 2``);
        * ``start_cum``: cumulative weights of the start ``s`` of the first
          ``r``-block, ``s = 1..n``.
        """
        key = ("runtables", n, r)
        if key in self._cache:
            return self._cache[key]
        fill = np.zeros(n + 1)
        fill[0] = 1.0
        if r >= 1:
            no_r = 1.0 - longest_zero_run_tail(r, n)
            fill[1:] = 0.5 * no_r[:n]
        q = longest_zero_run_tail(r + 1, n + r)
        t = np.arange(n + r + 3)
        length = n - t + 1 + r
        free = np.where(length >= 0, 1.0 - q[np.clip(length, 0, n + r)], 1.0)
        s = np.arange(1, n + 1)
        start_cum = np.cumsum(fill[s - 1] * 2.0 ** -(r + 1) * free[s + r + 1])
        tables = (start_cum, fill, free)
        self._cache[key] = tables
        return tables

    @staticmethod
    def _pick_cols(weights, rng):
        cum = np.cumsum(weights, axis=1)
        u = rng.random(len(weights))[:, None] * cum[:, -1:]
        return np.minimum((cum <= u).sum(axis=1), weights.shape[1] - 1)

    def _k_values_given_run(self, n, r, rng):
        """``K(phi^k x)``, k < n, for strings whose longest zero run starting
        in 1..n is exactly ``r[i]`` (one row per entry of ``r``).

        Strings are built block by block, all rows at once: a prefix of
        blocks with ``Z < r``, the first ``r``-block at its sampled start,
        then blocks with ``Z <= r`` until the window is covered.  Only the
        block ends (the 1-bits) are recorded; ``K`` at a position is the
        distance to the next 1-bit plus one.
        """
        r = np.asarray(r, dtype=np.int64)
        size = r.size
        levels, ridx = np.unique(r, return_inverse=True)
        rmax = int(levels.max())
        width = n + rmax + 3
        fill = np.empty((levels.size, n + 1))
        free = np.ones((levels.size, width))
        s = np.empty(size, dtype=np.int64)
        for i, lev in enumerate(levels):
            start_cum, fill[i], fr = self._run_tables(n, int(lev))
            free[i, : len(fr)] = fr
            sel = np.flatnonzero(ridx == i)
            pick = np.searchsorted(start_cum, rng.random(sel.size) * start_cum[-1], side="right") + 1
            s[sel] = np.minimum(pick, n)
        ones = np.zeros((size, width), dtype=bool)
        rows = np.arange(size)
        # prefix: blocks with Z < r filling positions 1..s-1 exactly
        zs = np.arange(max(rmax, 1))
        t = np.ones(size, dtype=np.int64)
        while True:
            a = np.flatnonzero(t < s)
            if a.size == 0:
                break
            rem = (s[a] - t[a])[:, None] - zs[None, :] - 1
            ok = (rem >= 0) & (zs[None, :] < r[a, None])
            w = 2.0 ** -(zs + 1.0)[None, :] * np.where(ok, fill[ridx[a, None], np.maximum(rem, 0)], 0.0)
            z = self._pick_cols(w, rng)
            t[a] += z + 1
            ones[rows[a], t[a] - 2] = True
        ones[rows, s + r - 1] = True
        # suffix: blocks with Z <= r until the window is covered
        zs = np.arange(rmax + 1)
        t = s + r + 1
        while True:
            a = np.flatnonzero(t <= n)
            if a.size == 0:
                break
            nxt = np.minimum(t[a][:, None] + zs[None, :] + 1, width - 1)
            w = 2.0 ** -(zs + 1.0)[None, :] * np.where(zs[None, :] <= r[a, None], free[ridx[a, None], nxt], 0.0)
            z = self._pick_cols(w, rng)
            t[a] += z + 1
            ones[rows[a], t[a] - 2] = True
        # 0-based index of the next 1-bit at or after each position
        pos = np.where(ones, np.arange(width)[None, :], width)
        nxt_one = np.minimum.accumulate(pos[:, ::-1], axis=1)[:, ::-1]
        return nxt_one[:, :n] - np.arange(n)[None, :] + 1

    def sample_profiles(self, n, size, rng):
        n = _check_n(n)
        rng = as_generator(rng)
        ms, pmf = self.run_law(n)
        cum = np.cumsum(self.h_alpha(ms) * pmf)
        pick = np.searchsorted(cum, rng.random(size) * cum[-1], side="right")
        m_draw = ms[np.minimum(pick, len(ms) - 1)]
        k = self._k_values_given_run(n, m_draw - 1, rng)
        out = (self.h_alpha(k) / self.h_alpha(m_draw)[:, None]) ** (1.0 / self.alpha)
        # the peak entry is exactly 1, not h/h rounded
        out = np.where(k == m_draw[:, None], 1.0, out)
        return Profiles.from_dense(out)

    def sample_bits(self, length, rng):
        return as_generator(rng).integers(0, 2, size=length)

    def kernel_window(self, point, n):
        bits = np.asarray(point)
        n = _check_n(n)
        ones = np.flatnonzero(bits == 1) + 1
        starts = np.arange(1, n + 1)
        idx = np.searchsorted(ones, starts)
        if idx[-1] >= len(ones):
            raise ValueError("bit string too short: no 1 after some window position")
        k = ones[idx] - starts + 1
        return self.h_alpha(k) ** (1.0 / self.alpha)

    def integrand_draws(self, n, size, rng, chunk=None):
        n = _check_n(n)
        rng = as_generator(rng)
        chunk = chunk or max(1, min(size, 2_000_000 // n))
        out = []
        done = 0
        while done < size:
            b = min(chunk, size - done)
            zero = rng.integers(0, 2, size=(b, n), dtype=np.int8) == 0
            c = np.cumsum(zero, axis=1, dtype=np.int64)
            reset = np.maximum.accumulate(np.where(~zero, c, 0), axis=1)
            run = c - reset
            trailing = run[:, -1]
            # a zero run reaching position n continues for a geometric number
            # of further zeros
            extra = rng.geometric(0.5, size=b) - 1
            longest = np.maximum(run.max(axis=1), np.where(trailing > 0, trailing + extra, 0))
            out.append(self.h_alpha(longest + 1))
            done += b
        return np.concatenate(out)

    def to_dict(self):
        d = {"kind": self.kind, "alpha": self.alpha}
        if self.h is None:
            d["theta"] = self.theta
        else:
            d["h"] = [float(v) for v in self.h]
        return d


def make_dyadic(alpha, theta=None, h=None) -> DyadicRepresentation:
    return DyadicRepresentation(alpha, theta=theta, h=h)


# ---------------------------------------------------------------------------
# shift of i.i.d. coordinates
# ---------------------------------------------------------------------------


class ProductShift(Representation):
    """``f(g) = c g_0`` under the left shift of i.i.d. coordinates.

    ``law`` is ``"gaussian"`` (sub-Gaussian process, ``c = 1/d_alpha``),
    ``"rademacher"`` or ``"pareto"`` (``P(g_0 > x) = x^-pareto_theta`` for
    x >= 1, with ``pareto_theta > alpha``).  A point is a coordinate vector.
    """

    kind = "product_shift"
    flow_class = CONSERVATIVE

    def __init__(self, alpha, law, pareto_theta=None):
        super().__init__(alpha)
        if law not in ("gaussian", "rademacher", "pareto"):
            raise ValueError(f"unknown coordinate law {law!r}")
        if law == "pareto":
            if pareto_theta is None or not float(pareto_theta) > self.alpha:
                raise ValueError("Pareto coordinates need pareto_theta > alpha")
            pareto_theta = float(pareto_theta)
        self.law = law
        self.pareto_theta = pareto_theta
        self.coef = 1.0 / d_alpha(self.alpha) if law == "gaussian" else 1.0

    # -- exact b_n ----------------------------------------------------------
    def bn_alpha(self, n):
        n = _check_n(n)
        if self.law == "rademacher":
            return 1.0
        if self.law == "pareto":
            q = self.alpha / self.pareto_theta
            return math.exp(special.gammaln(1.0 - q) + special.gammaln(n + 1.0) - special.gammaln(n + 1.0 - q))
        return self.coef**self.alpha * self.gaussian_max_moment(n)

    def gaussian_max_moment(self, n):
        """``E max_{k<n} |Z_k|^alpha`` by quadrature of the survival function
        of the maximum in the variable ``t = y^alpha``."""
        a = self.alpha

        def surv(t):
            y = t ** (1.0 / a)
            log_cdf = math.log1p(-2.0 * special.ndtr(-y)) if y > 0 else -math.inf
            return -math.expm1(n * log_cdf)

        center = math.sqrt(2.0 * math.log(n)) if n > 1 else 1.0
        knots = sorted({0.0, (0.5 * center) ** a, center**a, (center + 2.0) ** a, (center + 6.0) ** a})
        total = []
        for lo, hi in zip(knots[:-1], knots[1:]):
            total.append(integrate.quad(surv, lo, hi, epsabs=0.0, epsrel=1e-11, limit=200)[0])
        total.append(integrate.quad(surv, knots[-1], np.inf, epsabs=0.0, epsrel=1e-11, limit=200)[0])
        return math.fsum(total)

    def f_norm_alpha(self):
        if self.law == "rademacher":
            return 1.0
        if self.law == "pareto":
            return self.pareto_theta / (self.pareto_theta - self.alpha)
        return 2.0 ** (-self.alpha / 2.0)

    # -- coordinates ---------------------------------------------------------
    def sample_coordinates(self, shape, rng):
        rng = as_generator(rng)
        if self.law == "gaussian":
            return rng.standard_normal(shape)
        if self.law == "rademacher":
            return rng.choice(np.array([-1.0, 1.0]), size=shape)
        return rng.random(shape) ** (-1.0 / self.pareto_theta)

    def integrand_draws(self, n, size, rng, chunk=None):
        n = _check_n(n)
        rng = as_generator(rng)
        chunk = chunk or max(1, min(size, 2_000_000 // n))
        out = []
        done = 0
        while done < size:
            b = min(chunk, size - done)
            g = self.sample_coordinates((b, n), rng)
            out.append((self.coef * np.abs(g).max(axis=1)) ** self.alpha)
            done += b
        return np.concatenate(out)

    def _gaussian_tilted_grid(self, n):
        key = ("gauss_tilt", n)
        if key in self._cache:
            return self._cache[key]
        top = math.sqrt(2.0 * math.log(max(n, 2))) + 10.0
        y = np.linspace(0.0, top, 200_001)[1:]
        logf = np.log1p(-2.0 * special.ndtr(-y))
        logd = self.alpha * np.log(y) - 0.5 * y * y + (n - 1) * logf
        dens = np.exp(logd - logd.max())
        cdf = integrate.cumulative_trapezoid(dens, y, initial=0.0)
        cdf /= cdf[-1]
        self._cache[key] = (y, cdf)
        return y, cdf

    def _sample_peak(self, n, size, rng):
        """Magnitude of the largest coordinate under the tilted law."""
        if self.law == "rademacher":
            return np.ones(size)
        if self.law == "pareto":
            w = rng.beta(1.0 - self.alpha / self.pareto_theta, n, size=size)
            return w ** (-1.0 / self.pareto_theta)
        y, cdf = self._gaussian_tilted_grid(n)
        return np.interp(rng.random(size), cdf, y)

    def sample_profiles(self, n, size, rng):
        n = _check_n(n)
        rng = as_generator(rng)
        if self.law == "rademacher":
            return Profiles.from_dense(self.sample_coordinates((size, n), rng))
        peak = self._sample_peak(n, size, rng)
        lead = rng.integers(0, n, size=size)
        u = rng.random((size, n))
        if self.law == "pareto":
            below = 1.0 - peak ** -self.pareto_theta
            g = (1.0 - u * below[:, None]) ** (-1.0 / self.pareto_theta)
        else:
            below = 1.0 - 2.0 * special.ndtr(-peak)
            g = special.ndtri(0.5 * (1.0 + u * below[:, None]))
            g *= rng.choice(np.array([-1.0, 1.0]), size=(size, n))
        g[np.arange(size), lead] = peak * (1.0 if self.law == "pareto" else rng.choice([-1.0, 1.0], size=size))
        return Profiles.from_dense(g / peak[:, None])

    def kernel_window(self, point, n):
        g = np.asarray(point, dtype=float)
        n = _check_n(n)
        if g.ndim != 1 or len(g) < n:
            raise ValueError("product-shift points are coordinate vectors of length >= n")
        return self.coef * g[:n]

    def to_dict(self):
        d = {"kind": self.kind, "alpha": self.alpha, "law": self.law}
        if self.law == "pareto":
            d["pareto_theta"] = self.pareto_theta
        return d


def make_product_shift(alpha, coordinate_law, pareto_theta=None) -> ProductShift:
    return ProductShift(alpha, coordinate_law, pareto_theta)


# ---------------------------------------------------------------------------


def sample_normalized_profile(rep: Representation, n: int, stream) -> np.ndarray:
    """One normalized profile as a dense vector of length ``n``."""
    return rep.sample_profiles(n, 1, as_generator(stream)).dense()[0]


def kernel_window(rep: Representation, point, n: int) -> np.ndarray:
    return rep.kernel_window(point, n)


def representation_from_dict(d: dict) -> Representation:
    """Inverse of ``Representation.to_dict``."""
    try:
        kind = d["kind"]
        alpha = d["alpha"]
    except KeyError as exc:
        raise ValueError(f"representation is missing field {exc.args[0]!r}") from None
    if kind == "mixed_ma":
        return make_mixed_ma(alpha, d["atoms"])
    if kind == "renewal":
        return make_renewal_shift(alpha, d["gamma"], d.get("head_probs", ()), d.get("tail", "power"))
    if kind == "dyadic":
        return make_dyadic(alpha, theta=d.get("theta"), h=d.get("h"))
    if kind == "product_shift":
        return make_product_shift(alpha, d["law"], d.get("pareto_theta"))
    raise ValueError(f"unknown representation kind {kind!r}")
