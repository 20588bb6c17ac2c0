import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablemax import bn_engine as bne
from stablemax.representations import make_dyadic, make_mixed_ma, make_product_shift, make_renewal_shift
from stablemax.stable_core import RandomStream


def families(alpha=1.2):
    return {
        "iid": make_mixed_ma(alpha, [(1.0, [1.0])]),
        "two_atom": make_mixed_ma(alpha, [(0.6, [1.0, -0.5]), (0.4, [0.3, 0.2, 2.0], -1)]),
        "renewal": make_renewal_shift(alpha, 0.5),
        "dyadic": make_dyadic(alpha, theta=0.2),
        "gaussian": make_product_shift(alpha, "gaussian"),
        "rademacher": make_product_shift(alpha, "rademacher"),
        "pareto": make_product_shift(alpha, "pareto", 2 * alpha),
    }


GRID = [1, 2, 3, 5, 10, 31, 100, 316, 1000, 3162, 10_000, 31_623, 100_000]


def test_iid_bn_power_law():
    rep = families(1.3)["iid"]
    t = bne.bn_table(rep, GRID)
    np.testing.assert_allclose(t.values, np.array(GRID, dtype=float) ** (1 / 1.3), rtol=1e-14)
    assert bne.growth_exponent(t) == pytest.approx(1 / 1.3, abs=1e-6)


def test_rademacher_constant():
    t = bne.bn_table(families()["rademacher"], GRID)
    assert np.all(t.values == 1.0)
    assert bne.growth_exponent(t) == pytest.approx(0.0, abs=1e-6)


def test_renewal_slope():
    rep = make_renewal_shift(1.5, 0.75)
    t = bne.bn_table(rep, np.unique(np.logspace(3, 6, 16).astype(int)))
    assert bne.growth_exponent(t) == pytest.approx(0.5, abs=0.05)


def test_dyadic_slope():
    rep = make_dyadic(1.0, theta=0.2)
    t = bne.bn_table(rep, 2 ** np.arange(10, 21))
    assert bne.growth_exponent(t) == pytest.approx(0.2, abs=0.05)


@pytest.mark.parametrize("name", list(families()))
def test_monotone_and_subadditive(name):
    rep = families()[name]
    ns = np.arange(1, 60)
    vals = rep.bn_alpha_grid(ns)
    assert np.all(np.diff(vals) >= -1e-12 * vals[1:])
    for m in (1, 3, 7, 20):
        for n in (1, 5, 11, 30):
            assert rep.bn_alpha(m + n) <= rep.bn_alpha(m) + rep.bn_alpha(n) + 1e-12 * rep.bn_alpha(m + n)


def test_dichotomy():
    for name, rep in families().items():
        t = bne.bn_table(rep, [100, 10_000, 100_000])
        r = t.values / t.ns ** (1 / rep.alpha)
        if rep.flow_class == "dissipative":
            assert abs(r[2] / r[1] - 1) < 0.02, name
        else:
            assert r[2] < 0.5 * r[0], name


@pytest.mark.parametrize(
    "name,n,samples",
    [("rademacher", 50, 1000), ("gaussian", 100, 100_000), ("renewal", 1000, 100_000), ("two_atom", 64, 50_000),
     ("dyadic", 256, 100_000), ("pareto", 100, 100_000)],
)
def test_monte_carlo_matches_exact(name, n, samples):
    rep = families()[name]
    est, se = bne.bn_monte_carlo(rep, n, samples, RandomStream(31, 0, (name,)))
    exact = bne.bn_exact(rep, n)
    if name == "rademacher":
        assert est == 1.0 and se == 0.0
    else:
        assert abs(est - exact) < 3 * se


def test_mc_table_reproducible():
    rep = families()["renewal"]
    a = bne.bn_table(rep, [10, 100], "mc", 5000, RandomStream(2))
    b = bne.bn_table(rep, [10, 100], "mc", 5000, RandomStream(2))
    assert a.to_csv() == b.to_csv()
    assert a.rows[0].method == "mc" and a.rows[0].stderr > 0


def test_table_csv_round_trip():
    t = bne.bn_table(families()["gaussian"], [1, 10, 100])
    back = bne.BnTable.from_csv(t.to_csv(), t.alpha)
    assert back.rows == t.rows
    assert t.to_csv().splitlines()[0] == "n,bn,method,stderr"


def test_growth_fit_needs_grid():
    rep = families()["iid"]
    with pytest.raises(ValueError):
        bne.growth_exponent(bne.bn_table(rep, [1, 2, 3]))
    with pytest.raises(ValueError):
        bne.growth_exponent(bne.bn_table(rep, [10, 20, 30, 40, 50]))
    with pytest.raises(ValueError):
        bne.bn_table(rep, [])
    with pytest.raises(ValueError):
        bne.bn_table(rep, [5], "spline")


def test_growth_condition():
    iid = families(1.0)["iid"]
    assert bne.check_growth_condition(bne.bn_table(iid, GRID), 1.0, 1.0) == (True, None)
    rad = bne.bn_table(families()["rademacher"], GRID)
    ok, bad = bne.check_growth_condition(rad, 0.1, 0.5)
    assert not ok and bad == 3162
    # Pareto: b_n ~ c n^(1/theta_tail); half the fitted constant is a valid lower envelope
    rep = make_product_shift(1.0, "pareto", 2.0)
    t = bne.bn_table(rep, GRID)
    c = t.values[-1] / GRID[-1] ** 0.5
    assert bne.check_growth_condition(t, 0.5, 0.5 * c) == (True, None)


def test_cycle_ledger():
    K = 7
    led = bne.kac_decomposition(bne.cycle_system(K), {0}, K)
    np.testing.assert_allclose(led.entry, np.full(K, 1 / K), rtol=1e-15)
    assert led.occupation == pytest.approx(1.0)
    led = bne.kac_decomposition(bne.cycle_system(K), {0}, 5)
    assert led.occupation == pytest.approx(5 / K)
    assert led.occupation_residual < 1e-12 and led.return_residual < 1e-12


def test_renewal_ledger():
    rep = make_renewal_shift(1.0, 0.4, [0.3, 0.1])
    n = 500
    led = bne.kac_decomposition(rep, None, n)
    np.testing.assert_array_equal(led.entry, rep.survival(np.arange(n)))
    assert led.occupation == pytest.approx(rep.bn_alpha(n), rel=1e-15)
    # telescoping: m(A_k) - m(A_{k+1}) = m(R_{k+1})
    np.testing.assert_allclose(led.entry[:-1] - led.entry[1:], led.ret[1:], rtol=1e-12, atol=1e-17)
    assert led.occupation_residual < 1e-12 and led.return_residual < 1e-12


def test_renewal_ledger_brute_force():
    # A_k = states outside {0} whose countdown first reaches 0 after k steps
    rep = make_renewal_shift(1.0, 0.5, [0.25])
    led = bne.kac_decomposition(rep, None, 10)
    for k in range(10):
        brute = math.fsum(float(rep.survival(x)) for x in range(0, 50) if x == k)
        assert led.entry[k] == brute


def test_ledger_csv():
    led = bne.kac_decomposition(bne.cycle_system(3), {0}, 3)
    lines = led.to_csv().splitlines()
    assert lines[0] == "k,m_Ak,m_Rk"
    assert len(lines) == 4


def test_ledger_rejects_bad_input():
    with pytest.raises(ValueError):
        bne.kac_decomposition(bne.cycle_system(3), set(), 3)
    with pytest.raises(ValueError):
        bne.kac_decomposition(make_renewal_shift(1.0, 0.5), {1}, 3)
    with pytest.raises(TypeError):
        bne.kac_decomposition(families()["iid"], None, 3)
    with pytest.raises(ValueError):
        bne.FiniteSystem((0, 0), (0.5, 0.5))
    with pytest.raises(ValueError):
        bne.FiniteSystem((1, 0), (0.3, 0.7))


@settings(max_examples=25, deadline=None)
@given(st.permutations(list(range(8))), st.sets(st.integers(0, 7), min_size=1), st.integers(1, 30))
def test_kac_identities_on_permutations(perm, A, n):
    # uniform weights are invariant under every permutation
    system = bne.FiniteSystem(tuple(perm), tuple([1 / 8] * 8))
    led = bne.kac_decomposition(system, A, n)
    assert led.occupation_residual < 1e-12
    assert led.return_residual < 1e-12


def test_marcus_normalizer():
    assert bne.marcus_normalizer(0.7, 1000) == 1.0
    assert bne.marcus_normalizer(1.5, 1000) == pytest.approx(math.log(1000) ** (1 / 3))
    assert bne.marcus_normalizer(1.0, 10**6) == pytest.approx(math.log(math.log(10**6)))


def test_marcus_ratio_iid_bounded():
    rep = families(0.7)["iid"]
    table = bne.bn_table(rep, [1, 100, 10_000])
    rows = bne.marcus_ratio(rep, table, 0.5, 1000, RandomStream(5))
    r = np.array([row["ratio"] for row in rows])
    assert np.all(r > 0) and np.all(np.isfinite(r))
    assert r.max() / r.min() < 3
    with pytest.raises(ValueError):
        bne.marcus_ratio(rep, table, 0.8, 10, RandomStream(5))


@pytest.mark.slow
def test_marcus_ratio_envelope_alpha_above_one():
    rep = families(1.5)["iid"]
    table = bne.bn_table(rep, [100, 1000, 10_000])
    rows = bne.marcus_ratio(rep, table, 1.0, 1000, RandomStream(6))
    norm = np.array([row["normalized"] for row in rows])
    assert norm.max() / norm.min() < 3
