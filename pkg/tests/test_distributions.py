import math

import numpy as np
import pytest
from scipy import stats

from envrank.distributions import (
    BinningScheme,
    Histogram,
    build_histogram,
    make_binning,
    symmetric_kl,
    wasserstein1_exact,
    wasserstein1_hist,
)

from conftest import build_dataset


def hist(mass, edges):
    return Histogram(mass=np.asarray(mass, float), edges=np.asarray(edges, float),
                     support_count=1)


# ---------------------------------------------------------------- binning

def test_make_binning_uniform_partition():
    values = np.array([[0.0, 3.0], [10.0, 3.0], [5.0, 3.0], [2.0, 3.0]])
    ds = build_dataset(values, ["a", "b", "a", "b"])
    scheme = make_binning(ds, bins=10)
    np.testing.assert_allclose(scheme.edges[0], np.arange(11.0))
    # constant feature gets a synthetic unit span centered on the value
    np.testing.assert_allclose(scheme.edges[1], np.linspace(2.5, 3.5, 11))


def test_make_binning_uses_pooled_train_range_only():
    values = np.array([[0.0], [4.0], [100.0], [-50.0]])
    splits = ["train", "train", "test_id", "test_ood"]
    labels = ["normal", "normal", "novel", "unknown"]
    ds = build_dataset(values, ["a", "b", "a", "b"], splits, labels)
    scheme = make_binning(ds, bins=4)
    np.testing.assert_allclose(scheme.edges[0], [0.0, 1.0, 2.0, 3.0, 4.0])


def test_make_binning_rejects_single_bin():
    ds = build_dataset(np.zeros((2, 1)), ["a", "b"])
    with pytest.raises(ValueError, match="bins"):
        make_binning(ds, bins=1)


# ------------------------------------------------------------- histograms

def test_histogram_all_values_at_lower_edge():
    h = build_histogram([0.0, 0.0, 0.0], np.linspace(0, 2, 3))
    np.testing.assert_allclose(h.mass, [1.0, 0.0])
    assert h.support_count == 3


def test_histogram_symmetric_two_bins():
    h = build_histogram([0.5, 0.5, 1.5, 1.5], np.linspace(0, 2, 3))
    np.testing.assert_allclose(h.mass, [0.5, 0.5])


def test_histogram_out_of_range_clamps_to_end_bins():
    h = build_histogram([5.0], np.linspace(0, 2, 3))
    np.testing.assert_allclose(h.mass, [0.0, 1.0])
    h = build_histogram([-3.0], np.linspace(0, 2, 3))
    np.testing.assert_allclose(h.mass, [1.0, 0.0])


def test_histogram_rejects_empty_input():
    with pytest.raises(ValueError, match="zero values"):
        build_histogram([], np.linspace(0, 1, 3))


def test_histogram_mass_sums_to_one(rng):
    values = rng.normal(size=400)
    h = build_histogram(values, np.linspace(-3, 3, 33))
    assert abs(h.mass.sum() - 1.0) < 1e-9


# ---------------------------------------------------- histogram Wasserstein

def test_w1_hist_identical_is_zero():
    h = build_histogram([0.2, 0.7, 1.9], np.linspace(0, 2, 5))
    assert wasserstein1_hist(h, h) == 0.0


def test_w1_hist_unit_two_bin_shift():
    edges = np.array([0.0, 1.0, 2.0])
    a = hist([1.0, 0.0], edges)
    b = hist([0.0, 1.0], edges)
    # exact-sample oracle: W1({0.5}, {1.5}) = 1.0
    assert wasserstein1_exact([0.5], [1.5]) == 1.0
    assert wasserstein1_hist(a, b) == pytest.approx(1.0, abs=1e-12)


def test_w1_hist_two_bin_mass_shift():
    edges = np.linspace(0.0, 4.0, 5)
    a = hist([0.5, 0.5, 0.0, 0.0], edges)
    b = hist([0.0, 0.0, 0.5, 0.5], edges)
    # exact-sample oracle on the bin representatives
    oracle = wasserstein1_exact([0.5, 1.5], [2.5, 3.5])
    assert oracle == 2.0
    assert wasserstein1_hist(a, b) == pytest.approx(oracle, abs=1e-12)


def test_w1_hist_rejects_mismatched_binning():
    a = hist([1.0, 0.0], [0.0, 1.0, 2.0])
    b = hist([1.0, 0.0], [0.0, 2.0, 4.0])
    with pytest.raises(ValueError, match="different binning"):
        wasserstein1_hist(a, b)


def test_w1_hist_symmetry_and_nonnegativity(rng):
    edges = np.linspace(-1, 1, 17)
    for _ in range(20):
        a = build_histogram(rng.normal(size=50), edges)
        b = build_histogram(rng.normal(size=70), edges)
        d_ab = wasserstein1_hist(a, b)
        d_ba = wasserstein1_hist(b, a)
        assert d_ab == d_ba
        assert d_ab >= 0.0
    assert wasserstein1_hist(a, a) == 0.0


def test_w1_hist_converges_to_exact(rng):
    # sample displacement within a bin is at most one bin width per side
    for _ in range(10):
        a = rng.normal(loc=rng.uniform(-1, 1), size=1000)
        b = rng.uniform(-2, 2, size=1000)
        lo = min(a.min(), b.min())
        hi = max(a.max(), b.max())
        edges = np.linspace(lo, hi, 257)
        width = (hi - lo) / 256
        ha = build_histogram(a, edges)
        hb = build_histogram(b, edges)
        exact = wasserstein1_exact(a, b)
        assert abs(wasserstein1_hist(ha, hb) - exact) <= 2 * width


def test_w1_hist_shift_invariant(rng):
    values_a = rng.normal(size=300)
    values_b = rng.normal(loc=0.5, size=300)
    lo = min(values_a.min(), values_b.min())
    hi = max(values_a.max(), values_b.max())
    shift = 17.25
    d0 = wasserstein1_hist(
        build_histogram(values_a, np.linspace(lo, hi, 65)),
        build_histogram(values_b, np.linspace(lo, hi, 65)),
    )
    d1 = wasserstein1_hist(
        build_histogram(values_a + shift, np.linspace(lo + shift, hi + shift, 65)),
        build_histogram(values_b + shift, np.linspace(lo + shift, hi + shift, 65)),
    )
    assert d1 == pytest.approx(d0, abs=1e-9)


# ------------------------------------------------------------------ exact W1

def test_w1_exact_identical_lists():
    assert wasserstein1_exact([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_w1_exact_equal_size_matching():
    # equal sizes reduce to the mean absolute sorted-value difference
    assert wasserstein1_exact([0.0, 2.0], [1.0, 3.0]) == 1.0


def test_w1_exact_unequal_sizes():
    # quantile functions: Qa == 0; Qb == 0 on (0, 1/2], 4 on (1/2, 1)
    assert wasserstein1_exact([0.0], [0.0, 4.0]) == 2.0
    # Monte-Carlo quadrature of the quantile integral agrees
    rng = np.random.default_rng(7)
    t = rng.uniform(0, 1, size=1_000_000)
    qa = np.zeros_like(t)
    qb = np.where(t <= 0.5, 0.0, 4.0)
    mc = np.abs(qa - qb).mean()
    assert abs(mc - 2.0) < 0.01


def test_w1_exact_rejects_empty():
    with pytest.raises(ValueError, match="non-empty"):
        wasserstein1_exact([], [1.0])


def test_w1_exact_matches_scipy(rng):
    for _ in range(50):
        n = int(rng.integers(1, 40))
        m = int(rng.integers(1, 40))
        a = rng.normal(size=n)
        b = rng.uniform(-2, 2, size=m)
        ours = wasserstein1_exact(a, b)
        ref = stats.wasserstein_distance(a, b)
        assert ours == pytest.approx(ref, rel=1e-10, abs=1e-12)


# --------------------------------------------------------------- symmetric KL

def test_sym_kl_identical_is_zero():
    h = build_histogram([0.1, 0.9, 1.4], np.linspace(0, 2, 5))
    assert symmetric_kl(h, h) == 0.0


def test_sym_kl_known_value_at_vanishing_eps():
    edges = np.array([0.0, 1.0, 2.0])
    a = hist([0.5, 0.5], edges)
    b = hist([0.9, 0.1], edges)
    # exact arithmetic at eps -> 0:
    # KL(p||q) + KL(q||p) over the two bins
    expected = (
        0.5 * math.log(0.5 / 0.9)
        + 0.5 * math.log(0.5 / 0.1)
        + 0.9 * math.log(0.9 / 0.5)
        + 0.1 * math.log(0.1 / 0.5)
    )
    got = symmetric_kl(a, b, eps=1e-12)
    assert got == pytest.approx(expected, abs=1e-9)
    assert expected == pytest.approx(0.8788898309344878, abs=1e-12)


def test_sym_kl_symmetric(rng):
    edges = np.linspace(-2, 2, 21)
    a = build_histogram(rng.normal(size=100), edges)
    b = build_histogram(rng.normal(loc=1, size=80), edges)
    assert symmetric_kl(a, b) == symmetric_kl(b, a)
    assert symmetric_kl(a, b) >= 0.0


def test_sym_kl_rejects_nonpositive_eps():
    h = hist([0.5, 0.5], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError, match="eps"):
        symmetric_kl(h, h, eps=0.0)


def test_sym_kl_zero_iff_equal_mass(rng):
    edges = np.linspace(0, 1, 9)
    a = build_histogram(rng.uniform(size=64), edges)
    b = build_histogram(rng.uniform(size=64), edges)
    if np.array_equal(a.mass, b.mass):  # pragma: no cover - improbable
        return
    assert symmetric_kl(a, b) > 1e-9


# ---------------------------------------------------------------- validation

def test_histogram_mass_must_sum_to_one():
    with pytest.raises(ValueError, match="sum to 1"):
        hist([0.5, 0.4], [0.0, 1.0, 2.0])


def test_binning_scheme_shape_checked():
    with pytest.raises(ValueError, match="inconsistent"):
        BinningScheme(edges=np.zeros((3, 4)), bins=4)
