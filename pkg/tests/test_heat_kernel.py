import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from sepcurrent.heat_kernel import (GridFunction, KernelConfig, apply_semigroup, boundary_kernel,
                                    boundary_kernel_integral, gauss, kernel, reflect,
                                    uniform_kernel_matrix)

BRUTE = KernelConfig(n_images=60)


def brute_kernel(t, r, rp):
    """Sum over preimages of rp under the fold, found by scanning the line."""
    ks = np.arange(-60, 61)
    if abs(rp) == 1.0:
        return 2 * gauss(t, r, rp + 4 * ks).sum()
    return gauss(t, r, rp + 4 * ks).sum() + gauss(t, r, 2 - rp + 4 * ks).sum()


def test_reflect_examples():
    assert reflect(0.3) == pytest.approx(0.3)
    assert reflect(1.5) == pytest.approx(0.5)
    assert reflect(3.5) == pytest.approx(-0.5)
    assert reflect(-1.5) == pytest.approx(-0.5)
    x = np.linspace(-9, 9, 1001)
    assert np.all(np.abs(reflect(x)) <= 1)


def test_gauss():
    assert gauss(0.5, 0, 0) == pytest.approx(1 / math.sqrt(math.pi), abs=1e-10)
    assert quad(lambda y: gauss(0.3, 0.2, y), -np.inf, np.inf)[0] == pytest.approx(1, abs=1e-10)
    assert gauss(0.2, 0.1, -0.4) == gauss(0.2, -0.4, 0.1)
    with pytest.raises(ValueError):
        gauss(0.0, 0, 0)


@settings(max_examples=60)
@given(t=st.floats(1e-3, 5.0), r=st.floats(-1, 1), rp=st.floats(-1, 1))
def test_kernel_symmetric_and_matches_brute_force(t, r, rp):
    assert kernel(t, r, rp) == pytest.approx(kernel(t, rp, r), rel=1e-12, abs=1e-12)
    assert kernel(t, r, rp) == pytest.approx(brute_kernel(t, r, rp), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_kernel_conservation(t):
    for r in (-1.0, -0.3, 0.0, 0.8, 1.0):
        total, _ = quad(lambda y: kernel(t, r, y), -1, 1, points=[r], limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)


def test_kernel_flattens():
    nodes = np.linspace(-1, 1, 41)
    assert np.max(np.abs(kernel(50.0, nodes[:, None], nodes[None, :]) - 0.5)) < 1e-8


def test_boundary_weight_two():
    assert kernel(0.2, 0.3, 1.0) == pytest.approx(2 * sum(gauss(0.2, 0.3, 1 + 4 * k)
                                                          for k in range(-5, 6)))


def test_bad_arguments():
    with pytest.raises(ValueError):
        kernel(0.0, 0, 0)
    with pytest.raises(ValueError):
        kernel(0.1, 1.2, 0)
    with pytest.raises(ValueError):
        KernelConfig(n_images=0)
    with pytest.raises(ValueError):
        KernelConfig(tail_tol=0)


def test_positivity_and_short_time_bound():
    nodes = np.linspace(-1, 1, 201)
    for t in np.geomspace(1e-4, 1, 13):
        mat = uniform_kernel_matrix(t, 200)
        # strict positivity where exp(-4/2t) is representable; below that it underflows
        assert mat.min() > 0 if t >= 0.01 else mat.min() >= 0
        assert mat.max() <= 3 / math.sqrt(t)
    assert kernel(1e-4, 0.0, 0.0) > 0
    assert kernel(0.05, nodes, 0.3).min() > 0


def test_uniform_matrix_matches_direct_sum():
    nodes = np.linspace(-1, 1, 81)
    for t in (1e-3, 0.2, 4.0):
        direct = kernel(t, nodes[:, None], nodes[None, :])
        np.testing.assert_allclose(uniform_kernel_matrix(t, 80), direct, rtol=1e-12, atol=1e-300)


def test_image_doubling_is_invisible():
    r = np.linspace(-1, 1, 11)
    for t in (0.01, 0.5, 3.0):
        base = KernelConfig().image_indices(t).max()
        wide = KernelConfig(n_images=int(2 * base))
        assert np.max(np.abs(kernel(t, r[:, None], r[None, :])
                             - kernel(t, r[:, None], r[None, :], wide))) < 1e-14


def test_boundary_integral_matches_quadrature():
    for r in (1.0, 0.4, -1.0):
        for s in (1e-3, 0.3, 2.0):
            ref = quad(lambda u: boundary_kernel(u, r, 1.0), 0, s, limit=200,
                       points=[min(s, 1e-4)])[0]
            assert boundary_kernel_integral([r], [s], 1.0)[0, 0] == pytest.approx(ref, rel=1e-9,
                                                                                  abs=1e-13)


def test_boundary_integral_is_sqrt_singular():
    s = np.array([1e-8, 4e-8])
    v = boundary_kernel_integral([1.0], s, 1.0)[0]
    assert v[1] / v[0] == pytest.approx(2.0, rel=1e-6)


class TestSemigroup:
    def g(self, M=400):
        return GridFunction.from_function(lambda r: np.cos(np.pi * r / 2) ** 2 + 0.3 * r, M)

    def test_constant(self):
        out = apply_semigroup(0.3, GridFunction.constant(0.7, 200))
        assert np.max(np.abs(out.values - 0.7)) < 1e-8

    def test_chapman_kolmogorov(self):
        g = self.g()
        a = apply_semigroup(0.1, apply_semigroup(0.1, g))
        b = apply_semigroup(0.2, g)
        assert np.max(np.abs(a.values - b.values)) < 1e-6

    def test_mean_preserved(self):
        g = self.g()
        assert apply_semigroup(0.7, g).integral() == pytest.approx(g.integral(), abs=1e-8)

    def test_grid_mismatch(self):
        with pytest.raises(ValueError):
            apply_semigroup(0.1, self.g(100), KernelConfig(grid=400))

    def test_csv_roundtrip(self, tmp_path):
        g = self.g(50)
        g.to_csv(tmp_path / "g.csv")
        assert (tmp_path / "g.csv").read_text().startswith("r,value")
        back = GridFunction.from_csv(tmp_path / "g.csv")
        assert np.array_equal(back.values, g.values)

    def test_invalid_grid_function(self):
        with pytest.raises(ValueError):
            GridFunction([0.0, np.nan, 1.0])
        with pytest.raises(ValueError):
            GridFunction([0.0, 1.0])
