import math

import numpy as np
import pytest

from sphfsi.kernels import SmoothingKernel


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_compact_support(dim):
    k = SmoothingKernel(h=0.4, dim=dim)
    assert k.evaluate(3 * k.h) == 0.0
    assert k.evaluate(4 * k.h) == 0.0
    assert k.evaluate_derivative(3 * k.h) == 0.0
    assert k.evaluate(2.999 * k.h) > 0.0


def test_peak_value_2d():
    # hand evaluation of the piecewise polynomial at q = 0:
    # 3^5 - 6*2^5 + 15 = 66
    h = 0.37
    k = SmoothingKernel(h=h, dim=2)
    expected = 66.0 * 7.0 / (478.0 * math.pi * h * h)
    assert k.evaluate(0.0) == pytest.approx(expected, rel=1e-14)
    assert k.self_value() == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_quadrature_normalization(dim):
    # midpoint-rule quadrature over the support at resolution h/50
    h = 0.8
    k = SmoothingKernel(h=h, dim=dim)
    dr = h / 50.0
    r = (np.arange(150) + 0.5) * dr
    w = k.evaluate(r)
    if dim == 1:
        integral = 2.0 * np.sum(w) * dr
    elif dim == 2:
        integral = np.sum(w * 2.0 * math.pi * r) * dr
    else:
        integral = np.sum(w * 4.0 * math.pi * r ** 2) * dr
    assert integral == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_derivative_matches_finite_difference(dim):
    h = 0.6
    k = SmoothingKernel(h=h, dim=dim)
    eps = 1e-6 * h
    for r in (0.5 * h, 1.5 * h, 2.5 * h):
        fd = (k.evaluate(r + eps) - k.evaluate(r - eps)) / (2 * eps)
        assert k.evaluate_derivative(r) == pytest.approx(fd, rel=1e-6)


def test_derivative_fd_property_20_radii():
    k = SmoothingKernel(h=1.0, dim=2)
    radii = np.linspace(0.05, 2.95, 20)
    eps = 1e-7
    fd = (k.evaluate(radii + eps) - k.evaluate(radii - eps)) / (2 * eps)
    d = k.evaluate_derivative(radii)
    assert np.max(np.abs(d - fd)) < 1e-6 * np.max(np.abs(d))


def test_derivative_sign_and_monotonicity():
    k = SmoothingKernel(h=1.0, dim=2)
    assert k.evaluate_derivative(1.2) < 0.0
    r = np.linspace(0.0, 3.0, 301)
    assert np.all(k.evaluate_derivative(r) <= 0.0)
    w = k.evaluate(r)
    assert np.all(np.diff(w) <= 1e-15)


def test_derivative_zero_at_origin():
    # analytic one-sided limit: -5*81 + 30*16 - 75 = 0
    k = SmoothingKernel(h=1.0, dim=2)
    assert k.evaluate_derivative(0.0) == 0.0


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_lattice_partition_of_unity(dim):
    # sum of V * W over a regular grid with spacing h, padded beyond 3h
    h = 1.0
    k = SmoothingKernel(h=h, dim=dim)
    axes = [np.arange(-4, 5, dtype=float)] * dim
    grids = np.meshgrid(*axes, indexing="ij")
    r = np.sqrt(sum(g ** 2 for g in grids))
    total = np.sum(k.evaluate(r))  # V = h^dim = 1
    assert total == pytest.approx(1.0, rel=0.01)


def test_invalid_inputs_rejected():
    k = SmoothingKernel(h=1.0, dim=2)
    with pytest.raises(ValueError):
        k.evaluate(-0.1)
    with pytest.raises(ValueError):
        k.evaluate(float("nan"))
    with pytest.raises(ValueError):
        k.evaluate_derivative(-1.0)
    with pytest.raises(ValueError):
        SmoothingKernel(h=0.0, dim=2)
    with pytest.raises(ValueError):
        SmoothingKernel(h=1.0, dim=4)
