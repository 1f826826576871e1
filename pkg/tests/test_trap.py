import math

import pytest
from hypothesis import given, settings, strategies as st

from becvortex.trap import (FLAT, DomainError, TrapParams, b_function, chemical_potential,
                            chemical_potential_bisection, chemical_potential_closed_form,
                            potential_value, tf_density, tf_domain, tf_integral,
                            tf_normalization_residual)
from oracles import FROZEN, TRAPS, mu_oracle

slopes = st.sampled_from([2.0, 3.0, 4.0, 6.0])
lams = st.floats(0.2, 1.0)


@pytest.mark.parametrize("key", TRAPS)
def test_mu_matches_frozen_oracle(key):
    s, lam = key
    assert TrapParams(s, lam).mu == pytest.approx(FROZEN[key][0], rel=1e-12)


@pytest.mark.parametrize("key", [(2, 1.0), (4, 0.5), (3, 0.7)])
def test_mu_matches_live_oracle(key):
    assert chemical_potential(*key) == pytest.approx(mu_oracle(*key), rel=1e-12)


def test_harmonic_isotropic_mu_exceeds_one():
    # the closed form gives sqrt(4/pi) > 1 and the mass oracle agrees
    mu = chemical_potential(2, 1.0)
    assert mu == pytest.approx(math.sqrt(4 / math.pi), rel=1e-14)
    assert mu > 1
    assert chemical_potential_bisection(2, 1.0) == pytest.approx(mu, rel=1e-12)


def test_flat_limit():
    assert chemical_potential(FLAT, 1.0) == pytest.approx(2 / math.pi, rel=1e-15)
    assert chemical_potential(FLAT, 0.5) == pytest.approx(1 / math.pi, rel=1e-15)
    # large finite s approaches the flat value
    assert chemical_potential_closed_form(4000, 0.8) == pytest.approx(1.6 / math.pi, rel=2e-3)


@pytest.mark.parametrize("s, lam", [(1.5, 1.0), (2, 0.0), (2, 1.2), (2, -0.3)])
def test_invalid_params_rejected(s, lam):
    with pytest.raises(DomainError):
        TrapParams(s, lam)


def test_potential_examples():
    assert potential_value(0.0, 0.0, TrapParams(2, 1.0)) == 0.0
    assert potential_value(1.0, 0.0, TrapParams(4, 1.0)) == pytest.approx(1.0)
    assert potential_value(0.0, 1.0, TrapParams(2, 0.5)) == pytest.approx(0.25)


@pytest.mark.parametrize("key", TRAPS)
def test_density_examples(key):
    t = TrapParams(*key)
    assert tf_density(0.0, 0.0, t) == pytest.approx(t.mu / 2)
    assert tf_density(t.semi_axis_x, 0.0, t) == pytest.approx(0.0, abs=1e-14)
    assert tf_density(2 * t.semi_axis_x, 0.0, t) == 0.0
    assert b_function(0.0, 0.0, t) == pytest.approx(t.mu / 2)


def test_b_function_exterior_negative():
    t = TrapParams(2, 1.0)
    r = math.sqrt(2 * t.mu)  # V = 2 mu
    assert b_function(r, 0.0, t) == pytest.approx(-t.mu / 2)
    assert b_function(t.semi_axis_x, 0.0, t) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("key", TRAPS)
def test_normalization_default_resolution(key):
    assert tf_normalization_residual(TrapParams(*key)) < 1e-6


@pytest.mark.parametrize("key", [(2, 1.0), (4, 0.5), (FLAT, 0.8)])
def test_normalization_improves_under_refinement(key):
    t = TrapParams(*key)
    res = [abs(tf_integral(t, n, cell_order=1, boundary_samples=1) - 1) for n in (16, 32, 64, 128)]
    assert all(a > b for a, b in zip(res, res[1:]))


def test_domain_inner_margin():
    t = TrapParams(2, 1.0)
    d = tf_domain(t, 0.001)
    assert d.inner_margin == pytest.approx(0.1)
    assert d.contains(0.0, 0.0) and not d.contains(2.0, 0.0)
    assert d.in_inner(0.0, 0.0) and not d.in_inner(0.99 * t.semi_axis_x, 0.0)


@settings(max_examples=60, deadline=None)
@given(s=slopes, lam=lams, x=st.floats(-2, 2), y=st.floats(-2, 2), g=st.sampled_from([0.5, 2.0, 10.0]))
def test_potential_homogeneity(s, lam, x, y, g):
    t = TrapParams(s, lam)
    v = potential_value(x, y, t)
    assert potential_value(g * x, g * y, t) == pytest.approx(g**s * v, rel=1e-12, abs=1e-300)


@settings(max_examples=60, deadline=None)
@given(s=slopes, lam=lams, x=st.floats(-3, 3), y=st.floats(-3, 3))
def test_density_positive_exactly_inside(s, lam, x, y):
    t = TrapParams(s, lam)
    rho = tf_density(x, y, t)
    assert rho >= 0
    assert (rho > 0) == (potential_value(x, y, t) < t.mu)


@settings(max_examples=40, deadline=None)
@given(s=slopes, l1=lams, l2=lams)
def test_mu_increasing_in_lambda(s, l1, l2):
    if abs(l1 - l2) < 1e-6:
        return
    lo, hi = sorted((l1, l2))
    assert chemical_potential(s, lo) < chemical_potential(s, hi)
