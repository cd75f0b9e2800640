import math

import pytest
from hypothesis import given, strategies as st

from udnlab.channel import PathLossModel
from udnlab.oracle import (CaseId, OracleCase, coverage_closed_form, coverage_closed_form_alpha4,
                           interference_functional, isolated_cell_coverage)


def test_alpha4_gamma1():
    assert coverage_closed_form(4.0, 1.0) == pytest.approx(1 / (1 + math.pi / 4), abs=1e-10)
    assert coverage_closed_form(4.0, 1.0) == pytest.approx(0.5601, abs=5e-5)


def test_alpha4_gamma10():
    # quadrature and the arctan reduction agree; mpmath gives 0.2000496
    q = coverage_closed_form(4.0, 10.0)
    assert q == pytest.approx(coverage_closed_form_alpha4(10.0), abs=1e-10)
    assert q == pytest.approx(0.2000496, abs=1e-6)


@given(st.floats(0.01, 100.0))
def test_quadrature_matches_arctan_form(g):
    assert coverage_closed_form(4.0, g) == pytest.approx(coverage_closed_form_alpha4(g), rel=1e-8)


def test_vanishing_threshold():
    assert coverage_closed_form(4.0, 1e-12) == pytest.approx(1.0, abs=1e-5)


@given(st.floats(2.05, 6.0), st.floats(0.01, 10.0), st.floats(1.01, 3.0))
def test_closed_form_decreasing_in_threshold(alpha, g, k):
    assert coverage_closed_form(alpha, g * k) <= coverage_closed_form(alpha, g) + 1e-12


@pytest.mark.parametrize("alpha", [2.0, 1.5, -1.0])
def test_rejects_alpha_at_most_two(alpha):
    with pytest.raises(ValueError):
        interference_functional(alpha, 1.0)
    with pytest.raises(ValueError):
        OracleCase(CaseId.INTERFERENCE_LIMITED_SINGLE_SLOPE, {"alpha": alpha, "gamma0_linear": 1.0})


def test_isolated_cell_examples():
    ds = PathLossModel.dual_slope()
    assert isolated_cell_coverage(1.0, 24.0, -95.0, ds, 1.0) == pytest.approx(math.exp(-10**-1.52), rel=1e-9)
    assert isolated_cell_coverage(1.0, 24.0, -95.0, ds, 1.0) == pytest.approx(0.970, abs=5e-4)
    assert isolated_cell_coverage(1.0, 24.0, -95.0, ds, 0.0) == 1.0
    assert isolated_cell_coverage(1.0, 24.0, None, ds, 1.0) == 1.0
    # mean signal equal to the noise: tx - PL = noise
    assert isolated_cell_coverage(1.0, -95.0 + 103.8, -95.0, ds, 1.0) == pytest.approx(math.exp(-1))


def test_oracle_case_dispatch():
    c = OracleCase("InterferenceLimitedSingleSlope", {"alpha": 4.0, "gamma0_linear": 1.0})
    assert c.value() == pytest.approx(0.5601, abs=5e-5)
    c2 = OracleCase(CaseId.ISOLATED_CELL_SNR, {"distance_km": 1.0})
    assert c2.value() == pytest.approx(0.970, abs=5e-4)
