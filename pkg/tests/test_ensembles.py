"""
Tests for ensemble relations and matrix samplers.

The relations are checked against the R-transform identity
``R(-m) = z + 1/m``: for any ``m`` the point ``z = R(-m) - 1/m`` lies on the
curve, which gives an oracle that does not share code with the builders.
"""

from __future__ import annotations

import numpy
import pytest
from hypothesis import given, settings, strategies as st

from fdpm.ensembles import (CFP, MP, FreeLevy, FreeLevyParams, MatrixSampleSpec,
                            PenningtonBahri, cfp_polynomial, free_levy_polynomial,
                            model_polynomial, mp_polynomial, read_matrix, sample_matrix,
                            semicircle_polynomial, subsample_principal,
                            symmetric_eigenvalues, write_matrix)
from fdpm.errors import ParameterError, ResourceLimitError, ValidationError


def _r_transform(params: FreeLevyParams, w):
    r = params.a + params.sigma ** 2 * w
    for t, wt in zip(params.atoms, params.weights):
        r = r + params.rate * wt * t / (1 - t * w)
    return r


def _relative_residual(P, z, m):
    scale = sum(abs(c) * abs(z) ** i * abs(m) ** j
                for (i, j), c in numpy.ndenumerate(P.coeffs))
    return abs(P(z, m)) / scale


# =========
# Relations
# =========

def test_mp_polynomial_matches_closed_form():
    P = mp_polynomial(0.25, 1.0)
    # lam sigma2 z m^2 + (z - sigma2(1 - lam)) m + 1
    expected = numpy.array([[1.0, -0.75, 0.0], [0.0, 1.0, 0.25]])
    assert P.angle(type(P)(expected)) < 1e-15


def test_semicircle_roots():
    P = semicircle_polynomial(1.0)
    z = 0.3 + 0.7j
    m = (-z + numpy.sqrt(z - 2) * numpy.sqrt(z + 2)) / 2
    assert abs(P(z, m)) < 1e-14


params_strategy = st.builds(
    lambda a, sigma, rate, t1, dt, w1: FreeLevyParams(a, sigma, rate, (t1, t1 + dt),
                                                     (w1, 1 - w1)),
    st.floats(-1, 1), st.floats(0, 1), st.floats(0.05, 3), st.floats(0.2, 3),
    st.floats(0.3, 4), st.floats(0.1, 0.9))


@settings(max_examples=40, deadline=None)
@given(params_strategy, st.floats(-2, 2), st.floats(0.05, 2))
def test_free_levy_relation_satisfies_r_transform(params, mr, mi):
    P = free_levy_polynomial(params)
    m = complex(mr, mi)
    z = _r_transform(params, -m) - 1 / m
    assert _relative_residual(P, z, m) < 1e-10


@settings(max_examples=20, deadline=None)
@given(params_strategy, st.floats(-2, 2), st.floats(0.05, 2))
def test_cfp_relation_satisfies_r_transform(params, mr, mi):
    p0 = FreeLevyParams(0.0, 0.0, params.rate, params.atoms, params.weights)
    P = cfp_polynomial(p0)
    m = complex(mr, mi)
    z = _r_transform(p0, -m) - 1 / m
    assert _relative_residual(P, z, m) < 1e-10


def test_degrees():
    p = FreeLevyParams(0.0, 0.4, 0.1, (2.0, 5.5), (0.75, 0.25))
    assert free_levy_polynomial(p).s == 4
    assert cfp_polynomial(FreeLevyParams(0.0, 0.0, 0.1, (2.0, 5.5), (0.75, 0.25))).s == 3
    assert model_polynomial(PenningtonBahri(0.5, 0.1)).s == 3


def test_parameter_validation():
    with pytest.raises(ParameterError):
        FreeLevyParams(0.0, 0.0, 1.0, (1.0, 1.0), (0.5, 0.5))
    with pytest.raises(ParameterError):
        FreeLevyParams(0.0, 0.0, 1.0, (1.0,), (0.9,))
    with pytest.raises(ParameterError):
        mp_polynomial(-1.0, 1.0)


# ========
# Samplers
# ========

def test_mp_sample_edge():
    A = sample_matrix(MatrixSampleSpec(2000, 7, MP(0.25)))
    ev = symmetric_eigenvalues(A).values
    assert ev.size == 2000
    assert abs(ev.max() - 2.25) < 0.06
    assert abs(ev.min() - 0.25) < 0.06


def test_cfp_zero_fraction():
    p = FreeLevyParams(0.0, 0.0, 0.1, (2.0, 5.5), (0.75, 0.25))
    ev = symmetric_eigenvalues(sample_matrix(MatrixSampleSpec(1000, 1, CFP(p)))).values
    assert numpy.sum(numpy.abs(ev) < 1e-8) == 900


def test_sampler_deterministic():
    spec = MatrixSampleSpec(64, 3, FreeLevy(FreeLevyParams(0.1, 0.3, 0.5, (1.0,), (1.0,))))
    assert numpy.array_equal(sample_matrix(spec), sample_matrix(spec))


def test_memory_cap():
    with pytest.raises(ResourceLimitError):
        sample_matrix(MatrixSampleSpec(1000, 0, MP(0.5)), memory_cap=1000)
    with pytest.raises(ResourceLimitError):
        symmetric_eigenvalues(numpy.eye(10), cap=5)


def test_subsample_principal():
    A = numpy.arange(25.0).reshape(5, 5)
    A = A + A.T
    B = subsample_principal(A, 3, 0)
    assert B.shape == (3, 3)
    assert numpy.array_equal(B, B.T)
    with pytest.raises(ParameterError):
        subsample_principal(A, 6, 0)


def test_eigen_rejects_asymmetric():
    with pytest.raises(ValidationError):
        symmetric_eigenvalues(numpy.array([[0.0, 1.0], [0.0, 0.0]]))


def test_matrix_roundtrip(tmp_path):
    A = numpy.random.default_rng(0).standard_normal((7, 7))
    write_matrix(tmp_path / "a.bin", A)
    assert numpy.array_equal(read_matrix(tmp_path / "a.bin"), A)
