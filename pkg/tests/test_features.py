"""
Tests for edges, cusps, atoms, moments and the finite-size correction.
"""

from __future__ import annotations

import math
import warnings

import numpy
import pytest
from hypothesis import given, settings, strategies as st

from fdpm.curve import branch_points, moments_from_polynomial
from fdpm.decompress import TauSchedule
from fdpm.ensembles import FreeLevyParams, cfp_polynomial, free_levy_polynomial, \
    mp_polynomial, semicircle_polynomial
from fdpm.errors import CorrectionUnavailableWarning, DegenerateEdgeError
from fdpm.features import (AtomState, atom_weight_from_polynomial, cusp_polynomial,
                           edge_velocity, evolve_atom, evolve_edges, evolve_moments,
                           find_cusps, finite_size_left_edge, initial_edge_velocity,
                           support_rates)
from fdpm.spectra import MomentVector

CFP_PARAMS = FreeLevyParams(0.0, 0.0, 0.1, (2.0, 5.5), (0.75, 0.25))


def mp_edges(lam):
    return (1 - math.sqrt(lam)) ** 2, (1 + math.sqrt(lam)) ** 2


# =====
# Edges
# =====

def test_mp_edges_track():
    tr = evolve_edges(mp_polynomial(0.1, 1.0), TauSchedule.geometric(2.0))
    for tau, row in zip(tr.taus, tr.edges):
        numpy.testing.assert_allclose(row[:2], mp_edges(0.1 * tau), atol=1e-6)
    assert numpy.all(tr.bulk_count == 1)
    numpy.testing.assert_allclose(tr.edges[-1, :2], [0.30557, 2.09443], atol=1e-5)


def test_semicircle_edges():
    tr = evolve_edges(semicircle_polynomial(1.0), TauSchedule.geometric(4.0))
    numpy.testing.assert_allclose(tr.edges[-1, :2], [-4.0, 4.0], atol=1e-6)


def test_cfp_split_and_cusp():
    P = cfp_polynomial(FreeLevyParams(0.0, 0.0, 0.6, (2.0, 5.5), (0.75, 0.25)))
    sched = TauSchedule.geometric(6.0, 2 ** 0.25)
    tr = evolve_edges(P, sched)
    assert tr.bulk_count[0] == 1 and tr.bulk_count[-1] == 2
    changes = numpy.flatnonzero(numpy.diff(tr.bulk_count))
    assert len(changes) == 1
    cusps = find_cusps(P, (1.0, 6.0))
    assert len(cusps) == 1
    tau_star = cusps[0].tau
    assert 1 < tau_star < 6
    # The count changes at the first frame past the cusp.
    assert tr.taus[changes[0]] <= tau_star <= tr.taus[changes[0] + 1] * 1.0001


def test_mp_has_no_cusps():
    assert find_cusps(mp_polynomial(0.25, 1.0), (1.0, 8.0)) == []


def test_edge_csv(tmp_path):
    tr = evolve_edges(mp_polynomial(0.25, 1.0), TauSchedule((1.0, 2.0)))
    tr.write_csv(tmp_path / "e.csv", 100)
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "tau,n_equivalent,a1,b1,bulk_count"
    row = lines[2].split(",")
    assert row[1] == "200"
    assert float(row[2]) == tr.edges[1, 0]


def test_cusp_point_solves_system():
    P = cfp_polynomial(FreeLevyParams(0.0, 0.0, 0.6, (2.0, 5.5), (0.75, 0.25)))
    E = cusp_polynomial(P)
    (c,) = find_cusps(P, (1.0, 6.0))
    zeta, y = complex(c.zeta), complex(c.y)
    scale = numpy.abs(P.coeffs).sum() * (1 + abs(zeta)) * (1 + abs(y)) ** P.s
    assert abs(P(zeta, y)) < 1e-9 * scale
    escale = numpy.abs(E.coeffs).sum() * (1 + abs(zeta)) ** E.d_z * (1 + abs(y)) ** E.s
    assert abs(E(zeta, y)) < 1e-9 * escale
    # tau* = 1 + y^2 P_y / P_zeta.
    t = 1 + y * y * P.deriv(dm=1)(zeta, y) / P.deriv(dz=1)(zeta, y)
    assert abs(t - c.tau) < 1e-8 * c.tau


# ==========
# Velocities
# ==========

def _edge_point(P, which):
    bp = sorted(branch_points(P).edges(), key=lambda b: b.z.real)
    b = bp[which]
    return b.z, b.m


def test_semicircle_velocity():
    P = semicircle_polynomial(1.0)
    assert abs(edge_velocity(P, _edge_point(P, -1), 1.0) - 1.0) < 1e-8
    assert abs(initial_edge_velocity(1 / math.pi) - 1.0) < 1e-15


def test_mp_velocity():
    P = mp_polynomial(0.25, 1.0)
    assert abs(edge_velocity(P, _edge_point(P, -1), 1.0) - 0.75) < 1e-8


def test_initial_velocity_contract():
    assert initial_edge_velocity(-0.3) < 0
    with pytest.raises(DegenerateEdgeError):
        initial_edge_velocity(0.0)


@pytest.mark.parametrize("P", [
    mp_polynomial(0.3, 1.0), semicircle_polynomial(2.0), cfp_polynomial(CFP_PARAMS),
    free_levy_polynomial(FreeLevyParams(0.0, 0.4, 0.1, (2.0, 5.5), (0.75, 0.25)))])
def test_support_grows_initially(P):
    rates = support_rates(P)
    assert rates["support_rate"] > 0
    # Sign contract v = 1/(pi H) with H = -m*/pi at each edge.
    for e, v in zip(sorted(branch_points(P).edges(), key=lambda b: b.z.real),
                    rates["edge_rates"]):
        assert numpy.sign(v) == numpy.sign(-e.m.real)
    # The right edge always moves right.
    assert rates["edge_rates"][-1] > 0


# =====
# Atoms
# =====

def test_atom_weights():
    assert abs(atom_weight_from_polynomial(cfp_polynomial(CFP_PARAMS), 0.0) - 0.9) < 1e-12
    assert abs(atom_weight_from_polynomial(mp_polynomial(2.0, 1.0), 0.0) - 0.5) < 1e-12
    assert atom_weight_from_polynomial(mp_polynomial(0.25, 1.0), 0.0) is None


def test_evolve_atom_table():
    assert evolve_atom(0.8, 2.0) == pytest.approx(0.9, abs=1e-15)
    assert evolve_atom(0.8, 16.0) == pytest.approx(0.9875, abs=1e-15)
    assert evolve_atom(1.0, 7.3) == 1.0
    assert AtomState(0.0, 0.8).at(2.0).weight == pytest.approx(0.9, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(1, 100), st.floats(1, 100))
def test_atom_semigroup(w, t1, t2):
    assert abs(evolve_atom(evolve_atom(w, t1), t2) - evolve_atom(w, t1 * t2)) < 1e-12


# =======
# Moments
# =======

@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(1.0, 10.0))
def test_mp_moment_evolution(lam, tau):
    mu = evolve_moments(moments_from_polynomial(mp_polynomial(lam, 1.0), 3), tau).entries
    assert abs(mu[1] - 1.0) < 1e-12
    assert abs(mu[2] - (1 + lam * tau)) < 1e-12 * (1 + lam * tau)
    lt = lam * tau
    assert abs(mu[3] - (1 + 3 * lt + lt ** 2)) < 1e-11 * (1 + lt) ** 2


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 4.0), st.floats(1.0, 10.0))
def test_semicircle_moment_evolution(v, tau):
    mu = evolve_moments(MomentVector([1.0, 0.0, v, 0.0, 2 * v * v]), tau).entries
    assert abs(mu[2] - v * tau) < 1e-12 * v * tau
    assert abs(mu[4] - 2 * (v * tau) ** 2) < 1e-11 * (v * tau) ** 2


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=5), st.floats(1, 5), st.floats(1, 5))
def test_moment_semigroup_and_mean(raw, t1, t2):
    mu0 = MomentVector([1.0] + raw)
    a = evolve_moments(evolve_moments(mu0, t1), t2).entries
    b = evolve_moments(mu0, t1 * t2).entries
    assert abs(a[1] - raw[0]) < 1e-12
    numpy.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


# ===========
# Finite size
# ===========

def test_finite_size_limit():
    P = mp_polynomial(0.25, 1.0)
    e = mp_edges(0.25)[0]
    assert abs(finite_size_left_edge(P, 10 ** 12, 1.0, e) - e) <= 1e-6


def test_finite_size_scaling():
    P = mp_polynomial(0.25, 1.0)
    e = mp_edges(0.25)[0]
    ns = 2 ** numpy.arange(8, 17)
    d = [abs(finite_size_left_edge(P, int(n), 1.0, e) - e) for n in ns]
    slope = numpy.polyfit(numpy.log(ns), numpy.log(d), 1)[0]
    assert abs(slope + 2 / 3) <= 0.1


def test_finite_size_positive_near_hard_edge():
    # As lam -> 1 the macroscopic left edge tends to 0; the corrected edge
    # remains strictly positive.
    for lam in (0.9, 0.98, 0.995):
        P = mp_polynomial(lam, 1.0)
        e = mp_edges(lam)[0]
        assert finite_size_left_edge(P, 1024, 1.0, e) > e > 0


def test_finite_size_unavailable_falls_back():
    P = mp_polynomial(0.25, 1.0)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        out = finite_size_left_edge(P, 256, 1.0, 0.25, window=1e-9)
    assert out == 0.25
    assert any(issubclass(w.category, CorrectionUnavailableWarning) for w in rec)
