"""
Evolution of derived spectral quantities under free decompression.

This module tracks quantities without rebuilding the density: spectral
edges, cusps (where a gap opens inside a bulk), atoms and moments. It also
provides an experimental finite-size correction of a left edge.

Edges are tracked in lifted coordinates ``(zeta, y)`` where they solve::

    G1 = P(zeta, y) = 0,     G2 = y^2 P_y - (tau - 1) P_zeta = 0,

and are pushed forward to ``x = zeta - (tau - 1) / y``. Cusps add the
``tau``-free condition::

    E3 = y (P_zz P_y^2 - 2 P_zy P_z P_y + P_yy P_z^2) + 2 P_z^2 P_y = 0,

after which ``tau* = 1 + y^2 P_y / P_zeta``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy
from scipy.integrate import solve_ivp

from .curve import BranchPoint, _newton_system, _sylvester_poly, atom_weight, \
    branch_points, find_atoms, polyeig, roots_in_m, stieltjes_eval
from .curvefit import BivariatePoly
from .decompress import TauSchedule, evolved_polynomial
from .errors import CorrectionUnavailableWarning, CuspProximityError, \
    DegenerateEdgeError, DomainError
from .spectra import MomentVector

__all__ = [
    "EdgeTrack",
    "AtomState",
    "CuspEvent",
    "evolve_edges",
    "find_cusps",
    "cusp_polynomial",
    "atom_weight_from_polynomial",
    "evolve_atom",
    "edge_velocity",
    "initial_edge_velocity",
    "support_rates",
    "evolve_moments",
    "finite_size_left_edge",
]


# =====
# Types
# =====

@dataclass(frozen=True)
class AtomState:
    """Point mass at a fixed location."""

    location: float
    weight: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise DomainError("atom weight must lie in [0, 1]")

    def at(self, tau: float) -> "AtomState":
        return AtomState(self.location, evolve_atom(self.weight, tau))


@dataclass(frozen=True)
class CuspEvent:
    """Cusp at ratio ``tau`` and location ``x`` with lifted point ``(zeta, y)``."""

    tau: float
    x: float
    zeta: float
    y: float

    def to_dict(self) -> dict:
        return {"tau": self.tau, "x": self.x, "zeta": self.zeta, "y": self.y}


@dataclass
class EdgeTrack:
    """
    Edge trajectories.

    Attributes
    ----------
    taus : numpy.ndarray, shape (T,)
    edges : numpy.ndarray, shape (T, 2 k_max)
        Row ``l`` holds the sorted surviving endpoints ``a_1, b_1, ...`` at
        ``taus[l]``, padded with NaN.
    bulk_count : numpy.ndarray of int, shape (T,)
    failed : numpy.ndarray of bool, shape (T, 2 k_max)
        Endpoints whose Newton solve failed at that frame (value is NaN).
    events : list of dict
        ``{"kind": "split" | "merge", "tau": ..., "x": ...}`` in order.
    """

    taus: numpy.ndarray
    edges: numpy.ndarray
    bulk_count: numpy.ndarray
    failed: numpy.ndarray
    events: list = field(default_factory=list)

    def intervals(self, k: int) -> list[tuple[float, float]]:
        row = self.edges[k]
        row = row[numpy.isfinite(row)]
        return [(float(row[2 * i]), float(row[2 * i + 1])) for i in range(row.size // 2)]

    def write_csv(self, path, n0: int | None = None) -> None:
        kmax = self.edges.shape[1] // 2
        head = ["tau", "n_equivalent"]
        for j in range(1, kmax + 1):
            head += [f"a{j}", f"b{j}"]
        head.append("bulk_count")
        lines = [",".join(head)]
        for t, row, bc in zip(self.taus, self.edges, self.bulk_count):
            ne = "" if n0 is None else str(int(round(n0 * t)))
            cells = ["" if not numpy.isfinite(v) else f"{v:.17g}" for v in row]
            lines.append(",".join([f"{t:.17g}", ne] + cells + [str(int(bc))]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ==============
# Lifted systems
# ==============

class _EdgeSystem:
    """Derivatives of ``P`` needed by the edge and cusp systems."""

    def __init__(self, P: BivariatePoly):
        self.P = P
        self.Pz = P.deriv(dz=1)
        self.Py = P.deriv(dm=1)
        self.Pzz = P.deriv(dz=2)
        self.Pzy = P.deriv(dz=1, dm=1)
        self.Pyy = P.deriv(dm=2)

    def G(self, zeta, y, tau):
        return numpy.array([self.P(zeta, y),
                            y * y * self.Py(zeta, y) - (tau - 1.0) * self.Pz(zeta, y)])

    def J(self, zeta, y, tau):
        pz, py = self.Pz(zeta, y), self.Py(zeta, y)
        g2z = y * y * self.Pzy(zeta, y) - (tau - 1.0) * self.Pzz(zeta, y)
        g2y = 2.0 * y * py + y * y * self.Pyy(zeta, y) - (tau - 1.0) * self.Pzy(zeta, y)
        return numpy.array([[pz, py], [g2z, g2y]])

    def velocity(self, zeta, y, tau):
        """``(dzeta/dt, dy/dt, dx/dt)`` with ``t = log tau``."""
        J = self.J(zeta, y, tau)
        scale = numpy.abs(J).max()
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if scale == 0 or abs(det) <= 1e-12 * scale * scale:
            raise CuspProximityError("edge Jacobian is singular (cusp nearby)")
        rhs = numpy.array([0.0, tau * self.Pz(zeta, y)])
        dzeta, dy = numpy.linalg.solve(J, rhs)
        dx = dzeta - tau / y + (tau - 1.0) * dy / y ** 2
        return dzeta, dy, dx

    def solve(self, zeta, y, tau, tol=1e-13, maxit=40):
        def F(v):
            return self.G(v[0], v[1], tau)

        def Jf(v):
            return self.J(v[0], v[1], tau)

        v, ok = _newton_system(F, Jf, [zeta, y], tol=tol, maxit=maxit)
        return complex(v[0]), complex(v[1]), bool(ok and numpy.all(numpy.isfinite(v)))


def cusp_polynomial(P: BivariatePoly) -> BivariatePoly:
    """The ``tau``-free cusp condition ``E3(zeta, y)`` as a polynomial."""
    Pz, Py = P.deriv(dz=1), P.deriv(dm=1)
    Pzz, Pzy, Pyy = P.deriv(dz=2), P.deriv(dz=1, dm=1), P.deriv(dm=2)
    y = BivariatePoly.monomial(0, 1)
    inner = Pzz * Py * Py - Pzy * Pz * Py * 2.0 + Pyy * Pz * Pz
    return y * inner + Pz * Pz * Py * 2.0


# =====
# Edges
# =====

def _lift_edge(sysm: _EdgeSystem, x: float, m: float, tau: float):
    y = tau * m
    zeta = x + (tau - 1.0) / y
    return sysm.solve(zeta, y, tau)


def _width(P: BivariatePoly) -> float:
    edges = branch_points(P).edges()
    xs = [e.z.real for e in edges] + [x for x, _ in find_atoms(P)]
    w = max(xs) - min(xs) if len(xs) > 1 else 1.0
    return w if w > 0 else 1.0


def _edges_of(P: BivariatePoly) -> list[BranchPoint]:
    """Physical edges ordered left to right, kept only in left/right pairs."""
    out = []
    pending = None
    for e in branch_points(P).edges():
        if e.side == "left":
            pending = e
        elif e.side == "right" and pending is not None:
            out.extend([pending, e])
            pending = None
    return out


def evolve_edges(P: BivariatePoly, schedule: TauSchedule,
                 initial_support: Sequence[tuple[float, float]] | None = None,
                 detect_births: bool = True, max_halvings: int = 12,
                 eps_real: float = 1e-6) -> EdgeTrack:
    """
    Track spectral edges along a schedule.

    Each endpoint is predicted with the edge velocity and corrected by
    Newton on ``(G1, G2)``; failing steps are subdivided. Pushforwards with
    ``|Im x| >= eps_real * width`` are rejected. Adjacent bulks whose
    endpoints cross (``b_j > a_{j+1}``) are merged and the pair is dropped.
    When ``detect_births`` is set, edges of the evolved relation at every
    frame that match no tracked edge and lie inside a bulk open a new gap.

    Parameters
    ----------
    initial_support : sequence of (a, b), optional
        Approximate bulk intervals at ``tau = 1``; endpoints are refined by
        Newton on ``P = P_m = 0``. Default: the physical edges of ``P``.
    """
    sysm = _EdgeSystem(P)
    width = _width(P)
    taus = numpy.asarray(schedule.ratios)
    tol_real = eps_real * width

    if initial_support is None:
        pts = [(e.z.real, e.m.real) for e in _edges_of(P)]
    else:
        ends = [v for ab in initial_support for v in ab]
        probe = stieltjes_eval(P, numpy.asarray(ends) + 1e-3j * width)
        pts = []
        for x, mv in zip(ends, probe):
            z, mm, ok = sysm.solve(x, mv.real, 1.0)
            pts.append((z.real, mm.real))
    # Each state: [zeta, y]
    states = [[complex(x), complex(m)] for x, m in pts]
    xs = [x for x, _ in pts]
    rows = [list(xs)]
    fails = [[False] * len(xs)]
    events = []

    for k in range(1, taus.size):
        t0, t1 = taus[k - 1], taus[k]
        new_states, new_x, new_fail = [], [], []
        for (zeta, y) in states:
            ok_all, ts = True, t0
            h = t1 - t0
            halv = 0
            while ts < t1:
                tn = min(ts + h, t1)
                try:
                    dz_, dy_, _ = sysm.velocity(zeta, y, ts)
                    dt = math.log(tn / ts)
                    zp, yp = zeta + dz_ * dt, y + dy_ * dt
                except CuspProximityError:
                    zp, yp = zeta, y
                zc, yc, ok = sysm.solve(zp, yp, tn)
                xc = zc - (tn - 1.0) / yc if ok else numpy.nan
                good = ok and abs(xc.imag) < tol_real and abs(yc) > 1e-12
                if good:
                    zeta, y, ts = complex(zc.real, 0.0), complex(yc.real, 0.0), tn
                    h = min(2 * h, t1 - t0)
                else:
                    h *= 0.5
                    halv += 1
                    if halv > max_halvings:
                        ok_all = False
                        break
            if ok_all:
                new_states.append([zeta, y])
                new_x.append((zeta - (t1 - 1.0) / y).real)
                new_fail.append(False)
            else:
                new_states.append([zeta, y])
                new_x.append(numpy.nan)
                new_fail.append(True)

        # Merge detection on the finite endpoints.
        order = [i for i in range(len(new_x))]
        keep = [True] * len(new_x)
        j = 1
        while j + 1 < len(new_x):
            b, a = new_x[j], new_x[j + 1]
            if numpy.isfinite(a) and numpy.isfinite(b) and b > a:
                keep[j] = keep[j + 1] = False
                events.append({"kind": "merge", "tau": float(t1), "x": float(0.5 * (a + b))})
            j += 2
        states = [s for s, kk in zip(new_states, keep) if kk]
        new_fail = [f for f, kk in zip(new_fail, keep) if kk]
        new_x = [x for x, kk in zip(new_x, keep) if kk]
        del order

        if detect_births:
            Q = evolved_polynomial(P, t1)
            known = numpy.array([x for x in new_x if numpy.isfinite(x)])
            cand = [e for e in _edges_of(Q)
                    if known.size == 0 or numpy.min(numpy.abs(known - e.z.real)) > 1e-4 * width]
            # New edges come in (right, left) pairs inside an existing bulk.
            cand.sort(key=lambda e: e.z.real)
            i = 0
            while i + 1 < len(cand):
                r, l = cand[i], cand[i + 1]
                if r.side == "right" and l.side == "left":
                    inside = None
                    for q in range(0, len(new_x) - 1, 2):
                        if new_x[q] < r.z.real and l.z.real < new_x[q + 1]:
                            inside = q
                    if inside is not None:
                        lifted = [_lift_edge(sysm, e.z.real, e.m.real, t1) for e in (r, l)]
                        if all(ok for _, _, ok in lifted):
                            pos = inside + 1
                            for off, (zc, yc, _) in enumerate(lifted):
                                states.insert(pos + off, [complex(zc.real), complex(yc.real)])
                                new_x.insert(pos + off, (zc - (t1 - 1.0) / yc).real)
                                new_fail.insert(pos + off, False)
                            events.append({"kind": "split", "tau": float(t1),
                                           "x": float(0.5 * (r.z.real + l.z.real))})
                            i += 2
                            continue
                i += 1
        rows.append(list(new_x))
        fails.append(list(new_fail))

    kmax2 = max(len(r) for r in rows)
    edges = numpy.full((taus.size, kmax2), numpy.nan)
    failed = numpy.zeros((taus.size, kmax2), dtype=bool)
    counts = numpy.zeros(taus.size, dtype=int)
    for k, (r, f) in enumerate(zip(rows, fails)):
        edges[k, : len(r)] = r
        failed[k, : len(f)] = f
        counts[k] = len(r) // 2
    return EdgeTrack(taus, edges, counts, failed, events)


def edge_velocity(P: BivariatePoly, point, tau: float) -> float:
    """
    Edge velocity ``dx/dt`` (``t = log tau``) at a lifted critical point.

    Parameters
    ----------
    point : CurvePoint or (zeta, y)
        Solution of ``G1 = G2 = 0`` at ``tau``.

    Raises
    ------
    CuspProximityError
        The 2x2 Jacobian is singular.
    """
    zeta, y = (point.zeta, point.y) if hasattr(point, "zeta") else point
    _, _, dx = _EdgeSystem(P).velocity(complex(zeta), complex(y), float(tau))
    return float(numpy.real(dx))


def initial_edge_velocity(hilbert_value: float) -> float:
    """
    Edge velocity at ``t = 0`` from the Hilbert transform at the edge, ``1 / (pi H)``.

    Raises
    ------
    DegenerateEdgeError
        ``H = 0``.
    """
    H = float(hilbert_value)
    if H == 0:
        raise DegenerateEdgeError("the Hilbert transform vanishes at this edge")
    return 1.0 / (math.pi * H)


def support_rates(P: BivariatePoly) -> dict:
    """
    Initial rates of every edge, bulk length and gap length.

    The Hilbert transform at an edge equals ``-m*/pi`` where ``m*`` is the
    branch-point value there. Gap signs are reported, not asserted.
    """
    edges = _edges_of(P)
    v = [initial_edge_velocity(-e.m.real / math.pi) for e in edges]
    x = [e.z.real for e in edges]
    bulks = [v[2 * i + 1] - v[2 * i] for i in range(len(v) // 2)]
    gaps = [v[2 * i + 2] - v[2 * i + 1] for i in range(len(v) // 2 - 1)]
    return {"edges": x, "edge_rates": v, "bulk_rates": bulks, "gap_rates": gaps,
            "support_rate": float(sum(bulks))}


# =====
# Cusps
# =====

def find_cusps(P: BivariatePoly, tau_range: tuple[float, float],
               seeds: Sequence[tuple[complex, complex, float]] | None = None,
               width: float | None = None) -> list[CuspEvent]:
    """
    Cusp events with ``tau*`` inside ``tau_range``.

    Real solutions of ``P = E3 = 0`` come from the resultant in ``y``
    (eigenvalues of the Sylvester matrix polynomial in ``zeta``) and are
    polished by Newton; ``tau*`` follows from ``G2 = 0``. An event is kept
    when the triple root of the evolved relation at ``(x*, tau*)`` continues
    the physical branch. Optional ``seeds`` ``(zeta, y, tau)`` are also
    polished by Newton on the three-equation system.

    Returns an empty list when nothing converges.
    """
    lo, hi = map(float, tau_range)
    E3 = cusp_polynomial(P)
    sysm = _EdgeSystem(P)
    E3z, E3y = E3.deriv(dz=1), E3.deriv(dm=1)
    width = _width(P) if width is None else float(width)
    cands = []
    if P.s >= 1 and E3.s >= 1 and numpy.any(E3.coeffs):
        for zeta in polyeig(_sylvester_poly(P, E3)):
            if not numpy.isfinite(zeta) or abs(zeta.imag) > 1e-6 * (1 + abs(zeta)):
                continue
            roots = roots_in_m(P, zeta).roots
            if roots.size == 0:
                continue
            y = roots[int(numpy.argmin(numpy.abs(E3(zeta, roots))
                                       / (1.0 + numpy.abs(roots)) ** E3.s))]

            def F(v):
                return numpy.array([P(v[0], v[1]), E3(v[0], v[1])])

            def J(v):
                return numpy.array([[sysm.Pz(v[0], v[1]), sysm.Py(v[0], v[1])],
                                    [E3z(v[0], v[1]), E3y(v[0], v[1])]])

            v, ok = _newton_system(F, J, [zeta, y])
            if ok:
                cands.append((complex(v[0]), complex(v[1])))
    for seed in seeds or ():
        z0, y0, t0 = seed

        def F3(v):
            return numpy.array([P(v[0], v[1]),
                                v[1] ** 2 * sysm.Py(v[0], v[1]) - (v[2] - 1) * sysm.Pz(v[0], v[1]),
                                E3(v[0], v[1])])

        def J3(v):
            Jg = sysm.J(v[0], v[1], v[2])
            return numpy.array([[Jg[0, 0], Jg[0, 1], 0.0],
                                [Jg[1, 0], Jg[1, 1], -sysm.Pz(v[0], v[1])],
                                [E3z(v[0], v[1]), E3y(v[0], v[1]), 0.0]])

        v, ok = _newton_system(F3, J3, [z0, y0, t0])
        if ok:
            cands.append((complex(v[0]), complex(v[1])))

    events: list[CuspEvent] = []
    for zeta, y in cands:
        if abs(zeta.imag) > 1e-8 * (1 + abs(zeta)) or abs(y.imag) > 1e-8 * (1 + abs(y)):
            continue
        zeta, y = zeta.real, y.real
        pz = sysm.Pz(zeta, y)
        if abs(y) < 1e-12 or abs(pz) <= 1e-12 * (1 + abs(sysm.Py(zeta, y))):
            continue
        tau = 1.0 + y * y * sysm.Py(zeta, y) / pz
        if not lo < tau < hi:
            continue
        x = zeta - (tau - 1.0) / y
        if any(abs(e.tau - tau) < 1e-8 * tau and abs(e.x - x) < 1e-8 * (1 + abs(x))
               for e in events):
            continue
        if _cusp_is_physical(P, x, y / tau, tau, width):
            events.append(CuspEvent(float(tau), float(x), float(zeta), float(y)))
    events.sort(key=lambda e: e.tau)
    return events


def _cusp_is_physical(P, x, m_c, tau, width) -> bool:
    Q = evolved_polynomial(P, tau)
    delta = 1e-6 * width
    try:
        m_phys = complex(stieltjes_eval(Q, numpy.array([x + 1j * delta]))[0])
    except Exception:
        return False
    roots = roots_in_m(Q, x).roots
    dist = numpy.sort(numpy.abs(roots - m_c))
    thresh = 0.2 * (abs(m_c) + 1.0 / width)
    if dist.size > 3:
        thresh = min(thresh, 0.5 * float(dist[3]))
    return abs(m_phys - m_c) < thresh


# =====
# Atoms
# =====

def atom_weight_from_polynomial(P: BivariatePoly, x0: float) -> float | None:
    """
    Residue weight at a root ``x0`` of the leading coefficient.

    Returns None when the weight lies outside ``[-1e-6, 1 + 1e-6]`` (or
    ``a_s(x0)`` does not vanish); physical weights are clipped to ``[0, 1]``.

    Raises
    ------
    HigherOrderRootError
        ``a_s'(x0) = 0``.
    """
    w = atom_weight(P, float(x0))
    if w is None or not -1e-6 <= w <= 1.0 + 1e-6:
        return None
    return min(max(w, 0.0), 1.0)


def evolve_atom(w0: float, tau: float) -> float:
    """Atom weight after decompression by ``tau``: ``1 - (1 - w0) / tau``."""
    return 1.0 - (1.0 - w0) / tau


# =======
# Moments
# =======

def evolve_moments(initial: MomentVector, tau: float) -> MomentVector:
    """
    Moments after decompression by ``tau``.

    ``mu_n(tau) = sum_k kappa[n, k] tau^k`` with ``kappa`` built from the
    initial moments by a triangular recurrence.
    """
    mu = numpy.asarray(initial.entries, dtype=float)
    N = mu.size - 1
    kappa = numpy.zeros((N + 1, N + 1))
    if N >= 1:
        kappa[1, 0] = mu[1]
    for n in range(2, N + 1):
        for k in range(n - 1):
            acc = 0.0
            for i in range(1, n):
                for j in range(k + 1):
                    acc += kappa[i, j] * kappa[n - i, k - j]
            kappa[n, k] = (0.5 * k + 1.0) / (n - k - 1) * acc
        kappa[n, n - 1] = mu[n] - kappa[n, : n - 1].sum()
    out = numpy.ones(N + 1)
    powers = float(tau) ** numpy.arange(N + 1)
    for n in range(1, N + 1):
        out[n] = float(numpy.dot(kappa[n, :n], powers[:n]))
    return MomentVector(out)


# ===================
# Finite-size effects
# ===================

def finite_size_left_edge(P: BivariatePoly, n: int, tau: float, uncorrected_edge: float,
                          window: float = 64.0) -> float:
    """
    Experimental finite-size correction of a left spectral edge.

    The evolved relation ``Q`` is expanded to second order in ``m`` about
    the edge value ``m*`` and scaled so the quadratic coefficient at the
    edge is one, giving ``P2``. The Riccati equation ``m' = -n P2(z, m)`` is
    integrated from the gap towards the bulk, starting on the root of
    ``P2`` that attracts the flow (it merges with the physical root at the
    edge). The first pole of the solution is returned as the corrected
    edge. Its distance from the edge scales like ``n**(-2/3)``.

    Parameters
    ----------
    n : int
        Matrix size at ratio ``tau``.
    uncorrected_edge : float
        Macroscopic left edge of the law at ``tau`` (e.g. from
        :func:`evolve_edges`).
    window : float
        Search window in units of the local edge scale
        ``a_n = (n^2 |P_z / A|)^(-1/3)``.

    Warns
    -----
    CorrectionUnavailableWarning
        No pole inside the window; the uncorrected edge is returned.
    """
    Q = evolved_polynomial(P, tau)
    pts = [b for b in branch_points(Q) if b.tag == "physical-edge"]
    if not pts:
        warnings.warn("no physical edge found on the evolved curve", CorrectionUnavailableWarning)
        return float(uncorrected_edge)
    edge = min(pts, key=lambda b: abs(b.z.real - uncorrected_edge))
    zs, ms = edge.z.real, edge.m.real
    Qm, Qmm, Qz = Q.deriv(dm=1), Q.deriv(dm=2), Q.deriv(dz=1)
    A = 0.5 * Qmm(zs, ms)
    B = Qz(zs, ms)
    if A == 0 or B == 0:
        warnings.warn("degenerate edge expansion", CorrectionUnavailableWarning)
        return float(uncorrected_edge)

    # Taylor coefficients in dz = z - z* of P2 / A = p2 u^2 + p1 u + p0, with
    # u = m - m*; p0 and p1 vanish exactly at the branch point.
    def taylor(F):
        out, fact = [], 1.0
        for k in range(Q.d_z + 1):
            out.append(F.deriv(dz=k)(zs, ms) / (fact * A))
            fact *= k + 1
        return numpy.array(out, dtype=float)

    t0, t1, t2 = taylor(Q), taylor(Qm), 0.5 * taylor(Qmm)
    t0[0] = 0.0
    t1[0] = 0.0
    a_n = (float(n) ** 2 * abs(B / A)) ** (-1.0 / 3.0)
    b_n = 1.0 / (n * a_n)

    # Local variables z = z* + a_n xi, u = b_n U make the equation O(1):
    # dU/dxi = -(a_n / b_n) n P2 = -(n a_n)^2 P2.
    scale = (n * a_n) ** 2

    def coeffs(xi):
        dz = a_n * xi
        return (numpy.polynomial.polynomial.polyval(dz, t0),
                numpy.polynomial.polynomial.polyval(dz, t1),
                numpy.polynomial.polynomial.polyval(dz, t2))

    # Keep the integration inside the gap: stop short of other singular points.
    others = [b.z.real for b in branch_points(Q) if b.z.imag == 0 and b.z.real < zs - 1e-12]
    lead = Q.coeffs[:, -1]
    nz = numpy.flatnonzero(lead)
    if nz.size and nz[-1] > 0:
        others += [r.real for r in numpy.roots(lead[: nz[-1] + 1][::-1])
                   if abs(r.imag) < 1e-12 and r.real < zs]
    gap = zs - max(others) if others else math.inf
    xi0 = -min(window, 0.5 * gap / a_n)

    p0, p1, p2 = coeffs(xi0)
    disc = p1 * p1 - 4 * p2 * p0
    if disc < 0:
        warnings.warn("no real equilibrium at the anchor", CorrectionUnavailableWarning)
        return float(uncorrected_edge)
    r = numpy.array([(-p1 + math.sqrt(disc)) / (2 * p2), (-p1 - math.sqrt(disc)) / (2 * p2)])
    # Attracting root for increasing z: d/du P2 > 0.
    U0 = float(r[numpy.argmax(2 * p2 * r + p1)]) / b_n
    big = 1e6

    def fU(xi, v):
        q0, q1, q2 = coeffs(xi)
        u = b_n * v[0]
        return [-scale * (q2 * u * u + q1 * u + q0)]

    def blow(xi, v):
        return abs(v[0]) - big

    blow.terminal = True
    sol = solve_ivp(fU, (xi0, window), [U0], method="LSODA", rtol=1e-10,
                    atol=1e-10, events=blow)
    if sol.status != 1:
        warnings.warn("no pole inside the search window", CorrectionUnavailableWarning)
        return float(uncorrected_edge)
    x1 = float(sol.t_events[0][0])
    W1 = 1.0 / float(sol.y_events[0][0][0])

    # Past the blow-up follow W = 1/U, whose sign change marks the pole.
    def fW(xi, v):
        q0, q1, q2 = coeffs(xi)
        W = v[0]
        return [scale * (q2 * b_n * b_n + q1 * b_n * W + q0 * W * W)]

    def cross(xi, v):
        return v[0]

    cross.terminal = True
    sol = solve_ivp(fW, (x1, window), [W1], method="LSODA", rtol=1e-12,
                    atol=1e-14, events=cross)
    if sol.status != 1:
        warnings.warn("no sign change inside the search window", CorrectionUnavailableWarning)
        return float(uncorrected_edge)
    return float(zs + a_n * sol.t_events[0][0])
