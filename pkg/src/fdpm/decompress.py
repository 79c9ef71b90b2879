"""
Free decompression of an algebraic spectral law.

Two routes are provided. :func:`evolved_polynomial` transforms the
coefficients directly and is used for validation. The density path,
:func:`decompress_stieltjes`, follows each query ``z`` along the
characteristic in lifted coordinates ``(zeta, y)``::

    F1 = P(zeta, y) = 0,     F2 = zeta - (tau - 1) / y - z = 0,

so that ``m_tau(z) = y / tau``. Each step is an explicit Euler prediction
along the tangent of the system in ``tau`` followed by Newton correction.
A step is kept only when the corrected ``y`` is much closer to its
prediction than to any other ``y``-root at the same ``(z, tau)``, which
keeps the path on one sheet.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy
from scipy.special import comb

from .curve import CurvePoint, DensityGrid, batch_roots, branch_points, \
    density_from_curve, default_ladder, find_atoms, stieltjes_eval
from .curvefit import BivariatePoly
from .errors import ConfigError, DomainError, StepError, StiffnessError

__all__ = [
    "TauSchedule",
    "DecompressionState",
    "DecompressionResult",
    "evolved_polynomial",
    "decompress_stieltjes",
    "decompress_density",
    "support_at",
    "write_flow",
    "read_flow",
]

MAX_DEPTH = 30
Y_GUARD = 1e-10


# =====
# Types
# =====

@dataclass(frozen=True)
class TauSchedule:
    """Strictly increasing decompression ratios starting at 1."""

    ratios: tuple

    def __post_init__(self):
        r = tuple(float(t) for t in self.ratios)
        if not r or r[0] != 1.0:
            raise ConfigError("a schedule must start at tau = 1")
        if any(b <= a for a, b in zip(r[:-1], r[1:])):
            raise ConfigError("a schedule must be strictly increasing")
        object.__setattr__(self, "ratios", r)

    def __len__(self):
        return len(self.ratios)

    def __iter__(self):
        return iter(self.ratios)

    @property
    def final(self) -> float:
        return self.ratios[-1]

    @classmethod
    def geometric(cls, tau_max: float, ratio: float = 2.0 ** 0.125) -> "TauSchedule":
        """Frames ``1, r, r^2, ...`` ending exactly at ``tau_max``."""
        if tau_max < 1:
            raise DomainError("tau_max must be at least 1")
        if tau_max == 1:
            return cls((1.0,))
        k = max(1, math.ceil(math.log(tau_max) / math.log(ratio) - 1e-9))
        taus = numpy.exp(numpy.linspace(0.0, math.log(tau_max), k + 1))
        taus[0], taus[-1] = 1.0, float(tau_max)
        return cls(tuple(taus))


@dataclass
class DecompressionState:
    """Lifted points ``(zeta_j, y_j)`` for queries ``z_j`` at ratio ``tau``."""

    tau: float
    queries: numpy.ndarray
    zeta: numpy.ndarray
    y: numpy.ndarray

    @property
    def lifted(self) -> list[CurvePoint]:
        return [CurvePoint(complex(a), complex(b)) for a, b in zip(self.zeta, self.y)]

    def residuals(self, P: BivariatePoly) -> tuple[numpy.ndarray, numpy.ndarray]:
        """Relative curve residual and characteristic residual per query."""
        f1 = numpy.abs(P(self.zeta, self.y)) / numpy.maximum(
            BivariatePoly(numpy.abs(P.coeffs))(numpy.abs(self.zeta), numpy.abs(self.y)), 1e-300)
        f2 = numpy.abs(self.zeta - (self.tau - 1.0) / self.y - self.queries) \
            / (1.0 + numpy.abs(self.queries))
        return f1, f2


@dataclass
class DecompressionResult:
    """Values ``m_tau(z_j)`` for every stored ratio."""

    taus: numpy.ndarray
    values: numpy.ndarray
    state: DecompressionState


# ======================
# Coefficient evolution
# ======================

def _reduce(c: numpy.ndarray, tol: float = 1e-13) -> numpy.ndarray:
    c = numpy.where(numpy.abs(c) <= tol * numpy.max(numpy.abs(c)), 0.0, c)
    rows = numpy.flatnonzero(numpy.any(c != 0, axis=1))
    cols = numpy.flatnonzero(numpy.any(c != 0, axis=0))
    return c[rows[0]:, cols[0]:]


def evolved_polynomial(P: BivariatePoly, tau: float) -> BivariatePoly:
    """
    Relation satisfied by the decompressed Stieltjes transform ``m_tau``.

    Common monomial factors ``z^a m^b`` are divided out and the result is
    normalized.

    Raises
    ------
    DomainError
        ``tau < 1``.
    """
    tau = float(tau)
    if not tau >= 1.0:
        raise DomainError("decompression requires tau >= 1")
    if tau == 1.0:
        return P
    c = P.coeffs
    dz, s = P.d_z, P.s
    u = 1.0 - 1.0 / tau
    out = numpy.zeros((dz + 1, dz + s + 1))
    for p in range(dz + 1):
        for q in range(dz + s + 1):
            acc = 0.0
            for j in range(p, dz + 1):
                k = q - dz + j - p
                if 0 <= k <= s and c[j, k] != 0:
                    acc += c[j, k] * tau ** k * comb(j, p, exact=True) * u ** (j - p)
            out[p, q] = acc
    return BivariatePoly(_reduce(out)).normalized()


# =============
# Lifted system
# =============

def _lifted_y_coeffs_many(P: BivariatePoly, z: numpy.ndarray, tau: numpy.ndarray) -> numpy.ndarray:
    """
    Ascending coefficients of ``R(y) = y^{d_z} P(z + (tau - 1)/y, y)`` per query.

    Its roots are all lifted ``y`` values compatible with ``(z, tau)``; each
    query carries its own ratio.
    """
    c = P.coeffs
    dz, s = P.d_z, P.s
    out = numpy.zeros(z.shape + (s + dz + 1,), dtype=complex)
    t1 = numpy.asarray(tau, dtype=float) - 1.0
    for i in range(dz + 1):
        for k in range(i + 1):
            w = comb(i, k, exact=True) * t1 ** k * z ** (i - k)
            for j in range(s + 1):
                if c[i, j] != 0:
                    out[..., j + dz - k] += c[i, j] * w
    return out


class _Lifted:
    def __init__(self, P: BivariatePoly):
        self.P = P
        self.Pz = P.deriv(dz=1)
        self.Py = P.deriv(dm=1)
        self.absP = BivariatePoly(numpy.abs(P.coeffs))

    def tangent(self, zeta, y, tau):
        pz = self.Pz(zeta, y)
        py = self.Py(zeta, y)
        det = pz * (tau - 1.0) / y ** 2 - py
        return pz, py, det

    def newton(self, z, zeta, y, tau, tol=1e-12, maxit=50):
        zeta = zeta.copy()
        y = y.copy()
        t1 = numpy.broadcast_to(numpy.asarray(tau, dtype=float) - 1.0, z.shape)
        conv = numpy.zeros(z.shape, dtype=bool)
        for _ in range(maxit):
            act = ~conv
            if not act.any():
                break
            za, ya, qa, ta = zeta[act], y[act], z[act], t1[act]
            f1 = self.P(za, ya)
            f2 = za - ta / ya - qa
            a = self.Pz(za, ya)
            b = self.Py(za, ya)
            d = ta / ya ** 2
            det = a * d - b
            det = numpy.where(det == 0, 1e-300, det)
            dzeta = -(d * f1 - b * f2) / det
            dy = -(a * f2 - f1) / det
            zeta[act] = za + dzeta
            y[act] = ya + dy
            done = (numpy.abs(dy) <= tol * (1.0 + numpy.abs(ya + dy))) \
                & (numpy.abs(dzeta) <= tol * (1.0 + numpy.abs(za + dzeta)))
            idx = numpy.flatnonzero(act)
            conv[idx[done]] = True
        good = conv & numpy.isfinite(y) & numpy.isfinite(zeta) & (numpy.abs(y) > Y_GUARD)
        return zeta, y, good


def _advance(L: _Lifted, z, zeta, y, tau0, tau1, max_depth=MAX_DEPTH):
    """Move all queries from ``tau0`` to ``tau1`` with per-query adaptive substeps."""
    N = z.size
    t = numpy.full(N, float(tau0))
    H = float(tau1 - tau0)
    h = numpy.full(N, H)
    hmin = H * 0.5 ** max_depth
    zeta = zeta.copy()
    y = y.copy()
    active = numpy.ones(N, dtype=bool)
    while active.any():
        idx = numpy.flatnonzero(active)
        ta = t[idx]
        tb = numpy.minimum(ta + h[idx], tau1)
        tb = numpy.where(tau1 - tb <= 1e-14 * tau1, tau1, tb)
        za, ya, qa = zeta[idx], y[idx], z[idx]
        pz, py, det = L.tangent(za, ya, ta)
        scale = numpy.abs(pz) * numpy.abs(tb - 1.0) / numpy.abs(ya) ** 2 + numpy.abs(py)
        if numpy.any(numpy.abs(det) <= 1e-14 * scale):
            k = int(numpy.argmin(numpy.abs(det) / numpy.maximum(scale, 1e-300)))
            raise StiffnessError("singular tangent system (branch point crossing)",
                                 {"zeta": complex(za[k]), "y": complex(ya[k]),
                                  "tau": float(ta[k]), "z": complex(qa[k])})
        ydot = pz / (ya * det)
        zdot = -py / (ya * det)
        dt = tb - ta
        yp = ya + ydot * dt
        zp = za + zdot * dt
        # Newton at each query's own target ratio.
        zc, yc, ok = L.newton(qa, zp, yp, tb)
        roots = batch_roots(_lifted_y_coeffs_many(L.P, qa, tb))
        dist = numpy.sort(numpy.abs(roots - yc[:, None]), axis=1)
        other = dist[:, 1] if dist.shape[1] > 1 else numpy.full(idx.size, numpy.inf)
        # Sheet separation at the start of the step bounds how far y may move.
        start_roots = batch_roots(_lifted_y_coeffs_many(L.P, qa, ta))
        d0 = numpy.sort(numpy.abs(start_roots - ya[:, None]), axis=1)
        sep0 = d0[:, 1] if d0.shape[1] > 1 else numpy.full(idx.size, numpy.inf)
        acc = ok & (2.0 * numpy.abs(yc - yp) < other) \
            & (2.0 * numpy.abs(yc - ya) < sep0) & (yc.imag > 0)
        ai = idx[acc]
        zeta[ai] = zc[acc]
        y[ai] = yc[acc]
        t[ai] = tb[acc]
        h[ai] = numpy.minimum(h[ai] * 2.0, H)
        ri = idx[~acc]
        h[ri] *= 0.5
        if numpy.any(h[ri] < hmin):
            k = ri[numpy.argmin(h[ri])]
            raise StepError("decompression step failed at the finest substep",
                            {"zeta": complex(zeta[k]), "y": complex(y[k]),
                             "tau": float(t[k]), "z": complex(z[k])})
        active = t < tau1
    return zeta, y


def decompress_stieltjes(P: BivariatePoly, queries, schedule: TauSchedule,
                         initial=None) -> DecompressionResult:
    """
    Physical Stieltjes values of the decompressed law along a schedule.

    Parameters
    ----------
    P : BivariatePoly
        Relation at ``tau = 1``.
    queries : array_like of complex
        Upper half-plane query points ``z_j``.
    schedule : TauSchedule
    initial : array_like of complex, optional
        Physical values ``m(z_j)`` at ``tau = 1``; computed with
        :func:`fdpm.curve.stieltjes_eval` when omitted.

    Returns
    -------
    DecompressionResult
        ``values[l, j] = m_{tau_l}(z_j)``.

    Raises
    ------
    StiffnessError
        Singular tangent system; ``where`` carries ``(zeta, y, tau, z)``.
    StepError
        Newton or sheet check failed after the maximal number of substeps.
    """
    z = numpy.asarray(queries, dtype=complex).ravel()
    if numpy.any(z.imag <= 0):
        raise DomainError("queries must lie in the upper half-plane")
    m0 = stieltjes_eval(P, z) if initial is None else numpy.asarray(initial, dtype=complex).ravel()
    if m0.shape != z.shape:
        raise ConfigError("initial values must match the queries")
    taus = numpy.asarray(schedule.ratios)
    values = numpy.empty((taus.size, z.size), dtype=complex)
    values[0] = m0
    zeta = z.copy()
    y = m0.copy()
    L = _Lifted(P)
    for k in range(1, taus.size):
        zeta, y = _advance(L, z, zeta, y, taus[k - 1], taus[k])
        values[k] = y / taus[k]
    return DecompressionResult(taus, values, DecompressionState(float(taus[-1]), z, zeta, y))


# =======
# Density
# =======

def support_at(P: BivariatePoly, tau: float) -> list[tuple[float, float]]:
    """
    Bulk intervals of the decompressed law from the edges of the evolved relation.

    Candidate edges are the real branch points of the evolved relation; they
    are classified with Stieltjes values transported from ``tau = 1`` along
    the characteristics.
    """
    Q = evolved_polynomial(P, tau)
    if tau == 1.0:
        edges = branch_points(Q).edges()
    else:
        sched = TauSchedule.geometric(tau)
        edges = branch_points(
            Q, evaluator=lambda q: decompress_stieltjes(P, q, sched).values[-1]).edges()
    out = []
    left = None
    for e in edges:
        if e.side == "left":
            left = e.z.real
        elif e.side == "right" and left is not None:
            out.append((left, e.z.real))
            left = None
    return out


def decompress_density(P: BivariatePoly, lambdas, schedule: TauSchedule, delta_ladder=None,
                       q: int = 2, n_points: int = 1000, margin: float = 0.1,
                       subtract_atoms: bool = True) -> list[DensityGrid]:
    """
    Decompressed densities for every ratio of ``schedule``.

    Parameters
    ----------
    lambdas : array_like or None
        Shared grid. With ``None`` a union grid of ``n_points`` is built from
        the evolved edges at all ratios, and each frame is restricted to its
        own support widened by ``margin`` of its width on both sides.
    delta_ladder : array_like, optional
        Offsets; default :func:`fdpm.curve.default_ladder` of the width of the
        initial support (or of the grid).
    subtract_atoms : bool
        Remove atom kernels before extrapolation, with weights evolved by the
        fixed-location law; the atoms are recorded on every grid.
    """
    taus = numpy.asarray(schedule.ratios)
    atoms0 = find_atoms(P) if subtract_atoms else []
    frames = None
    if lambdas is None:
        supports = [support_at(P, t) for t in taus]
        if not supports[0]:
            raise ConfigError("could not determine the support; pass an explicit grid")
        los, his = [], []
        for sup in supports:
            if not sup:
                sup = supports[0]
            lo, hi = sup[0][0], sup[-1][1]
            w = hi - lo
            los.append(lo - margin * w)
            his.append(hi + margin * w)
        lam = numpy.linspace(min(los), max(his), n_points)
        frames = list(zip(los, his))
        width0 = supports[0][-1][1] - supports[0][0][0]
    else:
        lam = numpy.asarray(lambdas, dtype=float)
        width0 = float(lam[-1] - lam[0])
    ladder = default_ladder(width0) if delta_ladder is None \
        else numpy.asarray(delta_ladder, dtype=float)
    if ladder.size < q + 1:
        raise ConfigError(f"{ladder.size} offsets cannot support degree {q}")
    queries = (lam[None, :] + 1j * ladder[:, None]).ravel()
    res = decompress_stieltjes(P, queries, schedule)
    grids = []
    for k, t in enumerate(taus):
        vals = res.values[k].reshape(ladder.size, lam.size)
        atoms = [(x, 1.0 - (1.0 - w) / t) for x, w in atoms0]
        if frames is not None:
            sel = (lam >= frames[k][0]) & (lam <= frames[k][1])
        else:
            sel = numpy.ones(lam.size, dtype=bool)
        g = density_from_curve(P, lam[sel], ladder, q=q, subtract_atoms=subtract_atoms,
                               atoms=atoms, values=vals[:, sel])
        grids.append(g)
    return grids


# ==
# IO
# ==

def write_flow(directory, taus: Sequence[float], grids: Sequence[DensityGrid],
               n0: int | None = None) -> Path:
    """Write one CSV per frame and an ``index.json`` list of ``{tau, n_equivalent, file}``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    index = []
    for k, (t, g) in enumerate(zip(taus, grids)):
        name = f"density_{k:03d}.csv"
        g.write_csv(d / name)
        index.append({"tau": float(t),
                      "n_equivalent": None if n0 is None else int(round(n0 * t)),
                      "file": name,
                      "atoms": [[float(x), float(w)] for x, w in g.atoms]})
    path = d / "index.json"
    path.write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    return path


def read_flow(directory) -> tuple[list[dict], list[DensityGrid]]:
    d = Path(directory)
    index = json.loads((d / "index.json").read_text(encoding="utf-8"))
    grids = []
    for rec in index:
        g = DensityGrid.read_csv(d / rec["file"])
        g.atoms = [tuple(a) for a in rec.get("atoms", [])]
        grids.append(g)
    return index, grids
