"""
Operations on the spectral curve ``{(z, m) : P(z, m) = 0}``.

The physical branch is selected by anchoring far from the support (where
``m(z) ~ -1/z``) or at an empirical value, then following the sheet with a
tangent predictor and a damped Newton corrector. A step is accepted only if
the corrected root stays well inside its own basin, measured against the
distance to the nearest competing root; otherwise the step is halved.

Density recovery evaluates ``Im m(lambda + i delta) / pi`` on a ladder of
offsets and extrapolates to ``delta = 0`` with a low-degree Chebyshev fit,
which removes the Poisson floor left by a finite offset.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy
import numpy.polynomial.chebyshev as cheb
import scipy.linalg

from .curvefit import BivariatePoly
from .errors import AnchorError, BranchCollisionError, ConfigError, \
    DegenerateExpansionError, DegeneratePointError, DomainError, \
    NoStieltjesBranchError, StiffnessError
from .spectra import MomentVector

__all__ = [
    "CurvePoint",
    "MRoots",
    "DensityGrid",
    "BranchPoint",
    "BranchPointSet",
    "roots_in_m",
    "batch_roots",
    "anchor_physical",
    "continue_branch",
    "stieltjes_eval",
    "branch_points",
    "density_from_curve",
    "default_ladder",
    "find_atoms",
    "atom_weight",
    "theta0_candidates",
    "moments_from_polynomial",
    "polyeig",
    "curve_radius",
]

# Continuation policy.
ACCEPT_RATIO = 0.5
MAX_DEPTH = 40
NEWTON_TOL = 1e-12
NEWTON_MAXIT = 50
NEWTON_HALVINGS = 8

#: Offset refinements (factor 100 each) when classifying a real branch point.
EDGE_PROBE_LEVELS = 4

#: Relative size of the leading coefficient below which a degree drop is flagged.
DEGREE_DROP_TOL = 1e-14


# =====
# Types
# =====

@dataclass(frozen=True)
class CurvePoint:
    """A point ``(zeta, y)`` on the curve of the owning polynomial."""

    zeta: complex
    y: complex

    def residual(self, P: BivariatePoly) -> float:
        return float(abs(P(self.zeta, self.y)))


@dataclass(frozen=True)
class MRoots:
    """Roots of ``m -> P(z, m)`` and whether the degree dropped at ``z``."""

    roots: numpy.ndarray
    degree_drop: bool = False

    def __len__(self):
        return self.roots.size

    def __iter__(self):
        return iter(self.roots)


@dataclass
class DensityGrid:
    """
    Tabulated density.

    Attributes
    ----------
    lambdas : numpy.ndarray
        Ascending abscissae.
    rho : numpy.ndarray
        Nonnegative density values (continuous part only).
    delta_ladder : numpy.ndarray
        Imaginary offsets used.
    extrapolated : bool
        Whether the values are the ``delta -> 0`` extrapolation.
    atoms : list of (float, float)
        Point masses (location, weight) not represented in ``rho``.
    min_raw : float
        Most negative value before clamping (diagnostic).
    """

    lambdas: numpy.ndarray
    rho: numpy.ndarray
    delta_ladder: numpy.ndarray = field(default_factory=lambda: numpy.zeros(0))
    extrapolated: bool = False
    atoms: list = field(default_factory=list)
    min_raw: float = 0.0

    def mass(self) -> float:
        """Trapezoid integral of ``rho``."""
        return float(numpy.trapezoid(self.rho, self.lambdas)) \
            if hasattr(numpy, "trapezoid") else float(numpy.trapz(self.rho, self.lambdas))

    def total_mass(self) -> float:
        return self.mass() + sum(w for _, w in self.atoms)

    def moment(self, k: int) -> float:
        """``int x^k rho + sum w x^k`` by the trapezoid rule."""
        vals = self.lambdas ** k * self.rho
        cont = float(numpy.sum(0.5 * (vals[1:] + vals[:-1]) * numpy.diff(self.lambdas)))
        return cont + sum(w * x ** k for x, w in self.atoms)

    def write_csv(self, path) -> None:
        lines = ["lambda,rho"]
        lines.extend(f"{x:.17g},{r:.17g}" for x, r in zip(self.lambdas, self.rho))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def read_csv(cls, path) -> "DensityGrid":
        rows = Path(path).read_text(encoding="utf-8").strip().splitlines()
        if rows[0].strip() != "lambda,rho":
            raise ConfigError("density CSV must start with the header 'lambda,rho'")
        data = numpy.array([[float(v) for v in r.split(",")] for r in rows[1:]])
        return cls(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class BranchPoint:
    """
    Solution of ``P = dP/dm = 0``.

    ``tag`` is one of ``physical-edge``, ``non-physical``, ``complex`` or
    ``ambiguous``. For physical edges ``side`` is ``left`` (bulk to the
    right) or ``right`` (bulk to the left).
    """

    z: complex
    m: complex
    tag: str
    side: str | None = None


@dataclass
class BranchPointSet:
    points: list

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def edges(self) -> list[BranchPoint]:
        """Physical edges sorted by location."""
        return sorted((p for p in self.points if p.tag == "physical-edge"),
                      key=lambda p: p.z.real)

    def to_json(self) -> str:
        return json.dumps([{"z_re": p.z.real, "z_im": p.z.imag, "m_re": p.m.real,
                            "m_im": p.m.imag, "tag": p.tag} for p in self.points],
                          indent=2)


# ============
# Root finding
# ============

def batch_roots(acoeffs: numpy.ndarray) -> numpy.ndarray:
    """
    Roots of many univariate polynomials at once.

    Parameters
    ----------
    acoeffs : array, shape (N, d + 1)
        Ascending coefficients per row. A vanishing leading coefficient is
        replaced by a tiny value, which sends one root to a large modulus
        instead of failing.

    Returns
    -------
    numpy.ndarray, shape (N, d)
        Eigenvalues of the (balanced) companion matrices.
    """
    a = numpy.asarray(acoeffs, dtype=complex)
    N, d1 = a.shape
    d = d1 - 1
    if d < 1:
        return numpy.zeros((N, 0), dtype=complex)
    scale = numpy.max(numpy.abs(a), axis=1)
    scale = numpy.where(scale > 0, scale, 1.0)
    lead = a[:, -1]
    tiny = numpy.abs(lead) <= DEGREE_DROP_TOL * scale
    lead = numpy.where(tiny, DEGREE_DROP_TOL * scale, lead)
    C = numpy.zeros((N, d, d), dtype=complex)
    C[:, 0, :] = -a[:, d - 1::-1] / lead[:, None]
    if d > 1:
        C[:, numpy.arange(1, d), numpy.arange(d - 1)] = 1.0
    return numpy.linalg.eigvals(C)


def roots_in_m(P: BivariatePoly, z: complex) -> MRoots:
    """
    All roots of ``m -> P(z, m)``.

    Raises
    ------
    DegeneratePointError
        If every coefficient ``a_j(z)`` vanishes.
    """
    a = numpy.atleast_1d(P.a(complex(z)))
    scale = float(numpy.max(numpy.abs(a)))
    if scale == 0:
        raise DegeneratePointError(f"all coefficients vanish at z={z!r}")
    keep = numpy.flatnonzero(numpy.abs(a) > DEGREE_DROP_TOL * scale)
    top = int(keep[-1])
    drop = top < a.size - 1
    if top == 0:
        return MRoots(numpy.zeros(0, dtype=complex), drop)
    roots = numpy.roots(a[: top + 1][::-1])
    return MRoots(numpy.asarray(roots, dtype=complex), drop)


# ======
# Newton
# ======

@functools.lru_cache(maxsize=256)
def _derivs_cached(key: bytes, shape: tuple[int, int]):
    c = numpy.frombuffer(key, dtype=float).reshape(shape)
    P = BivariatePoly(c)
    return P.deriv(dz=1), P.deriv(dm=1), P.deriv(dm=2)


def _derivs(P: BivariatePoly):
    return _derivs_cached(P.coeffs.tobytes(), P.coeffs.shape)


def _term_scale(P: BivariatePoly, z, m):
    absP = BivariatePoly(numpy.abs(P.coeffs))
    return absP(numpy.abs(z), numpy.abs(m))


def _newton_m(P, z, m, tol=NEWTON_TOL, maxit=NEWTON_MAXIT, halvings=NEWTON_HALVINGS):
    """Damped Newton on ``P(z, m) = 0`` in ``m``, vectorized. Returns (m, converged)."""
    _, Pm, _ = _derivs(P)
    m = numpy.array(m, dtype=complex)
    z = numpy.asarray(z, dtype=complex)
    conv = numpy.zeros(m.shape, dtype=bool)
    f = P(z, m)
    for _ in range(maxit):
        act = ~conv
        if not act.any():
            break
        za, ma, fa = z[act], m[act], f[act]
        d = Pm(za, ma)
        d = numpy.where(d == 0, 1e-300, d)
        step = -fa / d
        lam = numpy.ones(ma.shape)
        new = ma + step
        fn = P(za, new)
        bad = numpy.abs(fn) > numpy.abs(fa)
        for _h in range(halvings):
            if not bad.any():
                break
            lam = numpy.where(bad, lam * 0.5, lam)
            new = numpy.where(bad, ma + lam * step, new)
            fn = numpy.where(bad, P(za, new), fn)
            bad = numpy.abs(fn) > numpy.abs(fa)
        done = numpy.abs(lam * step) <= tol * (1.0 + numpy.abs(new))
        done |= fn == 0
        m[act] = new
        f[act] = fn
        idx = numpy.flatnonzero(act)
        conv[idx[done]] = True
    return m, conv


# ============
# Continuation
# ============

def _track(P: BivariatePoly, zfun: Callable, m0: numpy.ndarray, h0: float,
           accept_ratio: float = ACCEPT_RATIO, max_depth: int = MAX_DEPTH):
    """
    Follow ``N`` roots along parametrized paths ``s -> zfun(idx, s)``,
    ``s`` in ``[0, 1]``, with per-path adaptive steps.

    A step is accepted when Newton converges and the corrected root lies
    within ``accept_ratio`` times the distance to the nearest other root of
    its predictor. Rejected steps are halved; more than ``max_depth``
    halvings below ``h0`` raise :class:`StiffnessError`.
    """
    Pz, Pm, _ = _derivs(P)
    m = numpy.array(m0, dtype=complex)
    N = m.size
    s = numpy.zeros(N)
    h = numpy.full(N, float(h0))
    hmin = h0 * 0.5 ** max_depth
    active = numpy.ones(N, dtype=bool)
    while active.any():
        idx = numpy.flatnonzero(active)
        s0 = s[idx]
        s1 = numpy.minimum(s0 + h[idx], 1.0)
        z0 = zfun(idx, s0)
        z1 = zfun(idx, s1)
        mi = m[idx]
        dm = Pm(z0, mi)
        dscale = _term_scale(Pm, z0, mi)
        if numpy.any(numpy.abs(dm) <= 1e-14 * dscale):
            k = int(numpy.argmin(numpy.abs(dm) / numpy.maximum(dscale, 1e-300)))
            raise BranchCollisionError("dP/dm vanishes on the path",
                                       {"z": complex(z0[k]), "m": complex(mi[k])})
        mp = mi - Pz(z0, mi) / dm * (z1 - z0)
        mc, ok = _newton_m(P, z1, mp)
        roots = batch_roots(P.a(z1))
        dist = numpy.sort(numpy.abs(roots - mc[:, None]), axis=1)
        if dist.shape[1] >= 2:
            other = dist[:, 1]
        else:
            other = numpy.full(idx.size, numpy.inf)
        on_root = dist[:, 0] <= 1e-6 * (1.0 + numpy.abs(mc)) if dist.shape[1] else ok
        acc = ok & on_root & (numpy.abs(mc - mp) <= accept_ratio * other) \
            & numpy.isfinite(mc)
        ai = idx[acc]
        m[ai] = mc[acc]
        s[ai] = s1[acc]
        h[ai] = numpy.minimum(h[ai] * 2.0, h0)
        ri = idx[~acc]
        h[ri] *= 0.5
        if numpy.any(h[ri] < hmin):
            k = ri[numpy.argmin(h[ri])]
            zk = zfun(numpy.array([k]), numpy.array([s[k]]))[0]
            raise StiffnessError("continuation exceeded the maximal subdivision depth",
                                 {"z": complex(zk), "m": complex(m[k]), "s": float(s[k])})
        active = s < 1.0
    return m


def continue_branch(P: BivariatePoly, path: Sequence[complex], m_start: complex,
                    segments: int = 8, accept_ratio: float = ACCEPT_RATIO,
                    max_depth: int = MAX_DEPTH) -> complex:
    """
    Follow the sheet through ``m_start`` along the polyline ``path``.

    Each segment is traversed with an initial step of ``1/segments`` of its
    length; steps are halved (up to ``max_depth`` times) whenever the
    corrected root strays beyond ``accept_ratio`` times the distance to the
    nearest other root.

    Raises
    ------
    StiffnessError
        Maximal subdivision depth exceeded.
    BranchCollisionError
        ``dP/dm`` vanishes along the path.
    """
    pts = [complex(p) for p in path]
    m = numpy.array([complex(m_start)])
    m, ok = _newton_m(P, numpy.array([pts[0]]), m)
    for za, zb in zip(pts[:-1], pts[1:]):
        if za == zb:
            continue

        def zfun(idx, s, za=za, zb=zb):
            return za + s * (zb - za)

        m = _track(P, zfun, m, 1.0 / segments, accept_ratio, max_depth)
    return complex(m[0])


# ======================
# Physical branch values
# ======================

def curve_radius(P: BivariatePoly) -> float:
    """Largest modulus of finite branch points and real poles (at least 1e-12)."""
    return _curve_radius_cached(P.coeffs.tobytes(), P.coeffs.shape)


@functools.lru_cache(maxsize=256)
def _curve_radius_cached(key, shape):
    P = BivariatePoly(numpy.frombuffer(key, dtype=float).reshape(shape))
    zs = [abs(z) for z, _ in _raw_branch_points(P)]
    lead = P.coeffs[:, -1]
    nz = numpy.flatnonzero(lead)
    if nz.size and nz[-1] > 0:
        zs.extend(numpy.abs(numpy.roots(lead[: nz[-1] + 1][::-1])))
    zs = [v for v in zs if numpy.isfinite(v)]
    return max(zs + [1e-12])


def anchor_physical(P: BivariatePoly, z_a: complex, reference: complex | None = None,
                    separation: float = 0.25) -> complex:
    """
    Physical root at an anchor point.

    Parameters
    ----------
    z_a : complex
        Anchor off the real axis.
    reference : complex, optional
        Empirical Stieltjes value at ``z_a``. Without it the root closest to
        the far-field value ``-1/z_a`` is taken.

    Raises
    ------
    AnchorError
        If ``z_a`` is real, or the chosen root violates Herglotz
        (``Im m * sign(Im z_a) > 0``), or the far-field choice is not clearly
        separated from the other roots.
    """
    z_a = complex(z_a)
    if z_a.imag == 0:
        raise AnchorError("the anchor must lie off the real axis")
    target = -1.0 / z_a if reference is None else complex(reference)
    roots = roots_in_m(P, z_a).roots
    if roots.size == 0:
        raise AnchorError(f"no roots at z_a={z_a!r}")
    d = numpy.abs(roots - target)
    order = numpy.argsort(d)
    m_a = complex(roots[order[0]])
    if reference is None and roots.size > 1:
        if d[order[0]] > separation * d[order[1]]:
            raise AnchorError("far-field root is not separated at this anchor; "
                              "move the anchor farther out")
    if not m_a.imag * math.copysign(1.0, z_a.imag) > 0:
        raise AnchorError(f"anchor root {m_a!r} fails the Herglotz test at z_a={z_a!r}")
    return m_a


def _anchor_height(P: BivariatePoly, queries: numpy.ndarray) -> float:
    r = curve_radius(P)
    spread = float(numpy.max(numpy.abs(queries.real))) if queries.size else 0.0
    return 10.0 * max(r, spread, 1e-8) + 1.0


def stieltjes_eval(P: BivariatePoly, queries, reference: Callable | None = None,
                   height: float | None = None, steps_per_decade: int = 4):
    """
    Physical Stieltjes values at off-axis queries.

    Each query ``x + i y`` is reached along the vertical segment from the
    anchor ``x + i H`` with geometrically spaced initial steps.

    Parameters
    ----------
    P : BivariatePoly
    queries : array_like of complex
        Points with nonzero imaginary part; lower half-plane points are
        handled by conjugate symmetry.
    reference : callable, optional
        Empirical anchor rule ``z -> m(z)``. Without it the far-field rule
        ``m ~ -1/z`` picks the anchor root.
    height : float, optional
        Anchor height ``H``; the default clears all branch points by a factor
        of ten.

    Returns
    -------
    numpy.ndarray of complex
    """
    q = numpy.asarray(queries, dtype=complex)
    shape = q.shape
    q = q.ravel()
    if numpy.any(q.imag == 0):
        raise DomainError("queries must lie off the real axis")
    lower = q.imag < 0
    qu = numpy.where(lower, q.conj(), q)
    H = _anchor_height(P, qu) if height is None else float(height)
    while True:
        top = numpy.unique(qu.real) + 1j * H
        try:
            ref = None if reference is None else [reference(zz) for zz in top]
            m_top = numpy.array([anchor_physical(P, zz, None if ref is None else ref[k])
                                 for k, zz in enumerate(top)])
            break
        except AnchorError:
            if reference is not None or H > 1e12:
                raise
            H *= 10.0
    ux, inv = numpy.unique(qu.real, return_inverse=True)
    m0 = m_top[inv]
    out = numpy.empty(qu.size, dtype=complex)
    high = qu.imag >= H
    # Queries above the anchor height go straight up (rare).
    logH = math.log(H)
    target = numpy.log(numpy.minimum(qu.imag, H))
    decades = max(1.0, float(numpy.max(logH - target)) / math.log(10.0))
    h0 = 1.0 / (steps_per_decade * decades)

    def zfun(idx, s):
        return qu.real[idx] + 1j * numpy.exp(logH + s * (target[idx] - logH))

    out = _track(P, zfun, m0, h0)
    if numpy.any(high):
        hi = numpy.flatnonzero(high)

        def zup(idx, s):
            zz = qu[hi[idx]]
            return zz.real + 1j * (H + s * (zz.imag - H))

        out[hi] = _track(P, zup, m0[hi], 0.125)
    out = numpy.where(lower, out.conj(), out)
    return out.reshape(shape)


# =============
# Branch points
# =============

def polyeig(mats: Sequence[numpy.ndarray], finite_tol: float = 1e-10) -> numpy.ndarray:
    """
    Finite eigenvalues of the matrix polynomial ``sum_k z^k mats[k]``.

    Uses the first companion linearization and the QZ algorithm. Eigenvalues
    whose ``beta`` is below ``finite_tol`` relative to ``alpha`` are
    discarded as infinite.
    """
    mats = [numpy.asarray(M, dtype=complex) for M in mats]
    while len(mats) > 1 and not numpy.any(mats[-1]):
        mats.pop()
    d = len(mats) - 1
    if d < 1:
        return numpy.zeros(0, dtype=complex)
    n = mats[0].shape[0]
    # Scale the variable so the coefficient norms are balanced.
    n0 = numpy.linalg.norm(mats[0])
    nd = numpy.linalg.norm(mats[-1])
    omega = (n0 / nd) ** (1.0 / d) if n0 > 0 and nd > 0 else 1.0
    mats = [M * omega ** k for k, M in enumerate(mats)]
    A = numpy.zeros((n * d, n * d), dtype=complex)
    B = numpy.eye(n * d, dtype=complex)
    for k in range(d - 1):
        A[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] = numpy.eye(n)
    for k in range(d):
        A[(d - 1) * n:, k * n:(k + 1) * n] = -mats[k]
    B[(d - 1) * n:, (d - 1) * n:] = mats[d]
    alpha, beta = scipy.linalg.eig(A, B, right=False, homogeneous_eigvals=True)
    finite = numpy.abs(beta) > finite_tol * numpy.abs(alpha)
    return alpha[finite] / beta[finite] * omega


def _sylvester_poly(f: BivariatePoly, g: BivariatePoly) -> list[numpy.ndarray]:
    """Sylvester matrix (in the second variable) as a matrix polynomial in ``z``."""
    p, q = f.s, g.s
    n = p + q
    dz = max(f.d_z, g.d_z)
    mats = [numpy.zeros((n, n)) for _ in range(dz + 1)]
    fc = f.grid(dz, p)
    gc = g.grid(dz, q)
    for r in range(q):
        for j in range(p + 1):
            for i in range(dz + 1):
                mats[i][r, r + (p - j)] = fc[i, j]
    for r in range(p):
        for j in range(q + 1):
            for i in range(dz + 1):
                mats[i][q + r, r + (q - j)] = gc[i, j]
    return mats


def _newton_system(F, J, x0, tol=1e-14, maxit=60):
    """Plain Newton for a small complex system. Returns (x, converged)."""
    x = numpy.array(x0, dtype=complex)
    for _ in range(maxit):
        fx = F(x)
        try:
            dx = numpy.linalg.solve(J(x), -fx)
        except numpy.linalg.LinAlgError:
            return x, False
        if not numpy.all(numpy.isfinite(dx)):
            return x, False
        x = x + dx
        if numpy.linalg.norm(dx) <= tol * (1.0 + numpy.linalg.norm(x)):
            return x, True
    return x, False


def _real_collision(P, Pz, Pm, Pmm, Pzm, z0: float, m0: float):
    """Real solution of ``P = P_m = 0`` near ``(z0, m0)``, or ``None``."""
    def F(x):
        return numpy.array([P(x[0], x[1]), Pm(x[0], x[1])]).real

    def J(x):
        return numpy.array([[Pz(x[0], x[1]), Pm(x[0], x[1])],
                            [Pzm(x[0], x[1]), Pmm(x[0], x[1])]]).real

    x, _ = _newton_system(F, J, numpy.array([z0, m0]))
    z, m = float(x[0].real), float(x[1].real)
    if not (numpy.isfinite(z) and numpy.isfinite(m)):
        return None
    if abs(z - z0) > 1e-3 * (1.0 + abs(z0)) or abs(m - m0) > 1e-2 * (1.0 + abs(m0)):
        return None
    res = abs(P(z, m)) / max(float(_term_scale(P, z, m)), 1e-300)
    resm = abs(Pm(z, m)) / max(float(_term_scale(Pm, z, m)), 1e-300)
    if res > 1e-12 or resm > 1e-10:
        return None
    return complex(z, 0.0), complex(m, 0.0)


def _raw_branch_points(P: BivariatePoly) -> list[tuple[complex, complex]]:
    """Polished solutions of ``P = P_m = 0`` without classification."""
    if P.s < 2:
        return []
    Pz, Pm, Pmm = _derivs(P)
    Pzm = Pm.deriv(dz=1)
    zs = polyeig(_sylvester_poly(P, Pm))
    out = []
    lead = P.coeffs[:, -1]
    for z in zs:
        if not numpy.isfinite(z):
            continue
        lead_scale = float(numpy.sum(numpy.abs(lead) * abs(z) ** numpy.arange(lead.size)))
        if abs(numpy.polyval(lead[::-1], z)) <= 1e-9 * lead_scale:
            # Leading coefficient vanishes: a pole of one sheet, not a branch point.
            continue
        roots = roots_in_m(P, z).roots
        if roots.size == 0:
            continue
        score = numpy.abs(Pm(z, roots)) / numpy.maximum(_term_scale(Pm, z, roots), 1e-300)
        m = roots[int(numpy.argmin(score))]

        def F(x):
            return numpy.array([P(x[0], x[1]), Pm(x[0], x[1])])

        def J(x):
            return numpy.array([[Pz(x[0], x[1]), Pm(x[0], x[1])],
                                [Pzm(x[0], x[1]), Pmm(x[0], x[1])]])

        x, ok = _newton_system(F, J, [z, m])
        if not ok:
            # Double roots of the discriminant (cusps, nodes) converge slowly;
            # keep the eigenvalue estimate if it is already consistent.
            x = numpy.array([z, m])
        res = abs(P(x[0], x[1])) / max(float(_term_scale(P, x[0], x[1])), 1e-300)
        resm = abs(Pm(x[0], x[1])) / max(float(_term_scale(Pm, x[0], x[1])), 1e-300)
        if res > 1e-8 or resm > 1e-6:
            continue
        zz, mm = complex(x[0]), complex(x[1])
        if abs(zz.imag) <= 1e-12 * (1.0 + abs(zz)):
            zz = complex(zz.real, 0.0)
            if abs(mm.imag) <= 1e-9 * (1.0 + abs(mm)):
                mm = complex(mm.real, 0.0)
            else:
                # Badly scaled relations let the complex polish drift to a
                # nearby complex pair; a real collision is sought as well.
                xr = _real_collision(P, Pz, Pm, Pmm, Pzm, zz.real, mm.real)
                if xr is not None:
                    zz, mm = xr
        dup = any(abs(zz - z2) <= 1e-9 * (1 + abs(zz)) and abs(mm - m2) <= 1e-6 * (1 + abs(mm))
                  for z2, m2 in out)
        if not dup:
            out.append((zz, mm))
    return out


def branch_points(P: BivariatePoly, classify: bool = True, width: float | None = None,
                  evaluator: Callable | None = None) -> BranchPointSet:
    """
    Solve ``P = dP/dm = 0`` and classify the solutions.

    The ``z``-coordinates are the finite eigenvalues of the Sylvester matrix
    polynomial of ``P`` and ``P_m`` (the resultant in ``m``); each is paired
    with the root minimizing ``|P_m|`` and polished by Newton on the 2x2
    system. A real branch point is a ``physical-edge`` when the physical
    branch has a bulk on exactly one side of it and its boundary value on
    that side tends to the colliding root. Three or more nearly coalescing
    roots are tagged ``ambiguous``.

    ``evaluator`` maps an array of upper half-plane probes to physical
    Stieltjes values; the default solves ``P`` directly with
    :func:`stieltjes_eval`. Decompressed relations pass the transported
    values instead, which stay accurate when the evolved coefficients span
    many decades.
    """
    evaluate = evaluator if evaluator is not None else (lambda q: stieltjes_eval(P, q))
    raw = _raw_branch_points(P)
    real = [(z, m) for z, m in raw if z.imag == 0 and m.imag == 0]
    pts = []
    if not classify:
        for z, m in raw:
            tag = "complex" if z.imag != 0 else "non-physical"
            pts.append(BranchPoint(z, m, tag))
        return BranchPointSet(pts)
    xs = numpy.array(sorted(z.real for z, _ in real))
    if width is None:
        atoms = [x for x, _ in find_atoms(P)]
        span = numpy.concatenate([xs, atoms]) if xs.size else numpy.array(atoms)
        width = float(span.max() - span.min()) if span.size > 1 else 1.0
        width = width if width > 0 else 1.0
    meta = []
    for z, m in real:
        x = z.real
        others = numpy.abs(xs - x)
        others = others[others > 0]
        eps = 1e-4 * width
        if others.size:
            eps = min(eps, 0.25 * float(others.min()))
        meta.append((z, m, eps))
    tags = [None] * len(meta)
    # A square-root edge can be steep on multi-scale curves: the boundary
    # value only approaches the colliding root for very small offsets, so
    # unresolved one-sided points are probed again closer to the edge.
    for level in range(EDGE_PROBE_LEVELS):
        todo = [k for k, t in enumerate(tags) if t is None]
        if not todo:
            break
        probes = []
        for k in todo:
            z, m, eps = meta[k]
            e = eps * 1e-2 ** level
            d = min(1e-6 * width, 1e-2 * e)
            for sgn in (-1.0, 1.0):
                probes.extend([z.real + sgn * e + 1j * d, z.real + sgn * e + 2j * d])
        vals = numpy.asarray(evaluate(numpy.array(probes)))
        last = level == EDGE_PROBE_LEVELS - 1
        for i, k in enumerate(todo):
            z, m, _ = meta[k]
            v = vals[4 * i: 4 * i + 4]
            bulk = []
            for side in (0, 1):
                i1, i2 = v[2 * side].imag, v[2 * side + 1].imag
                bulk.append(bool(i1 > 0 and i2 < 1.5 * i1))
            roots = roots_in_m(P, z).roots
            dist = numpy.sort(numpy.abs(roots - m))
            close = int(numpy.sum(dist <= 1e-4 * (1.0 + abs(m))))
            if close >= 3:
                tags[k] = ("ambiguous", None)
                continue
            far = dist[2] if dist.size > 2 else numpy.inf
            if bulk[0] != bulk[1]:
                mv = v[0 if bulk[0] else 2]
                if abs(mv - m) < 0.5 * far:
                    tags[k] = ("physical-edge", "right" if bulk[0] else "left")
                    continue
                if not last:
                    continue
            tags[k] = ("non-physical", None)
    pts = [BranchPoint(z, m, tag, side) for (z, m, _), (tag, side) in zip(meta, tags)]
    for z, m in raw:
        if not (z.imag == 0 and m.imag == 0):
            pts.append(BranchPoint(z, m, "complex" if z.imag != 0 else "non-physical"))
    return BranchPointSet(pts)


# =====
# Atoms
# =====

def atom_weight(P: BivariatePoly, x: float, tol: float = 1e-8):
    """
    Residue weight ``a_{s-1}(x) / a_s'(x)`` at a root of the leading coefficient.

    Returns None when ``a_s(x)`` does not vanish (relative to ``tol``).
    """
    from .errors import HigherOrderRootError
    lead = BivariatePoly(P.coeffs[:, -1:])
    a = P.a(x)
    if abs(a[-1]) > tol * max(float(numpy.max(numpy.abs(a))), 1e-300):
        return None
    d = lead.deriv(dz=1)(x, 1.0)
    if abs(d) <= 1e-13 * max(float(numpy.max(numpy.abs(P.coeffs[:, -1]))), 1e-300):
        raise HigherOrderRootError(f"leading coefficient has a multiple root at {x!r}")
    return float(numpy.real(a[-2] / d)) if a.size >= 2 else None


def find_atoms(P: BivariatePoly, tol: float = 1e-6) -> list[tuple[float, float]]:
    """Real roots of ``a_s`` whose residue weight lies in ``[0, 1]``."""
    lead = P.coeffs[:, -1]
    nz = numpy.flatnonzero(lead)
    if nz.size == 0 or nz[-1] == 0:
        return []
    roots = numpy.roots(lead[: nz[-1] + 1][::-1])
    out = []
    for r in roots:
        if abs(r.imag) > 1e-10 * (1.0 + abs(r)):
            continue
        x = float(r.real)
        try:
            w = atom_weight(P, x, tol=1e-6)
        except Exception:
            continue
        if w is not None and -tol <= w <= 1.0 + tol:
            out.append((x, min(max(w, 0.0), 1.0)))
    return out


# ================
# Density recovery
# ================

def default_ladder(width: float) -> numpy.ndarray:
    """Offsets ``{1e-6, 1e-5, 1e-4, 1e-3} * width``."""
    return numpy.array([1e-6, 1e-5, 1e-4, 1e-3]) * float(width)


def density_from_curve(P: BivariatePoly, lambdas, delta_ladder=None, q: int = 2,
                       width: float | None = None, subtract_atoms: bool = False,
                       atoms: Sequence[tuple[float, float]] | None = None,
                       values: numpy.ndarray | None = None) -> DensityGrid:
    """
    Density ``Im m(lambda + i delta) / pi`` extrapolated to ``delta = 0``.

    Parameters
    ----------
    P : BivariatePoly
    lambdas : array_like
        Ascending grid.
    delta_ladder : array_like, optional
        Strictly increasing offsets; default :func:`default_ladder` of the
        grid width (or ``width``).
    q : int
        Degree of the Chebyshev fit in ``delta``. Needs at least ``q + 1``
        levels. A single level with ``q = 0`` returns the raw values.
    subtract_atoms : bool
        Remove the exact Poisson kernels of the atoms before extrapolating.
        The atoms are found with :func:`find_atoms` unless given.
    values : array, optional
        Precomputed Stieltjes values of shape ``(len(ladder), len(lambdas))``.

    Raises
    ------
    ConfigError
        Fewer levels than ``q + 1`` or a non-increasing ladder.
    """
    lam = numpy.asarray(lambdas, dtype=float)
    if width is None:
        width = float(lam[-1] - lam[0]) if lam.size > 1 else 1.0
    ladder = default_ladder(width) if delta_ladder is None \
        else numpy.asarray(delta_ladder, dtype=float)
    if ladder.size < q + 1:
        raise ConfigError(f"{ladder.size} offsets cannot support degree {q}")
    if numpy.any(numpy.diff(ladder) <= 0) or ladder[0] <= 0:
        raise ConfigError("the offset ladder must be positive and strictly increasing")
    if values is None:
        values = stieltjes_eval(P, lam[None, :] + 1j * ladder[:, None])
    raw = values.imag / math.pi
    if atoms is None:
        atoms = find_atoms(P) if subtract_atoms else []
    atoms = list(atoms)
    if subtract_atoms:
        for x, w in atoms:
            raw = raw - w / math.pi * ladder[:, None] / ((lam[None, :] - x) ** 2
                                                         + ladder[:, None] ** 2)
    if ladder.size == 1:
        rho = raw[0]
        extrap = False
    else:
        d0, d1 = ladder[0], ladder[-1]
        eta = 2.0 * (ladder - d0) / (d1 - d0) - 1.0
        eta0 = -1.0 - 2.0 * d0 / (d1 - d0)
        coef = cheb.chebfit(eta, raw, q)
        rho = cheb.chebval(eta0, coef)
        extrap = True
    min_raw = float(numpy.min(rho)) if rho.size else 0.0
    rho = numpy.maximum(rho, 0.0)
    return DensityGrid(lam, rho, ladder, extrap, atoms if subtract_atoms else [], min_raw)


# =======
# Moments
# =======

def theta0_candidates(P: BivariatePoly) -> tuple[int, numpy.ndarray]:
    """
    Leading-order polynomial ``L(theta) = sum_{i-j=e_max} c_ij theta^j``.

    Returns ``e_max`` and the nonzero roots of ``L``. The
    Stieltjes-compatible ``theta_0`` is the root closest to ``-1``.

    Raises
    ------
    NoStieltjesBranchError
        ``L`` is a monomial, so it has no nonzero root.
    """
    sup = P.support()
    e_max = max(i - j for i, j in sup)
    L = numpy.zeros(P.s + 1)
    for i, j in sup:
        if i - j == e_max:
            L[j] = P.coeffs[i, j]
    nz = numpy.flatnonzero(L)
    L = L[nz[0]: nz[-1] + 1]
    if L.size < 2:
        raise NoStieltjesBranchError("the leading-order polynomial has no nonzero root")
    return e_max, numpy.roots(L[::-1])


def moments_from_polynomial(P: BivariatePoly, n: int) -> MomentVector:
    """
    Moments ``mu_0..mu_n`` read off the relation by series expansion at infinity.

    Writing ``m(z) = sum_k theta_k z^{-k-1}``, the coefficient of each power
    of ``1/z`` in ``z^{e_max} P(z, m(z))`` is linear in the newest
    ``theta_k`` with slope ``L'(theta_0)``, which gives ``theta_k`` from the
    older ones. Then ``mu_k = theta_k / theta_0``.

    Raises
    ------
    DegenerateExpansionError
        ``L'(theta_0) = 0``.
    """
    e_max, roots = theta0_candidates(P)
    th0 = roots[numpy.argmin(numpy.abs(roots + 1.0))]
    if abs(th0.imag) <= 1e-12 * abs(th0):
        th0 = th0.real
    sup = P.support()
    c = P.coeffs
    Lp = sum(c[i, j] * j * th0 ** (j - 1) for i, j in sup if i - j == e_max and j >= 1)
    if abs(Lp) <= 1e-14 * numpy.max(numpy.abs(c)):
        raise DegenerateExpansionError("L'(theta_0) vanishes")
    theta = numpy.zeros(n + 1, dtype=numpy.result_type(th0, float))
    theta[0] = th0
    smax = P.s

    for k in range(1, n + 1):
        # d[j] = series of S(w)^j truncated at order k, with theta_k set to 0.
        S = theta[: k + 1].copy()
        S[k] = 0.0
        powers = [numpy.zeros(k + 1, dtype=S.dtype)]
        powers[0][0] = 1.0
        for _ in range(smax):
            powers.append(numpy.convolve(powers[-1], S)[: k + 1])
        acc = 0.0
        for i, j in sup:
            p = i - j
            order = k - e_max + p
            if 0 <= order <= k:
                acc += c[i, j] * powers[j][order]
        theta[k] = -acc / Lp
    mu = theta / th0
    mu = numpy.real_if_close(mu, tol=1e6)
    mu = numpy.asarray(mu.real if numpy.iscomplexobj(mu) else mu, dtype=float)
    mu[0] = 1.0
    return MomentVector(mu)
