"""
Algebraic relation ``P(z, m) = 0`` and its fit to Stieltjes samples.

The relation is stored as a real coefficient grid ``c[i, j]`` multiplying
``z**i * m**j``. Fitting follows a homogeneous total least-squares scheme:
sample the physical branch on Bernstein ellipses in conjugate pairs, build
the monomial design matrix, optionally restrict to the null space of linear
moment constraints, and take the right singular vector of the smallest
singular value of the stacked real system.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy
import scipy.linalg

from .errors import AmbiguityWarning, ConfigError, ConstraintError, ValidationError
from .spectra import EigenSample, MomentVector, empirical_moments, \
    empirical_stieltjes, estimate_support

__all__ = [
    "BivariatePoly",
    "FitConfig",
    "FitResult",
    "default_index_set",
    "sample_contours",
    "moment_constraint_matrix",
    "fit_polynomial",
    "fit_sample",
    "singular_gap",
    "select_degrees",
    "endpoint_report",
    "read_polynomial",
    "write_polynomial",
]


# ==============
# Bivariate poly
# ==============

@dataclass(frozen=True)
class BivariatePoly:
    """
    Real bivariate polynomial ``P(z, m) = sum c[i, j] z^i m^j``.

    Parameters
    ----------
    coeffs : array_like, shape (d_z + 1, s + 1)
        Coefficient grid. Trailing rows and columns that are exactly zero are
        removed, so ``d_z`` and ``s`` are always attained.
    index_set : iterable of (int, int), optional
        Active support the coefficients were fitted on. ``None`` means the
        full rectangle.

    Notes
    -----
    Construction does not normalize. Use :meth:`normalized` for the unit
    norm, positive-first-entry representative of the projective class.
    """

    coeffs: numpy.ndarray
    index_set: frozenset | None = None

    def __post_init__(self):
        c = numpy.atleast_2d(numpy.asarray(self.coeffs))
        if numpy.iscomplexobj(c):
            if numpy.any(c.imag != 0):
                raise ValidationError("coefficients must be real")
            c = c.real
        c = numpy.array(c, dtype=float)
        if not numpy.all(numpy.isfinite(c)):
            raise ValidationError("coefficients must be finite")
        rows = numpy.flatnonzero(numpy.any(c != 0, axis=1))
        cols = numpy.flatnonzero(numpy.any(c != 0, axis=0))
        if rows.size == 0:
            c = numpy.zeros((1, 1))
        else:
            c = c[: rows[-1] + 1, : cols[-1] + 1]
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if self.index_set is not None:
            object.__setattr__(self, "index_set",
                               frozenset((int(i), int(j)) for i, j in self.index_set))

    # ----------
    # properties
    # ----------

    @property
    def d_z(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def s(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def norm(self) -> float:
        return float(numpy.linalg.norm(self.coeffs))

    def support(self) -> list[tuple[int, int]]:
        """Indices of nonzero coefficients."""
        return [(int(i), int(j)) for i, j in zip(*numpy.nonzero(self.coeffs))]

    # ----------
    # evaluation
    # ----------

    def a(self, z):
        """
        Coefficients ``a_j(z)`` of ``P`` viewed as a polynomial in ``m``.

        Returns an array of shape ``numpy.shape(z) + (s + 1,)``.
        """
        z = numpy.asarray(z)
        c = self.coeffs
        out = numpy.zeros(z.shape + (c.shape[1],), dtype=numpy.result_type(z, float))
        for i in range(c.shape[0] - 1, -1, -1):
            out = out * z[..., None] + c[i]
        return out

    def __call__(self, z, m):
        z = numpy.asarray(z)
        m = numpy.asarray(m)
        c = self.coeffs
        res = 0.0
        for j in range(c.shape[1] - 1, -1, -1):
            aj = 0.0
            for i in range(c.shape[0] - 1, -1, -1):
                aj = aj * z + c[i, j]
            res = res * m + aj
        return res

    def deriv(self, dz: int = 0, dm: int = 0) -> "BivariatePoly":
        """Partial derivative ``d^dz/dz^dz d^dm/dm^dm``, not normalized."""
        c = numpy.array(self.coeffs)
        for _ in range(dz):
            if c.shape[0] == 1:
                return BivariatePoly(numpy.zeros((1, 1)))
            c = c[1:] * numpy.arange(1, c.shape[0])[:, None]
        for _ in range(dm):
            if c.shape[1] == 1:
                return BivariatePoly(numpy.zeros((1, 1)))
            c = c[:, 1:] * numpy.arange(1, c.shape[1])[None, :]
        return BivariatePoly(c)

    # -------
    # algebra
    # -------

    def __add__(self, other: "BivariatePoly") -> "BivariatePoly":
        a, b = self.coeffs, other.coeffs
        shape = (max(a.shape[0], b.shape[0]), max(a.shape[1], b.shape[1]))
        out = numpy.zeros(shape)
        out[: a.shape[0], : a.shape[1]] += a
        out[: b.shape[0], : b.shape[1]] += b
        return BivariatePoly(out)

    def __neg__(self) -> "BivariatePoly":
        return BivariatePoly(-self.coeffs)

    def __sub__(self, other: "BivariatePoly") -> "BivariatePoly":
        return self + (-other)

    def __mul__(self, other) -> "BivariatePoly":
        if numpy.isscalar(other):
            return BivariatePoly(self.coeffs * float(other))
        a, b = self.coeffs, other.coeffs
        out = numpy.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                if a[i, j] != 0:
                    out[i:i + b.shape[0], j:j + b.shape[1]] += a[i, j] * b
        return BivariatePoly(out)

    __rmul__ = __mul__

    @staticmethod
    def monomial(i: int, j: int, value: float = 1.0) -> "BivariatePoly":
        c = numpy.zeros((i + 1, j + 1))
        c[i, j] = value
        return BivariatePoly(c)

    # -------------
    # normalization
    # -------------

    def normalized(self) -> "BivariatePoly":
        """Unit 2-norm with the first significant entry (row-major) positive."""
        c = numpy.array(self.coeffs)
        big = float(numpy.max(numpy.abs(c))) if c.size else 0.0
        if big == 0:
            raise ValidationError("cannot normalize the zero polynomial")
        # Dividing by the largest entry first keeps tiny inputs from
        # underflowing in the squared norm.
        c = c / big
        c = c / numpy.linalg.norm(c)
        flat = c.ravel()
        k = numpy.flatnonzero(numpy.abs(flat) > 1e-12)[0]
        if flat[k] < 0:
            c = -c
        return BivariatePoly(c, self.index_set)

    def angle(self, other: "BivariatePoly") -> float:
        """Angle between coefficient vectors, ignoring sign."""
        shape = (max(self.coeffs.shape[0], other.coeffs.shape[0]),
                 max(self.coeffs.shape[1], other.coeffs.shape[1]))
        a = numpy.zeros(shape)
        b = numpy.zeros(shape)
        a[: self.coeffs.shape[0], : self.coeffs.shape[1]] = self.coeffs
        b[: other.coeffs.shape[0], : other.coeffs.shape[1]] = other.coeffs
        a /= numpy.linalg.norm(a)
        b /= numpy.linalg.norm(b)
        if numpy.vdot(a, b) < 0:
            b = -b
        # Chord-length form keeps full precision for tiny angles.
        return float(2.0 * math.asin(min(1.0, numpy.linalg.norm(a - b) / 2.0)))

    def grid(self, d_z: int, s: int) -> numpy.ndarray:
        """Coefficients padded with zeros to shape ``(d_z + 1, s + 1)``."""
        out = numpy.zeros((max(d_z, self.d_z) + 1, max(s, self.s) + 1))
        out[: self.d_z + 1, : self.s + 1] = self.coeffs
        return out

    # -------------
    # serialization
    # -------------

    def to_dict(self) -> dict:
        return {"d_z": self.d_z, "s": self.s,
                "coeffs": [[float(v) for v in row] for row in self.coeffs]}

    @classmethod
    def from_dict(cls, data: dict) -> "BivariatePoly":
        c = numpy.array(data["coeffs"], dtype=float)
        idx = data.get("meta", {}).get("index_set")
        return cls(c, None if idx is None else frozenset(map(tuple, idx)))


def write_polynomial(path, poly: BivariatePoly, residual: float | None = None,
                     meta: dict | None = None) -> None:
    """Write the polynomial JSON format (``repr`` keeps full precision)."""
    data = poly.to_dict()
    data["residual"] = None if residual is None else float(residual)
    meta = dict(meta or {})
    if poly.index_set is not None:
        meta.setdefault("index_set", sorted([list(p) for p in poly.index_set]))
    data["meta"] = meta
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def read_polynomial(path) -> tuple[BivariatePoly, dict]:
    """Read the polynomial JSON format. Returns the polynomial and the raw data."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("d_z", "s", "coeffs"):
        if key not in data:
            raise ValidationError(f"polynomial file lacks '{key}'")
    return BivariatePoly.from_dict(data), data


# ==========
# Fit config
# ==========

@dataclass
class FitConfig:
    """
    Settings for :func:`fit_polynomial` and :func:`sample_contours`.

    Attributes
    ----------
    d_z, s : int
        Degrees in ``z`` and ``m``.
    n_samples : int
        Number of contour points. Must be even (conjugate pairs).
    eta : float
        Tikhonov weight on the coefficient norm.
    moment_order : int or None
        Highest moment constrained; ``None`` disables constraints.
    bulk_radii : tuple of float
        Semi-major axes of the per-bulk Bernstein ellipses in units of the
        bulk half-width.
    global_radius : float
        Semi-major axis of the global ellipse in units of the total
        half-width.
    log_scale : bool or None
        Place bulk contours in log coordinates. ``None`` enables it when the
        bulk widths span more than two decades and the support is positive.
    buffer : float
        Minimum distance from the real support, relative to the bulk width.
    index_set : list of (int, int) or None
        Active monomials. ``None`` uses :func:`default_index_set`.
    bulks : int or None
        Number of declared bulks, checked against the degree bound.
    """

    d_z: int = 1
    s: int = 2
    n_samples: int = 256
    eta: float = 0.0
    moment_order: int | None = 0
    bulk_radii: tuple[float, ...] = (1.5, 3.0)
    global_radius: float = 5.0
    log_scale: bool | None = None
    buffer: float = 1e-3
    index_set: list | None = None
    bulks: int | None = None

    def __post_init__(self):
        if self.n_samples % 2:
            raise ConfigError("n_samples must be even (conjugate pairs)")
        if self.d_z < 0 or self.s < 1:
            raise ConfigError("degrees must satisfy d_z >= 0 and s >= 1")
        if self.eta < 0:
            raise ConfigError("eta must be nonnegative")
        if self.moment_order is not None and self.moment_order < 0:
            raise ConfigError("moment_order must be nonnegative or None")
        if self.bulks is not None:
            check_degree_bound(self.s, self.d_z, self.bulks)

    def active_index_set(self) -> list[tuple[int, int]]:
        if self.index_set is not None:
            return sorted((int(i), int(j)) for i, j in self.index_set)
        return default_index_set(self.d_z, self.s)


def check_degree_bound(s: int, d_z: int, bulks: int) -> None:
    """Raise unless ``(2s - 1) d_z >= 2k`` for ``k`` bulks."""
    if (2 * s - 1) * d_z < 2 * bulks:
        raise ConfigError(
            f"degrees (s={s}, d_z={d_z}) admit at most {(2 * s - 1) * d_z} "
            f"branch points, fewer than the {2 * bulks} edges of {bulks} bulks")


def default_index_set(d_z: int, s: int) -> list[tuple[int, int]]:
    """
    Rectangle ``{0..d_z} x {0..s}`` without the corner ``(d_z, 0)``.

    The zeroth moment constraint on the full rectangle forces
    ``c[d_z, 0] = 0``; removing it up front turns the same constraint row
    into the unit-mass condition.
    """
    idx = [(i, j) for i in range(d_z + 1) for j in range(s + 1)]
    if d_z >= 1:
        idx.remove((d_z, 0))
    return idx


# ========
# Contours
# ========

def _bernstein(center: float, half: float, rho: float, theta: numpy.ndarray):
    w = rho * numpy.exp(1j * theta)
    return center + half * 0.5 * (w + 1.0 / w)


def _rho_for_semimajor(ratio: float) -> float:
    # Semi-major axis of a Bernstein ellipse is half*(rho + 1/rho)/2.
    return ratio + math.sqrt(ratio * ratio - 1.0)


def sample_contours(support: Sequence[tuple[float, float]], cfg: FitConfig,
                    atoms: Sequence[float] = ()) -> numpy.ndarray:
    """
    Points on Bernstein ellipses around each bulk and around the support.

    Parameters
    ----------
    support : sequence of (a, b)
        Disjoint bulk intervals.
    cfg : FitConfig
    atoms : sequence of float, optional
        Atom locations, included in the global contour's extent.

    Returns
    -------
    numpy.ndarray of complex, shape (cfg.n_samples,)
        The first half lies in the upper half-plane; the second half holds
        the conjugates in the same order.

    Raises
    ------
    ConfigError
        Empty or overlapping intervals, or points closer than the buffer to
        the real support.
    """
    bulks = sorted((float(a), float(b)) for a, b in support)
    if not bulks:
        raise ConfigError("at least one bulk interval is required")
    for (a0, b0), (a1, _) in zip(bulks, bulks[1:]):
        if a1 <= b0:
            raise ConfigError("support intervals must be disjoint")
    for a, b in bulks:
        if not b > a:
            raise ConfigError("support intervals must be nonempty")

    widths = numpy.array([b - a for a, b in bulks])
    lo = min([bulks[0][0]] + list(atoms))
    hi = max([bulks[-1][1]] + list(atoms))
    log_scale = cfg.log_scale
    if log_scale is None:
        log_scale = bool(lo > 0 and widths.max() / widths.min() > 100.0)
    if log_scale and bulks[0][0] <= 0:
        raise ConfigError("log-scaled contours need a positive support")

    families = len(bulks) * len(cfg.bulk_radii) + 1
    n_up = cfg.n_samples // 2
    if n_up < families:
        raise ConfigError(f"n_samples={cfg.n_samples} too small for {families} contours")
    counts = [n_up // families] * families
    counts[-1] += n_up - sum(counts)

    upper = []
    k = 0
    for a, b in bulks:
        for ratio in cfg.bulk_radii:
            cnt = counts[k]
            k += 1
            theta = numpy.pi * (numpy.arange(cnt) + 0.5) / cnt
            rho = _rho_for_semimajor(ratio)
            if log_scale:
                la, lb = math.log(a), math.log(b)
                half = 0.5 * (lb - la)
                # Keep the log-ellipse inside |Im| < pi/2 so exp() stays in
                # the right half-plane and conjugate pairs stay distinct.
                rho = min(rho, _rho_max_log(half))
                pts = numpy.exp(_bernstein(0.5 * (la + lb), half, rho, theta))
            else:
                pts = _bernstein(0.5 * (a + b), 0.5 * (b - a), rho, theta)
            upper.append(pts)
    cnt = counts[-1]
    theta = numpy.pi * (numpy.arange(cnt) + 0.5) / cnt
    half = 0.5 * (hi - lo) if hi > lo else max(abs(hi), 1.0)
    upper.append(_bernstein(0.5 * (lo + hi), half,
                            _rho_for_semimajor(cfg.global_radius), theta))
    upper = numpy.concatenate(upper)

    # Buffer check against the real support.
    eps = cfg.buffer * widths.min()
    dist = numpy.full(upper.size, numpy.inf)
    for a, b in bulks:
        x = numpy.clip(upper.real, a, b)
        dist = numpy.minimum(dist, numpy.abs(upper - x))
    if numpy.any(dist <= eps):
        raise ConfigError("contour points fall within the buffer of the support; "
                          "increase the radii or lower the point count")
    return numpy.concatenate([upper, upper.conj()])


def _rho_max_log(half: float) -> float:
    # Imaginary semi-axis half*(rho - 1/rho)/2 must stay below pi/2.
    b = min(math.pi / 2 * 0.95 / max(half, 1e-300), 1e6)
    return b + math.sqrt(b * b + 1.0)


# ===================
# Moment constraints
# ===================

def _convolution_powers(mu: numpy.ndarray, jmax: int) -> list[numpy.ndarray]:
    powers = [numpy.array([1.0])]
    for _ in range(jmax):
        powers.append(numpy.convolve(powers[-1], mu))
    return powers


def moment_constraint_matrix(index_set: Iterable[tuple[int, int]],
                             moments: MomentVector) -> numpy.ndarray:
    """
    Linear constraints tying coefficients to the moments ``mu_0..mu_r``.

    Row ``l`` (``l = 0..r``) has entry ``(-1)^j mu^{*j}_{i-j-e_max+l}`` in
    the column of ``(i, j)``, with ``mu^{*j}`` the ``j``-fold discrete
    self-convolution of the moment sequence and ``e_max`` the largest
    ``i - j`` over the index set. Columns follow the order of ``index_set``.
    """
    idx = list(index_set)
    mu = numpy.asarray(moments.entries, dtype=float)
    r = mu.size - 1
    e_max = max(i - j for i, j in idx)
    powers = _convolution_powers(mu, max(j for _, j in idx))
    B = numpy.zeros((r + 1, len(idx)))
    for col, (i, j) in enumerate(idx):
        conv = powers[j]
        for l in range(r + 1):
            k = i - j - e_max + l
            if 0 <= k < conv.size:
                B[l, col] = (-1.0) ** j * conv[k]
    return B


# =======
# Fitting
# =======

@dataclass
class FitResult:
    """
    Output of :func:`fit_polynomial`.

    Unpacks as ``poly, residual``.
    """

    poly: BivariatePoly
    residual: float
    ambiguous: bool = False
    singular_values: numpy.ndarray = field(default_factory=lambda: numpy.zeros(0))
    constraint_residual: float = 0.0

    def __iter__(self):
        yield self.poly
        yield self.residual


def _check_conjugate_pairs(points: numpy.ndarray, values: numpy.ndarray,
                           tol: float = 1e-10) -> None:
    scale_z = max(float(numpy.max(numpy.abs(points))), 1.0)
    scale_m = max(float(numpy.max(numpy.abs(values))), 1e-300)
    dist = numpy.abs(points[:, None] - points.conj()[None, :])
    partner = numpy.argmin(dist, axis=1)
    if numpy.any(dist[numpy.arange(points.size), partner] > tol * scale_z):
        raise ValidationError("sample points are not closed under conjugation")
    gap = numpy.abs(values[partner] - values.conj())
    if numpy.any(gap > tol * scale_m):
        raise ValidationError("values at conjugate points are not conjugate")


def design_matrix(points, values, index_set) -> numpy.ndarray:
    """Monomial design matrix ``A[l, (i, j)] = z_l^i m_l^j``."""
    points = numpy.asarray(points, dtype=complex)
    values = numpy.asarray(values, dtype=complex)
    return numpy.stack([points ** i * values ** j for i, j in index_set], axis=1)


def fit_polynomial(points, values, cfg: FitConfig,
                   moments: MomentVector | None = None,
                   weights=None) -> FitResult:
    """
    Homogeneous least-squares fit of ``P(z, m) = 0`` to branch samples.

    Parameters
    ----------
    points, values : array_like of complex
        Sample locations ``z_l`` and Stieltjes values ``m(z_l)``, closed
        under conjugation.
    cfg : FitConfig
    moments : MomentVector, optional
        If given (and ``cfg.moment_order`` is not None) the coefficients are
        restricted to the null space of :func:`moment_constraint_matrix`
        truncated at ``cfg.moment_order``.
    weights : array_like of float, optional
        Row weights. The fit is invariant under a common rescaling.

    Returns
    -------
    FitResult
        Normalized polynomial, residual ``||A c|| / ||A||_F`` and
        diagnostics. ``ambiguous`` is set (and an :class:`AmbiguityWarning`
        emitted) when the two smallest singular values are closer than
        ``1e-12`` of the largest.

    Raises
    ------
    ConstraintError
        The constraints leave no admissible coefficient vector.
    """
    points = numpy.asarray(points, dtype=complex).ravel()
    values = numpy.asarray(values, dtype=complex).ravel()
    if points.shape != values.shape:
        raise ValidationError("points and values must have the same length")
    if points.size % 2:
        raise ValidationError("an even number of samples is required")
    _check_conjugate_pairs(points, values)
    idx = cfg.active_index_set()
    if points.size < len(idx):
        raise ValidationError(
            f"{points.size} samples cannot determine {len(idx)} coefficients")

    A = design_matrix(points, values, idx)
    if weights is not None:
        A_w = A * numpy.asarray(weights, dtype=float).ravel()[:, None]
    else:
        A_w = A

    if moments is not None and cfg.moment_order is not None:
        r = min(cfg.moment_order, moments.order)
        B = moment_constraint_matrix(idx, MomentVector(moments.entries[: r + 1]))
        Q = scipy.linalg.null_space(B, rcond=1e-12)
        if Q.shape[1] == 0:
            raise ConstraintError("moment constraints admit only the zero polynomial")
    else:
        B = None
        Q = numpy.eye(len(idx))

    AQ = A_w @ Q
    blocks = [AQ.real, AQ.imag]
    if cfg.eta > 0:
        blocks.append(math.sqrt(cfg.eta) * numpy.eye(Q.shape[1]))
    M = numpy.vstack(blocks)
    _, sv, vh = numpy.linalg.svd(M, full_matrices=False)
    v = vh[-1]
    coef = Q @ v

    ambiguous = False
    if sv.size >= 2 and (sv[-2] - sv[-1]) < 1e-12 * sv[0]:
        ambiguous = True
        warnings.warn("two smallest singular values are not separated; the "
                      "fitted relation is ambiguous", AmbiguityWarning, stacklevel=2)

    coef = coef / numpy.linalg.norm(coef)
    grid = numpy.zeros((cfg.d_z + 1, cfg.s + 1))
    for (i, j), val in zip(idx, coef):
        grid[i, j] = val
    poly = BivariatePoly(grid, frozenset(idx)).normalized()
    c_vec = numpy.array([poly.grid(cfg.d_z, cfg.s)[i, j] for i, j in idx])
    residual = float(numpy.linalg.norm(A @ c_vec) / numpy.linalg.norm(A))
    cres = 0.0 if B is None else float(numpy.max(numpy.abs(B @ c_vec)))
    return FitResult(poly, residual, ambiguous, sv, cres)


def fit_sample(sample: EigenSample, cfg: FitConfig, support=None,
               atoms=None) -> FitResult:
    """
    Fit a relation to an eigenvalue sample.

    The support is estimated with :func:`fdpm.spectra.estimate_support`
    unless given. The empirical Stieltjes transform is evaluated on the
    contours and the empirical moments supply the constraints.
    """
    if support is None:
        support, found_atoms = estimate_support(sample)
        if atoms is None:
            atoms = [x for x, _ in found_atoms]
    atoms = list(atoms or [])
    pts = sample_contours(support, cfg, atoms=atoms)
    vals = empirical_stieltjes(sample, pts)
    # Enforce exact conjugate symmetry (the sums differ by rounding only).
    half = pts.size // 2
    vals[half:] = vals[:half].conj()
    moments = None
    if cfg.moment_order is not None:
        moments = empirical_moments(sample, cfg.moment_order)
    return fit_polynomial(pts, vals, cfg, moments)


def select_degrees(sample: EigenSample, ladder: Sequence[tuple[int, int]] | None = None,
                   base: FitConfig | None = None, plateau: float = 3.0,
                   support=None, min_gap: float | None = 100.0):
    """
    Pick degrees ``(s, d_z)`` from a ladder of candidate pairs.

    Pairs are ordered by coefficient count ``(s + 1)(d_z + 1)``. On
    empirical spectra the residual keeps falling as the degrees grow, since
    larger relations absorb the finite-size fluctuations of the empirical
    transform, so a residual plateau alone does not single out the minimal
    relation. A relation with spurious factors instead shows up as a second
    near-null direction of the design matrix. With ``min_gap`` set, the
    smallest pair whose singular-value ratio ``sigma[-2] / sigma[-1]`` is at
    least ``min_gap`` is returned. If no pair qualifies, or ``min_gap`` is
    None, the smallest pair whose residual is within ``plateau`` times the
    minimum is returned.

    Returns
    -------
    best : (int, int)
    results : dict mapping (s, d_z) to FitResult
    """
    if support is None:
        support, found = estimate_support(sample)
        atoms = [x for x, _ in found]
    else:
        atoms = []
    if ladder is None:
        ladder = [(s, d) for d in (1, 2, 3) for s in range(1, 7)]
    base = base or FitConfig()
    results = {}
    for s, d in ladder:
        try:
            check_degree_bound(s, d, len(support))
            cfg = FitConfig(d_z=d, s=s, n_samples=base.n_samples, eta=base.eta,
                            moment_order=base.moment_order,
                            bulk_radii=base.bulk_radii,
                            global_radius=base.global_radius,
                            log_scale=base.log_scale, buffer=base.buffer)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AmbiguityWarning)
                res = fit_sample(sample, cfg, support=support, atoms=atoms)
        except (ConfigError, ConstraintError, ValidationError):
            continue
        if not res.ambiguous:
            results[(s, d)] = res
    if not results:
        raise ConstraintError("no admissible degree pair on the ladder")
    def size(k):
        return ((k[0] + 1) * (k[1] + 1), k[0], k[1])

    if min_gap is not None:
        ident = [k for k, r in results.items() if singular_gap(r) >= min_gap]
        if ident:
            return min(ident, key=size), results
    best_res = min(r.residual for r in results.values())
    ok = [k for k, r in results.items() if r.residual <= plateau * best_res]
    return min(ok, key=size), results


def singular_gap(result: FitResult) -> float:
    """Ratio of the two smallest singular values of a fit (``inf`` if undefined)."""
    sv = result.singular_values
    if sv.size < 2:
        return math.inf
    return float(sv[-2] / sv[-1]) if sv[-1] > 0 else math.inf


def endpoint_report(poly: BivariatePoly, support: Sequence[tuple[float, float]]) -> list[dict]:
    """
    Distance from each estimated endpoint to the nearest real discriminant zero.

    The fit does not enforce that the support endpoints are branch points;
    this report measures how far the fitted relation is from satisfying it.
    ``distance`` is relative to the total support width.

    Returns
    -------
    list of dict
        ``{"endpoint", "nearest", "distance"}`` per endpoint, in order.
    """
    from .curve import branch_points

    ends = [float(e) for ab in support for e in ab]
    if not ends:
        return []
    width = max(ends) - min(ends) or 1.0
    zs = numpy.array([b.z.real for b in branch_points(poly, classify=False)
                      if abs(b.z.imag) <= 1e-9 * (1.0 + abs(b.z))])
    out = []
    for e in ends:
        if zs.size == 0:
            out.append({"endpoint": e, "nearest": math.nan, "distance": math.inf})
            continue
        z = float(zs[numpy.argmin(numpy.abs(zs - e))])
        out.append({"endpoint": e, "nearest": z, "distance": abs(z - e) / width})
    return out
