"""
Empirical spectral data.

This module holds eigenvalue samples, their empirical Stieltjes transform and
moments, support estimation, distribution distances, and the plain-text
eigenvalue file format.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy
import scipy.stats

from .errors import DomainError, PoleError, ValidationError

__all__ = [
    "EigenSample",
    "MomentVector",
    "empirical_stieltjes",
    "empirical_moments",
    "wasserstein1",
    "density_wasserstein",
    "estimate_support",
    "pool_samples",
    "read_eigenvalues",
    "write_eigenvalues",
]

# Relative distance (in units of spectral width) below which a query point
# is considered to sit on an eigenvalue.
POLE_GUARD = 1e-12

# Number of query points evaluated against the full sample at once. Keeps the
# temporary (chunk x n) Cauchy matrix below roughly 64 MB.
_CHUNK_ENTRIES = 4_000_000


# ============
# Eigen sample
# ============

@dataclass(frozen=True)
class EigenSample:
    """
    Sorted real eigenvalues of a (sub)matrix.

    Parameters
    ----------
    values : array_like
        Eigenvalues. They are sorted on construction.
    source_size : int, optional
        Dimension ``n`` of the matrix the values came from. Defaults to the
        number of values.
    pooled : int, default=1
        Number of equally sized submatrices whose spectra were concatenated.
        The number of values must equal ``source_size * pooled``.
    """

    values: numpy.ndarray
    source_size: int = 0
    pooled: int = 1

    def __post_init__(self):
        vals = numpy.sort(numpy.asarray(self.values, dtype=float).ravel())
        if vals.size == 0:
            raise ValidationError("an eigenvalue sample needs at least one value")
        if not numpy.all(numpy.isfinite(vals)):
            raise ValidationError("eigenvalues must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        size = int(self.source_size) if self.source_size else vals.size // max(
            int(self.pooled), 1)
        if size < 1 or self.pooled < 1:
            raise ValidationError("source_size and pooled must be positive")
        if size * int(self.pooled) != vals.size:
            raise ValidationError(
                f"{vals.size} values do not match source_size={size} "
                f"times pooled={self.pooled}")
        object.__setattr__(self, "source_size", size)
        object.__setattr__(self, "pooled", int(self.pooled))

    def __len__(self) -> int:
        return self.values.size

    @property
    def width(self) -> float:
        """Spread ``max - min``, or 1 for a single repeated value."""
        w = float(self.values[-1] - self.values[0])
        return w if w > 0 else 1.0


def pool_samples(samples: Sequence[EigenSample]) -> EigenSample:
    """
    Concatenate spectra of several equally sized submatrices.

    The pooled sample keeps ``source_size`` equal to the common submatrix
    size, so downstream decompression ratios refer to one submatrix.
    """
    sizes = {s.source_size for s in samples}
    if len(sizes) != 1:
        raise ValidationError("pooled samples must share one source size")
    values = numpy.concatenate([s.values for s in samples])
    return EigenSample(values, source_size=sizes.pop(),
                       pooled=sum(s.pooled for s in samples))


# =============
# Moment vector
# =============

@dataclass(frozen=True)
class MomentVector:
    """Moments ``mu_0, ..., mu_r`` with ``mu_0 = 1``."""

    entries: numpy.ndarray

    def __post_init__(self):
        e = numpy.asarray(self.entries, dtype=float).ravel().copy()
        if e.size < 1:
            raise ValidationError("a moment vector needs mu_0")
        if e[0] != 1.0:
            raise ValidationError(f"mu_0 must be exactly 1, got {e[0]!r}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def order(self) -> int:
        return self.entries.size - 1

    def __len__(self) -> int:
        return self.entries.size

    def __getitem__(self, k):
        return self.entries[k]


# ==========================
# Empirical Stieltjes, moments
# ==========================

def empirical_stieltjes(sample: EigenSample, z):
    """
    Empirical Stieltjes transform ``(1/n) sum 1/(lambda_i - z)``.

    Parameters
    ----------
    sample : EigenSample
    z : complex or array_like of complex

    Returns
    -------
    complex or numpy.ndarray
        Same shape as ``z``.

    Raises
    ------
    PoleError
        If a query lies within ``1e-12 * width`` of an eigenvalue.

    Notes
    -----
    The reduction uses numpy's pairwise summation along the contiguous axis,
    so the rounding error grows like ``log n`` rather than ``n``.
    """
    scalar = numpy.ndim(z) == 0
    zz = numpy.atleast_1d(numpy.asarray(z, dtype=complex)).ravel()
    lam = sample.values
    guard = POLE_GUARD * sample.width

    # Pole check via a sorted search: nearest eigenvalue to each Re(z).
    idx = numpy.searchsorted(lam, zz.real)
    lo = numpy.clip(idx - 1, 0, lam.size - 1)
    hi = numpy.clip(idx, 0, lam.size - 1)
    near = numpy.minimum(numpy.abs(lam[lo] - zz), numpy.abs(lam[hi] - zz))
    if numpy.any(near <= guard):
        bad = zz[numpy.argmin(near)]
        raise PoleError(f"z={bad!r} coincides with an eigenvalue")

    out = numpy.empty(zz.size, dtype=complex)
    chunk = max(1, _CHUNK_ENTRIES // lam.size)
    for start in range(0, zz.size, chunk):
        zc = zz[start:start + chunk]
        kern = 1.0 / (lam[None, :] - zc[:, None])
        out[start:start + chunk] = kern.sum(axis=1) / lam.size
    if scalar:
        return complex(out[0])
    return out.reshape(numpy.shape(z))


def empirical_moments(sample: EigenSample, r: int) -> MomentVector:
    """Power sums ``(1/n) sum lambda_i^p`` for ``p = 0..r``."""
    if r < 0:
        raise DomainError("moment order must be nonnegative")
    lam = sample.values
    entries = numpy.empty(r + 1)
    entries[0] = 1.0
    power = numpy.ones_like(lam)
    for p in range(1, r + 1):
        power = power * lam
        entries[p] = math.fsum(power) / lam.size
    return MomentVector(entries)


# ===================
# Wasserstein metrics
# ===================

def wasserstein1(a: EigenSample, b: EigenSample, log_scale: bool = False) -> float:
    """
    Wasserstein-1 distance between two empirical spectral measures.

    The one-dimensional optimal coupling is the quantile coupling, evaluated
    exactly by :func:`scipy.stats.wasserstein_distance` for unequal sizes.
    With ``log_scale`` the distance is computed between log-eigenvalues.
    """
    va, vb = a.values, b.values
    if log_scale:
        if va[0] <= 0 or vb[0] <= 0:
            raise DomainError("log-scale W1 needs strictly positive eigenvalues")
        va, vb = numpy.log(va), numpy.log(vb)
    return float(scipy.stats.wasserstein_distance(va, vb))


def density_wasserstein(sample: EigenSample, grid,
                        atoms: Iterable[tuple[float, float]] = ()) -> float:
    """
    Normalized W1 distance between a sample and a tabulated density.

    Parameters
    ----------
    sample : EigenSample
    grid : DensityGrid
        Any object with ascending ``lambdas`` and nonnegative ``rho``. The
        density integrates to the non-atomic mass.
    atoms : iterable of (location, weight), optional
        Point masses added to the grid measure. If omitted, the atoms stored
        on the grid (attribute ``atoms``) are used when present.

    Returns
    -------
    float
        ``W1 / L`` with ``L`` the width of the grid.

    Notes
    -----
    The grid CDF is the cumulative trapezoid rule, linear between nodes. The
    distance is the integral of ``|F_grid - F_sample|`` evaluated exactly for
    this piecewise-linear against piecewise-constant pair.
    """
    lam = numpy.asarray(grid.lambdas, dtype=float)
    rho = numpy.asarray(grid.rho, dtype=float)
    width = float(lam[-1] - lam[0]) if lam.size > 1 else 0.0
    if width <= 0:
        raise DomainError("density grid has zero width")
    atoms = list(atoms) or list(getattr(grid, "atoms", ()) or ())

    cum = numpy.concatenate(
        [[0.0], numpy.cumsum(0.5 * (rho[1:] + rho[:-1]) * numpy.diff(lam))])
    atom_x = numpy.array([float(x) for x, _ in atoms])
    atom_w = numpy.array([float(w) for _, w in atoms])

    vals = sample.values
    knots = numpy.unique(numpy.concatenate([lam, vals, atom_x]))
    # Between consecutive knots the sample CDF is constant and the grid CDF
    # is linear (atoms sit on knots and only act from their location on),
    # so |F - G| is integrated exactly after splitting at its zero crossing.
    left, right = knots[:-1], knots[1:]
    jump = numpy.zeros_like(left)
    if atom_x.size:
        jump = (atom_w[None, :] * (left[:, None] >= atom_x[None, :])).sum(1)
    g_left = numpy.interp(left, lam, cum, left=0.0, right=cum[-1]) + jump
    g_right = numpy.interp(right, lam, cum, left=0.0, right=cum[-1]) + jump
    s = numpy.searchsorted(vals, left, side="right") / vals.size
    d0 = g_left - s
    d1 = g_right - s
    h = right - left
    same = d0 * d1 >= 0
    area = numpy.where(same, 0.5 * numpy.abs(d0 + d1) * h, 0.0)
    denom = numpy.abs(d0) + numpy.abs(d1)
    cross = ~same & (denom > 0)
    area[cross] = 0.5 * h[cross] * (d0[cross] ** 2 + d1[cross] ** 2) / denom[cross]
    return float(area.sum()) / width


# =================
# Support detection
# =================

def estimate_support(sample: EigenSample, gap_factor: float = 10.0,
                     min_gap_fraction: float = 0.02,
                     atom_fraction: float = 0.01,
                     atom_tol: float = 1e-8):
    """
    Split a sample into bulk intervals and atoms.

    Atoms are clusters of at least ``atom_fraction`` of the values lying
    within ``atom_tol * width`` of each other. Remaining values are split
    into bulks wherever a spacing exceeds both ``gap_factor`` times the
    median spacing and ``min_gap_fraction`` of the total width.

    Returns
    -------
    bulks : list of (float, float)
    atoms : list of (float, float)
        Atom location and the fraction of values at it.
    """
    vals = sample.values
    n = vals.size
    scale = max(float(numpy.max(numpy.abs(vals))), 1e-300)
    tol = atom_tol * scale

    atoms = []
    keep = numpy.ones(n, dtype=bool)
    breaks = numpy.flatnonzero(numpy.diff(vals) > tol)
    starts = numpy.concatenate([[0], breaks + 1])
    stops = numpy.concatenate([breaks + 1, [n]])
    for a, b in zip(starts, stops):
        if b - a >= max(3, atom_fraction * n):
            atoms.append((float(numpy.mean(vals[a:b])), (b - a) / n))
            keep[a:b] = False

    rest = vals[keep]
    bulks = []
    if rest.size >= 2:
        gaps = numpy.diff(rest)
        width = float(rest[-1] - rest[0])
        med = float(numpy.median(gaps)) if gaps.size else 0.0
        thresh = max(gap_factor * med, min_gap_fraction * width)
        cut = numpy.flatnonzero(gaps > thresh)
        edges = numpy.concatenate([[0], cut + 1])
        ends = numpy.concatenate([cut, [rest.size - 1]])
        for a, b in zip(edges, ends):
            if b > a:
                bulks.append((float(rest[a]), float(rest[b])))
    elif rest.size == 1:
        bulks.append((float(rest[0]), float(rest[0])))
    return bulks, atoms


# ===========
# File format
# ===========

def read_eigenvalues(path) -> EigenSample:
    """
    Read the eigenvalue text format.

    One decimal float per line, UTF-8. An optional ``# size: <n>`` comment
    sets the source size; other ``#`` lines and blank lines are ignored.
    """
    size = None
    values = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#"):
            body = text[1:].strip()
            if body.lower().startswith("size:"):
                size = int(body.split(":", 1)[1].strip())
            continue
        try:
            values.append(float(text))
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: not a number: {text!r}") from None
    if size is not None and len(values) % size == 0 and len(values) != size:
        return EigenSample(numpy.array(values), source_size=size,
                           pooled=len(values) // size)
    return EigenSample(numpy.array(values), source_size=size or len(values))


def write_eigenvalues(path, sample: EigenSample) -> None:
    """Write the eigenvalue text format at 17 significant digits."""
    lines = [f"# size: {sample.source_size}"]
    lines.extend(f"{v:.17g}" for v in sample.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
