"""
Closed-form free-probability laws and matrix samplers.

Every law here is algebraic: its Stieltjes transform satisfies a polynomial
relation ``P(z, m) = 0`` obtained by clearing denominators in
``R(-m) - 1/m = z``. The samplers realize the same laws as random symmetric
matrices for end-to-end checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy
import scipy.linalg

from .curvefit import BivariatePoly
from .errors import ParameterError, ResourceLimitError, ValidationError
from .spectra import EigenSample

__all__ = [
    "FreeLevyParams",
    "MP",
    "CFP",
    "FreeLevy",
    "PenningtonBahri",
    "MatrixSampleSpec",
    "mp_polynomial",
    "cfp_polynomial",
    "free_levy_polynomial",
    "pennington_bahri_polynomial",
    "semicircle_polynomial",
    "model_polynomial",
    "sample_matrix",
    "subsample_principal",
    "symmetric_eigenvalues",
    "write_matrix",
    "read_matrix",
    "DENSE_SOLVER_CAP",
    "MEMORY_CAP_BYTES",
]

#: Largest dimension handed to the dense symmetric eigensolver.
DENSE_SOLVER_CAP = 16384

#: Largest dense matrix (in bytes) the sampler will allocate.
MEMORY_CAP_BYTES = 3 * 1024 ** 3


# ==========
# Parameters
# ==========

@dataclass(frozen=True)
class FreeLevyParams:
    """
    Free Levy law with R-transform ``a + sigma^2 w + rate sum w_i t_i/(1 - t_i w)``.
    """

    a: float = 0.0
    sigma: float = 0.0
    rate: float = 1.0
    atoms: tuple[float, ...] = (1.0,)
    weights: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        atoms = tuple(float(t) for t in self.atoms)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)
        if self.sigma < 0:
            raise ParameterError("sigma must be nonnegative")
        if not self.rate > 0:
            raise ParameterError("rate must be positive")
        if len(atoms) != len(weights) or not atoms:
            raise ParameterError("atoms and weights must be nonempty and of equal length")
        if any(t == 0 for t in atoms):
            raise ParameterError("atoms must be nonzero")
        if len(set(atoms)) != len(atoms):
            raise ParameterError("atoms must be pairwise distinct")
        if any(w <= 0 for w in weights):
            raise ParameterError("weights must be positive")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ParameterError("weights must sum to 1")


@dataclass(frozen=True)
class MP:
    """Marchenko-Pastur law with ratio ``lam`` and scale ``sigma2``."""

    lam: float
    sigma2: float = 1.0


@dataclass(frozen=True)
class CFP:
    """Compound free Poisson law (free Levy with zero drift and sigma)."""

    params: FreeLevyParams


@dataclass(frozen=True)
class FreeLevy:
    params: FreeLevyParams


@dataclass(frozen=True)
class PenningtonBahri:
    """Wishart plus Wigner sum with ratio ``lam`` and Wigner variance ``2 eps``."""

    lam: float
    eps: float


Model = Union[MP, CFP, FreeLevy, PenningtonBahri]


@dataclass(frozen=True)
class MatrixSampleSpec:
    n: int
    seed: int
    model: Model

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError("matrix dimension must be at least 2")


# ====================
# Algebraic relations
# ====================

def _poly_from_m_coeffs(a_m: Sequence[Sequence[float]]) -> BivariatePoly:
    """Build from ``a_m[j] = [c_0j, c_1j, ...]`` (coefficients of ``a_j(z)``)."""
    dz = max(len(col) for col in a_m) - 1
    grid = numpy.zeros((dz + 1, len(a_m)))
    for j, col in enumerate(a_m):
        grid[: len(col), j] = col
    return BivariatePoly(grid)


def mp_polynomial(lam: float, sigma2: float) -> BivariatePoly:
    """``lam sigma2 z m^2 + (z - sigma2 (1 - lam)) m + 1``."""
    if not (lam > 0 and sigma2 > 0):
        raise ParameterError("lambda and sigma^2 must be positive")
    return _poly_from_m_coeffs([[1.0], [-sigma2 * (1.0 - lam), 1.0],
                                [0.0, lam * sigma2]])


def semicircle_polynomial(variance: float = 1.0, center: float = 0.0) -> BivariatePoly:
    """``variance m^2 + (z - center) m + 1`` (semicircle of radius ``2 sqrt(variance)``)."""
    if not variance > 0:
        raise ParameterError("variance must be positive")
    return _poly_from_m_coeffs([[1.0], [-center, 1.0], [variance]])


def _m_poly_mul(p: list[list[float]], q: list[list[float]]) -> list[list[float]]:
    # Multiply polynomials in m whose coefficients are polynomials in z.
    out = [[0.0] for _ in range(len(p) + len(q) - 1)]
    for j, pj in enumerate(p):
        for k, qk in enumerate(q):
            prod = numpy.convolve(pj, qk)
            cur = out[j + k]
            size = max(len(cur), prod.size)
            acc = numpy.zeros(size)
            acc[: len(cur)] += cur
            acc[: prod.size] += prod
            out[j + k] = list(acc)
    return out


def _m_poly_add(p, q):
    out = []
    for j in range(max(len(p), len(q))):
        a = p[j] if j < len(p) else [0.0]
        b = q[j] if j < len(q) else [0.0]
        size = max(len(a), len(b))
        acc = numpy.zeros(size)
        acc[: len(a)] += a
        acc[: len(b)] += b
        out.append(list(acc))
    return out


def free_levy_polynomial(params: FreeLevyParams) -> BivariatePoly:
    """
    ``(sigma^2 m^2 + (z - a) m + 1) prod(1 + t_i m)
    - rate m sum_i w_i t_i prod_{k != i}(1 + t_k m)``.

    For ``sigma = 0`` the ``m``-degree drops to ``r + 1``.
    """
    t = params.atoms
    w = params.weights
    base = [[1.0], [-params.a, 1.0], [params.sigma ** 2]]
    prod_all = [[1.0]]
    for ti in t:
        prod_all = _m_poly_mul(prod_all, [[1.0], [ti]])
    first = _m_poly_mul(base, prod_all)
    second = [[0.0]]
    for i, ti in enumerate(t):
        term = [[0.0], [-params.rate * w[i] * ti]]
        for k, tk in enumerate(t):
            if k != i:
                term = _m_poly_mul(term, [[1.0], [tk]])
        second = _m_poly_add(second, term)
    return _poly_from_m_coeffs(_m_poly_add(first, second))


def cfp_polynomial(params: FreeLevyParams) -> BivariatePoly:
    """
    Two-atom compound free Poisson cubic.

    ``a_3 = z t1 t2``, ``a_2 = z (t1 + t2) + (1 - rate) t1 t2``,
    ``a_1 = z + t1 + t2 - rate (w1 t1 + w2 t2)``, ``a_0 = 1``.
    """
    if len(params.atoms) != 2:
        raise ParameterError("the compound free Poisson cubic needs exactly two atoms")
    if params.a != 0 or params.sigma != 0:
        raise ParameterError("drift and sigma must vanish for compound free Poisson")
    (t1, t2), (w1, w2), lam = params.atoms, params.weights, params.rate
    return _poly_from_m_coeffs([
        [1.0],
        [t1 + t2 - lam * (w1 * t1 + w2 * t2), 1.0],
        [(1.0 - lam) * t1 * t2, t1 + t2],
        [0.0, t1 * t2],
    ])


def pennington_bahri_polynomial(lam: float, epsilon: float,
                                route: str = "direct") -> BivariatePoly:
    """
    ``2 eps lam m^3 + (lam z + 2 eps) m^2 + (z - 1 + lam) m + 1``.

    ``route="levy"`` builds the same relation through
    :func:`free_levy_polynomial` with ``sigma^2 = 2 eps``, rate ``1/lam`` and
    one atom ``t = lam``.
    """
    if not (0 < lam <= 1):
        raise ParameterError("lambda must lie in (0, 1]")
    if epsilon < 0:
        raise ParameterError("epsilon must be nonnegative")
    if route == "levy":
        return free_levy_polynomial(FreeLevyParams(
            a=0.0, sigma=math.sqrt(2.0 * epsilon), rate=1.0 / lam,
            atoms=(lam,), weights=(1.0,)))
    if route != "direct":
        raise ParameterError(f"unknown route {route!r}")
    return _poly_from_m_coeffs([[1.0], [lam - 1.0, 1.0], [2.0 * epsilon, lam],
                                [2.0 * epsilon * lam]])


def model_polynomial(model: Model) -> BivariatePoly:
    """Exact relation of a sampler model."""
    if isinstance(model, MP):
        return mp_polynomial(model.lam, model.sigma2)
    if isinstance(model, CFP):
        if len(model.params.atoms) == 2:
            return cfp_polynomial(model.params)
        return free_levy_polynomial(model.params)
    if isinstance(model, FreeLevy):
        return free_levy_polynomial(model.params)
    if isinstance(model, PenningtonBahri):
        return pennington_bahri_polynomial(model.lam, model.eps)
    raise ParameterError(f"unknown model {model!r}")


# ========
# Sampling
# ========

def _rng(seed: int) -> numpy.random.Generator:
    # Philox is counter based, so streams are identical across platforms.
    return numpy.random.Generator(numpy.random.Philox(int(seed)))


def _population(params: FreeLevyParams, p: int) -> numpy.ndarray:
    counts = [int(math.floor(w * p)) for w in params.weights]
    counts[int(numpy.argmax(params.weights))] += p - sum(counts)
    return numpy.repeat(numpy.array(params.atoms), counts)


def _companion_params(model: Model) -> tuple[FreeLevyParams, float]:
    """Jump part of the law and the Wigner scale for additive models."""
    if isinstance(model, MP):
        return FreeLevyParams(rate=1.0 / model.lam, atoms=(model.lam * model.sigma2,),
                              weights=(1.0,)), 0.0
    if isinstance(model, CFP):
        return model.params, 0.0
    if isinstance(model, FreeLevy):
        return model.params, model.params.sigma
    if isinstance(model, PenningtonBahri):
        return FreeLevyParams(rate=1.0 / model.lam, atoms=(model.lam,),
                              weights=(1.0,)), math.sqrt(2.0 * model.eps)
    raise ParameterError(f"unknown model {model!r}")


def sample_matrix(spec: MatrixSampleSpec, memory_cap: int | None = None,
                  block: int = 1024) -> numpy.ndarray:
    """
    Draw a symmetric matrix realizing ``spec.model``.

    The jump part is the companion covariance ``Z^T Sigma Z`` with ``Z`` of
    shape ``(p, n)``, iid ``N(0, 1/n)`` entries, ``p = round(rate n)``
    (half to even) and a deterministic diagonal ``Sigma`` holding
    ``floor(w_i p)`` copies of ``t_i`` (the remainder goes to the heaviest
    atom). Additive models add ``a I + sigma W`` with ``W`` a Wigner matrix
    whose entries have variance ``1/n`` off the diagonal.

    Raises
    ------
    ResourceLimitError
        If the dense ``n x n`` matrix exceeds the memory cap.
    """
    n = int(spec.n)
    cap = MEMORY_CAP_BYTES if memory_cap is None else int(memory_cap)
    if 8 * n * n > cap:
        raise ResourceLimitError(f"a {n}x{n} float64 matrix needs {8 * n * n} bytes, "
                                 f"above the cap of {cap}")
    params, sigma = _companion_params(spec.model)
    drift = params.a if isinstance(spec.model, FreeLevy) else 0.0
    rng = _rng(spec.seed)
    p = int(round(params.rate * n))
    if p < 1:
        raise ParameterError("rate * n rounds to zero population columns")
    pop = _population(params, p)
    signs = numpy.sign(pop)
    root = numpy.sqrt(numpy.abs(pop))

    # Rows of Z are drawn in blocks that continue one Philox stream, so the
    # matrix does not depend on the block size while peak memory stays near
    # one n x n array.
    A = numpy.zeros((n, n))
    rows_per_block = max(1, (32 * 1024 ** 2) // (8 * n))
    for r0 in range(0, p, rows_per_block):
        r1 = min(r0 + rows_per_block, p)
        X = rng.standard_normal((r1 - r0, n)) / math.sqrt(n)
        X *= root[r0:r1, None]
        SX = X * signs[r0:r1, None]
        for i0 in range(0, n, block):
            i1 = min(i0 + block, n)
            A[i0:i1] += X[:, i0:i1].T @ SX
    if sigma > 0:
        scale = sigma / math.sqrt(n)
        for i0 in range(0, n, block):
            i1 = min(i0 + block, n)
            rows = rng.standard_normal((i1 - i0, n - i0)) * scale
            diag = rows[:, : i1 - i0]
            A[i0:i1, i0:i1] += numpy.triu(diag) + numpy.triu(diag, 1).T
            A[i0:i1, i1:] += rows[:, i1 - i0:]
            A[i1:, i0:i1] += rows[:, i1 - i0:].T
    if drift:
        A[numpy.diag_indices(n)] += drift
    return A


def subsample_principal(matrix: numpy.ndarray, k: int, seed: int) -> numpy.ndarray:
    """Principal ``k x k`` submatrix on ``k`` indices drawn without replacement."""
    n = matrix.shape[0]
    if not (1 <= k <= n):
        raise ParameterError(f"k={k} outside 1..{n}")
    idx = numpy.sort(_rng(seed).choice(n, size=k, replace=False))
    return numpy.array(matrix[numpy.ix_(idx, idx)])


def symmetric_eigenvalues(matrix: numpy.ndarray, cap: int | None = None,
                          overwrite: bool = False) -> EigenSample:
    """
    Ascending eigenvalues from LAPACK's divide-and-conquer symmetric solver.

    Raises
    ------
    ValidationError
        Non-square or non-symmetric input.
    ResourceLimitError
        Dimension above the dense solver cap.
    """
    A = numpy.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("matrix must be square")
    n = A.shape[0]
    cap = DENSE_SOLVER_CAP if cap is None else cap
    if n > cap:
        raise ResourceLimitError(f"dimension {n} exceeds the dense solver cap {cap}")
    norm = float(numpy.max(numpy.sum(numpy.abs(A), axis=1)))
    asym = 0.0
    for i0 in range(0, n, 1024):
        i1 = min(i0 + 1024, n)
        asym = max(asym, float(numpy.max(numpy.abs(A[i0:i1] - A[:, i0:i1].T))))
    if asym > 1e-10 * max(norm, 1e-300):
        raise ValidationError("matrix is not symmetric")
    # A C-ordered symmetric array is its own Fortran-ordered transpose, so
    # passing A.T lets LAPACK work in place without a copy.
    vals = scipy.linalg.eigvalsh(A.T if A.flags.c_contiguous else A,
                                 overwrite_a=overwrite, check_finite=False,
                                 driver="evd")
    return EigenSample(vals, source_size=n)


# =========
# Matrix IO
# =========

def write_matrix(path, matrix: numpy.ndarray) -> None:
    """Binary format: little-endian uint64 dimension, then float64 row-major."""
    A = numpy.ascontiguousarray(matrix, dtype="<f8")
    n = A.shape[0]
    with open(path, "wb") as fh:
        fh.write(numpy.uint64(n).astype("<u8").tobytes())
        A.tofile(fh)


def read_matrix(path) -> numpy.ndarray:
    with open(path, "rb") as fh:
        n = int(numpy.frombuffer(fh.read(8), dtype="<u8")[0])
        data = numpy.fromfile(fh, dtype="<f8", count=n * n)
    if data.size != n * n:
        raise ValidationError("matrix file is truncated")
    return data.reshape(n, n)
