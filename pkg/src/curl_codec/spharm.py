"""Real spherical harmonics: basis evaluation and least-squares fitting.

Column ``j - 1`` of a basis matrix holds degree ``l`` / order ``m`` with
``j = l*l + l + m + 1``, so the first ``(l+1)**2`` columns of a degree-L
basis are exactly the degree-l basis. The encoder relies on that nesting.

The real basis functions are

* ``m = 0``: ``N(l, 0) P_l^0(cos polar)``
* ``m > 0``: ``sqrt(2) N(l, m) P_l^m(cos polar) cos(m azimuth)``
* ``m < 0``: ``sqrt(2) N(l, |m|) P_l^|m|(cos polar) sin(|m| azimuth)``

where ``N(l, m) = (-1)^m sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!)`` and ``P`` carries
the Condon-Shortley phase, so the two signs cancel exactly once and every
basis function is positive near the +x axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit, use_numba
from .errors import NumericalFailure

MAX_DEGREE = 64


def n_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def sh_index(l: int, m: int) -> int:
    """1-based flat index of (l, m)."""
    if l < 0 or abs(m) > l:
        raise ValueError(f"invalid (l, m) = ({l}, {m})")
    return l * l + l + m + 1


def sh_degree_order(j: int) -> tuple[int, int]:
    if j < 1:
        raise ValueError("flat index starts at 1")
    l = math.isqrt(j - 1)
    return l, j - 1 - l * l - l


def legendre_assoc(l: int, m: int, x: float) -> float:
    """Associated Legendre ``P_l^m(x)`` with the Condon-Shortley phase.

    Plain three-term recurrence in ``l``; fine for moderate degrees. The
    basis functions use a normalised variant that stays finite to l = 64.
    """
    if not 0 <= m <= l:
        raise ValueError("need 0 <= m <= l")
    if abs(x) > 1.0:
        raise ValueError("need |x| <= 1")
    pmm = 1.0
    if m > 0:
        s = math.sqrt((1.0 - x) * (1.0 + x))
        fact = 1.0
        for _ in range(m):
            pmm *= -fact * s
            fact += 2.0
    if l == m:
        return pmm
    pm1 = x * (2 * m + 1) * pmm
    if l == m + 1:
        return pm1
    for ll in range(m + 2, l + 1):
        pll = ((2 * ll - 1) * x * pm1 - (ll + m - 1) * pmm) / (ll - m)
        pmm, pm1 = pm1, pll
    return pm1


def normalisation(l: int, m: int) -> float:
    """``N(l, m)`` including the ``(-1)^m`` prefactor."""
    return (-1) ** m * math.sqrt(
        (2 * l + 1) / (4 * math.pi) * math.exp(math.lgamma(l - m + 1) - math.lgamma(l + m + 1))
    )


@njit
def _basis_numba(polar, azimuth, degree):
    n = polar.shape[0]
    k = (degree + 1) * (degree + 1)
    out = np.zeros((n, k))
    sqrt2 = math.sqrt(2.0)
    p = np.empty((degree + 1, degree + 1))
    for i in range(n):
        x = math.cos(polar[i])
        s = math.sin(polar[i])
        p[0, 0] = 0.5 / math.sqrt(math.pi)
        for m in range(1, degree + 1):
            p[m, m] = math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * p[m - 1, m - 1]
        for m in range(0, degree):
            p[m + 1, m] = math.sqrt(2.0 * m + 3.0) * x * p[m, m]
        for m in range(0, degree + 1):
            for l in range(m + 2, degree + 1):
                a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b = math.sqrt(((l - 1.0) * (l - 1.0) - m * m) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0))
                p[l, m] = a * (x * p[l - 1, m] - b * p[l - 2, m])
        for l in range(degree + 1):
            c = l * l + l
            out[i, c] = p[l, 0]
            for m in range(1, l + 1):
                cm = math.cos(m * azimuth[i])
                sm = math.sin(m * azimuth[i])
                out[i, c + m] = sqrt2 * p[l, m] * cm
                out[i, c - m] = sqrt2 * p[l, m] * sm
    return out


def _basis_numpy(polar, azimuth, degree):
    n = polar.shape[0]
    out = np.zeros((n, n_coeffs(degree)))
    x = np.cos(polar)
    s = np.sin(polar)
    sqrt2 = math.sqrt(2.0)
    p = {(0, 0): np.full(n, 0.5 / math.sqrt(math.pi))}
    for m in range(1, degree + 1):
        p[m, m] = math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * p[m - 1, m - 1]
    for m in range(degree):
        p[m + 1, m] = math.sqrt(2.0 * m + 3.0) * x * p[m, m]
    for m in range(degree + 1):
        for l in range(m + 2, degree + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[l, m] = a * (x * p[l - 1, m] - b * p[l - 2, m])
    for m in range(1, degree + 1):
        cm = np.cos(m * azimuth)
        sm = np.sin(m * azimuth)
        for l in range(m, degree + 1):
            c = l * l + l
            out[:, c + m] = sqrt2 * p[l, m] * cm
            out[:, c - m] = sqrt2 * p[l, m] * sm
    for l in range(degree + 1):
        out[:, l * l + l] = p[l, 0]
    return out


def sh_basis(polar, azimuth, degree: int, backend: str | None = None) -> np.ndarray:
    """(n, (degree+1)**2) real basis matrix at the given angles."""
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"degree must lie in [0, {MAX_DEGREE}]")
    polar = np.ascontiguousarray(polar, dtype=np.float64).reshape(-1)
    azimuth = np.ascontiguousarray(azimuth, dtype=np.float64).reshape(-1)
    if polar.shape != azimuth.shape:
        raise ValueError("polar and azimuth lengths differ")
    backend = backend or ("numba" if use_numba() else "numpy")
    if backend == "numba":
        return _basis_numba(polar, azimuth, degree)
    return _basis_numpy(polar, azimuth, degree)


def sh_basis_row(polar: float, azimuth: float, degree: int) -> np.ndarray:
    return sh_basis(np.array([polar]), np.array([azimuth]), degree)[0]


@dataclass
class ShCoefficients:
    degree: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(self.values) != n_coeffs(self.degree):
            raise ValueError(
                f"degree {self.degree} needs {n_coeffs(self.degree)} coefficients, "
                f"got {len(self.values)}"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("coefficients must be finite")


def solve_least_squares(Y: np.ndarray, f: np.ndarray, weights=None, rcond=None) -> np.ndarray:
    """Minimum-norm least-squares solution of ``Y c = f`` via SVD."""
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=np.float64))
        Y = Y * w[:, None]
        f = f * w
    if not (np.isfinite(Y).all() and np.isfinite(f).all()):
        raise NumericalFailure("least-squares system has non-finite entries")
    try:
        c, *_ = np.linalg.lstsq(Y, f, rcond=rcond)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"least-squares solve failed: {exc}") from exc
    if not np.isfinite(c).all():
        raise NumericalFailure("least-squares solve produced non-finite coefficients")
    return c


def fit_least_squares(polar, azimuth, targets, degree: int, weights=None, rcond=None):
    """Fit coefficients of the given degree to samples ``targets``.

    Returns ``(ShCoefficients, mean absolute residual)``.
    """
    f = np.asarray(targets, dtype=np.float64).reshape(-1)
    if len(f) == 0:
        raise ValueError("need at least one sample")
    if not np.isfinite(f).all():
        raise ValueError("targets must be finite")
    Y = sh_basis(polar, azimuth, degree)
    c = solve_least_squares(Y, f, weights, rcond)
    return ShCoefficients(degree, c), float(np.mean(np.abs(Y @ c - f)))


def evaluate(coeffs: ShCoefficients, polar, azimuth) -> np.ndarray:
    return sh_basis(polar, azimuth, coeffs.degree) @ coeffs.values
