"""Block-exchangeable correlation structure for four-level hierarchical designs.

Observations are nested as patients within providers within facilities within
clusters.  The correlation between two observations in the same cluster
depends only on the closest level they share: alpha0 for the same provider,
alpha1 for the same facility but different providers, alpha2 for different
facilities.  With m facilities per cluster, k providers per facility and l
patients per provider the cluster correlation matrix is

    R = (1 - a0) I_mkl + (a0 - a1) I_mk (x) J_l
        + (a1 - a2) I_m (x) J_kl + a2 J_mkl

where (x) is the Kronecker product and J a square matrix of ones.  R has at
most four distinct eigenvalues available in closed form, so validity checks,
inversion and quadratic forms never need dense linear algebra.  Dense
construction is still offered for oracles, data generation and unbalanced
fallbacks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapExceededError, InvalidCorrelationError

# Strict positive definiteness floor for the smallest eigenvalue. Guards
# downstream solves against numerically singular working matrices.
VALIDITY_FLOOR = 1e-12

# Two eigenvalues closer than this are reported as repeated.
REPEAT_TOL = 1e-8

# Default guard for dense construction (matrix side, i.e. m*k*l).
DENSE_CAP = 10_000

_LAMBDA_NAMES = ("lambda1", "lambda2", "lambda3", "lambda4")


@dataclass(frozen=True)
class CorrelationParams:
    """ICC triple (alpha0, alpha1, alpha2).

    alpha0: same provider; alpha1: same facility, different providers;
    alpha2: same cluster, different facilities.  Values must lie in [0, 1];
    joint validity for given dimensions is a separate check (is_valid), so
    boundary triples like (0, 1, 0) are constructible and then rejected there.
    """

    alpha0: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        for name in ("alpha0", "alpha1", "alpha2"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            if value < 0.0 or value > 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha0, self.alpha1, self.alpha2)


@dataclass(frozen=True)
class BlockDims:
    """Balanced per-cluster block dimensions.

    m: facilities per cluster, k: providers per facility, l: patients per
    provider.  Any dimension may be 1, which collapses that level and zeroes
    the matching eigenvalue multiplicity.
    """

    m: int
    k: int
    l: int

    def __post_init__(self):
        for name in ("m", "k", "l"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ValueError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")

    @property
    def size(self) -> int:
        return self.m * self.k * self.l

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.m, self.k, self.l)


@dataclass(frozen=True)
class EigenSpectrum:
    """The four closed-form eigenvalues of R with their multiplicities."""

    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float
    mult1: int
    mult2: int
    mult3: int
    mult4: int

    @property
    def values(self) -> tuple[float, float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3, self.lambda4)

    @property
    def multiplicities(self) -> tuple[int, int, int, int]:
        return (self.mult1, self.mult2, self.mult3, self.mult4)

    @property
    def min_value(self) -> float:
        return min(self.values)

    def for_level(self, r: int) -> float:
        """Eigenvalue lambda_r matched to randomization level r in {1,2,3,4}."""
        if r not in (1, 2, 3, 4):
            raise ValueError(f"randomization level must be 1..4, got {r}")
        return self.values[r - 1]

    def repeated_pairs(self, tol: float = REPEAT_TOL) -> tuple[tuple[str, str], ...]:
        """Pairs of eigenvalue names equal within tol (diagnostic only)."""
        pairs = []
        for i in range(4):
            for j in range(i + 1, 4):
                if abs(self.values[i] - self.values[j]) <= tol:
                    pairs.append((_LAMBDA_NAMES[i], _LAMBDA_NAMES[j]))
        return tuple(pairs)


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of the positive definiteness check with named diagnostics."""

    valid: bool
    spectrum: EigenSpectrum
    violations: tuple[str, ...]
    repeated: tuple[tuple[str, str], ...]

    def __bool__(self) -> bool:
        return self.valid


def eigen_spectrum(params: CorrelationParams, dims: BlockDims) -> EigenSpectrum:
    """Closed-form eigenvalues of the block-exchangeable correlation matrix.

    lambda1 = 1 - a0                                     (mult m k (l-1))
    lambda2 = 1 + (l-1) a0 - l a1                        (mult m (k-1))
    lambda3 = 1 + (l-1) a0 + l (k-1) a1 - l k a2         (mult m-1)
    lambda4 = 1 + (l-1) a0 + l (k-1) a1 + l k (m-1) a2   (mult 1)
    """
    a0, a1, a2 = params.as_tuple()
    m, k, l = dims.as_tuple()
    lam1 = 1.0 - a0
    lam2 = 1.0 + (l - 1) * a0 - l * a1
    lam3 = 1.0 + (l - 1) * a0 + l * (k - 1) * a1 - l * k * a2
    lam4 = 1.0 + (l - 1) * a0 + l * (k - 1) * a1 + l * k * (m - 1) * a2
    return EigenSpectrum(
        lambda1=lam1,
        lambda2=lam2,
        lambda3=lam3,
        lambda4=lam4,
        mult1=m * k * (l - 1),
        mult2=m * (k - 1),
        mult3=m - 1,
        mult4=1,
    )


def is_valid(params: CorrelationParams, dims: BlockDims) -> ValidityReport:
    """Check positive definiteness of R for the given dimensions.

    Valid iff every eigenvalue exceeds the VALIDITY_FLOOR.  Violations name
    the offending eigenvalue; repeated eigenvalues are surfaced as
    diagnostics without affecting validity.
    """
    spec = eigen_spectrum(params, dims)
    violations = []
    for name, value, mult in zip(_LAMBDA_NAMES, spec.values, spec.multiplicities):
        # An eigenvalue with zero multiplicity does not occur in R and
        # cannot invalidate it (collapsed level).
        if mult > 0 and value <= VALIDITY_FLOOR:
            violations.append(f"{name} = {value:.6g} <= 0")
    return ValidityReport(
        valid=not violations,
        spectrum=spec,
        violations=tuple(violations),
        repeated=spec.repeated_pairs(),
    )


def require_valid(params: CorrelationParams, dims: BlockDims) -> ValidityReport:
    """is_valid that raises InvalidCorrelationError on failure."""
    report = is_valid(params, dims)
    if not report:
        raise InvalidCorrelationError(report)
    return report


def _class_matrix(dims: BlockDims, diag: float, w0: float, w1: float, w2: float,
                  cap: int) -> np.ndarray:
    """Dense matrix with value diag on the diagonal, w0 for same-provider
    pairs, w1 for same-facility different-provider pairs, w2 elsewhere."""
    n = dims.size
    if n > cap:
        raise CapExceededError(
            f"dense matrix of size {n} exceeds cap {cap}; raise the cap "
            f"explicitly if this is intended"
        )
    m, k, l = dims.as_tuple()
    out = np.full((n, n), w2, dtype=float)
    kl = k * l
    for i in range(m):
        fac = slice(i * kl, (i + 1) * kl)
        out[fac, fac] = w1
        for j in range(k):
            prov = slice(i * kl + j * l, i * kl + (j + 1) * l)
            out[prov, prov] = w0
    np.fill_diagonal(out, diag)
    return out


def build_matrix(params: CorrelationParams, dims: BlockDims,
                 cap: int = DENSE_CAP) -> np.ndarray:
    """Dense correlation matrix R (unit diagonal, symmetric).

    Guarded by cap on the matrix side m*k*l; validity is not required here
    so that invalid triples can be inspected numerically.
    """
    a0, a1, a2 = params.as_tuple()
    return _class_matrix(dims, 1.0, a0, a1, a2, cap)


def inverse_blocks(params: CorrelationParams, dims: BlockDims
                   ) -> tuple[float, float, float, float]:
    """Coefficients (a, b, c, e) of the closed-form inverse

        R^{-1} = a I + b I_mk (x) J_l + c I_m (x) J_kl + e J

    so that applying R^{-1} to a vector only needs provider sums, facility
    sums and the cluster total.  Requires a valid triple.
    """
    report = require_valid(params, dims)
    lam1, lam2, lam3, lam4 = report.spectrum.values
    a0, a1, a2 = params.as_tuple()
    a = 1.0 / lam1
    b = -(a0 - a1) / (lam1 * lam2)
    c = -(a1 - a2) / (lam2 * lam3)
    e = -a2 / (lam3 * lam4)
    return (a, b, c, e)


def inverse_matrix(params: CorrelationParams, dims: BlockDims,
                   cap: int = DENSE_CAP) -> np.ndarray:
    """Dense closed-form inverse of the correlation matrix."""
    a, b, c, e = inverse_blocks(params, dims)
    # Pair-class values: the J blocks include the diagonal, so the four
    # coefficients accumulate from the widest class inward.
    diag = a + b + c + e
    same_provider = b + c + e
    same_facility = c + e
    return _class_matrix(dims, diag, same_provider, same_facility, e, cap)


def inverse_quadratic_sum(params: CorrelationParams, dims: BlockDims) -> float:
    """Closed form of 1' R^{-1} 1, which equals m*k*l / lambda4."""
    report = require_valid(params, dims)
    return dims.size / report.spectrum.lambda4
