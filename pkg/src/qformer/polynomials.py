"""Polynomial approximation toolbox and polynomial transforms of encodings.

Covers truncated-series approximations of exp, erf and the smooth-gated
activation built from erf, an eigenvalue transform that simulates the effect
of singular-value transformation by exact diagonalization, and the
element-wise polynomial construction realized through repeated entrywise
squaring plus a linear combination.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from . import encoding, linalg
from .errors import (
    ContractViolationError,
    DegenerateError,
    InvalidInputError,
    UnreachablePrecisionError,
)

GRID_POINTS = 10_001        # measurement grid for approximation reports
TRANSFORM_GRID = 4_097      # boundedness grid for the eigenvalue transform
MAX_SERIES_DEGREE = 400


@dataclass(frozen=True)
class Polynomial:
    """Real-coefficient polynomial c0 + c1 x + ... in ascending order."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        nz = np.nonzero(c)[0]
        c = c[: nz[-1] + 1] if nz.size else np.zeros(1)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def parity(self) -> Optional[int]:
        """0 for even, 1 for odd, None for mixed."""
        even = np.any(self.coeffs[0::2] != 0)
        odd = np.any(self.coeffs[1::2] != 0)
        if even and odd:
            return None
        return 1 if odd else 0

    def __call__(self, x):
        return eval_poly(self, x)

    def scaled_argument(self, c: float) -> "Polynomial":
        """Polynomial p(c*x)."""
        powers = c ** np.arange(len(self.coeffs))
        return Polynomial(self.coeffs * powers)


@dataclass(frozen=True)
class ApproxReport:
    degree: int
    max_error: float
    interval: tuple[float, float]


def eval_poly(p: Polynomial, x):
    """Horner evaluation; works elementwise on arrays."""
    acc = np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0
    for c in p.coeffs[::-1]:
        acc = acc * x + c
    return acc


def taylor_exp(degree: int, half: bool = False) -> Polynomial:
    """Truncated series of e^x (or e^{x/2} when ``half``), degree >= 1.

    The sup error on [-1, 1] is below 1/degree! once degree > 2.
    """
    if degree < 1:
        raise InvalidInputError("degree must be at least 1")
    j = np.arange(degree + 1)
    coeffs = 1.0 / special.factorial(j)
    if half:
        coeffs = coeffs / (2.0**j)
    return Polynomial(coeffs)


def taylor_exp_remainder(degree: int, half: bool = False) -> float:
    """Sup bound of the truncation gap on [-1, 1], evaluation rounding included."""
    s = 0.5 if half else 1.0
    term = s ** (degree + 1) / math.factorial(degree + 1)
    # geometric tail plus a few ulps of e for the Horner evaluation itself
    return term / (1.0 - s / (degree + 2)) + 8.0 * np.finfo(float).eps


def _erf_series(max_m: int) -> Polynomial:
    """Maclaurin series of erf truncated after the x^(2*max_m+1) term."""
    coeffs = np.zeros(2 * max_m + 2)
    term = 2.0 / math.sqrt(math.pi)  # (-1)^m * 2 / (sqrt(pi) m!)
    for m in range(max_m + 1):
        coeffs[2 * m + 1] = term / (2 * m + 1)
        term = -term / (m + 1)
    return Polynomial(coeffs)


def series_conditioning_floor(k: float) -> float:
    """Smallest grid accuracy the alternating erf series supports at scale k.

    Partial sums reach exp(z^2) with z = k/sqrt(2); cancellation leaves about
    that many ulps of noise in the evaluation.
    """
    z2 = min(0.5 * k * k, 60.0)
    return 64.0 * float(np.finfo(float).eps) * math.exp(z2)


def gelu(x):
    """Reference activation x/2 * (1 + erf(x/sqrt(2)))."""
    x = np.asarray(x, dtype=float)
    return x * 0.5 * (1.0 + special.erf(x / math.sqrt(2.0)))


def gelu_poly(k: float, lam: float, eps: float) -> tuple[Polynomial, ApproxReport]:
    """Constant-free polynomial approximating GELU(k x) on [-lam, lam].

    The erf part is a truncated Maclaurin series; the degree is the smallest
    whose measured grid error is at most ``eps``.  Targets below 1e-12 are
    rejected (double precision cannot certify them on this interval).
    """
    if k <= 0 or lam <= 0:
        raise InvalidInputError("k and lambda must be positive")
    if eps < 1e-12:
        raise UnreachablePrecisionError("gelu approximation target below 1e-12")
    grid = np.linspace(-lam, lam, GRID_POINTS)
    target = gelu(k * grid)
    scale = k / math.sqrt(2.0)
    for m in range(1, MAX_SERIES_DEGREE // 2):
        erf_part = _erf_series(m).scaled_argument(scale)
        # GELU(kx) = (k/2) x + (k/2) x * erf(k x / sqrt 2): multiply by x, add slope
        coeffs = np.zeros(erf_part.degree + 2)
        coeffs[1:] = 0.5 * k * erf_part.coeffs
        coeffs[1] += 0.5 * k
        poly = Polynomial(coeffs)
        err = float(np.max(np.abs(poly(grid) - target)))
        if err <= eps:
            return poly, ApproxReport(poly.degree, err, (-lam, lam))
    raise UnreachablePrecisionError(
        f"no degree {MAX_SERIES_DEGREE} or lower series reaches {eps} on [-{lam}, {lam}]"
    )


def smooth_step_poly(k: float, eps: float) -> tuple[Polynomial, ApproxReport, float]:
    """Approximation of (1 + erf(k x / sqrt 2)) / 4 on [-1, 1], bounded by 1/2.

    This is the gate applied to pre-activations inside the feed-forward
    construction; the 1/4 prefactor keeps it inside the eigenvalue-transform
    contract |f| <= 1/2.  If the approximation wiggle pushes the grid maximum
    past 1/2, the polynomial is shrunk onto the contract; the applied shrink
    factor is returned so callers can compensate exactly.
    """
    if k <= 0:
        raise InvalidInputError("k must be positive")
    if eps < 1e-12:
        raise UnreachablePrecisionError("step approximation target below 1e-12")
    grid = np.linspace(-1.0, 1.0, GRID_POINTS)
    target = 0.25 * (1.0 + special.erf(k * grid / math.sqrt(2.0)))
    arg_scale = k / math.sqrt(2.0)
    for m in range(1, MAX_SERIES_DEGREE // 2):
        erf_part = _erf_series(m).scaled_argument(arg_scale)
        coeffs = np.zeros(max(2, erf_part.degree + 1))
        coeffs[: erf_part.degree + 1] = 0.25 * erf_part.coeffs
        coeffs[0] += 0.25
        poly = Polynomial(coeffs)
        values = poly(grid)
        err = float(np.max(np.abs(values - target)))
        if err <= eps:
            grid_max = float(np.max(np.abs(values)))
            shrink = min(1.0, (0.5 - 1e-12) / grid_max)
            return (Polynomial(poly.coeffs * shrink),
                    ApproxReport(poly.degree, err, (-1.0, 1.0)), shrink)
    raise UnreachablePrecisionError(f"series cannot reach {eps} for gate scale {k}")


def eigen_transform(u: encoding.BlockEncoding, f: Polynomial,
                    delta: float = 1e-12) -> encoding.BlockEncoding:
    """Apply f to the eigenvalues of a Hermitian encoded block.

    Produces a (1, a+n+4, 4*l*sqrt(eps/alpha) + delta)-encoding of
    f(A/alpha), recording exactly l queries to the input.  The phase-factor
    machinery of the real transform is not simulated; its effect is computed
    by exact diagonalization, and ``delta`` stands in for the circuit
    synthesis error.
    """
    block = u.block
    if block.shape[0] != block.shape[1] or not linalg.is_pow2(block.shape[0]):
        raise InvalidInputError("eigenvalue transform needs a square power-of-two block")
    if linalg.spectral_norm(block - block.conj().T) > 1e-9:
        raise ContractViolationError("encoded block is not Hermitian within 1e-9")
    grid = np.linspace(-1.0, 1.0, TRANSFORM_GRID)
    if float(np.max(np.abs(f(grid)))) > 0.5 + 1e-9:
        raise ContractViolationError("|f| exceeds 1/2 on [-1, 1]")
    herm = (block + block.conj().T) / 2.0
    w, v = np.linalg.eigh(herm / u.alpha)
    out = (v * f(w)) @ v.conj().T
    if not np.iscomplexobj(block):
        out = np.real(out)
    n_qubits = int(math.log2(block.shape[0]))
    degree = max(1, f.degree)
    anc = u.ancillas + n_qubits + 4
    eps = 4.0 * degree * math.sqrt(u.eps_bound / u.alpha) + delta
    return encoding.BlockEncoding(out, 1.0, anc, eps,
                                  u.consumed(degree).with_peak(anc))


def elementwise_query_schedule(degree: int) -> int:
    """Input queries of the element-wise construction: sum(2^j) + degree.

    Entrywise powers of two are built by repeated squaring and the remaining
    factors one at a time.
    """
    if degree < 1:
        raise InvalidInputError("degree must be at least 1")
    return sum(2**j for j in range(1, int(math.floor(math.log2(degree))) + 1)) + degree


def elementwise_poly(u: encoding.BlockEncoding, f: Polynomial,
                     row_restrict: int | None = None,
                     prefix_len: int | None = None) -> encoding.BlockEncoding:
    """Entrywise polynomial of a block encoding: block f o (A/alpha).

    Without a constant term the factor is C = sum_{j>=1} |c_j| and the cost
    is dimension independent.  A constant term c0 adds N*|c0| to the factor
    (all-ones matrix), or sqrt(N)*|c0| when restricted to ``row_restrict``'s
    row, or sqrt(prefix_len)*|c0| when further restricted to a power-of-two
    column prefix; the constant then contributes only on that support.
    Ancillas follow l*a + (l-1)*n + 2*ceil(log2 l); the error bound is
    (eps/alpha) * sum |c_j| * j and the ledger grows by the repeated-squaring
    schedule.
    """
    block = u.block
    n_dim = block.shape[0]
    if block.shape[0] != block.shape[1] or not linalg.is_pow2(n_dim):
        raise InvalidInputError("element-wise transform needs a square power-of-two block")
    degree = f.degree
    if degree < 1 and f.coeffs[0] == 0.0:
        raise DegenerateError("zero polynomial has no encoding factor")
    c0 = float(f.coeffs[0])
    tail = np.abs(f.coeffs[1:])
    c_sum = float(np.sum(tail))
    if row_restrict is not None and not 0 <= row_restrict < n_dim:
        raise InvalidInputError(f"row {row_restrict} out of range for dimension {n_dim}")
    if prefix_len is not None:
        if row_restrict is None:
            raise InvalidInputError("prefix restriction needs a row restriction")
        if not (1 <= prefix_len <= n_dim and linalg.is_pow2(prefix_len)):
            raise InvalidInputError("prefix length must be a power of two within range")

    t = block / u.alpha
    out = np.zeros_like(t)
    for c in f.coeffs[:0:-1]:
        out = out * t + c
    out = out * t
    if c0 != 0.0:
        if row_restrict is None:
            out = out + c0
            const_factor = n_dim * abs(c0)
        else:
            width = n_dim if prefix_len is None else prefix_len
            out[row_restrict, :width] += c0
            const_factor = math.sqrt(width) * abs(c0)
    else:
        const_factor = 0.0

    n_qubits = int(math.log2(n_dim))
    degree = max(1, degree)
    anc = degree * u.ancillas + (degree - 1) * n_qubits + 2 * math.ceil(math.log2(max(2, degree)))
    if degree == 1:
        anc = u.ancillas
    eps = (u.eps_bound / u.alpha) * float(np.sum(tail * np.arange(1, len(f.coeffs))))
    queries = elementwise_query_schedule(degree)
    return encoding.BlockEncoding(out, c_sum + const_factor, anc, eps,
                                  u.consumed(queries).with_peak(anc))
