"""Lazy block-encoding calculus.

A :class:`BlockEncoding` carries the exactly-known encoded matrix together
with the factor alpha, ancilla count, tracked error bound and a query ledger.
Composition rules update all five fields; no explicit unitary is ever
materialized here (the element-wise construction alone would need
``l*a + (l-1)*n`` ancilla qubits, an exponentially large state space).  The
formulas are certified against explicit unitaries at tiny sizes by the
``verifier`` module.

Query ledger semantics: a freshly constructed labeled encoding carries a zero
count for its own label.  Whenever an operation consumes an operand once, the
operand's accumulated ledger plus one use of its own label (if any) is added
to the result.  Composite ledgers therefore count how many times each labeled
input circuit is queried when the composite is applied once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import linalg
from .errors import (
    DegenerateError,
    InvalidInputError,
    InvalidModelError,
    QFormerError,
)

# Slack allowed on the factor-soundness invariant alpha >= ||block||.
ALPHA_SLACK = 1e-9

FACTOR_MODELS = ("spectral", "frobenius", "dense_naive", "row_sparse")


@dataclass(frozen=True)
class QueryLedger:
    """Multiset of uses of labeled input encodings plus the ancilla peak."""

    counts: Mapping[str, int] = field(default_factory=dict)
    ancilla_peak: int = 0

    def merged(self, other: "QueryLedger") -> "QueryLedger":
        total = dict(self.counts)
        for k, v in other.counts.items():
            total[k] = total.get(k, 0) + v
        return QueryLedger(total, max(self.ancilla_peak, other.ancilla_peak))

    def scaled(self, times: int) -> "QueryLedger":
        if times < 0:
            raise InvalidInputError("ledger multiplicity must be nonnegative")
        return QueryLedger({k: v * times for k, v in self.counts.items()}, self.ancilla_peak)

    def counted(self, label: str, times: int = 1) -> "QueryLedger":
        total = dict(self.counts)
        total[label] = total.get(label, 0) + times
        return QueryLedger(total, self.ancilla_peak)

    def with_peak(self, ancillas: int) -> "QueryLedger":
        return QueryLedger(dict(self.counts), max(self.ancilla_peak, ancillas))

    def total(self, label: str) -> int:
        return self.counts.get(label, 0)


@dataclass(frozen=True)
class BlockEncoding:
    """An (alpha, ancillas, eps_bound)-encoding of ``block``.

    ``block`` is the exact matrix the simulated unitary encodes; ``eps_bound``
    tracks how far that matrix may drift from the ideal it stands for.
    """

    block: np.ndarray
    alpha: float
    ancillas: int
    eps_bound: float
    ledger: QueryLedger = field(default_factory=QueryLedger)
    label: str | None = None

    def __post_init__(self):
        m = linalg.as_matrix(self.block)
        if self.alpha < linalg.spectral_norm(m) - ALPHA_SLACK:
            raise QFormerError(
                f"factor {self.alpha} below spectral norm {linalg.spectral_norm(m)}"
            )
        if self.eps_bound < 0 or self.ancillas < 0:
            raise QFormerError("eps_bound and ancillas must be nonnegative")
        object.__setattr__(self, "ledger", self.ledger.with_peak(self.ancillas))

    @property
    def shape(self) -> tuple[int, int]:
        return self.block.shape

    def consumed(self, times: int = 1) -> QueryLedger:
        """Ledger contribution of using this encoding ``times`` times."""
        led = self.ledger
        if self.label is not None:
            led = led.counted(self.label)
        return led.scaled(times)


@dataclass(frozen=True)
class StateEncoding:
    """State-preparation encoding of a real unit vector.

    ``eps_bound`` is an L-infinity bound between ``amplitudes`` and the ideal
    target state.
    """

    amplitudes: np.ndarray
    alpha: float
    ancillas: int
    eps_bound: float
    ledger: QueryLedger = field(default_factory=QueryLedger)

    def __post_init__(self):
        v = linalg.as_vector(self.amplitudes)
        if abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise QFormerError("state amplitudes must have unit L2 norm")
        if self.alpha < 1.0 - ALPHA_SLACK:
            raise QFormerError("state encoding factor must be >= 1")
        if self.eps_bound < 0 or self.ancillas < 0:
            raise QFormerError("eps_bound and ancillas must be nonnegative")
        object.__setattr__(self, "alpha", max(1.0, float(self.alpha)))
        object.__setattr__(self, "ledger", self.ledger.with_peak(self.ancillas))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def consumed(self, times: int = 1) -> QueryLedger:
        return self.ledger.scaled(times)


@dataclass(frozen=True)
class StatePrepPair:
    """Pair of unitaries preparing LCU coefficients y with factor beta."""

    coefficients: np.ndarray
    beta: float
    qubits: int
    eps: float = 0.0

    @classmethod
    def for_coefficients(cls, y, qubits: int | None = None) -> "StatePrepPair":
        """Exact pair for coefficients y: beta is the L1 norm of y."""
        v = linalg.as_vector(np.asarray(y, dtype=float))
        beta = float(np.sum(np.abs(v)))
        if beta <= 0:
            raise DegenerateError("coefficients must not all vanish")
        b = qubits if qubits is not None else max(0, (len(v) - 1).bit_length())
        return cls(v, beta, b, 0.0)


def _check_padded(m: np.ndarray) -> None:
    if not (linalg.is_pow2(m.shape[0]) and linalg.is_pow2(m.shape[1])):
        raise InvalidInputError("matrix dimensions must be powers of two")


def from_matrix(a, factor_model: str = "spectral", label: str | None = None,
                row_sparsity: int | None = None) -> BlockEncoding:
    """Leaf encoding of A under one of the input factor models.

    spectral     alpha = ||A||,      1 dilation ancilla
    frobenius    alpha = ||A||_F,    n+2 ancillas (data-structure model)
    dense_naive  alpha = N*max|a|,   n+1 ancillas
    row_sparse   alpha = sqrt(N*s_r)*max|a|, n+3 ancillas

    Non-power-of-two inputs are zero-padded first; the ledger starts with a
    zero count for ``label`` (queries accrue when the encoding is consumed).
    """
    m = linalg.pad_pow2(a)
    n_qubits = int(math.log2(m.shape[0]))
    if factor_model == "spectral":
        alpha, anc = linalg.spectral_norm(m), 1
    elif factor_model == "frobenius":
        alpha, anc = linalg.frobenius_norm(m), n_qubits + 2
    elif factor_model == "dense_naive":
        alpha, anc = m.shape[0] * linalg.max_entry_norm(m), n_qubits + 1
    elif factor_model == "row_sparse":
        if row_sparsity is None:
            raise InvalidModelError("row_sparse model needs a row sparsity bound")
        actual = int(np.max(np.count_nonzero(m, axis=1))) if m.size else 0
        if actual > row_sparsity:
            raise InvalidModelError(
                f"matrix has rows with {actual} nonzeros, exceeding s_r={row_sparsity}"
            )
        alpha = math.sqrt(m.shape[0] * row_sparsity) * linalg.max_entry_norm(m)
        anc = n_qubits + 3
    else:
        raise InvalidModelError(f"unknown factor model {factor_model!r}")
    if alpha <= 0:
        raise DegenerateError("zero matrix has no positive encoding factor")
    ledger = QueryLedger({label: 0} if label else {}, anc)
    return BlockEncoding(m, float(alpha), anc, 0.0, ledger, label)


def identity_encoding(dim: int) -> BlockEncoding:
    """(1, 0, 0)-encoding of the identity (a unitary encodes itself)."""
    if not linalg.is_pow2(dim):
        raise InvalidInputError("dimension must be a power of two")
    return BlockEncoding(np.eye(dim), 1.0, 0, 0.0)


def hadamard_transform_encoding(dim: int) -> BlockEncoding:
    """(1, 0, 0)-encoding of the Hadamard transform H^{x log2(dim)}."""
    if not linalg.is_pow2(dim):
        raise InvalidInputError("dimension must be a power of two")
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)
    m = np.array([[1.0]])
    for _ in range(int(math.log2(dim))):
        m = np.kron(m, h)
    return BlockEncoding(m, 1.0, 0, 0.0)


def adjoint(u: BlockEncoding) -> BlockEncoding:
    """Encoding of the conjugate transpose; same cost, same factor."""
    return replace(u, block=u.block.conj().T)


def rescale(u: BlockEncoding, c: float) -> BlockEncoding:
    """Reinterpret an encoding of A as one of c*A with factor c*alpha (c > 0)."""
    if c <= 0:
        raise InvalidInputError("scale must be positive")
    return replace(u, block=u.block * c, alpha=u.alpha * c, eps_bound=u.eps_bound * c)


def product(u: BlockEncoding, v: BlockEncoding) -> BlockEncoding:
    """Encoding of A·B with alpha·beta, summed ancillas, alpha*eps_v + beta*eps_u."""
    if u.shape[1] != v.shape[0]:
        raise InvalidInputError(f"inner dimensions differ: {u.shape} x {v.shape}")
    anc = u.ancillas + v.ancillas
    return BlockEncoding(
        u.block @ v.block,
        u.alpha * v.alpha,
        anc,
        u.alpha * v.eps_bound + v.alpha * u.eps_bound,
        u.consumed().merged(v.consumed()).with_peak(anc),
    )


def tensor_product(u: BlockEncoding, v: BlockEncoding) -> BlockEncoding:
    """Encoding of the Kronecker product; factors multiply, errors cross-scale."""
    anc = u.ancillas + v.ancillas
    return BlockEncoding(
        np.kron(u.block, v.block),
        u.alpha * v.alpha,
        anc,
        u.alpha * v.eps_bound + v.alpha * u.eps_bound,
        u.consumed().merged(v.consumed()).with_peak(anc),
    )


def hadamard_product(u: BlockEncoding, v: BlockEncoding) -> BlockEncoding:
    """Entrywise product of two square encodings of equal power-of-two size.

    Costs n extra ancillas for the CNOT permutation that extracts the
    diagonal block of the tensor product.
    """
    if u.shape != v.shape or u.shape[0] != u.shape[1]:
        raise InvalidInputError("hadamard product needs equal square shapes")
    _check_padded(u.block)
    n_qubits = int(math.log2(u.shape[0]))
    anc = u.ancillas + v.ancillas + n_qubits
    return BlockEncoding(
        u.block * v.block,
        u.alpha * v.alpha,
        anc,
        u.alpha * v.eps_bound + v.alpha * u.eps_bound,
        u.consumed().merged(v.consumed()).with_peak(anc),
    )


def lcu(terms: Sequence[BlockEncoding], pair: StatePrepPair) -> BlockEncoding:
    """Linear combination sum_k y_k A_k with a state-preparation pair.

    Operands are first rescaled to the common factor alpha = max_k alpha_k
    (each eps_k becomes eps_k * alpha / alpha_k); the result is an
    (alpha*beta, max_a + b, alpha*eps_pair + beta*max_eps)-encoding.
    """
    if not terms:
        raise InvalidInputError("lcu needs at least one term")
    y = pair.coefficients
    if len(y) != len(terms):
        raise InvalidInputError(f"{len(y)} coefficients for {len(terms)} terms")
    shape = terms[0].shape
    if any(t.shape != shape for t in terms):
        raise InvalidInputError("lcu terms must share one shape")
    alpha = max(t.alpha for t in terms)
    eps2 = max(t.eps_bound * alpha / t.alpha for t in terms)
    block = sum(yk * t.block for yk, t in zip(y, terms))
    anc = max(t.ancillas for t in terms) + pair.qubits
    ledger = QueryLedger()
    for t in terms:
        ledger = ledger.merged(t.consumed())
    return BlockEncoding(
        np.asarray(block),
        alpha * pair.beta,
        anc,
        alpha * pair.eps + pair.beta * eps2,
        ledger.with_peak(anc),
    )


def projector_encoding(indices, dim: int) -> BlockEncoding:
    """(1, 1, 0)-encoding of the diagonal projector onto ``indices``."""
    if not linalg.is_pow2(dim):
        raise InvalidInputError("dimension must be a power of two")
    diag = np.zeros(dim)
    for k in indices:
        if not 0 <= k < dim:
            raise InvalidInputError(f"index {k} out of range for dimension {dim}")
        diag[k] = 1.0
    return BlockEncoding(np.diag(diag), 1.0, 1, 0.0, QueryLedger({}, 1))


def ones_support_encoding(dim: int, row: int | None = None,
                          prefix_len: int | None = None) -> BlockEncoding:
    """Encoding of a 0/1 matrix used for constant terms.

    Full ones matrix: factor N with 1 ancilla.  Single ``row`` of ones:
    factor sqrt(N).  ``prefix_len`` additionally restricts that row to its
    first ``prefix_len`` columns, with factor sqrt(prefix_len).
    """
    if not linalg.is_pow2(dim):
        raise InvalidInputError("dimension must be a power of two")
    if row is None:
        if prefix_len is not None:
            raise InvalidInputError("prefix restriction needs a row")
        return BlockEncoding(np.ones((dim, dim)), float(dim), 1, 0.0, QueryLedger({}, 1))
    if not 0 <= row < dim:
        raise InvalidInputError(f"row {row} out of range")
    width = dim if prefix_len is None else prefix_len
    if not (1 <= width <= dim and linalg.is_pow2(width)):
        raise InvalidInputError("prefix length must be a power of two within range")
    block = np.zeros((dim, dim))
    block[row, :width] = 1.0
    return BlockEncoding(block, math.sqrt(width), 1, 0.0, QueryLedger({}, 1))


def normalized_state_error(eps_entry: float, dim: int, norm: float) -> float:
    """L-infinity gap between two normalized vectors from per-entry error.

    For |psi_j - psi'_j| <= eps on a vector of true L2 norm C the bound is
    (sqrt(d)+1)*eps/C + sqrt(2*eps*sqrt(d)/C); the measured norm is deflated
    by sqrt(d)*eps to lower-bound the true one, and the result is capped at
    the trivial bound 2 for unit vectors.
    """
    if eps_entry == 0.0:
        return 0.0
    c_low = norm - math.sqrt(dim) * eps_entry
    if c_low <= 0:
        return 2.0
    val = (math.sqrt(dim) + 1.0) * eps_entry / c_low + math.sqrt(
        2.0 * eps_entry * math.sqrt(dim) / c_low
    )
    return min(2.0, val)


def state_from_column(u: BlockEncoding, j: int) -> StateEncoding:
    """State encoding of column j of the block, normalized.

    Factor alpha/C with C the column L2 norm; the L-infinity error follows
    the normalized-vector bound.  Consumes one query to ``u``.
    """
    if not 0 <= j < u.shape[1]:
        raise InvalidInputError(f"column {j} out of range")
    col = np.real_if_close(u.block[:, j])
    norm = float(np.linalg.norm(col))
    if norm <= 1e-300:
        raise DegenerateError(f"column {j} of the block is zero")
    dim = col.shape[0]
    # u.eps_bound also bounds each entry's deviation (max entry <= spectral).
    eps = normalized_state_error(u.eps_bound, dim, norm)
    anc = u.ancillas
    return StateEncoding(col / norm, max(1.0, u.alpha / norm), anc, eps,
                         u.consumed().with_peak(anc))


def state_to_block(psi: StateEncoding, column: int = 0, dim: int | None = None) -> BlockEncoding:
    """View a state encoding as a block encoding holding it in one column."""
    d = psi.dim if dim is None else dim
    if not (linalg.is_pow2(d) and d >= psi.dim):
        raise InvalidInputError("target dimension must be a power of two >= state dim")
    if not 0 <= column < d:
        raise InvalidInputError("column out of range")
    block = np.zeros((d, d))
    block[: psi.dim, column] = psi.amplitudes
    return BlockEncoding(block, psi.alpha, psi.ancillas, psi.eps_bound,
                         psi.consumed())


def diag_from_state(psi: StateEncoding, squared: bool = False) -> BlockEncoding:
    """Diagonal encoding of the amplitudes (or their squares).

    Plain: (alpha, 2a+n+2, eps) with two queries to the state circuit.
    Squared: (alpha^2, 3a+2n+2, 3*eps) with three queries.
    """
    amps = psi.amplitudes
    if np.iscomplexobj(amps) and np.max(np.abs(amps.imag)) > 0:
        raise InvalidInputError("amplitude diagonal needs real amplitudes")
    amps = np.real(amps)
    n_qubits = int(math.ceil(math.log2(max(2, psi.dim))))
    if squared:
        anc = 3 * psi.ancillas + 2 * n_qubits + 2
        return BlockEncoding(np.diag(amps**2), psi.alpha**2, anc, 3.0 * psi.eps_bound,
                             psi.consumed(3).with_peak(anc))
    anc = 2 * psi.ancillas + n_qubits + 2
    return BlockEncoding(np.diag(amps), psi.alpha, anc, psi.eps_bound,
                         psi.consumed(2).with_peak(anc))


def amplify(psi: StateEncoding) -> StateEncoding:
    """Ideal amplitude amplification to factor 1 in ceil(alpha) rounds."""
    rounds = amplification_rounds(psi.alpha)
    return StateEncoding(psi.amplitudes, 1.0, psi.ancillas, psi.eps_bound,
                         psi.ledger.scaled(rounds))


def amplification_rounds(alpha: float) -> int:
    """Smallest round count consistent with O(alpha) amplification."""
    return max(1, int(math.ceil(alpha - ALPHA_SLACK)))


def perturb(u: BlockEncoding, delta: float, seed: int = 0) -> BlockEncoding:
    """Add a random direction of exact spectral norm delta to the block.

    Emulates a nonzero-eps input encoding; eps_bound grows by delta and the
    direction is deterministic per seed.  The factor is raised when the
    perturbed block's norm exceeds it (the sub-block of a unitary can never
    outgrow the claimed factor, so the claim is enlarged instead).
    """
    if delta < 0:
        raise InvalidInputError("delta must be nonnegative")
    if delta == 0:
        return u
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(u.shape)
    if np.iscomplexobj(u.block):
        e = e + 1j * rng.standard_normal(u.shape)
    e *= delta / linalg.spectral_norm(e)
    block = u.block + e
    alpha = max(u.alpha, linalg.spectral_norm(block))
    return replace(u, block=block, alpha=alpha, eps_bound=u.eps_bound + delta)
