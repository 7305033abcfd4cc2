"""Classical randomized baseline under sample-and-query access.

Implements norm-weighted row/entry sampling over a dense matrix, the
importance-sampled approximate matrix-vector product whose sample count
scales with the squared Frobenius norm, and the attention-row comparison
used to exhibit the quantum/classical query separation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg, reference, transformer
from .errors import DegenerateError, InvalidInputError

DEFAULT_SAMPLE_CONSTANT = 4.0


@dataclass(frozen=True)
class SQAccess:
    """Preprocessed sample-and-query access to a dense matrix.

    Rows are sampled proportionally to their squared L2 norms; entries within
    a row proportionally to their squared magnitudes.
    """

    matrix: np.ndarray
    row_norm_prefix: np.ndarray
    entry_prefix: np.ndarray
    frobenius: float

    def sample_rows(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size) * self.row_norm_prefix[-1]
        return np.searchsorted(self.row_norm_prefix, u, side="right")

    def sample_entry(self, rng: np.random.Generator, row: int) -> int:
        prefix = self.entry_prefix[row]
        u = rng.random() * prefix[-1]
        return int(np.searchsorted(prefix, u, side="right"))


@dataclass(frozen=True)
class MatvecResult:
    vector: np.ndarray
    tau: int
    eps_target: float
    delta_target: float


@dataclass(frozen=True)
class SeparationRecord:
    n: int
    frobenius_s: float
    tau_classical: int
    queries_quantum: int
    queries_quantum_normalized: float


def build_sq(a) -> SQAccess:
    """O(size) preprocessing for norm-weighted sampling."""
    m = linalg.as_matrix(np.asarray(a, dtype=float))
    row_sq = np.sum(m**2, axis=1)
    total = float(np.sum(row_sq))
    if total <= 0:
        raise DegenerateError("all-zero matrix admits no norm-weighted sampling")
    return SQAccess(
        matrix=m,
        row_norm_prefix=np.cumsum(row_sq),
        entry_prefix=np.cumsum(m**2, axis=1),
        frobenius=math.sqrt(total),
    )


def sample_count(frobenius: float, x_norm: float, eps: float, delta: float,
                 c: float = DEFAULT_SAMPLE_CONSTANT) -> tuple[int, int]:
    """(total tau, group count) for the documented sample rule.

    tau = ceil(c * ||A||_F^2 ||x||^2 * ln(1/delta) / eps^2), split into
    ceil(ln(1/delta)) groups whose coordinate-wise median is returned.
    """
    groups = max(1, math.ceil(math.log(1.0 / delta)))
    per_group = max(1, math.ceil(c * frobenius**2 * x_norm**2 / eps**2))
    return per_group * groups, groups


def approx_matvec(sq: SQAccess, x, eps: float, delta: float, seed: int = 0,
                  exact: bool = False) -> MatvecResult:
    """Importance-sampled estimate of A x with ||result - Ax|| <= eps w.h.p.

    Columns are drawn with probability ||A_col_j||^2 / ||A||_F^2 and weighted
    by x_j / p_j, the Frobenius-weighted estimator whose per-sample variance
    is ||A||_F^2 ||x||^2.  With ``exact`` the product is computed by full row
    queries instead (tau = size of A).
    """
    xv = linalg.as_vector(np.asarray(x, dtype=float))
    m = sq.matrix
    if m.shape[1] != xv.size:
        raise InvalidInputError(f"dimension mismatch: {m.shape} by {xv.size}")
    if exact:
        return MatvecResult(m @ xv, m.size, eps, delta)
    x_norm = float(np.linalg.norm(xv))
    if x_norm == 0.0:
        return MatvecResult(np.zeros(m.shape[0]), 0, eps, delta)
    rng = np.random.default_rng(seed)
    col_sq = np.sum(m**2, axis=0)
    p = col_sq / np.sum(col_sq)
    tau, groups = sample_count(sq.frobenius, x_norm, eps, delta)
    per_group = tau // groups
    estimates = np.empty((groups, m.shape[0]))
    for g in range(groups):
        idx = rng.choice(m.shape[1], size=per_group, p=p)
        weights = xv[idx] / p[idx]
        estimates[g] = (m[:, idx] * weights).sum(axis=1) / per_group
    result = np.median(estimates, axis=0) if groups > 1 else estimates[0]
    return MatvecResult(result, tau, eps, delta)


def dequant_attention(s, w_v, softmax_row, eps: float, delta: float,
                      seed: int = 0, quantum_queries: int | None = None,
                      quantum_queries_normalized: float | None = None
                      ) -> tuple[MatvecResult, SeparationRecord]:
    """Estimate softmax_row . V with V = S W_v through SQ access.

    The record pairs the measured sample count with the encoded pipeline's
    sequence-query count at matched settings when provided.
    """
    s = linalg.as_matrix(np.asarray(s, dtype=float))
    w_v = linalg.as_matrix(np.asarray(w_v, dtype=float))
    row = linalg.as_vector(np.asarray(softmax_row, dtype=float))
    if np.any(row < -1e-12) or abs(row.sum() - 1.0) > 1e-9:
        raise InvalidInputError("softmax_row must be a probability vector")
    v = s @ w_v
    sq = build_sq(v.T)
    result = approx_matvec(sq, row, eps, delta, seed=seed)
    record = SeparationRecord(
        n=s.shape[0],
        frobenius_s=linalg.frobenius_norm(s),
        tau_classical=result.tau,
        queries_quantum=quantum_queries if quantum_queries is not None else 0,
        queries_quantum_normalized=(
            quantum_queries_normalized if quantum_queries_normalized is not None else 0.0
        ),
    )
    return result, record


def _peaked_row(n: int) -> np.ndarray:
    """Attention row with half the mass on one token: L2 norm stays Theta(1).

    Near-uniform rows shrink ||x|| like 1/sqrt(N) and hide the Frobenius
    dependency the comparison is about, so the sweep uses the concentrated
    case the sample-count rule is tight for.
    """
    row = np.full(n, 0.5 / (n - 1)) if n > 1 else np.ones(1)
    row[0] = 0.5 if n > 1 else 1.0
    return row


def normalized_sequence_queries(report) -> float:
    """Sequence-query count with the recorded non-growth factors divided out.

    Divides the softmax amplification rounds, the element-wise polynomial
    schedule (the log-size terms) and the final amplification rounds, and
    multiplies the first standardization factor back in (it enters the
    remaining amplification as 1/sigma and is size-independent but noisy
    across draws).  What remains is the growth driven by the sequence factor.
    """
    raw = report.ledger.total("U_S")
    denom = report.softmax_rounds * report.elementwise_queries * report.output_rounds
    return raw * report.sigma_ln1 / denom


def separation_sweep(n_values, d: int = 4, d_ff: int = 16, eps: float = 0.1,
                     delta: float = 0.05, seed: int = 0,
                     pipeline_eps: float = 1e-3) -> list[SeparationRecord]:
    """Classical tau versus pipeline sequence queries across sequence lengths.

    Weight matrices are drawn once and held fixed; only the sequence is
    redrawn per length, so the fitted slopes isolate the norm growth.  For
    each N the encoded pipeline runs one token end to end and reports its
    U_S ledger count (raw and normalized); the classical side estimates the
    same attention row through SQ access on V = S W_v.
    """
    base = reference.random_weights(max(n_values), d, d_ff, seed=seed)
    records = []
    for i, n in enumerate(n_values):
        rng = np.random.default_rng(seed + 1000 + i)
        s = rng.standard_normal((n, d)) / math.sqrt(d)
        s = s / np.linalg.norm(s, axis=1, keepdims=True)
        w = reference.ClassicalWeights(s, base.W_q, base.W_k, base.W_v,
                                       base.M1, base.M2, base.alpha0)
        inputs = transformer.TransformerInputs.from_weights(w)
        _, rep = transformer.single_layer(inputs, 0, pipeline_eps)
        _, record = dequant_attention(
            w.S, w.W_v, _peaked_row(n), eps, delta, seed=seed + i,
            quantum_queries=rep.ledger.total("U_S"),
            quantum_queries_normalized=normalized_sequence_queries(rep),
        )
        records.append(record)
    return records
