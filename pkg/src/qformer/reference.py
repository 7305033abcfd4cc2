"""Exact classical transformer forward pass and matrix-norm profiling.

This module is the comparison oracle for the encoded pipeline: one token's
forward pass LN(FFN(LN(Attention(S))))_j in plain double precision, with all
stage outputs exposed, plus the norm statistics used to justify factor
models on user-supplied matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DegenerateError, InvalidInputError
from .polynomials import gelu

VARIANCE_FLOOR = 1e-9


@dataclass(frozen=True)
class ClassicalWeights:
    """Sequence and weight matrices with the layer-norm convention attached.

    M1 maps embeddings to the hidden layer (d x d_ff) and M2 back; gamma
    defaults to 1/sqrt(d) so normalized rows come out at unit L2 norm.
    """

    S: np.ndarray
    W_q: np.ndarray
    W_k: np.ndarray
    W_v: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    alpha0: float
    gamma: float | None = None
    beta: float = 0.0

    def __post_init__(self):
        n, d = self.S.shape
        for name, m, shape in (
            ("W_q", self.W_q, (d, d)),
            ("W_k", self.W_k, (d, d)),
            ("W_v", self.W_v, (d, d)),
            ("M1", self.M1, (d, self.M2.shape[0])),
            ("M2", self.M2, (self.M1.shape[1], d)),
        ):
            if m.shape != shape:
                raise InvalidInputError(f"{name} has shape {m.shape}, expected {shape}")
        if self.alpha0 <= 0:
            raise InvalidInputError("alpha0 must be positive")
        if self.gamma is None:
            object.__setattr__(self, "gamma", 1.0 / math.sqrt(d))


@dataclass(frozen=True)
class StageOutputs:
    attention_row: np.ndarray
    ln1_row: np.ndarray
    ffn_row: np.ndarray
    output: np.ndarray


@dataclass(frozen=True)
class NormProfile:
    spectral: float
    frobenius: float
    column_l2_mean: float
    column_l2_var: float


def softmax_row(scores: np.ndarray) -> np.ndarray:
    """Row softmax, stabilized by max subtraction."""
    z = scores - np.max(scores)
    e = np.exp(z)
    return e / np.sum(e)


def layer_norm(x: np.ndarray, gamma: float, beta: float = 0.0) -> np.ndarray:
    d = x.size
    centered = x - np.mean(x)
    var = float(np.sum(centered**2) / d)
    if var < VARIANCE_FLOOR**2:
        raise DegenerateError("layer normalization variance is degenerate")
    return gamma * centered / math.sqrt(var) + beta


def classical_transformer(w: ClassicalWeights, j: int, masked: bool = False) -> StageOutputs:
    """Forward pass for token ``j`` (0-based), with stage outputs exposed."""
    n, _ = w.S.shape
    if not 0 <= j < n:
        raise InvalidInputError(f"token index {j} out of range for N={n}")
    q = w.S @ w.W_q
    k = w.S @ w.W_k
    v = w.S @ w.W_v
    scores = (q[j] @ k.T) / w.alpha0
    if masked:
        scores = scores.copy()
        scores[j + 1 :] = -np.inf
    att = softmax_row(scores) @ v
    ln1 = layer_norm(att + w.S[j], w.gamma, w.beta)
    ffn = gelu(ln1 @ w.M1) @ w.M2
    out = layer_norm(ffn + ln1, w.gamma, w.beta)
    return StageOutputs(att, ln1, ffn, out)


def profile_matrix(a) -> NormProfile:
    """Spectral/Frobenius norms plus column L2-norm statistics."""
    m = linalg.as_matrix(a)
    col_norms = np.linalg.norm(m, axis=0)
    return NormProfile(
        spectral=linalg.spectral_norm(m),
        frobenius=linalg.frobenius_norm(m),
        column_l2_mean=float(np.mean(col_norms)),
        column_l2_var=float(np.var(col_norms)),
    )


def random_weights(n: int, d: int, d_ff: int, seed: int = 0,
                   alpha0: float | None = None, unit_rows: bool = True) -> ClassicalWeights:
    """Gaussian test weights: S rows near unit norm, weights ~ N(0, 1/d)."""
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((n, d)) / math.sqrt(d)
    if unit_rows:
        s = s / np.linalg.norm(s, axis=1, keepdims=True)
    w_q = rng.standard_normal((d, d)) / math.sqrt(d)
    w_k = rng.standard_normal((d, d)) / math.sqrt(d)
    w_v = rng.standard_normal((d, d)) / math.sqrt(d)
    m1 = rng.standard_normal((d, d_ff)) / math.sqrt(d)
    m2 = rng.standard_normal((d_ff, d)) / math.sqrt(d_ff)
    a0 = alpha0 if alpha0 is not None else math.sqrt(d)
    return ClassicalWeights(s, w_q, w_k, w_v, m1, m2, a0)
