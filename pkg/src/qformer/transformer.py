"""Encoded transformer pipeline: softmax state preparation, self-attention,
residual + layer norm, gated feed-forward, single-layer composition, readout
and the multilayer loop.

Every stage is assembled from the calculus in :mod:`qformer.encoding` and
:mod:`qformer.polynomials`, so factors, ancillas, error bounds and query
counts fall out mechanically.  Token and row indices are 0-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
import numpy as np

from . import reference
from .encoding import (
    BlockEncoding,
    QueryLedger,
    StateEncoding,
    StatePrepPair,
    adjoint,
    amplification_rounds,
    amplify,
    diag_from_state,
    from_matrix,
    hadamard_product,
    hadamard_transform_encoding,
    identity_encoding,
    lcu,
    normalized_state_error,
    perturb,
    product,
    projector_encoding,
    rescale,
    state_from_column,
    state_to_block,
)
from .errors import ContractViolationError, DegenerateError, InvalidInputError
from .linalg import is_pow2
from .polynomials import (
    Polynomial,
    eigen_transform,
    elementwise_poly,
    elementwise_query_schedule,
    series_conditioning_floor,
    smooth_step_poly,
    taylor_exp,
    taylor_exp_remainder,
)

VARIANCE_FLOOR = 1e-9
NORMALIZATION_FLOOR = 1e-12
# Per-stage polynomial targets follow the eighth-power budget rule, which is
# far below double precision at any useful eps; live stages clamp to this floor.
STAGE_TARGET_FLOOR = 1e-12


def _stage_target(eps: float) -> float:
    return max(STAGE_TARGET_FLOOR, eps * eps)


@dataclass(frozen=True)
class TransformerInputs:
    """Labeled input encodings plus the attention scaling factor.

    The feed-forward encodings hold the column-convention matrices (hidden x
    embed and embed x hidden), so every stage acts on column vectors.
    """

    S_be: BlockEncoding
    Wq_be: BlockEncoding
    Wk_be: BlockEncoding
    Wv_be: BlockEncoding
    M1_be: BlockEncoding
    M2_be: BlockEncoding
    alpha0: float
    N: int
    d: int
    d_ff: int

    def __post_init__(self):
        for name, k in (("N", self.N), ("d", self.d), ("d_ff", self.d_ff)):
            if not is_pow2(k):
                raise InvalidInputError(f"{name}={k} must be a power of two")
        if self.alpha0 <= 0:
            raise InvalidInputError("alpha0 must be positive")

    @classmethod
    def from_weights(cls, w: reference.ClassicalWeights,
                     s_model: str = "frobenius", w_model: str = "spectral",
                     m_model: str = "spectral") -> "TransformerInputs":
        """Encode classical weights; alpha0 is set to the product factor."""
        n, d = w.S.shape
        d_ff = w.M1.shape[1]
        s_be = from_matrix(w.S, s_model, "U_S")
        wq_be = from_matrix(w.W_q, w_model, "U_Wq")
        wk_be = from_matrix(w.W_k, w_model, "U_Wk")
        wv_be = from_matrix(w.W_v, w_model, "U_Wv")
        m1_be = from_matrix(w.M1.T, m_model, "U_M1")
        m2_be = from_matrix(w.M2.T, m_model, "U_M2")
        alpha0 = s_be.alpha**2 * wq_be.alpha * wk_be.alpha
        return cls(s_be, wq_be, wk_be, wv_be, m1_be, m2_be, alpha0, n, d, d_ff)

    def perturbed(self, delta: float, seed: int = 0) -> "TransformerInputs":
        """All six inputs perturbed by spectral-norm delta, factors refreshed."""
        parts = [
            perturb(be, delta, seed + i)
            for i, be in enumerate((self.S_be, self.Wq_be, self.Wk_be,
                                    self.Wv_be, self.M1_be, self.M2_be))
        ]
        alpha0 = parts[0].alpha**2 * parts[1].alpha * parts[2].alpha
        return TransformerInputs(*parts, alpha0, self.N, self.d, self.d_ff)

    def classical_weights(self) -> reference.ClassicalWeights:
        """Classical view of the currently encoded matrices."""
        return reference.ClassicalWeights(
            np.real(self.S_be.block[: self.N, : self.d]),
            np.real(self.Wq_be.block[: self.d, : self.d]),
            np.real(self.Wk_be.block[: self.d, : self.d]),
            np.real(self.Wv_be.block[: self.d, : self.d]),
            np.real(self.M1_be.block[: self.d_ff, : self.d]).T,
            np.real(self.M2_be.block[: self.d, : self.d_ff]).T,
            self.alpha0,
        )


@dataclass(frozen=True)
class AttentionReport:
    z_j: float
    amplification_rounds: int
    poly_degree: int
    eps_tracked: float


@dataclass(frozen=True)
class PipelineReport:
    ledger: QueryLedger
    stage_eps: dict
    sigma_ln1: float
    sigma_ln2: float
    z_j: float
    softmax_degree: int
    softmax_rounds: int
    elementwise_queries: int
    ffn_degree: int
    ffn_rounds: int
    output_rounds: int
    cosine_classical: float
    output_deviation: float
    output: StateEncoding
    eps_block_schedule: float
    alpha0: float


@dataclass(frozen=True)
class MultilayerResult:
    sequence: np.ndarray
    reports: list
    ledger: QueryLedger
    tomography_samples: int


def _diag_of_row(be: BlockEncoding, j: int) -> BlockEncoding:
    """Diagonal encoding of row j with the row values kept unnormalized.

    Costs the amplitude-diagonal overhead (2a + n + 2 ancillas, two queries);
    the per-entry error of the block carries over directly.
    """
    row = np.real(be.block[j, :])
    n_qubits = int(math.ceil(math.log2(max(2, row.size))))
    anc = 2 * be.ancillas + n_qubits + 2
    return BlockEncoding(np.diag(row), be.alpha, anc, be.eps_bound,
                         be.consumed(2).with_peak(anc))


def _diag_of_column(be: BlockEncoding, j: int) -> BlockEncoding:
    return _diag_of_row(adjoint(be), j)


def softmax_degree(n_dim: int, eps: float) -> int:
    """Series degree used by the softmax state: ceil(n * log2(1/eps))."""
    n_qubits = int(math.log2(n_dim))
    return max(1, math.ceil(n_qubits * math.log2(1.0 / min(eps, 0.5))))


def _softmax_row_state(a_be: BlockEncoding, j: int, eps: float,
                       masked: bool = False) -> tuple[StateEncoding, AttentionReport]:
    """Amplified state with amplitudes sqrt(softmax(A/alpha) row j).

    The exponential is realized element-wise at half argument with the
    constant term restricted to row j (masked: to the power-of-two prefix
    covering tokens 0..j, followed by a projector).  The state is amplified
    to factor one; the ledger multiplies the element-wise schedule by the
    round count.
    """
    n_dim = a_be.shape[0]
    if a_be.shape[0] != a_be.shape[1] or not is_pow2(n_dim):
        raise InvalidInputError("softmax needs a square power-of-two block")
    if not 0 <= j < n_dim:
        raise InvalidInputError(f"row {j} out of range")
    ell = softmax_degree(n_dim, eps)
    poly = taylor_exp(ell, half=True)
    # smallest power-of-two prefix covering tokens 0..j
    prefix = (1 << j.bit_length()) if masked else None
    ew = elementwise_poly(a_be, poly, row_restrict=j, prefix_len=prefix)
    if masked:
        ew = product(ew, projector_encoding(range(j + 1), n_dim))
    row = np.real(ew.block[j, :])
    norm = float(np.linalg.norm(row))
    scores = np.real(a_be.block[j, :]) / a_be.alpha
    if masked:
        z_j = float(np.sum(np.exp(scores[: j + 1])))
    else:
        z_j = float(np.sum(np.exp(scores)))
    eps_entry = ew.eps_bound + taylor_exp_remainder(ell, half=True)
    eps_state = normalized_state_error(eps_entry, n_dim, norm)
    alpha_state = max(1.0, ew.alpha / norm)
    rounds = amplification_rounds(alpha_state)
    state = StateEncoding(row / norm, 1.0, ew.ancillas, eps_state,
                          ew.consumed().scaled(rounds))
    return state, AttentionReport(z_j, rounds, ell, eps_state)


def softmax_state(a_be: BlockEncoding, j: int, eps: float) -> tuple[StateEncoding, AttentionReport]:
    """Row-softmax state via the element-wise exponential route."""
    return _softmax_row_state(a_be, j, eps, masked=False)


def softmax_state_nat(a_be: BlockEncoding, j: int, eps: float) -> tuple[StateEncoding, AttentionReport]:
    """Row-softmax state via the amplitude-transformation route.

    Extracts the row as a diagonal encoding, applies a scaled half-exponential
    through the eigenvalue transform, multiplies onto the uniform state and
    amplifies.  Needs O(a + n) ancillas, fewer than the element-wise route at
    the degrees both routes actually use.
    """
    n_dim = a_be.shape[0]
    if a_be.shape[0] != a_be.shape[1] or not is_pow2(n_dim):
        raise InvalidInputError("softmax needs a square power-of-two block")
    if not 0 <= j < n_dim:
        raise InvalidInputError(f"row {j} out of range")
    ell = max(2, math.ceil(math.log2(max(a_be.alpha, 2.0) / min(eps, 0.5))))
    diag_row = _diag_of_row(a_be, j)
    base = taylor_exp(ell, half=True)
    # rescale so the transform stays inside the |f| <= 1/2 contract
    scale = 0.5 / math.exp(0.5)
    poly = Polynomial(base.coeffs * scale)
    gate = eigen_transform(diag_row, poly)
    gate = replace(gate, eps_bound=gate.eps_bound + scale * taylor_exp_remainder(ell, half=True))
    uniform = product(gate, hadamard_transform_encoding(n_dim))
    col = np.real(uniform.block[:, 0])
    norm = float(np.linalg.norm(col))
    eps_state = normalized_state_error(uniform.eps_bound, n_dim, norm)
    alpha_state = max(1.0, uniform.alpha / norm)
    rounds = amplification_rounds(alpha_state)
    state = StateEncoding(col / norm, 1.0, uniform.ancillas, eps_state,
                          uniform.consumed().scaled(rounds))
    scores = np.real(a_be.block[j, :]) / a_be.alpha
    z_j = float(np.sum(np.exp(scores)))
    return state, AttentionReport(z_j, rounds, ell, eps_state)


def _attention(inputs: TransformerInputs, j: int, eps: float,
               masked: bool) -> tuple[BlockEncoding, AttentionReport]:
    q_be = product(inputs.S_be, inputs.Wq_be)
    k_be = product(inputs.S_be, inputs.Wk_be)
    v_be = product(inputs.S_be, inputs.Wv_be)
    qkt_be = product(q_be, adjoint(k_be))
    if abs(qkt_be.alpha - inputs.alpha0) > 1e-6 * inputs.alpha0:
        raise ContractViolationError(
            f"alpha0={inputs.alpha0} does not match the score factor {qkt_be.alpha}"
        )
    state, rep = _softmax_row_state(qkt_be, j, eps, masked=masked)
    col_mat = state_to_block(state, column=j, dim=inputs.N)
    squared = hadamard_product(col_mat, col_mat)
    g_be = product(adjoint(squared), v_be)
    return g_be, rep


def self_attention(inputs: TransformerInputs, j: int, eps: float) -> tuple[BlockEncoding, AttentionReport]:
    """Encoding of a matrix whose row j is softmax(QK^T/alpha0)V row j.

    The square-root softmax state is squared by an entrywise product with
    itself before multiplying the value matrix; the output factor is the
    product of the sequence and weight factors.
    """
    return _attention(inputs, j, eps, masked=False)


def masked_self_attention(inputs: TransformerInputs, j: int, eps: float) -> tuple[BlockEncoding, AttentionReport]:
    """Self-attention with tokens after j receiving no attention.

    Realized by restricting the constant term to the power-of-two prefix
    covering tokens 0..j and multiplying by the projector onto those tokens;
    the partition function is recomputed over the surviving entries.
    """
    return _attention(inputs, j, eps, masked=True)


def residual_layernorm(g_be: BlockEncoding, s_be: BlockEncoding,
                       j: int) -> tuple[StateEncoding, float]:
    """State proportional to the standardized sum of row j of both blocks.

    Sums the operands by linear combination, extracts the row as an
    unnormalized diagonal, subtracts the mean obtained from a Hadamard
    transform column (with the row moved into place by a swap and tensored
    with the identity), and reads the standardized row off a final Hadamard
    column.  Scaling 1/sqrt(d) is fixed so the output has unit norm; returns
    the standardization factor alongside the state.
    """
    if g_be.shape != s_be.shape:
        raise InvalidInputError("residual operands must share a shape")
    if not 0 <= j < g_be.shape[0]:
        raise InvalidInputError(f"row {j} out of range")
    d = g_be.shape[1]
    sum_be = lcu([g_be, s_be], StatePrepPair.for_coefficients([1.0, 1.0]))
    x = np.real(sum_be.block[j, :])
    sbar = float(np.mean(x))
    sigma = float(np.linalg.norm(x - sbar))
    if sigma < VARIANCE_FLOOR:
        raise DegenerateError("layer normalization variance is degenerate")
    had = hadamard_transform_encoding(d)
    diag_x = _diag_of_row(sum_be, j)
    mean_mat = product(sum_be, had)
    # row swap plus tensoring with the identity turns the (j, 0) entry
    # sqrt(d)*mean into a diagonal encoding at the same factor
    n_q = int(math.log2(d))
    mean_anc = mean_mat.ancillas + n_q
    mean_diag = BlockEncoding(
        math.sqrt(d) * sbar * np.eye(d), mean_mat.alpha, mean_anc,
        mean_mat.eps_bound, mean_mat.ledger.with_peak(mean_anc),
    )
    diff = lcu([diag_x, mean_diag],
               StatePrepPair.for_coefficients([1.0, -1.0 / math.sqrt(d)]))
    out_mat = product(diff, had)
    state = state_from_column(out_mat, 0)
    return state, sigma


def residual_polynomial(x_state: StateEncoding, g: Polynomial, c: float) -> StateEncoding:
    """State proportional to c*g(x_k) + x_k for a polynomial g.

    The general route bounds g on the rescaled interval and combines the
    transformed diagonal with the input diagonal; when g has no constant
    term the ratio polynomial g(alpha*t)/t is applied instead and combined
    with the identity, keeping the factor proportional to alpha rather than
    sqrt(d).
    """
    if c <= 0:
        raise InvalidInputError("c must be positive")
    if np.all(g.coeffs == 0.0):
        return x_state
    alpha = x_state.alpha
    dim = x_state.dim
    if not is_pow2(dim):
        raise InvalidInputError("state dimension must be a power of two")
    grid = np.linspace(-1.0, 1.0, 4097)
    diag_x = diag_from_state(x_state)
    if g.coeffs[0] == 0.0:
        # ratio polynomial g(alpha t)/t, exact for constant-free g
        ratio = Polynomial(g.coeffs[1:] * alpha ** np.arange(1, len(g.coeffs)))
        eta = float(np.max(np.abs(ratio(grid))))
        transformed = eigen_transform(diag_x, Polynomial(ratio.coeffs / (2.0 * eta)))
        combined = lcu(
            [identity_encoding(dim), transformed],
            StatePrepPair.for_coefficients([1.0, 2.0 * c * eta / alpha]),
        )
        applied = product(combined, state_to_block(x_state))
    else:
        shifted = g.scaled_argument(alpha)
        g_max = float(np.max(np.abs(shifted(grid))))
        transformed = eigen_transform(diag_x, Polynomial(shifted.coeffs / (2.0 * g_max)))
        combined = lcu(
            [diag_x, transformed],
            StatePrepPair.for_coefficients([1.0, 2.0 * c * g_max]),
        )
        # the Hadamard column carries (x + c g(x)) / sqrt(d) into column zero
        applied = product(combined, hadamard_transform_encoding(dim))
    col = np.real(applied.block[:, 0])
    if float(np.linalg.norm(col)) < NORMALIZATION_FLOOR:
        raise DegenerateError("residual output vector is degenerate")
    return state_from_column(applied, 0)


@dataclass(frozen=True)
class _FfnResult:
    state: StateEncoding
    column_be: BlockEncoding
    psi_amplified: StateEncoding
    rounds: int
    degree: int
    gate_error: float
    c_norm: float


def _ffn_core(psi: StateEncoding, m1_be: BlockEncoding, m2_be: BlockEncoding,
              eps: float) -> _FfnResult:
    if np.max(np.abs(np.imag(psi.amplitudes))) > 0:
        raise InvalidInputError("feed-forward input state must be real")
    rounds = amplification_rounds(psi.alpha)
    psi_a = amplify(psi)
    d = psi_a.dim
    psi_block = state_to_block(psi_a, column=0, dim=d)
    y_be = product(m1_be, psi_block)
    diag_y = _diag_of_column(y_be, 0)
    gate_target = max(_stage_target(eps), series_conditioning_floor(diag_y.alpha))
    gate_poly, gate_rep, shrink = smooth_step_poly(diag_y.alpha, gate_target)
    gate = eigen_transform(diag_y, gate_poly)
    gate = replace(gate, eps_bound=gate.eps_bound + gate_rep.max_error)
    chain = product(m2_be, product(gate, y_be))
    column_be = rescale(chain, 2.0 / shrink)
    col = np.real(column_be.block[:, 0])
    c_norm = float(np.linalg.norm(col))
    if c_norm < NORMALIZATION_FLOOR:
        raise DegenerateError("feed-forward output normalization is degenerate")
    state = state_from_column(column_be, 0)
    return _FfnResult(state, column_be, psi_a, rounds, gate_poly.degree,
                      gate_rep.max_error, c_norm)


def ffn_gelu(psi: StateEncoding, m1_be: BlockEncoding, m2_be: BlockEncoding,
             eps: float) -> StateEncoding:
    """State proportional to M2 * GELU(M1 * psi); biases are zero.

    The input state is amplified first, then converted into a diagonal of
    pre-activations; the smooth erf gate is applied through the eigenvalue
    transform and the result multiplied back through the output matrix.  The
    degree of the gate polynomial scales with the pre-activation factor and
    the log of the stage target.
    """
    return _ffn_core(psi, m1_be, m2_be, eps).state


def _eps_block_schedule(eps: float, d: int, alpha_m: float, alpha_s: float,
                        alpha_w: float, sigma1: float, sigma2: float,
                        z_j: float, n_dim: int) -> float:
    """Input-error budget shape of the single-layer composition (constants 1)."""
    return (
        eps**8 * d**-4.0 * alpha_m**-14.0 * alpha_s**-6.0 * alpha_w**-6.0
        * sigma1**2 * sigma2**8 * math.sqrt(z_j / n_dim)
    )


def single_layer(inputs: TransformerInputs, j: int, eps: float,
                 masked: bool = False) -> tuple[StateEncoding, PipelineReport]:
    """Full layer for token j: LN(FFN(LN(Attention))) as an amplified state.

    Returns the output state at factor one together with a report carrying
    the ledger totals, stage error bounds, standardization factors, the
    partition function, polynomial degrees, amplification rounds, the
    recorded input-error budget shape and the cosine against the classical
    forward pass of the currently encoded matrices.
    """
    g_be, att = _attention(inputs, j, eps, masked)
    ln1_state, sigma1 = residual_layernorm(g_be, inputs.S_be, j)
    ffn = _ffn_core(ln1_state, inputs.M1_be, inputs.M2_be, eps)
    g2 = adjoint(ffn.column_be)
    s2 = adjoint(state_to_block(ffn.psi_amplified, column=0, dim=inputs.d))
    ln2_state, sigma2 = residual_layernorm(g2, s2, 0)
    out_rounds = amplification_rounds(ln2_state.alpha)
    final = amplify(ln2_state)

    weights = inputs.classical_weights()
    stages = reference.classical_transformer(weights, j, masked=masked)
    cosine = float(np.dot(np.real(final.amplitudes), stages.output))
    deviation = float(np.max(np.abs(np.real(final.amplitudes) - stages.output)))

    alpha_w = max(inputs.Wq_be.alpha, inputs.Wk_be.alpha, inputs.Wv_be.alpha)
    alpha_m = max(inputs.M1_be.alpha, inputs.M2_be.alpha)
    report = PipelineReport(
        ledger=final.ledger,
        stage_eps={
            "attention": g_be.eps_bound,
            "layernorm1": ln1_state.eps_bound,
            "ffn": ffn.state.eps_bound,
            "output": final.eps_bound,
        },
        sigma_ln1=sigma1,
        sigma_ln2=sigma2,
        z_j=att.z_j,
        softmax_degree=att.poly_degree,
        softmax_rounds=att.amplification_rounds,
        elementwise_queries=elementwise_query_schedule(att.poly_degree),
        ffn_degree=ffn.degree,
        ffn_rounds=ffn.rounds,
        output_rounds=out_rounds,
        cosine_classical=cosine,
        output_deviation=deviation,
        output=final,
        eps_block_schedule=_eps_block_schedule(
            eps, inputs.d, alpha_m, inputs.S_be.alpha, alpha_w,
            sigma1, sigma2, att.z_j, inputs.N,
        ),
        alpha0=inputs.alpha0,
    )
    return final, report


def tomography(state_source, eps: float, delta: float | None = None,
               sign_mode: str = "oracle", seed: int = 0) -> np.ndarray:
    """Sampled unit-vector estimate with L-infinity error eps w.h.p.

    Uses m = ceil(36 ln(d) / eps^2) preparations for the magnitudes; signs
    come from the simulated state directly in ``oracle`` mode or from a
    Hadamard-interference test with the magnitude estimate in ``sampled``
    mode.  ``delta`` is accepted for interface parity; the failure rate is
    governed by the fixed sample rule.
    """
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    state = state_source() if callable(state_source) else state_source
    amps = np.real(state.amplitudes)
    d = amps.size
    m = tomography_samples(d, eps)
    rng = np.random.default_rng(seed)
    p = amps**2
    p = p / p.sum()
    counts = rng.multinomial(m, p)
    mags = np.sqrt(counts / m)
    if sign_mode == "oracle":
        signs = np.where(amps < 0, -1.0, 1.0)
    elif sign_mode == "sampled":
        q = np.concatenate([(amps + mags) ** 2, (amps - mags) ** 2]) / 4.0
        total = q.sum()
        if total <= 0:
            raise DegenerateError("interference distribution is degenerate")
        c2 = rng.multinomial(m, q / total)
        signs = np.where(c2[:d] >= c2[d:], 1.0, -1.0)
    else:
        raise InvalidInputError(f"unknown sign mode {sign_mode!r}")
    return signs * mags


def tomography_samples(d: int, eps: float) -> int:
    return max(1, math.ceil(36.0 * math.log(max(2, d)) / eps**2))


def multilayer(inputs: TransformerInputs, layers: int, eps: float,
               tomography_eps: float = 0.25, sign_mode: str = "oracle",
               seed: int = 0, masked: bool = False) -> MultilayerResult:
    """Run every token through ``layers`` layers with sampled readout.

    Each layer runs the single-layer pipeline for all tokens, reads each
    output out at constant precision, and rebuilds the sequence encoding
    under the Frobenius factor model for the next layer.  The aggregate
    ledger scales each token's cost by the readout sample count.
    """
    if layers < 1:
        raise InvalidInputError("need at least one layer")
    seq = np.random.SeedSequence(seed)
    current = inputs
    ledger = QueryLedger()
    reports: list[PipelineReport] = []
    m = tomography_samples(inputs.d, tomography_eps)
    rows = None
    for _ in range(layers):
        rows = []
        for j in range(current.N):
            child = seq.spawn(1)[0]
            state, rep = single_layer(current, j, eps, masked=masked)
            vec = tomography(state, tomography_eps, sign_mode=sign_mode,
                             seed=int(child.generate_state(1)[0]))
            rows.append(vec)
            reports.append(rep)
            ledger = ledger.merged(rep.ledger.scaled(m))
        s_new = np.array(rows)
        s_be = from_matrix(s_new, "frobenius", "U_S")
        alpha0 = s_be.alpha**2 * current.Wq_be.alpha * current.Wk_be.alpha
        current = TransformerInputs(s_be, current.Wq_be, current.Wk_be,
                                    current.Wv_be, current.M1_be, current.M2_be,
                                    alpha0, current.N, current.d, current.d_ff)
    return MultilayerResult(np.array(rows), reports, ledger, m)
