"""Pipeline stages against classical oracles and tracked bounds."""

import math

import numpy as np
import pytest

from qformer import reference, transformer
from qformer.encoding import StateEncoding, from_matrix
from qformer.errors import ContractViolationError, DegenerateError
from qformer.polynomials import Polynomial
from qformer.transformer import TransformerInputs


def softmax_oracle(scores):
    e = np.exp(scores - np.max(scores))
    return e / e.sum()


def make_inputs(n, d, d_ff, seed):
    return TransformerInputs.from_weights(reference.random_weights(n, d, d_ff, seed=seed))


# --- softmax state ------------------------------------------------------------

def test_softmax_state_constant_row():
    from qformer.encoding import BlockEncoding

    be = BlockEncoding(np.zeros((4, 4)), 1.0, 1, 0.0)  # zero scores
    state, rep = transformer.softmax_state(be, 1, 1e-3)
    assert np.allclose(state.amplitudes, 0.5, atol=1e-9)
    assert rep.z_j == pytest.approx(4.0)


def test_softmax_state_matches_classical():
    rng = np.random.default_rng(33)
    for trial in range(20):
        a = rng.standard_normal((16, 16))
        be = from_matrix(a, "spectral", "U_A")
        j = int(rng.integers(0, 16))
        state, rep = transformer.softmax_state(be, j, 1e-3)
        probs = softmax_oracle(a[j] / be.alpha)
        assert abs(np.sum(state.amplitudes**2) - 1.0) < 1e-9
        assert np.max(np.abs(state.amplitudes - np.sqrt(probs))) <= rep.eps_tracked + 1e-15
        assert np.max(np.abs(state.amplitudes**2 - probs)) <= 2 * rep.eps_tracked + 1e-15
        assert rep.z_j >= 16 / math.e
        assert rep.poly_degree == transformer.softmax_degree(16, 1e-3)


def test_softmax_routes_agree():
    rng = np.random.default_rng(35)
    a = rng.standard_normal((16, 16))
    be = from_matrix(a, "spectral", "U_A")
    s1, r1 = transformer.softmax_state(be, 5, 1e-3)
    s2, r2 = transformer.softmax_state_nat(be, 5, 1e-3)
    assert np.max(np.abs(s1.amplitudes - s2.amplitudes)) <= r1.eps_tracked + r2.eps_tracked
    # zero row: both give the uniform state
    from qformer.encoding import BlockEncoding

    z = BlockEncoding(np.zeros((8, 8)), 1.0, 1, 0.0, label="U_Z")
    u1, _ = transformer.softmax_state(z, 3, 1e-3)
    u2, _ = transformer.softmax_state_nat(z, 3, 1e-3)
    assert np.allclose(u1.amplitudes, u2.amplitudes, atol=1e-8)
    assert np.allclose(u1.amplitudes, 1 / math.sqrt(8), atol=1e-8)


def test_nat_route_uses_fewer_ancillas():
    rng = np.random.default_rng(37)
    be = from_matrix(rng.standard_normal((16, 16)), "frobenius", "U_A")
    s1, r1 = transformer.softmax_state(be, 0, 0.1)
    s2, r2 = transformer.softmax_state_nat(be, 0, 0.1)
    assert r1.poly_degree >= 2
    assert s2.ancillas < s1.ancillas


def test_softmax_ledger_schedule():
    rng = np.random.default_rng(39)
    be = from_matrix(rng.standard_normal((8, 8)), "spectral", "U_A")
    state, rep = transformer.softmax_state(be, 2, 1e-2)
    from qformer.polynomials import elementwise_query_schedule

    expected = rep.amplification_rounds * elementwise_query_schedule(rep.poly_degree)
    assert state.ledger.total("U_A") == expected


# --- attention ------------------------------------------------------------------

def test_attention_single_token():
    w = reference.random_weights(1, 4, 16, seed=2)
    inputs = TransformerInputs.from_weights(w)
    g, rep = transformer.self_attention(inputs, 0, 1e-3)
    assert np.max(np.abs(np.real(g.block[0]) - (w.S @ w.W_v)[0])) < 1e-10


def test_attention_matches_classical():
    inputs = make_inputs(8, 4, 16, seed=4)
    w = inputs.classical_weights()
    for j in (0, 3, 7):
        g, rep = transformer.self_attention(inputs, j, 1e-4)
        stages = reference.classical_transformer(w, j)
        dev = np.max(np.abs(np.real(g.block[j]) - stages.attention_row))
        assert dev <= g.eps_bound + 1e-12
        assert dev < 1e-8  # exact inputs leave only the series gap
        assert g.alpha == pytest.approx(inputs.S_be.alpha * inputs.Wv_be.alpha)


def test_masked_attention_cases():
    inputs = make_inputs(8, 4, 16, seed=6)
    w = inputs.classical_weights()
    # first token attends only to itself
    g0, _ = transformer.masked_self_attention(inputs, 0, 1e-3)
    v = w.S @ w.W_v
    assert np.max(np.abs(np.real(g0.block[0]) - v[0])) < 1e-9
    # full prefix reduces to the unmasked operator
    gm, _ = transformer.masked_self_attention(inputs, 7, 1e-3)
    gu, _ = transformer.self_attention(inputs, 7, 1e-3)
    assert np.max(np.abs(gm.block[7] - gu.block[7])) < 1e-9
    # middle token matches the classical mask oracle
    g3, _ = transformer.masked_self_attention(inputs, 3, 1e-3)
    stages = reference.classical_transformer(w, 3, masked=True)
    assert np.max(np.abs(np.real(g3.block[3]) - stages.attention_row)) < 1e-8


def test_alpha0_consistency_enforced():
    inputs = make_inputs(8, 4, 16, seed=4)
    bad = TransformerInputs(inputs.S_be, inputs.Wq_be, inputs.Wk_be, inputs.Wv_be,
                            inputs.M1_be, inputs.M2_be, inputs.alpha0 * 2,
                            inputs.N, inputs.d, inputs.d_ff)
    with pytest.raises(ContractViolationError):
        transformer.self_attention(bad, 0, 1e-3)


# --- residual + layer norm --------------------------------------------------------

def test_residual_layernorm_of_s_alone():
    inputs = make_inputs(8, 4, 16, seed=8)
    zero_g = from_matrix(np.full((8, 4), 1e-15), "frobenius")
    state, sigma = transformer.residual_layernorm(zero_g, inputs.S_be, 2)
    s_row = np.real(inputs.S_be.block[2])
    expected = (s_row - s_row.mean()) / np.linalg.norm(s_row - s_row.mean())
    assert np.max(np.abs(state.amplitudes - expected)) < 1e-9


def test_residual_layernorm_fixed_point():
    # row already zero-mean with norm sqrt(d): amplitudes are row / sqrt(d)
    row = np.array([1.0, -1.0, 1.0, -1.0])
    s = np.zeros((4, 4))
    s[1] = row
    s_be = from_matrix(s, "frobenius")
    g_be = from_matrix(np.full((4, 4), 1e-15), "frobenius")
    state, sigma = transformer.residual_layernorm(g_be, s_be, 1)
    assert sigma == pytest.approx(2.0, abs=1e-9)  # ||row|| = sqrt(d) = 2
    assert np.max(np.abs(state.amplitudes - row / 2.0)) < 1e-9


def test_residual_layernorm_matches_classical():
    inputs = make_inputs(8, 4, 16, seed=10)
    w = inputs.classical_weights()
    g, _ = transformer.self_attention(inputs, 5, 1e-4)
    state, sigma = transformer.residual_layernorm(g, inputs.S_be, 5)
    stages = reference.classical_transformer(w, 5)
    target = stages.ln1_row  # unit norm under the 1/sqrt(d) convention
    dev = np.max(np.abs(state.amplitudes - target))
    assert dev <= state.eps_bound + 1e-12
    assert dev < 1e-7
    assert abs(np.mean(state.amplitudes)) < 1e-9
    assert abs(np.linalg.norm(state.amplitudes) - 1.0) < 1e-9


def test_residual_layernorm_degenerate_variance():
    s = np.ones((4, 4))
    s_be = from_matrix(s, "frobenius")
    with pytest.raises(DegenerateError):
        transformer.residual_layernorm(s_be, s_be, 0)


# --- polynomial residual -----------------------------------------------------------

def test_residual_polynomial_zero_g():
    psi = StateEncoding(np.array([0.6, 0.8, 0.0, 0.0]), 1.0, 0, 0.0)
    out = transformer.residual_polynomial(psi, Polynomial([0.0]), 1.0)
    assert out is psi


def test_residual_polynomial_linear_keeps_direction():
    psi = StateEncoding(np.array([0.6, 0.8, 0.0, 0.0]), 1.0, 0, 0.0)
    out = transformer.residual_polynomial(psi, Polynomial([0.0, 1.0]), 1.0)
    assert np.max(np.abs(out.amplitudes - psi.amplitudes)) < 1e-10


def test_residual_polynomial_square():
    psi = StateEncoding(np.array([0.6, 0.8]), 1.0, 0, 0.0)
    out = transformer.residual_polynomial(psi, Polynomial([0.0, 0.0, 1.0]), 0.5)
    target = np.array([0.78, 1.12])
    target /= np.linalg.norm(target)
    assert np.max(np.abs(out.amplitudes - target)) < 1e-10


def test_residual_polynomial_with_constant_term():
    psi = StateEncoding(np.array([0.6, 0.8]), 1.0, 0, 0.0)
    g = Polynomial([0.25, 0.5])
    out = transformer.residual_polynomial(psi, g, 1.0)
    values = np.array([0.25 + 0.5 * 0.6 + 0.6, 0.25 + 0.5 * 0.8 + 0.8])
    target = values / np.linalg.norm(values)
    assert np.max(np.abs(out.amplitudes - target)) < 1e-10


# --- feed-forward -------------------------------------------------------------------

def test_ffn_identity_on_basis_state():
    d = 4
    eye = from_matrix(np.eye(d), "spectral", "U_M")
    psi = StateEncoding(np.eye(d)[1], 1.0, 0, 0.0)
    out = transformer.ffn_gelu(psi, eye, eye, 1e-6)
    assert np.max(np.abs(out.amplitudes - np.eye(d)[1])) < 1e-8


def test_ffn_matches_classical():
    rng = np.random.default_rng(43)
    w = reference.random_weights(8, 4, 16, seed=12)
    inputs = TransformerInputs.from_weights(w)
    z = rng.standard_normal(4)
    z /= np.linalg.norm(z)
    psi = StateEncoding(z, 1.0, 0, 0.0)
    out = transformer.ffn_gelu(psi, inputs.M1_be, inputs.M2_be, 1e-6)
    from qformer.polynomials import gelu

    target = gelu(z @ w.M1) @ w.M2
    target /= np.linalg.norm(target)
    dev = np.max(np.abs(out.amplitudes - target))
    assert dev <= out.eps_bound + 1e-12
    assert dev < 1e-8


def test_ffn_near_zero_output_and_degenerate():
    d = 4
    # a large negative pre-activation drives the output toward zero
    m1 = from_matrix(-np.eye(d) * 6.0, "spectral", "U_M1")
    eye = from_matrix(np.eye(d), "spectral", "U_M2")
    psi = StateEncoding(np.eye(d)[0], 1.0, 0, 0.0)
    assert transformer._ffn_core(psi, m1, eye, 1e-8).c_norm < 1e-4
    # an output matrix at the noise floor hits the degeneracy guard
    tiny = from_matrix(np.eye(d) * 1e-14, "spectral", "U_T")
    with pytest.raises(DegenerateError):
        transformer.ffn_gelu(psi, m1, tiny, 1e-8)


# --- single layer --------------------------------------------------------------------

def test_single_layer_cosine():
    for seed in range(3):
        inputs = make_inputs(8, 4, 16, seed=20 + seed)
        state, rep = transformer.single_layer(inputs, seed % 8, 1e-4)
        assert rep.cosine_classical >= 1 - 1e-6
        assert rep.cosine_classical >= 1 - rep.stage_eps["output"] ** 2
        assert rep.output_deviation <= rep.stage_eps["output"]
        assert rep.stage_eps["output"] > 0
        assert rep.ledger.total("U_S") > 0
        assert rep.eps_block_schedule > 0


def test_single_layer_constant_rows_degenerate():
    s = np.ones((4, 4)) * 0.5
    w = reference.ClassicalWeights(s, np.eye(4), np.eye(4), np.eye(4),
                                   np.ones((4, 16)) / 4, np.ones((16, 4)) / 8, 0.25)
    inputs = TransformerInputs.from_weights(w)
    with pytest.raises(DegenerateError):
        transformer.single_layer(inputs, 0, 1e-3)


def test_single_layer_masked_matches_classical():
    inputs = make_inputs(8, 4, 16, seed=31)
    state, rep = transformer.single_layer(inputs, 4, 1e-4, masked=True)
    stages = reference.classical_transformer(inputs.classical_weights(), 4, masked=True)
    assert float(np.dot(np.real(state.amplitudes), stages.output)) >= 1 - 1e-6


# --- tomography ----------------------------------------------------------------------

def test_tomography_basis_state_exact():
    e3 = StateEncoding(np.eye(8)[3], 1.0, 0, 0.0)
    for mode in ("oracle", "sampled"):
        got = transformer.tomography(e3, 0.5, sign_mode=mode, seed=5)
        assert np.array_equal(got, np.eye(8)[3])
    neg = StateEncoding(-np.eye(8)[3], 1.0, 0, 0.0)
    got = transformer.tomography(neg, 0.5, sign_mode="sampled", seed=5)
    assert np.array_equal(got, -np.eye(8)[3])


def test_tomography_uniform_state():
    d = 16
    psi = StateEncoding(np.full(d, 0.25), 1.0, 0, 0.0)
    got = transformer.tomography(psi, 0.1, seed=11)
    assert np.max(np.abs(got - 0.25)) <= 0.1
    assert abs(np.linalg.norm(got) - 1.0) < 1e-12


def test_tomography_sample_rule():
    assert transformer.tomography_samples(16, 0.1) == math.ceil(36 * math.log(16) / 0.01)
    # m grows like log d / eps^2
    assert transformer.tomography_samples(256, 0.1) == pytest.approx(
        2 * transformer.tomography_samples(16, 0.1), rel=0.01)
    assert transformer.tomography_samples(16, 0.05) == pytest.approx(
        4 * transformer.tomography_samples(16, 0.1), rel=0.01)


def test_tomography_sampled_signs():
    rng = np.random.default_rng(47)
    v = rng.standard_normal(8)
    v /= np.linalg.norm(v)
    psi = StateEncoding(v, 1.0, 0, 0.0)
    got = transformer.tomography(psi, 0.05, sign_mode="sampled", seed=3)
    big = np.abs(v) > 0.2
    assert np.all(np.sign(got[big]) == np.sign(v[big]))


def test_tomography_accepts_callable_source():
    psi = StateEncoding(np.eye(4)[0], 1.0, 0, 0.0)
    got = transformer.tomography(lambda: psi, 0.5, seed=2)
    assert np.array_equal(got, np.eye(4)[0])


# --- multilayer ------------------------------------------------------------------------

def test_multilayer_single_layer_definition():
    inputs = make_inputs(4, 4, 16, seed=51)
    res = transformer.multilayer(inputs, 1, 1e-3, tomography_eps=0.1, seed=9)
    assert res.sequence.shape == (4, 4)
    w = inputs.classical_weights()
    for j in range(4):
        target = reference.classical_transformer(w, j).output
        assert np.max(np.abs(res.sequence[j] - target)) <= 0.1
    # aggregate ledger scales per-token cost by the sample count
    manual = sum(r.ledger.total("U_S") for r in res.reports) * res.tomography_samples
    assert res.ledger.total("U_S") == manual


def test_multilayer_two_layers_match_classical():
    inputs = make_inputs(4, 4, 16, seed=53)
    tom_eps = 0.1
    res = transformer.multilayer(inputs, 2, 1e-3, tomography_eps=tom_eps, seed=13)
    w = inputs.classical_weights()
    s1 = np.array([reference.classical_transformer(w, j).output for j in range(4)])
    # second layer rebuilds the sequence under the Frobenius factor model
    alpha0 = float(np.linalg.norm(s1)) ** 2 * inputs.Wq_be.alpha * inputs.Wk_be.alpha
    w2 = reference.ClassicalWeights(s1, w.W_q, w.W_k, w.W_v, w.M1, w.M2, alpha0)
    out2 = np.array([reference.classical_transformer(w2, j).output for j in range(4)])
    assert np.max(np.abs(res.sequence - out2)) <= tom_eps
    assert len(res.reports) == 8


def test_multilayer_deterministic():
    inputs = make_inputs(4, 4, 16, seed=55)
    a = transformer.multilayer(inputs, 1, 1e-3, seed=21)
    b = transformer.multilayer(inputs, 1, 1e-3, seed=21)
    assert np.array_equal(a.sequence, b.sequence)


# --- robustness across shapes ------------------------------------------------------------

@pytest.mark.parametrize("n,d,d_ff", [(2, 2, 4), (4, 8, 32), (16, 8, 16)])
def test_single_layer_other_shapes(n, d, d_ff):
    inputs = make_inputs(n, d, d_ff, seed=61 + n)
    state, rep = transformer.single_layer(inputs, n - 1, 1e-3)
    assert rep.cosine_classical >= 1 - 1e-6
    assert rep.output_deviation <= rep.stage_eps["output"]


def test_masked_two_tokens():
    inputs = make_inputs(2, 4, 16, seed=71)
    w = inputs.classical_weights()
    for j in (0, 1):
        g, _ = transformer.masked_self_attention(inputs, j, 1e-3)
        stages = reference.classical_transformer(w, j, masked=True)
        assert np.max(np.abs(np.real(g.block[j]) - stages.attention_row)) < 1e-8


def test_single_layer_loose_eps():
    inputs = make_inputs(8, 4, 16, seed=73)
    state, rep = transformer.single_layer(inputs, 2, 0.5)
    assert rep.output_deviation <= rep.stage_eps["output"]
    assert abs(np.linalg.norm(state.amplitudes) - 1.0) < 1e-9


def test_inputs_reject_non_power_of_two():
    from qformer.errors import InvalidInputError

    w = reference.random_weights(8, 4, 16, seed=75)
    bad = reference.ClassicalWeights(w.S[:6], w.W_q, w.W_k, w.W_v, w.M1, w.M2, w.alpha0)
    with pytest.raises(InvalidInputError):
        TransformerInputs.from_weights(bad)
