"""Block-encoding calculus with exact blocks, tracked factors, error bounds
and query ledgers, plus an encoded transformer pipeline checked against a
classical reference and a randomized classical baseline."""

from .encoding import (
    BlockEncoding,
    QueryLedger,
    StateEncoding,
    StatePrepPair,
    adjoint,
    amplify,
    diag_from_state,
    from_matrix,
    hadamard_product,
    lcu,
    perturb,
    product,
    projector_encoding,
    state_from_column,
    tensor_product,
)
from .polynomials import (
    ApproxReport,
    Polynomial,
    eigen_transform,
    elementwise_poly,
    eval_poly,
    gelu_poly,
    taylor_exp,
)
from .reference import ClassicalWeights, NormProfile, classical_transformer, profile_matrix
from .transformer import (
    AttentionReport,
    PipelineReport,
    TransformerInputs,
    ffn_gelu,
    masked_self_attention,
    multilayer,
    residual_layernorm,
    residual_polynomial,
    self_attention,
    single_layer,
    softmax_state,
    softmax_state_nat,
    tomography,
)
from .dequant import SQAccess, approx_matvec, build_sq, dequant_attention
from .verifier import build_cnot_permutation, verify_composition

__version__ = "0.1.0"
