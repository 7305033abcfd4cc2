"""Explicit-unitary certification of the lazy calculus at tiny sizes.

Builds real dilations and the CNOT permutation P and composes them exactly as
the composition rules prescribe, then compares the extracted block against
the lazy result.  Dimensions are capped so the whole suite runs in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import encoding, linalg
from .errors import InvalidInputError, ResourceLimitError

MAX_TOTAL_QUBITS = 12  # explicit unitaries capped at 4096 x 4096
MAX_CNOT_QUBITS = 6


@dataclass(frozen=True)
class ExplicitEncoding:
    """A concrete unitary realizing an (alpha, ancillas, eps)-encoding."""

    unitary: np.ndarray
    alpha: float
    ancillas: int
    system_qubits: int


@dataclass(frozen=True)
class VerificationReport:
    kind: str
    dimension: int
    deviation: float
    tolerance: float
    passed: bool


def build_cnot_permutation(n: int) -> np.ndarray:
    """Permutation P = sum_{i,j} |i><i| (x) |i XOR j><j| on 2n qubits.

    P conjugates a tensor product so that the |0^n> slice of the second
    register holds the entrywise product; it is an involution.
    """
    if n < 1:
        raise InvalidInputError("need at least one qubit")
    if n > MAX_CNOT_QUBITS:
        raise ResourceLimitError(f"cnot permutation limited to {MAX_CNOT_QUBITS} qubits")
    dim = 1 << n
    p = np.zeros((dim * dim, dim * dim))
    for i in range(dim):
        for j in range(dim):
            p[i * dim + (i ^ j), i * dim + j] = 1.0
    return p


def explicit_dilation(be: encoding.BlockEncoding) -> ExplicitEncoding:
    """One-ancilla dilation of a lazy encoding's block at its factor."""
    block = be.block
    if block.shape[0] != block.shape[1]:
        raise InvalidInputError("explicit verification needs square blocks")
    u = linalg.unitary_dilation(block, be.alpha)
    return ExplicitEncoding(u, be.alpha, 1, int(math.log2(block.shape[0])))


def _embed(op: np.ndarray, dims: Sequence[int], targets: Sequence[int]) -> np.ndarray:
    """Lift ``op`` acting on registers ``targets`` (in order) to all registers."""
    rest = [i for i in range(len(dims)) if i not in targets]
    order = list(targets) + rest
    rest_dim = int(np.prod([dims[i] for i in rest])) if rest else 1
    full = np.kron(op, np.eye(rest_dim))
    if order == list(range(len(dims))):
        return full
    # perm maps (targets, rest)-ordered flat index -> natural flat index
    perm = np.transpose(
        np.arange(int(np.prod(dims))).reshape(list(dims)), axes=order
    ).reshape(-1)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return full[np.ix_(inv, inv)]


def _block_of(u: np.ndarray, keep_dim: int) -> np.ndarray:
    """Top-left keep_dim x keep_dim block (all other registers at |0>)."""
    return u[:keep_dim, :keep_dim]


def _completed_unitary(first_column: np.ndarray) -> np.ndarray:
    """Unitary whose first column is the given unit vector (Householder)."""
    v = np.asarray(first_column, dtype=complex)
    dim = v.size
    e0 = np.zeros(dim, dtype=complex)
    e0[0] = 1.0
    w = v - e0
    nw = np.linalg.norm(w)
    if nw < 1e-14:
        return np.eye(dim, dtype=complex)
    w = w / nw
    return np.eye(dim, dtype=complex) - 2.0 * np.outer(w, w.conj())


def _explicit_product(ops: Sequence[encoding.BlockEncoding]) -> tuple[np.ndarray, float]:
    u, v = ops
    eu, ev = explicit_dilation(u), explicit_dilation(v)
    n = eu.system_qubits
    dims = [2, 2, 2**n]  # anc_u, anc_v, system
    full = _embed(eu.unitary, dims, [0, 2]) @ _embed(ev.unitary, dims, [1, 2])
    # ancillas are the leading registers, so the encoded block is top-left
    return _block_of(full, 2**n), eu.alpha * ev.alpha


def _explicit_hadamard(ops: Sequence[encoding.BlockEncoding]) -> tuple[np.ndarray, float]:
    u, v = ops
    eu, ev = explicit_dilation(u), explicit_dilation(v)
    n = eu.system_qubits
    p = build_cnot_permutation(n)
    dims = [2, 2, 2**n, 2**n]  # anc_u, anc_v, system 1, system 2
    lifted = (
        _embed(p, dims, [2, 3])
        @ _embed(eu.unitary, dims, [0, 2])
        @ _embed(ev.unitary, dims, [1, 3])
        @ _embed(p, dims, [2, 3])
    )
    # project anc_u = anc_v = 0 and system 2 = |0^n>, keeping system 1 free
    dim_sys = 2**n
    keep = [s1 * dim_sys for s1 in range(dim_sys)]
    return lifted[np.ix_(keep, keep)], eu.alpha * ev.alpha


def _explicit_lcu(ops: Sequence[encoding.BlockEncoding], y: np.ndarray) -> tuple[np.ndarray, float]:
    alpha = max(t.alpha for t in ops)
    # every operand is dilated at the common factor, as the lazy rule assumes
    dilations = [
        explicit_dilation(encoding.BlockEncoding(t.block, alpha, t.ancillas, t.eps_bound))
        for t in ops
    ]
    n = dilations[0].system_qubits
    m = len(ops)
    b_dim = 1 << max(1, (m - 1).bit_length())
    beta = float(np.sum(np.abs(y)))
    amp_l = np.zeros(b_dim)
    amp_r = np.zeros(b_dim)
    amp_l[:m] = np.sqrt(np.abs(y) / beta)
    amp_r[:m] = np.sign(y) * np.sqrt(np.abs(y) / beta)
    p_l = _completed_unitary(amp_l)
    p_r = _completed_unitary(amp_r)
    sys_anc = 2 * (2**n)
    w = np.zeros((b_dim * sys_anc, b_dim * sys_anc), dtype=complex)
    for k in range(b_dim):
        op = dilations[k].unitary if k < m else np.eye(sys_anc)
        w[k * sys_anc : (k + 1) * sys_anc, k * sys_anc : (k + 1) * sys_anc] = op
    dims = [b_dim, 2, 2**n]
    full = _embed(p_l.conj().T, dims, [0]) @ w @ _embed(p_r, dims, [0])
    return _block_of(full, 2**n), alpha * beta


def verify_composition(kind: str, operands: Sequence[encoding.BlockEncoding],
                       tolerance: float = 1e-9,
                       coefficients=None) -> VerificationReport:
    """Compose explicit dilations per ``kind`` and compare with the calculus.

    kind is one of product, hadamard, lcu, dilation.  PASS iff the maximum
    entry deviation between the explicit block (times its factor) and the
    lazy block is at most ``tolerance``.
    """
    if not operands:
        raise InvalidInputError("verification needs at least one operand")
    n = int(math.log2(operands[0].shape[0]))
    explicit_dim = {
        "dilation": 2 ** (n + 1),
        "product": 2 ** (n + 2),
        "hadamard": 2 ** (2 * n + 2),
        "lcu": (1 << max(1, (len(operands) - 1).bit_length())) * 2 ** (n + 1),
    }.get(kind)
    if explicit_dim is None:
        raise InvalidInputError(f"unknown verification kind {kind!r}")
    if explicit_dim > 2**MAX_TOTAL_QUBITS:
        raise ResourceLimitError(
            f"explicit dimension {explicit_dim} exceeds the 2^{MAX_TOTAL_QUBITS} ceiling"
        )

    if kind == "dilation":
        (u,) = operands
        eu = explicit_dilation(u)
        explicit_block = _block_of(eu.unitary, u.shape[0]) * eu.alpha
        lazy_block = u.block
        unitarity = linalg.spectral_norm(
            eu.unitary.conj().T @ eu.unitary - np.eye(eu.unitary.shape[0])
        )
        deviation = max(float(np.max(np.abs(explicit_block - lazy_block))), unitarity)
    elif kind == "product":
        explicit, factor = _explicit_product(operands)
        lazy = encoding.product(*operands)
        deviation = float(np.max(np.abs(explicit * factor - lazy.block)))
    elif kind == "hadamard":
        explicit, factor = _explicit_hadamard(operands)
        lazy = encoding.hadamard_product(*operands)
        deviation = float(np.max(np.abs(explicit * factor - lazy.block)))
    elif kind == "lcu":
        if coefficients is None:
            raise InvalidInputError("lcu verification needs coefficients")
        y = np.asarray(coefficients, dtype=float)
        explicit, factor = _explicit_lcu(operands, y)
        lazy = encoding.lcu(operands, encoding.StatePrepPair.for_coefficients(y))
        deviation = float(np.max(np.abs(explicit * factor - lazy.block)))

    return VerificationReport(kind, operands[0].shape[0], deviation, tolerance,
                              deviation <= tolerance)
