"""Batch front-end: matrix ingestion, experiment orchestration, reports.

Every subcommand writes a JSON report with a fixed key order (no timestamps,
so identical config and seed give identical bytes); sweep commands
additionally emit a delimited table and a rendered figure next to it.
Exit codes: 0 ok, 2 missing file, 3 parse error, 4 invariant failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dequant, plotting, polynomials, reference, transformer, verifier
from .encoding import from_matrix
from .errors import QFormerError
from .matrix_io import MatrixParseError, load_matrix, save_table

EXIT_OK = 0
EXIT_MISSING_FILE = 2
EXIT_PARSE = 3
EXIT_INVARIANT = 4

WEIGHT_FILES = ("S", "Wq", "Wk", "Wv", "M1", "M2")


@dataclass
class ExperimentConfig:
    command: str
    n: int = 8
    d: int = 4
    dff: int = 16
    layers: int = 1
    j: int = 0
    eps: float = 1e-3
    delta: float = 0.05
    seed: int = 7
    factor_model: str = "frobenius"
    matrix: str | None = None
    weights: str | None = None
    out: str = "qformer-out"

    def validate(self) -> None:
        if not 0.0 < self.eps < 1.0:
            raise QFormerError(f"eps must be in (0, 1), got {self.eps}")
        if not 0.0 < self.delta < 1.0:
            raise QFormerError(f"delta must be in (0, 1), got {self.delta}")


def _worker_count() -> int:
    env = os.environ.get("QFORMER_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def _outdir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path: Path, payload: dict) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _load_weights(cfg: ExperimentConfig) -> reference.ClassicalWeights:
    if cfg.weights is None:
        return reference.random_weights(cfg.n, cfg.d, cfg.dff, seed=cfg.seed)
    base = Path(cfg.weights)
    mats = {}
    for name in WEIGHT_FILES:
        path = base / f"{name}.csv"
        if not path.exists():
            raise FileNotFoundError(f"missing weight file {path}")
        mats[name] = np.real(load_matrix(path))
    n, d = mats["S"].shape
    return reference.ClassicalWeights(
        mats["S"], mats["Wq"], mats["Wk"], mats["Wv"], mats["M1"], mats["M2"],
        alpha0=math.sqrt(d),
    )


def _inputs_from(cfg: ExperimentConfig, weights: reference.ClassicalWeights):
    model = cfg.factor_model
    row_sparsity = None
    if model.startswith("row_sparse"):
        _, _, arg = model.partition(":")
        row_sparsity = int(arg) if arg else weights.S.shape[1]
        s_be = from_matrix(weights.S, "row_sparse", "U_S", row_sparsity=row_sparsity)
        inputs = transformer.TransformerInputs.from_weights(weights)
        return transformer.TransformerInputs(
            s_be, inputs.Wq_be, inputs.Wk_be, inputs.Wv_be, inputs.M1_be,
            inputs.M2_be, s_be.alpha**2 * inputs.Wq_be.alpha * inputs.Wk_be.alpha,
            inputs.N, inputs.d, inputs.d_ff,
        )
    return transformer.TransformerInputs.from_weights(weights, s_model=model)


def cmd_verify(cfg: ExperimentConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    n = min(cfg.n, 2)
    kinds = ("dilation", "product", "hadamard", "lcu")
    results = {k: 0.0 for k in kinds}
    trials = 50
    for kind in kinds:
        for _ in range(trials):
            dim = 2 ** rng.integers(1, n + 1)
            ops = []
            count = 2 if kind in ("product", "hadamard") else (1 if kind == "dilation" else 3)
            for _ in range(count):
                a = rng.standard_normal((dim, dim))
                ops.append(from_matrix(a, "spectral"))
            coeffs = rng.standard_normal(len(ops)) if kind == "lcu" else None
            rep = verifier.verify_composition(kind, ops, tolerance=1e-9,
                                              coefficients=coeffs)
            results[kind] = max(results[kind], rep.deviation)
    passed = all(v <= 1e-9 for v in results.values())
    payload = {
        "command": "verify",
        "seed": cfg.seed,
        "trials_per_kind": trials,
        "max_deviation": {k: results[k] for k in kinds},
        "tolerance": 1e-9,
        "passed": passed,
    }
    _write_json(_outdir(cfg) / "verify.json", payload)
    for kind in kinds:
        status = "PASS" if results[kind] <= 1e-9 else "FAIL"
        print(f"{status} {kind}: max deviation {results[kind]:.3e}")
    return EXIT_OK if passed else EXIT_INVARIANT


def cmd_run_layer(cfg: ExperimentConfig) -> int:
    weights = _load_weights(cfg)
    inputs = _inputs_from(cfg, weights)
    state, rep = transformer.single_layer(inputs, cfg.j, cfg.eps)
    stages = reference.classical_transformer(inputs.classical_weights(), cfg.j)
    deviation = rep.output_deviation
    sound = deviation <= rep.stage_eps["output"] + 1e-12
    out = _outdir(cfg)
    payload = {
        "command": "run-layer",
        "n": cfg.n, "d": cfg.d, "dff": cfg.dff, "j": cfg.j,
        "eps": cfg.eps, "seed": cfg.seed, "factor_model": cfg.factor_model,
        "alpha0": rep.alpha0,
        "cosine_classical": rep.cosine_classical,
        "output_deviation_linf": deviation,
        "tracked_output_bound": rep.stage_eps["output"],
        "bound_sound": sound,
        "z_j": rep.z_j,
        "softmax_degree": rep.softmax_degree,
        "softmax_rounds": rep.softmax_rounds,
        "ffn_degree": rep.ffn_degree,
        "ffn_rounds": rep.ffn_rounds,
        "output_rounds": rep.output_rounds,
        "sigma_ln1": rep.sigma_ln1,
        "sigma_ln2": rep.sigma_ln2,
        "stage_eps": rep.stage_eps,
        "eps_block_schedule": rep.eps_block_schedule,
        "ledger": {k: rep.ledger.counts[k] for k in sorted(rep.ledger.counts)},
        "ancilla_peak": rep.ledger.ancilla_peak,
    }
    _write_json(out / "run_layer.json", payload)
    rows = [
        [k, float(np.real(state.amplitudes[k])), float(stages.output[k])]
        for k in range(cfg.d)
    ]
    save_table(out / "run_layer.csv", ["index", "amplitude", "classical"], rows)
    plotting.save_semilogy(
        out / "run_layer.png",
        list(range(cfg.d)),
        {"|amplitude|": np.abs(state.amplitudes) + 1e-18,
         "|classical|": np.abs(stages.output) + 1e-18},
        "coordinate", "magnitude", "output state against classical reference",
    )
    print(f"cosine {rep.cosine_classical:.9f}, tracked bound {rep.stage_eps['output']:.3e}")
    return EXIT_OK if sound else EXIT_INVARIANT


def cmd_run_multilayer(cfg: ExperimentConfig) -> int:
    weights = _load_weights(cfg)
    inputs = _inputs_from(cfg, weights)
    result = transformer.multilayer(inputs, cfg.layers, cfg.eps, seed=cfg.seed)
    out = _outdir(cfg)
    cosines = [r.cosine_classical for r in result.reports]
    sound = all(r.output_deviation <= r.stage_eps["output"] + 1e-12
                for r in result.reports)
    payload = {
        "command": "run-multilayer",
        "n": cfg.n, "d": cfg.d, "dff": cfg.dff, "layers": cfg.layers,
        "eps": cfg.eps, "seed": cfg.seed,
        "tomography_samples": result.tomography_samples,
        "min_cosine": min(cosines),
        "bounds_sound": sound,
        "ledger": {k: result.ledger.counts[k] for k in sorted(result.ledger.counts)},
        "ancilla_peak": result.ledger.ancilla_peak,
    }
    _write_json(out / "run_multilayer.json", payload)
    rows = [[i] + [float(v) for v in row] for i, row in enumerate(result.sequence)]
    save_table(out / "run_multilayer.csv",
               ["token"] + [f"dim{k}" for k in range(result.sequence.shape[1])], rows)
    plotting.save_semilogy(
        out / "run_multilayer.png", list(range(len(cosines))),
        {"1 - cosine": np.maximum(1e-18, 1.0 - np.array(cosines))},
        "token run index", "1 - cosine", "per-token agreement across layers",
    )
    print(f"{cfg.layers} layers done, min cosine {min(cosines):.9f}")
    return EXIT_OK if sound else EXIT_INVARIANT


def _scaling_point(args):
    n, base, eps, seed = args
    rng = np.random.default_rng(seed)
    d = base.S.shape[1]
    s = rng.standard_normal((n, d)) / math.sqrt(d)
    s = s / np.linalg.norm(s, axis=1, keepdims=True)
    w = reference.ClassicalWeights(s, base.W_q, base.W_k, base.W_v,
                                   base.M1, base.M2, base.alpha0)
    inputs = transformer.TransformerInputs.from_weights(w)
    _, rep = transformer.single_layer(inputs, 0, eps)
    return {
        "n": n,
        "alpha_s": inputs.S_be.alpha,
        "z_j": rep.z_j,
        "softmax_degree": rep.softmax_degree,
        "softmax_rounds": rep.softmax_rounds,
        "elementwise_queries": rep.elementwise_queries,
        "ffn_rounds": rep.ffn_rounds,
        "output_rounds": rep.output_rounds,
        "us_queries": rep.ledger.total("U_S"),
        "us_queries_normalized": dequant.normalized_sequence_queries(rep),
    }


def cmd_scaling(cfg: ExperimentConfig) -> int:
    ns = [2**k for k in range(3, max(4, int(math.log2(cfg.n))) + 1)]
    base = reference.random_weights(max(ns), cfg.d, cfg.dff, seed=cfg.seed)
    args = [(n, base, cfg.eps, cfg.seed + 1000 + i) for i, n in enumerate(ns)]
    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        points = list(pool.map(_scaling_point, args))
    slope = plotting.fit_loglog_slope([p["n"] for p in points],
                                      [p["us_queries_normalized"] for p in points])
    payload = {
        "command": "scaling",
        "d": cfg.d, "dff": cfg.dff, "eps": cfg.eps, "seed": cfg.seed,
        "n_values": ns,
        "normalized_us_slope": slope,
        "slope_window": [0.35, 0.65],
        "passed": 0.35 <= slope <= 0.65,
        "points": points,
    }
    out = _outdir(cfg)
    header = list(points[0].keys())
    save_table(out / "scaling.csv", header, [[p[h] for h in header] for p in points])
    plotting.save_loglog(
        out / "scaling.png", ns,
        {"U_S queries": [p["us_queries"] for p in points],
         "normalized": [p["us_queries_normalized"] for p in points]},
        "sequence length N", "queries", "sequence-query scaling",
    )
    if cfg.layers > 1:
        ml = []
        for i, n in enumerate([x for x in ns if x <= 64]):
            rng = np.random.default_rng(cfg.seed + 2000 + i)
            s = rng.standard_normal((n, cfg.d)) / math.sqrt(cfg.d)
            s = s / np.linalg.norm(s, axis=1, keepdims=True)
            w = reference.ClassicalWeights(s, base.W_q, base.W_k, base.W_v,
                                           base.M1, base.M2, base.alpha0)
            inputs = transformer.TransformerInputs.from_weights(w)
            res = transformer.multilayer(inputs, 1, cfg.eps, seed=cfg.seed + i)
            per_token = [dequant.normalized_sequence_queries(r) for r in res.reports]
            ml.append({"n": n, "normalized_total": float(np.sum(per_token)) * res.tomography_samples})
        payload["multilayer_slope"] = plotting.fit_loglog_slope(
            [p["n"] for p in ml], [p["normalized_total"] for p in ml]
        )
        payload["multilayer_points"] = ml
    _write_json(out / "scaling.json", payload)
    print(f"normalized U_S slope {slope:.3f} over N={ns}")
    return EXIT_OK if payload["passed"] else EXIT_INVARIANT


def cmd_approx(cfg: ExperimentConfig) -> int:
    decades = []
    eps = 1e-2
    while eps >= cfg.eps * (1 - 1e-12):
        decades.append(eps)
        eps /= 100.0
    if not decades:
        decades = [cfg.eps]
    rows = []
    for target in decades:
        poly, rep = polynomials.gelu_poly(1.0, 3.0, target)
        rows.append([target, rep.degree, rep.max_error])
    out = _outdir(cfg)
    save_table(out / "approx.csv", ["target_eps", "degree", "max_error"], rows)
    payload = {
        "command": "approx",
        "k": 1.0,
        "interval": [-3.0, 3.0],
        "rows": [{"target_eps": r[0], "degree": r[1], "max_error": r[2]} for r in rows],
        "passed": all(r[2] <= r[0] for r in rows),
    }
    _write_json(out / "approx.json", payload)
    plotting.save_semilogy(
        out / "approx.png", [r[1] for r in rows],
        {"target": [r[0] for r in rows], "measured": [max(r[2], 1e-18) for r in rows]},
        "degree", "max error on interval", "activation approximation",
    )
    print(f"approximation table for targets {decades}")
    return EXIT_OK if payload["passed"] else EXIT_INVARIANT


def cmd_profile(cfg: ExperimentConfig) -> int:
    if cfg.matrix is None:
        raise QFormerError("profile needs --matrix")
    m = load_matrix(cfg.matrix)
    prof = reference.profile_matrix(m)
    payload = {
        "command": "profile",
        "matrix": str(cfg.matrix),
        "rows": int(m.shape[0]),
        "cols": int(m.shape[1]),
        "spectral": prof.spectral,
        "frobenius": prof.frobenius,
        "column_l2_mean": prof.column_l2_mean,
        "column_l2_var": prof.column_l2_var,
    }
    _write_json(_outdir(cfg) / "profile.json", payload)
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_dequant_compare(cfg: ExperimentConfig) -> int:
    # at least five octaves: shorter sweeps make the slope fit too noisy
    top = max(256, cfg.n)
    ns = [2**k for k in range(4, int(math.log2(top)) + 1)]
    records = dequant.separation_sweep(ns, d=cfg.d, d_ff=cfg.dff, eps=cfg.eps,
                                       delta=cfg.delta, seed=cfg.seed)
    out = _outdir(cfg)
    rows = [
        [r.n, r.frobenius_s, r.tau_classical, r.queries_quantum,
         r.queries_quantum_normalized]
        for r in records
    ]
    save_table(out / "dequant_compare.csv",
               ["n", "frobenius_s", "tau_classical", "queries_quantum",
                "queries_quantum_normalized"], rows)
    fro = [r.frobenius_s for r in records]
    classical_slope = plotting.fit_loglog_slope(fro, [r.tau_classical for r in records])
    quantum_slope = plotting.fit_loglog_slope(
        fro, [r.queries_quantum_normalized for r in records]
    )
    payload = {
        "command": "dequant-compare",
        "n_values": ns,
        "eps": cfg.eps, "delta": cfg.delta, "seed": cfg.seed,
        "classical_slope": classical_slope,
        "quantum_slope": quantum_slope,
        "slope_ratio": classical_slope / quantum_slope,
        "passed": (1.8 <= classical_slope <= 2.2 and 0.8 <= quantum_slope <= 1.2),
    }
    _write_json(out / "dequant_compare.json", payload)
    plotting.save_loglog(
        out / "dequant_compare.png", fro,
        {"classical tau": [r.tau_classical for r in records],
         "quantum (normalized)": [r.queries_quantum_normalized for r in records]},
        "Frobenius norm of S", "queries", "classical versus encoded query growth",
    )
    print(f"classical slope {classical_slope:.2f}, quantum slope {quantum_slope:.2f}")
    return EXIT_OK if payload["passed"] else EXIT_INVARIANT


COMMANDS = {
    "verify": cmd_verify,
    "run-layer": cmd_run_layer,
    "run-multilayer": cmd_run_multilayer,
    "scaling": cmd_scaling,
    "approx": cmd_approx,
    "profile": cmd_profile,
    "dequant-compare": cmd_dequant_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qformer",
        description="Block-encoding transformer simulator and report generator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--n", type=int, default=8)
        p.add_argument("--d", type=int, default=4)
        p.add_argument("--dff", type=int, default=16)
        p.add_argument("--layers", type=int, default=1)
        p.add_argument("--j", type=int, default=0)
        p.add_argument("--eps", type=float, default=1e-3)
        p.add_argument("--delta", type=float, default=0.05)
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--factor-model", default="frobenius")
        p.add_argument("--matrix", default=None)
        p.add_argument("--weights", default=None)
        p.add_argument("--out", default="qformer-out")
    return parser


def run_experiment(cfg: ExperimentConfig) -> int:
    cfg.validate()
    return COMMANDS[cfg.command](cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ExperimentConfig(
        command=args.command, n=args.n, d=args.d, dff=args.dff,
        layers=args.layers, j=args.j, eps=args.eps, delta=args.delta,
        seed=args.seed, factor_model=args.factor_model, matrix=args.matrix,
        weights=args.weights, out=args.out,
    )
    try:
        return run_experiment(cfg)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except MatrixParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except QFormerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
