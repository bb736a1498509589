"""``pc-extrap`` command line.

Exit status: 0 on success, 2 when a validation or certification check
fails, 1 on any error (configuration errors name the offending field).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .artifacts import RunWriter, h_header, h_rows
from .config import COMMANDS, ExperimentConfig, load_config
from .errors import ConfigError, PCExtrapError
from .extrapolate import SpectralCharacteristic, solve_extrapolation
from .increments import tail_truncation
from .minimax import certify_saddle, solve_least_favorable_D0, solve_least_favorable_D1delta
from .saddle import build_Q, functional_error_mc, saddle_bound
from .simulate import SynthesisConfig, empirical_mse, oracle_mmse
from .spectral import IncrementKernel, QuadratureGrid

ORTHOGONALITY_TOL = 1e-6
H_SAMPLES = 256


def _threads(arg):
    if arg is not None:
        return max(1, arg)
    try:
        return max(1, int(os.environ.get("PC_EXTRAP_THREADS", "1")))
    except ValueError:
        raise ConfigError("must be a positive integer", "PC_EXTRAP_THREADS") from None


def _write_h(w: RunWriter, h: SpectralCharacteristic, K: int):
    lam, hv, _ = h.samples(QuadratureGrid(H_SAMPLES))
    w.csv("h_samples.csv", h_header(K), h_rows(lam, hv))


def _write_residuals(w: RunWriter, residuals: dict):
    w.csv("residuals.csv", ["j", "residual"], [[j, float(r)] for j, r in sorted(residuals.items(), reverse=True)])


def run_estimate(cfg: ExperimentConfig, w: RunWriter, threads: int):
    problem = cfg.problem()
    rep = solve_extrapolation(problem)
    result = rep.to_json(QuadratureGrid(H_SAMPLES))
    worst = max(rep.orthogonality_residuals.values())
    result["checks"] = {"orthogonality": worst < ORTHOGONALITY_TOL}
    w.json("result.json", result)
    _write_h(w, rep.h, cfg.params.K)
    _write_residuals(w, rep.orthogonality_residuals)
    return all(result["checks"].values())


def run_saddle(cfg: ExperimentConfig, w: RunWriter, threads: int):
    b = cfg.problem().b_blocks()
    if cfg.N is None:
        b = b[: tail_truncation(b)]
    res = saddle_bound(b, P=cfg.saddle["P"], seed=cfg.mc["seed"])
    result = res.to_json()
    Q = build_Q(b)
    g = res.g.ravel()
    Q_res = float(np.linalg.norm(Q @ g - res.nu_squared * g))
    result["eigen_residual"] = Q_res
    mean, se = functional_error_mc(b, res, cfg.saddle["n_paths"], cfg.mc["seed"])
    result["monte_carlo"] = {"mean": mean, "standard_error": se, "n_paths": cfg.saddle["n_paths"]}
    scale = max(res.nu_squared * np.linalg.norm(g), 1e-300)
    result["checks"] = {
        "eigen_residual": Q_res <= 1e-8 * scale,
        "monte_carlo": abs(mean - res.max_error) <= 3 * se or se == 0,
    }
    w.json("result.json", result)
    return all(result["checks"].values())


def run_minimax(cfg: ExperimentConfig, w: RunWriter, threads: int):
    problem = cfg.problem()
    spec = cfg.class_spec
    solver = solve_least_favorable_D1delta if spec.is_neighbourhood else solve_least_favorable_D0
    lf = solver(spec, problem, n_starts=cfg.mc["n_starts"], seed=cfg.mc["seed"])
    cert = certify_saddle(lf, spec, problem, cfg.mc["n_probes"], cfg.mc["seed"]) if lf.converged else None
    result = lf.to_json(problem.grid)
    del result["f0_table"]
    result["class"] = spec.to_json()
    result["certification"] = None if cert is None else cert.to_json()
    result["alternatives"] = [{"value": r.value, "iterations": r.iterations} for r in lf.alternatives]
    w.json("result.json", result)
    lam = problem.grid.nodes
    F = lf.f0(lam)
    diag = np.real(np.diagonal(F, axis1=1, axis2=2))
    K = cfg.params.K
    w.csv("f0.csv", ["lambda"] + [f"f0_{k + 1}{k + 1}" for k in range(K)],
          ([float(x)] + [float(v) for v in row] for x, row in zip(lam, diag)))
    h = SpectralCharacteristic(lf.b, lf.c0, lf.f0, IncrementKernel.of(cfg.params))
    _write_h(w, h, K)
    return lf.converged and cert is not None and cert.passed


def run_validate(cfg: ExperimentConfig, w: RunWriter, threads: int):
    problem = cfg.problem()
    window = cfg.mc["window"]
    rep = solve_extrapolation(problem)
    oracle = oracle_mmse(problem, window, rep.mse)
    L = problem.b_blocks().shape[0]
    n_blocks = window + L
    M_s = max(cfg.mc["M_s"], 8 * n_blocks)
    M_s += M_s % 2
    syn = SynthesisConfig(problem.density, cfg.params, n_blocks, cfg.mc["n_paths"], cfg.mc["seed"],
                          M_s, start=-window, threads=threads)
    oracle = empirical_mse(problem, syn, window, oracle)
    result = {
        "oracle": oracle.to_json(),
        "analytic": {
            "mse": rep.mse,
            "mse_refinement_delta": rep.mse_refinement_delta,
            "orthogonality_max": max(rep.orthogonality_residuals.values()),
        },
        "agreement": oracle.agrees,
    }
    w.json("result.json", result)
    _write_h(w, rep.h, cfg.params.K)
    _write_residuals(w, rep.orthogonality_residuals)
    return oracle.agrees


PIPELINES = {
    "estimate": run_estimate,
    "estimate-finite": run_estimate,
    "saddle": run_saddle,
    "minimax": run_minimax,
    "validate": run_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pc-extrap", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", help="output directory (default: config 'output' or ./pc-extrap-out)")
    p.add_argument("--seed", type=int, help="overrides mc.seed")
    p.add_argument("--threads", type=int, help="worker threads for Monte Carlo (env PC_EXTRAP_THREADS)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("must be nonnegative", "--seed")
            cfg.mc["seed"] = args.seed
            # the echoed config must reproduce the run
            cfg.raw = {**cfg.raw, "mc": {**cfg.raw.get("mc", {}), "seed": args.seed}}
        threads = _threads(args.threads)
        out = args.out or cfg.output or "pc-extrap-out"
        w = RunWriter(out)
        ok = PIPELINES[cfg.command](cfg, w, threads)
        w.manifest(cfg.command, cfg.raw, cfg.mc["seed"], {"version": __version__, "passed": bool(ok)})
    except ConfigError as e:
        print(f"pc-extrap: config error: {e}", file=sys.stderr)
        return 1
    except PCExtrapError as e:
        print(f"pc-extrap: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if not ok:
        print(f"pc-extrap: {cfg.command}: checks failed (see {os.path.join(out, 'result.json')})", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
