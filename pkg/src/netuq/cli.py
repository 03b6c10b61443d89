"""Command-line entry point: ``netuq run|strong|weak|perms|verify``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .harness import ConfigError, ExperimentConfig

EXIT_OK, EXIT_CRITERION, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

_MODE_OF = {"run": "single", "strong": "strong", "weak": "weak", "perms": "permutations", "verify": "verify"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netuq",
        description="Network uncertainty propagation with relaxation solvers on a "
        "nonlinear diffusion domain-decomposition benchmark.",
    )
    parser.add_argument("command", choices=sorted(_MODE_OF), help="experiment to run")
    parser.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    parser.add_argument("--mesh", type=int, help="global nodes per axis (strong, run, perms)")
    parser.add_argument("--decomp", type=int, nargs="+", help="subdomains per axis, one or more")
    parser.add_argument("--method", choices=["jacobi", "gauss_seidel", "both"])
    parser.add_argument("--tol", type=float, help="relative residual stopping tolerance")
    parser.add_argument("--omega", type=float, nargs="+", help="relaxation factor(s)")
    parser.add_argument("--memory", type=int, nargs="+", help="Anderson memory value(s)")
    parser.add_argument("--max-iter", type=int, dest="max_iter")
    parser.add_argument("--perm-trials", type=int, dest="n_perm_trials", help="random permutations (perms)")
    parser.add_argument("--seed", type=int, dest="rng_seed")
    parser.add_argument("--out", dest="output_dir", help="output directory")
    parser.add_argument("--threads", type=int, help="worker threads for component solves")
    parser.add_argument(
        "--criteria", type=int, nargs="+", help="verify: only these criterion ids"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    text = args.config.read_text() if args.config else ""
    overrides = {
        "mode": _MODE_OF[args.command],
        "mesh": args.mesh,
        "decompositions": args.decomp,
        "method": args.method,
        "tol": args.tol,
        "omegas": args.omega,
        "anderson_memories": args.memory,
        "max_iter": args.max_iter,
        "n_perm_trials": args.n_perm_trials,
        "rng_seed": args.rng_seed,
        "output_dir": args.output_dir,
        "threads": args.threads,
    }
    return ExperimentConfig.from_json(text, **overrides)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.output_dir)

    if cfg.mode == "verify":
        from . import verification

        results = verification.run_all(ids=set(args.criteria) if args.criteria else None)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(verification.report_json(results))
        return EXIT_OK if all(r.passed for r in results) else EXIT_CRITERION

    if cfg.mode == "single":
        rec = harness.run_single(cfg, out)
        harness.write_runs(out, [rec])
        print(f"{rec.run_id}: {rec.status} after {rec.iterations} iterations, "
              f"relative residual {rec.final_residual:.3e}, probe errors {rec.probe_errors}")
        return EXIT_DIVERGED if rec.status == "diverged" else EXIT_OK

    if cfg.mode == "strong":
        records = harness.run_strong(cfg, out)
    elif cfg.mode == "weak":
        records = harness.run_weak(cfg, out)
    else:
        records, summary = harness.run_permutation_study(cfg, out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "permutation_summary.json").write_text(json.dumps(summary, indent=2))
    harness.write_runs(out, records)
    for r in records:
        print(f"{r.run_id}: {r.status} iterations={r.iterations} n_seq={r.n_seq} "
              f"simulated={r.simulated_s:.3f}s speedup={r.speedup:.2f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
