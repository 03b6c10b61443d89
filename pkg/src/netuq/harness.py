"""Experiment orchestration: strong/weak scaling, permutation study, error study."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem_diffusion import (
    Mesh,
    PceExpansion,
    build_benchmark_network,
    field_from_states,
    field_to_csv,
    global_uq_solve,
    benchmark_inputs,
)
from .relaxation import (
    ConvergenceTrace,
    SolverConfig,
    dag_from_permutation,
    find_low_nseq_permutation,
    random_permutation,
    solve,
)

log = logging.getLogger(__name__)

METHODS = ("jacobi", "gauss_seidel")
MODES = ("strong", "weak", "permutations", "verify", "single")
# fields that depend on the machine rather than on the configuration
TIMING_FIELDS = ("simulated_s", "measured_s", "global_s", "speedup")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "strong"
    mesh: int = 41
    decompositions: list[int] = field(default_factory=lambda: [2, 4, 8])
    method: str = "both"
    omegas: list[float] = field(default_factory=lambda: [2.0 / 3.0, 1.0])
    anderson_memories: list[int] = field(default_factory=lambda: [0, 5])
    tol: float = 1e-3
    error_study_tol: float = 1e-10
    max_iter: int = 5000
    n_perm_trials: int = 10
    search_trials: int = 100
    rng_seed: int = 0
    output_dir: str = "netuq_out"
    threads: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.method not in METHODS + ("both",):
            raise ConfigError(f"method must be jacobi, gauss_seidel or both, got {self.method!r}")
        if self.tol <= 0 or self.error_study_tol <= 0:
            raise ConfigError("tolerances must be positive")
        if not all(0 < w <= 2 for w in self.omegas):
            raise ConfigError("every omega must lie in (0, 2]")
        if any(m < 0 for m in self.anderson_memories):
            raise ConfigError("Anderson memories must be non-negative")
        if self.mesh < 2 or any(s < 1 for s in self.decompositions):
            raise ConfigError("mesh needs >= 2 nodes and decompositions must be >= 1")
        if self.mode in ("strong", "single", "permutations"):
            bad = [s for s in self.decompositions if (self.mesh - 1) % s]
            if bad:
                raise ConfigError(
                    f"{self.mesh - 1} elements per axis are not divisible by {bad}"
                )
        if self.n_perm_trials < 1 or self.search_trials < 1:
            raise ConfigError("trial counts must be >= 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def methods(self) -> tuple[str, ...]:
        return METHODS if self.method == "both" else (self.method,)

    @classmethod
    def from_json(cls, text: str, **overrides) -> ExperimentConfig:
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        doc.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class RunRecord:
    run_id: str
    mode: str
    mesh: int
    n_sub: int
    method: str
    omega: float
    memory: int
    tol: float
    status: str
    iterations: int
    final_residual: float
    n_seq: int
    perm: str
    probe_errors: list[float]
    simulated_s: float
    measured_s: float
    global_s: float
    speedup: float

    def deterministic(self) -> dict:
        """Fields fixed by the configuration alone (timings and labels dropped)."""
        d = dataclasses.asdict(self)
        for k in TIMING_FIELDS + ("run_id", "mode"):
            d.pop(k)
        return d


@dataclass
class _Reference:
    mesh: Mesh
    field: PceExpansion
    seconds: float


_REFERENCE_CACHE: dict[int, _Reference] = {}


def global_reference(n: int) -> _Reference:
    """Monolithic NISP solve on an ``n x n`` mesh, cached per process."""
    ref = _REFERENCE_CACHE.get(n)
    if ref is None:
        mesh = Mesh(n, n)
        t0 = time.perf_counter()
        fld = global_uq_solve(mesh, benchmark_inputs())
        ref = _Reference(mesh, fld, time.perf_counter() - t0)
        _REFERENCE_CACHE[n] = ref
    return ref


def _executor(threads):
    threads = os.cpu_count() if threads is None else threads
    return ThreadPoolExecutor(max_workers=threads) if threads and threads > 1 else None


def run_id_for(mode, n, s, method, omega, memory, tol, tag="") -> str:
    base = f"{mode}_n{n}_s{s}_{method}_w{omega:.4f}_m{memory}_tol{tol:.0e}"
    return base + (f"_{tag}" if tag else "")


def run_case(
    mode: str,
    n: int,
    s: int,
    method: str,
    omega: float,
    memory: int,
    tol: float,
    max_iter: int = 5000,
    perm: tuple[int, ...] | None = None,
    search_trials: int = 100,
    rng_seed: int = 0,
    threads: int | None = 1,
    tag: str = "",
):
    """Build the ``s x s`` benchmark on an ``n x n`` mesh, solve, and compare with the global solve.

    Returns ``(record, trace, state, meta)``.
    """
    ref = global_reference(n)
    net, meta = build_benchmark_network(ref.mesh, s, s, benchmark_inputs())
    sched, n_seq, perm_s = None, 1, ""
    if method == "gauss_seidel":
        if perm is None:
            perm, _ = find_low_nseq_permutation(net, search_trials, rng_seed)
        sched = dag_from_permutation(perm, net)
        n_seq, perm_s = sched.n_seq, " ".join(map(str, perm))
    u = np.tile(meta.inputs.exo_vector, len(net))
    cfg = SolverConfig(omega=omega, tol=tol, max_iter=max_iter, anderson_memory=memory)
    ex = _executor(threads)
    try:
        state, trace = solve(net, u, method, cfg, sched, executor=ex)
    finally:
        if ex is not None:
            ex.shutdown()
    errors = []
    for p in meta.probe_nodes:
        truth = ref.field.coeffs[p]
        errors.append(float(np.linalg.norm(state.x[meta.probe_slots[p]] - truth) / np.linalg.norm(truth)))
    sim = trace.simulated_s
    rec = RunRecord(
        run_id=run_id_for(mode, n, s, method, omega, memory, tol, tag),
        mode=mode, mesh=n, n_sub=s, method=method, omega=float(omega), memory=int(memory),
        tol=float(tol), status=trace.status, iterations=trace.iterations,
        final_residual=trace.final_residual, n_seq=n_seq, perm=perm_s, probe_errors=errors,
        simulated_s=sim, measured_s=trace.measured_s, global_s=ref.seconds,
        speedup=ref.seconds / sim if sim > 0 else float("inf"),
    )
    log.info("%s: %s after %d iterations", rec.run_id, rec.status, rec.iterations)
    return rec, trace, state, meta


def _sweep(cfg: ExperimentConfig, mode: str, mesh_of, out: Path | None, tol: float):
    records = []
    for s in cfg.decompositions:
        for method in cfg.methods:
            for omega in cfg.omegas:
                for m in cfg.anderson_memories:
                    rec, trace, _, _ = run_case(
                        mode, mesh_of(s), s, method, omega, m, tol, cfg.max_iter,
                        search_trials=cfg.search_trials, rng_seed=cfg.rng_seed, threads=cfg.threads,
                    )
                    records.append(rec)
                    if out is not None:
                        write_trace(out, rec.run_id, trace)
    return records


def run_strong(cfg: ExperimentConfig, out: Path | None = None, tol: float | None = None) -> list[RunRecord]:
    """Fixed global mesh split into each requested ``s x s`` decomposition."""
    records = _sweep(cfg, "strong", lambda s: cfg.mesh, out, cfg.tol if tol is None else tol)
    if out is not None:
        write_field_csvs(out, global_reference(cfg.mesh).mesh, global_reference(cfg.mesh).field)
    return records


def weak_mesh_size(s: int) -> int:
    """Global nodes per axis when every tile spans five elements."""
    return 5 * s + 1


def run_weak(cfg: ExperimentConfig, out: Path | None = None) -> list[RunRecord]:
    """Global mesh grows with ``s`` so every tile keeps the same size."""
    return _sweep(cfg, "weak", weak_mesh_size, out, cfg.tol)


def run_error_study(cfg: ExperimentConfig, out: Path | None = None) -> list[RunRecord]:
    return run_strong(cfg, out, tol=cfg.error_study_tol)


def run_permutation_study(cfg: ExperimentConfig, out: Path | None = None) -> tuple[list[RunRecord], dict]:
    """Gauss-Seidel (omega=1, m=5) under seeded random permutations."""
    records = []
    rng = np.random.default_rng(cfg.rng_seed)
    for s in cfg.decompositions:
        net, _ = build_benchmark_network(global_reference(cfg.mesh).mesh, s, s)
        perms = [random_permutation(net, rng) for _ in range(cfg.n_perm_trials)]
        for k, perm in enumerate(perms):
            rec, trace, _, _ = run_case(
                "permutations", cfg.mesh, s, "gauss_seidel", 1.0, 5, cfg.tol, cfg.max_iter,
                perm=perm, threads=cfg.threads, tag=f"p{k}",
            )
            records.append(rec)
            if out is not None:
                write_trace(out, rec.run_id, trace)
    return records, summarize_permutations(records)


def summarize_permutations(records: list[RunRecord]) -> dict:
    summary = {}
    for s in sorted({r.n_sub for r in records}):
        rs = [r for r in records if r.n_sub == s]
        summary[s] = {
            key: {
                "min": float(np.min(vals)), "mean": float(np.mean(vals)), "max": float(np.max(vals)),
            }
            for key, vals in (
                ("iterations", [r.iterations for r in rs]),
                ("n_seq", [r.n_seq for r in rs]),
                ("simulated_s", [r.simulated_s for r in rs]),
            )
        }
    return summary


# --- output files ----------------------------------------------------------------

RUN_COLUMNS = [f.name for f in dataclasses.fields(RunRecord)]


def records_to_csv(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUN_COLUMNS)
    for r in records:
        row = dataclasses.asdict(r)
        row["probe_errors"] = ";".join(repr(e) for e in r.probe_errors)
        w.writerow([repr(v) if isinstance(v, float) else v for v in (row[c] for c in RUN_COLUMNS)])
    return buf.getvalue()


def records_from_csv(text: str) -> list[RunRecord]:
    types = {f.name: f.type for f in dataclasses.fields(RunRecord)}
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        kw = {}
        for k, v in row.items():
            t = types[k]
            if k == "probe_errors":
                kw[k] = [float(e) for e in v.split(";")] if v else []
            elif t == "int":
                kw[k] = int(v)
            elif t == "float":
                kw[k] = float(v)
            else:
                kw[k] = v
        out.append(RunRecord(**kw))
    return out


def write_runs(out: Path, records: list[RunRecord]) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / "runs.csv"
    path.write_text(records_to_csv(records))
    return path


def write_trace(out: Path, run_id: str, trace: ConvergenceTrace) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"trace_{run_id}.csv"
    path.write_text(trace.to_csv())
    return path


def coeff_file_tag(label: str) -> str:
    """``(1,0)`` -> ``1_0`` for file names."""
    return label.strip("()").replace(",", "_")


def write_field_csvs(out: Path, mesh: Mesh, fld: PceExpansion) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, label in enumerate(fld.basis.labels):
        path = out / f"field_{coeff_file_tag(label)}.csv"
        path.write_text(field_to_csv(mesh, fld.coeffs[:, j]))
        paths.append(path)
    return paths


def run_single(cfg: ExperimentConfig, out: Path | None = None):
    """One solve with the first decomposition, method, omega and memory of ``cfg``."""
    s, method = cfg.decompositions[0], cfg.methods[0]
    rec, trace, state, meta = run_case(
        "single", cfg.mesh, s, method, cfg.omegas[0], cfg.anderson_memories[0], cfg.tol,
        cfg.max_iter, search_trials=cfg.search_trials, rng_seed=cfg.rng_seed, threads=cfg.threads,
    )
    if out is not None:
        write_trace(out, rec.run_id, trace)
        write_field_csvs(out, meta.decomp.mesh, field_from_states(meta))
    return rec
