"""Numbered end-to-end checks of the library, shared by the CLI and the test suite."""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable

import networkx as nx
import numpy as np

from . import pce
from .anderson import AndersonState, aa_update
from .error_bounds import (
    CoefficientProjector,
    a_posteriori_bound,
    a_priori_bound,
    in_plane_error,
    orthogonal_complement_samples,
    project,
)
from .fem_diffusion import (
    DeterministicProblem,
    Mesh,
    assemble_system,
    build_benchmark_network,
    l2_error,
    newton_solve,
)
from .harness import run_case, weak_mesh_size
from .network import Component, NetworkState, assemble
from .relaxation import (
    SolverConfig,
    dag_from_permutation,
    find_low_nseq_permutation,
    jacobi_step,
    solve,
)
from .synthetic import (
    affine_fixed_point,
    affine_network,
    contraction_with_norm,
    linear_pce_ring,
)

BENCH_MESH = 41


@dataclass
class CriterionResult:
    id: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"criterion {self.id:2d} {verdict}: {self.title} ({self.seconds:.1f} s)"


def _timed(cid: int, title: str):
    def wrap(fn: Callable[[], tuple[bool, dict]]):
        def run() -> CriterionResult:
            t0 = time.perf_counter()
            passed, details = fn()
            return CriterionResult(cid, title, bool(passed), details, time.perf_counter() - t0)

        run.criterion_id = cid
        run.title = title
        return run

    return wrap


@lru_cache(maxsize=None)
def benchmark_run(mode: str, s: int, method: str, omega: float, memory: int, tol: float):
    """Cached ``run_case`` on the benchmark; returns ``(record, final_x)``."""
    n = BENCH_MESH if mode == "strong" else weak_mesh_size(s)
    rec, _, state, _ = run_case(mode, n, s, method, omega, memory, tol, max_iter=5000, threads=1)
    return rec, state.x


# --- 1: polynomial chaos ------------------------------------------------------------


def pce_checks() -> dict:
    basis = pce.total_degree_set(2, 3)
    rule = pce.gauss_hermite_rule(4, 2)
    psi = basis.vandermonde(rule.nodes)
    gram = psi.T @ (rule.weights[:, None] * psi)
    ortho = float(np.abs(gram - np.diag(basis.norms_sq)).max())

    rng = np.random.default_rng(7)
    roundtrip = 0.0
    for d, p in [(1, 3), (2, 3), (3, 2), (2, 5)]:
        b = pce.total_degree_set(d, p)
        r = pce.gauss_hermite_rule(p + 1, d)
        e = pce.PceExpansion(b, rng.standard_normal((3, len(b))))
        evals = np.array([pce.eval_expansion(e, xi) for xi in r.nodes])
        back = pce.nisp_project(evals, b, r)
        roundtrip = max(roundtrip, float(np.abs(back.coeffs - e.coeffs).max()))

    moments = 0.0
    for n in range(1, 7):
        x, w = pce.gauss_hermite_1d(n)
        for k in range(2 * n):
            exact = 0.0 if k % 2 else float(math.prod(range(k - 1, 0, -2)))
            moments = max(moments, abs(float(w @ x**k) - exact))

    row1 = np.array([1.0, 0.2, 0, 0.02, 0, 0, 0.002, 0, 0, 0])
    xi1 = rule.nodes[:, 0]
    u1 = 1 + 0.2 * xi1 + 0.02 * (xi1**2 - 1) + 0.002 * (xi1**3 - 3 * xi1)
    table = float(np.abs(pce.nisp_project(u1, basis, rule).coeffs[0] - row1).max())
    return {"orthogonality": ortho, "roundtrip": roundtrip, "moments": moments, "table_row": table}


@_timed(1, "PCE orthogonality, NISP round-trip, quadrature moments, input-table recovery")
def criterion_1():
    t0 = time.perf_counter()
    errs = pce_checks()
    elapsed = time.perf_counter() - t0
    passed = all(v <= 1e-10 for v in errs.values()) and elapsed < 1.0
    return passed, {**errs, "runtime_s": elapsed}


# --- 2: agreement of the four solver variants -----------------------------------------


@_timed(2, "2x2 benchmark fixed points agree across Jacobi/Gauss-Seidel with and without Anderson")
def criterion_2():
    t0 = time.perf_counter()
    tol = 1e-8
    variants = {
        (method, m): benchmark_run("strong", 2, method, 1.0, m, tol)
        for method in ("jacobi", "gauss_seidel")
        for m in (0, 5)
    }
    gaps = {}
    for (ka, (ra, xa)), (kb, (rb, xb)) in itertools.combinations(variants.items(), 2):
        gaps[f"{ka}-{kb}"] = float(np.linalg.norm(xa - xb))
    n_seq = variants[("gauss_seidel", 0)][0].n_seq
    converged = all(r.status == "converged" for r, _ in variants.values())
    elapsed = time.perf_counter() - t0
    passed = converged and n_seq == 4 and max(gaps.values()) <= 1e-6 and elapsed < 300
    return passed, {"max_gap": max(gaps.values()), "n_seq": n_seq, "runtime_s": elapsed}


# --- 3: DAG schedules ------------------------------------------------------------------


def random_network(rng: np.random.Generator, max_components: int = 8):
    n = int(rng.integers(2, max_components + 1))
    n_out = rng.integers(1, 3, size=n)
    n_endo = rng.integers(0, 4, size=n)
    out_off = np.concatenate([[0], np.cumsum(n_out)])
    comps = [
        Component(i + 1, int(n_endo[i]), 0, int(n_out[i]), lambda y, u, k=int(n_out[i]): np.zeros(k))
        for i in range(n)
    ]
    edges, slot = [], 0
    for i in range(n):
        for _ in range(n_endo[i]):
            src = int(rng.choice([j for j in range(n) if j != i]))
            edges.append((slot, int(out_off[src] + rng.integers(n_out[src]))))
            slot += 1
    return assemble(comps, edges)


def brute_force_levels(ids, kept_pairs) -> dict[int, int]:
    """Longest kept-edge path ending at each component, by exhaustive path search."""
    succ = {c: [b for a, b in kept_pairs if a == c] for c in ids}
    level = {c: 0 for c in ids}

    def walk(c, depth, seen):
        level[c] = max(level[c], depth)
        for nxt in succ[c]:
            if nxt not in seen:
                walk(nxt, depth + 1, seen | {nxt})

    for c in ids:
        walk(c, 0, {c})
    return level


def check_schedule(net, perm) -> bool:
    sched = dag_from_permutation(perm, net)
    src = net.out_owner[net.source]
    kept_pairs = {
        (net.ids[a], net.ids[b])
        for a, b, k in zip(src.tolist(), net.endo_owner.tolist(), sched.kept.tolist())
        if k
    }
    g = nx.DiGraph()
    g.add_nodes_from(net.ids)
    g.add_edges_from(kept_pairs)
    if not nx.is_directed_acyclic_graph(g):
        return False
    level = brute_force_levels(net.ids, kept_pairs)
    expected = [set() for _ in range(max(level.values()) + 1)]
    for c, lv in level.items():
        expected[lv].add(c)
    return [set(lv) for lv in sched.levels] == expected


@_timed(3, "DAG levels match a brute-force leveling; grid networks reach four sequential steps")
def criterion_3():
    rng = np.random.default_rng(2024)
    agree = 0
    for _ in range(50):
        net = random_network(rng)
        perm = tuple(int(c) for c in rng.permutation(np.array(net.ids)))
        agree += check_schedule(net, perm)
    n_seq = {}
    for s in (2, 4, 8):
        net, _ = build_benchmark_network(Mesh(BENCH_MESH, BENCH_MESH), s, s)
        n_seq[s] = find_low_nseq_permutation(net, trials=100, rng_seed=0)[1]
    passed = agree == 50 and all(v == 4 for v in n_seq.values())
    return passed, {"random_networks_agreeing": agree, "grid_n_seq": n_seq}


# --- 4: linear convergence rate ----------------------------------------------------------


def observed_rate(a: float = 0.55, omega: float = 2.0 / 3.0, start: int = 20, stop: int = 40):
    """Error ratios of relaxed Jacobi on the two-component network ``x_i = a x_j + 1``."""
    M = np.array([[0.0, a], [a, 0.0]])
    b = np.ones(2)
    net = affine_network(M, b)
    x_star = affine_fixed_point(M, b)
    errors = {}
    cfg = SolverConfig(omega=omega, tol=1e-300, max_iter=stop)
    solve(net, np.zeros(0), "jacobi", cfg, callback=lambda k, x: errors.__setitem__(k, np.linalg.norm(x - x_star)))
    ratios = [errors[k] / errors[k - 1] for k in range(start, stop + 1)]
    rho = max(abs(np.linalg.eigvals(omega * M + (1 - omega) * np.eye(2))))
    return float(rho), ratios


@_timed(4, "observed linear rate matches the relaxed spectral radius 0.7")
def criterion_4():
    rho, ratios = observed_rate()
    passed = abs(rho - 0.7) < 1e-12 and all(0.65 <= r <= 0.75 for r in ratios)
    return passed, {"rho": rho, "ratio_min": min(ratios), "ratio_max": max(ratios)}


# --- 5: Anderson acceleration -------------------------------------------------------------


def anderson_m0_matches_plain(n_iter: int = 30) -> bool:
    rng = np.random.default_rng(3)
    A = rng.standard_normal((6, 6)) * 0.2
    c = rng.standard_normal(6)

    def G(x):
        return np.tanh(A @ x) + c

    x_plain = np.zeros(6)
    x_aa = np.zeros(6)
    state = AndersonState(0)
    for _ in range(n_iter):
        x_plain = G(x_plain)
        x_aa, _ = aa_update(state, x_aa, G(x_aa))
        if not np.array_equal(x_plain, x_aa):
            return False
    return True


def anderson_affine_iterations(dim: int = 4, memory: int = 4, tol: float = 1e-10, seed: int = 11) -> int:
    rng = np.random.default_rng(seed)
    M = contraction_with_norm(dim, 0.9, rng)
    b = rng.standard_normal(dim)

    def G(x):
        return M @ x + b

    x = np.zeros(dim)
    r0 = np.linalg.norm(G(x) - x)
    state = AndersonState(memory)
    for k in range(1, 50):
        x, _ = aa_update(state, x, G(x))
        if np.linalg.norm(G(x) - x) / r0 <= tol:
            return k
    return 50


@_timed(5, "Anderson: m=0 is the plain iteration; affine maps solved fast; 3x fewer benchmark iterations")
def criterion_5():
    bitwise = anderson_m0_matches_plain()
    affine_its = anderson_affine_iterations()
    counts = {}
    ok = True
    for method in ("jacobi", "gauss_seidel"):
        it0 = benchmark_run("strong", 4, method, 1.0, 0, 1e-3)[0].iterations
        it5 = benchmark_run("strong", 4, method, 1.0, 5, 1e-3)[0].iterations
        counts[method] = {"m0": it0, "m5": it5}
        ok &= it5 <= it0 / 3
    passed = bitwise and affine_its <= 6 and ok
    return passed, {"bitwise_m0": bitwise, "affine_iterations": affine_its, "benchmark": counts}


# --- 6: strong-scaling trends -----------------------------------------------------------


@_timed(6, "strong-scaling trends: GS beats Jacobi, omega=1 beats 2/3, iterations grow with components")
def criterion_6():
    t0 = time.perf_counter()
    it = {}
    for s in (2, 4, 8):
        for method in ("jacobi", "gauss_seidel"):
            for omega in (2.0 / 3.0, 1.0):
                for m in (0, 5):
                    rec = benchmark_run("strong", s, method, omega, m, 1e-3)[0]
                    it[(s, method, round(omega, 4), m)] = rec.iterations if rec.status == "converged" else None
    failures = []
    for s in (2, 4, 8):
        for omega in (0.6667, 1.0):
            for m in (0, 5):
                j, g = it[(s, "jacobi", omega, m)], it[(s, "gauss_seidel", omega, m)]
                if j is None or g is None or not g < j:
                    failures.append(f"GS<J s={s} w={omega} m={m}: {g} vs {j}")
        for method in ("jacobi", "gauss_seidel"):
            a, b = it[(s, method, 1.0, 0)], it[(s, method, 0.6667, 0)]
            if a is None or b is None or not a < b:
                failures.append(f"w1<w2/3 s={s} {method}: {a} vs {b}")
    for method in ("jacobi", "gauss_seidel"):
        seq = [it[(s, method, 1.0, 0)] for s in (2, 4, 8)] + [it[(s, method, 0.6667, 0)] for s in (2, 4, 8)]
        for a, b in ((seq[0], seq[1]), (seq[1], seq[2]), (seq[3], seq[4]), (seq[4], seq[5])):
            if a is None or b is None or not a < b:
                failures.append(f"growth {method}: {a} -> {b}")
    elapsed = time.perf_counter() - t0
    iterations = {f"s{k[0]}_{k[1]}_w{k[2]}_m{k[3]}": v for k, v in it.items()}
    return not failures and elapsed < 1800, {
        "failures": failures, "iterations": iterations, "runtime_s": elapsed,
    }


# --- 7: weak scaling ----------------------------------------------------------------------


@_timed(7, "weak scaling: more overlap converges faster; s=8 weak equals s=8 strong")
def criterion_7():
    weak2 = benchmark_run("weak", 2, "jacobi", 1.0, 0, 1e-3)[0]
    strong2 = benchmark_run("strong", 2, "jacobi", 1.0, 0, 1e-3)[0]
    weak8 = benchmark_run("weak", 8, "jacobi", 1.0, 0, 1e-3)[0]
    strong8 = benchmark_run("strong", 8, "jacobi", 1.0, 0, 1e-3)[0]
    same = weak8.deterministic() == strong8.deterministic()
    passed = weak2.iterations < strong2.iterations and same
    return passed, {
        "weak2_iterations": weak2.iterations, "strong2_iterations": strong2.iterations,
        "s8_records_equal": same,
    }


# --- 8: error against the monolithic solve ---------------------------------------------------

ERROR_CAP = 1e-2


@_timed(8, "probe errors against the global solve: below 1e-2 at 2x2, non-decreasing to 4x4")
def criterion_8():
    e2 = benchmark_run("strong", 2, "jacobi", 1.0, 5, 1e-10)[0].probe_errors
    e4 = benchmark_run("strong", 4, "jacobi", 1.0, 5, 1e-10)[0].probe_errors
    passed = max(e2) < ERROR_CAP and all(b >= a for a, b in zip(e2, e4))
    return passed, {"errors_2x2": e2, "errors_4x4": e4}


# --- 9: a priori / a posteriori bounds ------------------------------------------------------------


def affine_bound_ratios(dim: int, seed: int = 5) -> dict:
    """Bound / true-error ratios for a truth and an approximate affine contraction."""
    if dim == 1:
        Mbar, bbar = np.array([[-0.5]]), np.array([3.0])
        M, b = np.array([[-0.4]]), np.array([3.0])
    else:
        rng = np.random.default_rng(seed)
        Mbar = contraction_with_norm(dim, 0.5, rng)
        M = Mbar + contraction_with_norm(dim, 0.05, rng)
        bbar = rng.standard_normal(dim)
        b = bbar + 0.05 * rng.standard_normal(dim)
    L, Lbar = np.linalg.norm(M, 2), np.linalg.norm(Mbar, 2)
    xbar, x = affine_fixed_point(Mbar, bbar), affine_fixed_point(M, b)
    true = float(np.linalg.norm(xbar - x))
    prior = a_priori_bound(xbar, lambda v: M @ v + b, L)
    post = a_posteriori_bound(x, lambda v: Mbar @ v + bbar, Lbar)
    return {"true": true, "a_priori": prior / true, "a_posteriori": post / true}


@_timed(9, "a priori and a posteriori bounds dominate the true error within a factor 10")
def criterion_9():
    res = {dim: affine_bound_ratios(dim) for dim in (1, 4)}
    passed = all(1.0 <= r[k] <= 10.0 for r in res.values() for k in ("a_priori", "a_posteriori"))
    return passed, res


# --- 10: in-plane error of a linear PCE network --------------------------------------------------


def linear_pce_study(seed: int = 9) -> dict:
    rng = np.random.default_rng(seed)
    high, low = pce.total_degree_set(2, 3), pce.total_degree_set(2, 1)
    proj = CoefficientProjector(high, low)
    a, b = np.array([0.5, -0.4, 0.6]), np.array([1.0, 0.7, -0.3])
    u = rng.standard_normal((3, len(high))).ravel()
    truth_net = linear_pce_ring(a, b, high, high)
    low_net = linear_pce_ring(a, b, low, high)
    cfg = SolverConfig(omega=1.0, tol=1e-14, max_iter=500, anderson_memory=5)
    xbar, tr_bar = solve(truth_net, u, "jacobi", cfg)
    x, tr = solve(low_net, u, "jacobi", cfg)
    err = in_plane_error(x.x, xbar.x, proj)

    def Gbar(v):
        return jacobi_step(truth_net, NetworkState(v, u), 1.0)

    images = [project(proj, Gbar(v)) for v in orthogonal_complement_samples(proj, 3, 20, seed)]
    spread = max(float(np.abs(im - images[0]).max()) for im in images)
    return {
        "in_plane_error": err, "x_perp_spread": spread,
        "status": (tr_bar.status, tr.status),
    }


@_timed(10, "linear PCE network has zero in-plane error; projected truth map is constant on the complement")
def criterion_10():
    r = linear_pce_study()
    passed = r["in_plane_error"] <= 1e-10 and r["x_perp_spread"] <= 1e-12 and r["status"] == ("converged", "converged")
    return passed, r


# --- 11: finite elements --------------------------------------------------------------------------


def patch_residual() -> float:
    mesh = Mesh(7, 5)
    X, Y = mesh.coordinates()
    v = 2 * X - 3 * Y + 1
    p = DeterministicProblem(mesh, 0.0, v[mesh.boundary_nodes], forcing=lambda x, y: 0 * x)
    R, _ = assemble_system(p, v)
    return float(np.abs(R).max())


def mms_orders(sizes=(9, 17, 33)) -> list[float]:
    def exact(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def forcing(x, y):
        return 2 * np.pi**2 * exact(x, y)

    errs = []
    for n in sizes:
        mesh = Mesh(n, n)
        v = newton_solve(DeterministicProblem(mesh, 0.0, 0.0, forcing=forcing))
        errs.append(l2_error(mesh, v, exact))
    return [float(np.log2(a / b)) for a, b in zip(errs[:-1], errs[1:])]


def jacobian_fd_error(seed: int = 4, mu: float = 0.8, step: float = 1e-6) -> float:
    mesh = Mesh(5, 5)
    v = np.random.default_rng(seed).standard_normal(mesh.n_nodes)
    p = DeterministicProblem(mesh, mu, v[mesh.boundary_nodes])
    _, J = assemble_system(p, v)
    fd = np.empty((mesh.n_nodes, mesh.n_nodes))
    for k in range(mesh.n_nodes):
        e = np.zeros(mesh.n_nodes)
        e[k] = step
        fd[:, k] = (assemble_system(p, v + e)[0] - assemble_system(p, v - e)[0]) / (2 * step)
    free = mesh.free_nodes
    Jf, fdf = J.toarray()[np.ix_(free, free)], fd[np.ix_(free, free)]
    return float(np.abs(Jf - fdf).max() / np.abs(fdf).max())


@_timed(11, "finite elements: patch test, second-order convergence, consistent Jacobian")
def criterion_11():
    patch = patch_residual()
    orders = mms_orders()
    jac = jacobian_fd_error()
    passed = patch <= 1e-12 and all(1.8 <= o <= 2.2 for o in orders) and jac <= 1e-6
    return passed, {"patch_residual": patch, "orders": orders, "jacobian_rel_error": jac}


CRITERIA = [
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
    criterion_7, criterion_8, criterion_9, criterion_10, criterion_11,
]


def run_all(ids=None, echo: Callable[[str], None] | None = print) -> list[CriterionResult]:
    results = []
    for crit in CRITERIA:
        if ids is not None and crit.criterion_id not in ids:
            continue
        res = crit()
        results.append(res)
        if echo is not None:
            echo(res.line())
    return results


def report_json(results: list[CriterionResult]) -> str:
    return json.dumps(
        {"passed": all(r.passed for r in results), "criteria": [asdict(r) for r in results]},
        indent=2,
        default=lambda o: o.item() if isinstance(o, np.generic) else str(o),
    )
