"""Jacobi and Gauss-Seidel relaxation for network fixed-point problems."""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .anderson import AndersonState, aa_update
from .network import Network, NetworkState, gather_endo, run_components

log = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e6


@dataclass(frozen=True)
class DagSchedule:
    perm: tuple[int, ...]
    kept: np.ndarray  # bool per endogenous slot; True = reads the current sweep
    levels: tuple[tuple[int, ...], ...]
    source: np.ndarray = field(repr=False, compare=False)  # output slot per endogenous slot

    @property
    def n_seq(self) -> int:
        return len(self.levels)

    @property
    def kept_edges(self) -> list[tuple[int, int]]:
        return [(int(e), int(o)) for e, o in self._edges(True)]

    @property
    def cut_edges(self) -> list[tuple[int, int]]:
        return [(int(e), int(o)) for e, o in self._edges(False)]

    def _edges(self, flag):
        idx = np.flatnonzero(self.kept == flag)
        return zip(idx, self.source[idx])


@dataclass(frozen=True)
class SolverConfig:
    omega: float = 1.0
    tol: float = 1e-3
    max_iter: int = 1000
    anderson_memory: int = 0

    def __post_init__(self):
        if not 0.0 < self.omega <= 2.0:
            raise ValueError(f"omega must lie in (0, 2], got {self.omega}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0 or self.anderson_memory < 0:
            raise ValueError("max_iter and anderson_memory must be non-negative")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    rel_residual: float
    iter_wall_s: float
    cum_wall_s: float


@dataclass
class ConvergenceTrace:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = "max_iter"
    measured_s: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def residuals(self) -> list[float]:
        return [r.rel_residual for r in self.records]

    @property
    def simulated_s(self) -> float:
        return self.records[-1].cum_wall_s if self.records else 0.0

    @property
    def final_residual(self) -> float:
        return self.records[-1].rel_residual if self.records else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "rel_residual", "iter_wall_s", "cum_wall_s"])
        for r in self.records:
            w.writerow([r.iteration, repr(r.rel_residual), repr(r.iter_wall_s), repr(r.cum_wall_s)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, status: str = "converged") -> ConvergenceTrace:
        rows = list(csv.DictReader(io.StringIO(text)))
        recs = [
            IterationRecord(
                int(r["iter"]), float(r["rel_residual"]), float(r["iter_wall_s"]), float(r["cum_wall_s"])
            )
            for r in rows
        ]
        return cls(records=recs, status=status)


def _check_perm(perm, net: Network) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != sorted(net.ids):
        raise ValueError(f"{perm} is not a permutation of the component ids {net.ids}")
    return perm


def dag_from_permutation(perm: Sequence[int], net: Network) -> DagSchedule:
    """Split edges by permuted order and level the resulting DAG.

    An edge is kept when its source component precedes its target in
    ``perm``; otherwise it is cut and reads the previous iterate. Levels are
    built in rounds: a component joins the current round once every kept
    predecessor sits in an earlier round.
    """
    perm = _check_perm(perm, net)
    rank = np.empty(len(net), dtype=int)
    for r, cid in enumerate(perm):
        rank[net.position[cid]] = r
    src_comp = net.out_owner[net.source]
    dst_comp = net.endo_owner
    kept = rank[src_comp] < rank[dst_comp]

    preds: dict[int, set[int]] = {k: set() for k in range(len(net))}
    for s, d in zip(src_comp[kept].tolist(), dst_comp[kept].tolist()):
        preds[d].add(s)

    assigned: set[int] = set()
    levels = []
    while len(assigned) < len(net):
        level = [
            net.position[cid]
            for cid in perm
            if net.position[cid] not in assigned and preds[net.position[cid]] <= assigned
        ]
        assigned.update(level)
        levels.append(tuple(net.ids[k] for k in level))
    return DagSchedule(perm=perm, kept=kept, levels=tuple(levels), source=net.source)


def jacobi_schedule(net: Network) -> DagSchedule:
    """The all-edges-cut schedule; a Gauss-Seidel sweep with it is a Jacobi sweep."""
    return DagSchedule(
        perm=net.ids, kept=np.zeros(net.n_y, dtype=bool), levels=(tuple(net.ids),), source=net.source
    )


def jacobi_sweep(net, s: NetworkState, timings=None, executor=None) -> np.ndarray:
    x = np.asarray(s.x, dtype=float)
    out = np.empty(net.n_x)
    run_components(net, range(len(net)), gather_endo(net, x), np.asarray(s.u, float), out, timings, executor)
    return out


def gauss_seidel_sweep(
    net: Network, s: NetworkState, sched: DagSchedule, timings=None, executor=None
) -> np.ndarray:
    """The un-relaxed sweep result: kept edges read this sweep, cut edges read ``s.x``."""
    x = np.asarray(s.x, dtype=float)
    u = np.asarray(s.u, dtype=float)
    xt = np.empty(net.n_x)
    stale = x[net.source]
    for level in sched.levels:
        endo = np.where(sched.kept, xt[net.source], stale)
        run_components(net, [net.position[c] for c in level], endo, u, xt, timings, executor)
    return xt


def jacobi_step(net: Network, s: NetworkState, omega: float, executor=None) -> np.ndarray:
    xt = jacobi_sweep(net, s, executor=executor)
    if omega == 1.0:
        return xt
    return omega * xt + (1.0 - omega) * np.asarray(s.x, float)


def gauss_seidel_step(
    net: Network, s: NetworkState, omega: float, sched: DagSchedule, executor=None
) -> np.ndarray:
    xt = gauss_seidel_sweep(net, s, sched, executor=executor)
    if omega == 1.0:
        return xt
    return omega * xt + (1.0 - omega) * np.asarray(s.x, float)


def simulated_parallel_time(
    sched: DagSchedule | None, component_times: Mapping[int, float]
) -> float:
    """Wall time of one sweep with one processor per component.

    ``sched=None`` models a Jacobi sweep (slowest component); otherwise the
    levels run one after another, each costing its slowest member.
    """
    if sched is None:
        return max(component_times.values(), default=0.0)
    return sum(max((component_times[c] for c in lvl), default=0.0) for lvl in sched.levels)


def solve(
    net: Network,
    u,
    method: str,
    cfg: SolverConfig,
    sched: DagSchedule | None = None,
    executor: Executor | None = None,
    x0=None,
    callback: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[NetworkState, ConvergenceTrace]:
    """Relax the network to a fixed point starting from ``x0`` (zero by default).

    The relative residual ``||x - F(x)|| / ||F(0)||`` is checked for every
    iterate. For Jacobi the sweep that advances ``x^k`` also yields ``F(x^k)``;
    Gauss-Seidel spends one extra Jacobi-type sweep per iteration on the
    residual, which is excluded from the simulated parallel time.
    """
    if method not in ("jacobi", "gauss_seidel"):
        raise ValueError(f"unknown method {method!r}")
    if method == "gauss_seidel" and sched is None:
        raise ValueError("gauss_seidel needs a DagSchedule")
    u = np.asarray(u, dtype=float)
    omega = cfg.omega
    aa = AndersonState(cfg.anderson_memory) if cfg.anderson_memory > 0 else None
    trace = ConvergenceTrace()
    t_start = time.perf_counter()

    def F(x, timings=None):
        return jacobi_sweep(net, NetworkState(x, u), timings, executor)

    x = np.zeros(net.n_x) if x0 is None else np.array(x0, dtype=float)
    times: dict[int, float] = {}
    Fx = F(x, times)
    if x0 is None:
        r0 = float(np.linalg.norm(Fx))
    else:
        r0 = float(np.linalg.norm(F(np.zeros(net.n_x))))
    pending = simulated_parallel_time(None, times) if method == "jacobi" else 0.0

    def finish(status):
        trace.status = status
        trace.measured_s = time.perf_counter() - t_start
        return NetworkState(x=x, u=u), trace

    if r0 == 0.0:
        return finish("converged")
    rel = float(np.linalg.norm(x - Fx)) / r0
    if rel <= cfg.tol:
        return finish("converged")

    cum = 0.0
    for k in range(1, cfg.max_iter + 1):
        times = {}
        if method == "jacobi":
            xhat = Fx if omega == 1.0 else omega * Fx + (1.0 - omega) * x
            sweep_s = pending
        else:
            xt = gauss_seidel_sweep(net, NetworkState(x, u), sched, times, executor)
            xhat = xt if omega == 1.0 else omega * xt + (1.0 - omega) * x
            sweep_s = simulated_parallel_time(sched, times)
        if aa is not None:
            x, alpha = aa_update(aa, x, xhat)
            log.debug("iter %d: AA weights %s", k, np.array2string(alpha, precision=3))
        else:
            x = xhat
        times = {}
        Fx = F(x, times)
        if method == "jacobi":
            pending = simulated_parallel_time(None, times)
        rel = float(np.linalg.norm(x - Fx)) / r0
        cum += sweep_s
        trace.records.append(IterationRecord(k, rel, sweep_s, cum))
        if callback is not None:
            callback(k, x)
        if not np.isfinite(rel) or rel > DIVERGENCE_THRESHOLD:
            log.warning("relaxation diverged at iteration %d (rel. residual %.3e)", k, rel)
            return finish("diverged")
        if rel <= cfg.tol:
            return finish("converged")
    return finish("max_iter")


def _nseq(net: Network, perm) -> int:
    return dag_from_permutation(perm, net).n_seq


def _undirected_neighbors(net: Network) -> dict[int, set[int]]:
    nbrs = {cid: set() for cid in net.ids}
    for a, b in net.component_edges():
        nbrs[a].add(b)
        nbrs[b].add(a)
    return nbrs


def _in_neighbors(net: Network) -> dict[int, set[int]]:
    preds = {cid: set() for cid in net.ids}
    for a, b in net.component_edges():
        preds[b].add(a)
    return preds


def _topological_order(net: Network) -> list[int] | None:
    preds = _in_neighbors(net)
    order, done = [], set()
    while len(order) < len(net):
        ready = [c for c in net.ids if c not in done and preds[c] <= done]
        if not ready:
            return None
        order.extend(ready)
        done.update(ready)
    return order


def _peel_levels(net: Network, priority: Sequence[int]) -> list[int]:
    """Greedy rounds: take components whose unassigned in-neighbours are all
    assigned; when none qualifies, seed the round with the first component in
    ``priority``. Within a round, no two members may be adjacent."""
    preds = _in_neighbors(net)
    nbrs = _undirected_neighbors(net)
    assigned: set[int] = set()
    order: list[int] = []
    while len(assigned) < len(net):
        round_: list[int] = []
        for c in priority:
            if c in assigned or nbrs[c] & set(round_):
                continue
            if preds[c] <= assigned:
                round_.append(c)
        if not round_:
            for c in priority:
                if c in assigned or nbrs[c] & set(round_):
                    continue
                round_.append(c)
        order.extend(round_)
        assigned.update(round_)
    return order


def _coloring_orders(net: Network) -> list[list[int]]:
    """Permutations grouping colour classes of greedy colourings together."""
    import networkx as nx

    g = nx.Graph()
    g.add_nodes_from(net.ids)
    g.add_edges_from((a, b) for a, b in net.component_edges())
    orders = []
    for strategy in ("largest_first", "smallest_last", "saturation_largest_first", "connected_sequential_bfs"):
        colors = nx.greedy_color(g, strategy=strategy)
        orders.append(sorted(net.ids, key=lambda c: (colors[c], net.position[c])))
    # natural-order greedy colouring; optimal on structured grids
    colors: dict[int, int] = {}
    for c in net.ids:
        used = {colors[n] for n in g.neighbors(c) if n in colors}
        colors[c] = next(k for k in range(len(net)) if k not in used)
    orders.append(sorted(net.ids, key=lambda c: (colors[c], net.position[c])))
    return orders


def find_low_nseq_permutation(net: Network, trials: int = 100, rng_seed: int = 0):
    """Search for a permutation with few sequential Gauss-Seidel levels.

    An acyclic network returns its topological order: one sweep then solves
    the network exactly, which beats any schedule that cuts edges. Otherwise
    the best of the greedy candidates and ``trials`` random permutations is
    returned, ties going to the first found.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    topo = _topological_order(net)
    if topo is not None:
        return tuple(topo), _nseq(net, topo)

    degree = {c: len(n) for c, n in _undirected_neighbors(net).items()}
    lowest_first = sorted(net.ids, key=lambda c: (degree[c], net.position[c]))
    candidates = [_peel_levels(net, lowest_first)]
    candidates.extend(_coloring_orders(net))
    rng = np.random.default_rng(rng_seed)
    ids = np.array(net.ids)
    candidates.extend(rng.permutation(ids).tolist() for _ in range(trials))

    best, best_n = None, None
    for perm in candidates:
        n = _nseq(net, perm)
        if best_n is None or n < best_n:
            best, best_n = tuple(int(c) for c in perm), n
    return best, best_n


def random_permutation(net: Network, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(c) for c in rng.permutation(np.array(net.ids)))
