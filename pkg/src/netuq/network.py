"""Component/network data model and the network fixed-point residual.

All coupling happens on stacked coefficient vectors. A component's
endogenous, exogenous and output coefficients occupy contiguous slices of
the stacked vectors ``y``, ``u`` and ``x``; the adjacency between outputs and
endogenous inputs is an edge list holding one output slot per endogenous
slot.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

Propagator = Callable[[np.ndarray, np.ndarray], np.ndarray]


class NetworkError(ValueError):
    pass


class TriviallyConvergedError(ArithmeticError):
    """The residual at the zero state vanishes, so no relative residual exists."""


@dataclass
class Component:
    id: int
    n_endo: int
    n_exo: int
    n_out: int
    propagator: Propagator
    cost_hint: float | None = None


@dataclass(frozen=True)
class NetworkState:
    x: np.ndarray
    u: np.ndarray


class Network:
    """Validated, immutable network of components.

    Parameters
    ----------
    components
        Ordered components; stacked vectors follow this order.
    edges
        ``(endo_slot, out_slot)`` pairs in global (stacked) numbering. Every
        endogenous slot must appear exactly once.
    qoi_slots
        Output slots extracted by :func:`extract_qoi`.
    """

    def __init__(self, components: Sequence[Component], edges, qoi_slots=()):
        self.components = tuple(components)
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise NetworkError(f"duplicate component ids in {ids}")
        self.ids = tuple(ids)
        self.position = {cid: k for k, cid in enumerate(ids)}

        def offsets(sizes):
            return np.concatenate([[0], np.cumsum(sizes, dtype=int)]).astype(int)

        self.endo_offsets = offsets([c.n_endo for c in self.components])
        self.exo_offsets = offsets([c.n_exo for c in self.components])
        self.out_offsets = offsets([c.n_out for c in self.components])
        self.n_y = int(self.endo_offsets[-1])
        self.n_u = int(self.exo_offsets[-1])
        self.n_x = int(self.out_offsets[-1])

        edges = [(int(e), int(o)) for e, o in edges]
        source = np.full(self.n_y, -1, dtype=int)
        for endo_slot, out_slot in edges:
            if not 0 <= endo_slot < self.n_y:
                raise NetworkError(f"endogenous slot {endo_slot} outside [0, {self.n_y})")
            if not 0 <= out_slot < self.n_x:
                raise NetworkError(f"output slot {out_slot} outside [0, {self.n_x})")
            if source[endo_slot] >= 0:
                raise NetworkError(f"endogenous slot {endo_slot} is fed twice")
            source[endo_slot] = out_slot
        if (source < 0).any():
            missing = np.flatnonzero(source < 0)[:10].tolist()
            raise NetworkError(f"endogenous slots without a source: {missing}")
        self.source = source
        self.source.setflags(write=False)

        # owner positions of every endogenous and output slot
        self.endo_owner = np.repeat(
            np.arange(len(self.components)), [c.n_endo for c in self.components]
        )
        self.out_owner = np.repeat(
            np.arange(len(self.components)), [c.n_out for c in self.components]
        )
        loops = self.endo_owner == self.out_owner[source] if self.n_y else np.zeros(0, bool)
        if loops.any():
            bad = int(np.flatnonzero(loops)[0])
            raise NetworkError(
                f"component {ids[self.endo_owner[bad]]} feeds its own endogenous slot {bad}"
            )

        qoi = np.asarray(list(qoi_slots), dtype=int)
        if qoi.size and ((qoi < 0) | (qoi >= self.n_x)).any():
            raise NetworkError("QoI slot outside the stacked output range")
        self.qoi_slots = qoi

    def __len__(self) -> int:
        return len(self.components)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(e, int(o)) for e, o in enumerate(self.source)]

    def endo_slice(self, k: int) -> slice:
        return slice(self.endo_offsets[k], self.endo_offsets[k + 1])

    def exo_slice(self, k: int) -> slice:
        return slice(self.exo_offsets[k], self.exo_offsets[k + 1])

    def out_slice(self, k: int) -> slice:
        return slice(self.out_offsets[k], self.out_offsets[k + 1])

    def component_edges(self) -> set[tuple[int, int]]:
        """Component-level digraph as ``(source_id, target_id)`` pairs."""
        src = self.out_owner[self.source]
        pairs = set(zip(src.tolist(), self.endo_owner.tolist()))
        return {(self.ids[a], self.ids[b]) for a, b in pairs}

    def zero_state(self, u) -> NetworkState:
        return NetworkState(x=np.zeros(self.n_x), u=np.asarray(u, dtype=float))


def assemble(components: Sequence[Component], edges, qoi_slots=()) -> Network:
    return Network(components, edges, qoi_slots)


def gather_endo(net: Network, x) -> np.ndarray:
    return np.asarray(x, dtype=float)[net.source]


def propagate_component(net: Network, k: int, endo: np.ndarray, u: np.ndarray):
    """Run component ``k`` and return ``(outputs, wall_seconds)``."""
    comp = net.components[k]
    t0 = time.perf_counter()
    out = np.asarray(comp.propagator(endo, u[net.exo_slice(k)]), dtype=float).ravel()
    elapsed = time.perf_counter() - t0
    if out.size != comp.n_out:
        raise NetworkError(
            f"component {comp.id} returned {out.size} outputs, expected {comp.n_out}"
        )
    return out, elapsed


def run_components(
    net: Network,
    positions: Sequence[int],
    endo: np.ndarray,
    u: np.ndarray,
    out: np.ndarray,
    timings: dict | None = None,
    executor: Executor | None = None,
) -> None:
    """Propagate the given components, writing into their slices of ``out``.

    Each component owns a disjoint output slice, so concurrent writes never alias.
    """

    def one(k):
        values, elapsed = propagate_component(net, k, endo[net.endo_slice(k)], u)
        out[net.out_slice(k)] = values
        if timings is not None:
            timings[net.ids[k]] = elapsed

    if executor is None or len(positions) < 2:
        for k in positions:
            one(k)
    else:
        for fut in [executor.submit(one, k) for k in positions]:
            fut.result()


def apply_F(
    net: Network,
    s: NetworkState,
    timings: dict | None = None,
    executor: Executor | None = None,
) -> np.ndarray:
    """Stacked outputs of every propagator given the gathered endogenous inputs."""
    x = np.asarray(s.x, dtype=float)
    if x.size != net.n_x or np.asarray(s.u).size != net.n_u:
        raise NetworkError("state dimensions do not match the network")
    out = np.empty(net.n_x)
    run_components(
        net, range(len(net)), gather_endo(net, x), np.asarray(s.u, float), out, timings, executor
    )
    return out


def residual(net: Network, s: NetworkState) -> np.ndarray:
    return np.asarray(s.x, dtype=float) - apply_F(net, s)


def relative_residual(net: Network, s: NetworkState) -> float:
    r0 = np.linalg.norm(residual(net, net.zero_state(s.u)))
    if r0 == 0.0:
        raise TriviallyConvergedError("residual vanishes at the zero state")
    return float(np.linalg.norm(residual(net, s)) / r0)


def extract_qoi(net: Network, x) -> np.ndarray:
    return np.asarray(x, dtype=float)[net.qoi_slots]


def topology_to_json(net: Network) -> str:
    doc = {
        "components": [
            {"id": c.id, "n_endo": c.n_endo, "n_exo": c.n_exo, "n_out": c.n_out}
            for c in net.components
        ],
        "edges": [[e, o] for e, o in net.edges],
        "qoi": net.qoi_slots.tolist(),
    }
    return json.dumps(doc)


def topology_from_json(text: str, propagators: Mapping[int, Propagator]) -> Network:
    doc = json.loads(text)
    comps = [
        Component(
            id=c["id"],
            n_endo=c["n_endo"],
            n_exo=c["n_exo"],
            n_out=c["n_out"],
            propagator=propagators[c["id"]],
        )
        for c in doc["components"]
    ]
    return assemble(comps, [tuple(e) for e in doc["edges"]], doc["qoi"])
