"""Nonlinear diffusion benchmark on the unit square.

Solves ``-lap v + (exp(mu v) - 1) = f`` with Dirichlet data on bilinear
quadrilateral elements, decomposes the mesh into overlapping tiles, and wraps
each tile as a NISP component propagator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .network import Component, Network, assemble
from .pce import (
    MultiIndexSet,
    PceExpansion,
    QuadratureRule,
    gauss_hermite_rule,
    nisp_projection_matrix,
    total_degree_set,
)

log = logging.getLogger(__name__)

Forcing = Callable[[np.ndarray, np.ndarray], np.ndarray]

NEWTON_TOL = 1e-10
NEWTON_MAX = 25

# input PCE coefficients over the (d=2, p=3) basis; rows are (v_boundary, mu)
BENCHMARK_INPUT_COEFFS = np.array(
    [
        [1.0, 0.2, 0.0, 0.02, 0.0, 0.0, 0.002, 0.0, 0.0, 0.0],
        [1.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.02, 0.0, 0.0, 0.002],
    ]
)


def sine_forcing(x, y):
    return 10.0 * np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y)


class NewtonConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Mesh:
    """Uniform structured grid; node ``(i, j)`` has flat index ``j * nx + i``."""

    nx: int
    ny: int
    x_start: float = 0.0
    y_start: float = 0.0
    hx: float | None = None
    hy: float | None = None

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("a mesh needs at least two nodes per axis")
        if self.hx is None:
            object.__setattr__(self, "hx", 1.0 / (self.nx - 1))
        if self.hy is None:
            object.__setattr__(self, "hy", 1.0 / (self.ny - 1))

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def xs(self) -> np.ndarray:
        return self.x_start + self.hx * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y_start + self.hy * np.arange(self.ny)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        X, Y = np.meshgrid(self.xs, self.ys)
        return X.ravel(), Y.ravel()

    @property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros((self.ny, self.nx), dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m.ravel()

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    @property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)


_GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


def _shape(r, s):
    """Bilinear shape functions and reference gradients, local order SW, SE, NE, NW."""
    N = 0.25 * np.array([(1 - r) * (1 - s), (1 + r) * (1 - s), (1 + r) * (1 + s), (1 - r) * (1 + s)])
    dr = 0.25 * np.array([-(1 - s), (1 - s), (1 + s), -(1 + s)])
    ds = 0.25 * np.array([-(1 - r), -(1 + r), (1 + r), (1 - r)])
    return N, dr, ds


@dataclass(frozen=True)
class _Geometry:
    """Translation-invariant FEM structure for one grid shape and spacing."""

    K: sp.csr_matrix  # stiffness
    B: sp.csr_matrix  # nodal values -> quadrature-point values
    wq: np.ndarray  # quadrature weight times area per quadrature point
    qp_local: np.ndarray  # [n_qp, 2] offsets of quadrature points from the origin node
    free: np.ndarray
    bandwidth: int
    # reduced Jacobian on free nodes: values = K_ff + A @ (mu exp(mu v_qp)), in banded storage
    K_ff_vals: np.ndarray
    A: sp.csr_matrix
    band_rows: np.ndarray
    band_cols: np.ndarray


@lru_cache(maxsize=32)
def _geometry(nx: int, ny: int, hx: float, hy: float) -> _Geometry:
    ex, ey = nx - 1, ny - 1
    I, J = np.meshgrid(np.arange(ex), np.arange(ey))
    base = (J * nx + I).ravel()
    conn = np.stack([base, base + 1, base + nx + 1, base + nx], axis=1)  # [n_el, 4]
    n_el = conn.shape[0]
    detJ = 0.25 * hx * hy

    ke = np.zeros((4, 4))
    Nq, offs = [], []
    for s in _GAUSS2:
        for r in _GAUSS2:
            N, dr, ds = _shape(r, s)
            gx, gy = dr * 2.0 / hx, ds * 2.0 / hy
            ke += (np.outer(gx, gx) + np.outer(gy, gy)) * detJ
            Nq.append(N)
            offs.append((0.5 * hx * (1 + r), 0.5 * hy * (1 + s)))
    Nq = np.array(Nq)  # [4 qp, 4 nodes]
    offs = np.array(offs)

    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    K = sp.csr_matrix((np.tile(ke.ravel(), n_el), (rows, cols)), shape=(nx * ny, nx * ny))
    K.sum_duplicates()

    qp_rows = np.arange(4 * n_el).repeat(4)
    qp_cols = np.repeat(conn, 4, axis=0).ravel()
    B = sp.csr_matrix((np.tile(Nq.ravel(), n_el), (qp_rows, qp_cols)), shape=(4 * n_el, nx * ny))
    wq = np.full(4 * n_el, detJ)
    origin = np.stack([I.ravel() * hx, J.ravel() * hy], axis=1)
    qp_local = (origin[:, None, :] + offs[None, :, :]).reshape(-1, 2)

    mask = np.zeros((ny, nx), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    free = np.flatnonzero(~mask.ravel())
    local = np.full(nx * ny, -1)
    local[free] = np.arange(free.size)

    # every (qp, a, b) triple with both element nodes free contributes
    # N_a(qp) N_b(qp) w(qp) to Jacobian entry (a, b)
    el = np.arange(n_el)[:, None, None, None]
    k = np.arange(4)[None, :, None, None]
    al = np.arange(4)[None, None, :, None]
    be = np.arange(4)[None, None, None, :]
    shape = (n_el, 4, 4, 4)
    a = np.broadcast_to(local[conn[el, al]], shape).ravel()
    b = np.broadcast_to(local[conn[el, be]], shape).ravel()
    qp = np.broadcast_to(4 * el + k, shape).ravel()
    val = np.broadcast_to(Nq[k, al] * Nq[k, be] * detJ, shape).ravel()
    keep = (a >= 0) & (b >= 0)
    a, b, qp, val = a[keep], b[keep], qp[keep], val[keep]

    S = sp.csr_matrix((np.ones(a.size), (a, b)), shape=(free.size, free.size))
    S.sum_duplicates()
    S.sort_indices()
    S.data = np.arange(S.nnz, dtype=float)
    pos = np.asarray(S[a, b]).ravel().astype(int) if a.size else np.zeros(0, int)
    A = sp.csr_matrix((val, (pos, qp)), shape=(S.nnz, 4 * n_el))
    pat = S.tocoo()
    K_ff = K[free][:, free]
    K_ff_vals = np.asarray(K_ff[pat.row, pat.col]).ravel() if S.nnz else np.zeros(0)
    bw = int(np.max(np.abs(pat.row - pat.col))) if S.nnz else 0
    return _Geometry(
        K=K, B=B, wq=wq, qp_local=qp_local, free=free, bandwidth=bw,
        K_ff_vals=K_ff_vals, A=A, band_rows=bw + pat.row - pat.col, band_cols=pat.col,
    )


class FemOperator:
    """Discrete residual and Newton solver for one mesh and forcing.

    Column ``q`` of a nodal array ``V`` (shape ``[n_nodes, Q]``) is an
    independent problem with reaction parameter ``mu[q]``; the batched
    Newton solve shares one factorization pattern across columns.
    """

    def __init__(self, mesh: Mesh, forcing: Forcing = sine_forcing):
        self.mesh = mesh
        self.geo = _geometry(mesh.nx, mesh.ny, float(mesh.hx), float(mesh.hy))
        qx = mesh.x_start + self.geo.qp_local[:, 0]
        qy = mesh.y_start + self.geo.qp_local[:, 1]
        self.load = self.geo.B.T @ (self.geo.wq * forcing(qx, qy))

    def residual(self, V: np.ndarray, mu: np.ndarray) -> np.ndarray:
        """Full residual, including rows of Dirichlet nodes."""
        g = self.geo
        V2 = V.reshape(V.shape[0], -1)
        vq = g.B @ V2
        R = g.K @ V2 + g.B.T @ (g.wq[:, None] * np.expm1(mu[None, :] * vq)) - self.load[:, None]
        return R.reshape(V.shape)

    def jacobian(self, v: np.ndarray, mu: float) -> sp.csr_matrix:
        g = self.geo
        d = g.wq * mu * np.exp(mu * (g.B @ v))
        return (g.K + g.B.T @ sp.diags(d) @ g.B).tocsr()

    def newton(
        self,
        V0: np.ndarray,
        mu: np.ndarray,
        tol: float = NEWTON_TOL,
        max_iter: int = NEWTON_MAX,
        min_steps: int = 0,
    ) -> tuple[np.ndarray, int]:
        """Batched Newton with full steps; boundary rows of ``V0`` are kept fixed.

        Columns stop updating once their free-node residual 2-norm is at or
        below ``tol`` and at least ``min_steps`` steps were taken.
        """
        g = self.geo
        V = np.array(V0, dtype=float, copy=True)
        if V.ndim == 1:
            V = V[:, None]
        mu = np.broadcast_to(np.asarray(mu, dtype=float), (V.shape[1],))
        free = g.free
        n_f, bw = free.size, g.bandwidth
        if n_f == 0:
            return V, 0
        steps = 0
        active = np.ones(V.shape[1], dtype=bool)
        while True:
            R = self.residual(V[:, active], mu[active])[free]
            norms = np.linalg.norm(R, axis=0)
            done = (norms <= tol) & (steps >= min_steps)
            idx = np.flatnonzero(active)
            active[idx[done]] = False
            if not active.any():
                return V, steps
            if steps >= max_iter:
                worst = float(norms[~done].max())
                raise NewtonConvergenceError(
                    f"Newton did not converge in {max_iter} steps", worst
                )
            R = R[:, ~done]
            cols = idx[~done]
            d = mu[cols] * np.exp(mu[cols] * (g.B @ V[:, cols]))
            vals = g.K_ff_vals[:, None] + g.A @ d
            for c, q in enumerate(cols):
                ab = np.zeros((2 * bw + 1, n_f))
                ab[g.band_rows, g.band_cols] = vals[:, c]
                V[free, q] -= solve_banded((bw, bw), ab, R[:, c], check_finite=False)
            if not np.isfinite(V[:, cols]).all():
                raise NewtonConvergenceError("Newton produced non-finite values", float("inf"))
            steps += 1


@dataclass
class DeterministicProblem:
    """One boundary-value problem: mesh, reaction parameter and Dirichlet data.

    ``dirichlet`` holds values at ``mesh.boundary_nodes`` in that order.
    """

    mesh: Mesh
    mu: float
    dirichlet: np.ndarray
    forcing: Forcing = sine_forcing
    _op: FemOperator | None = field(default=None, repr=False)

    def __post_init__(self):
        self.dirichlet = np.broadcast_to(
            np.asarray(self.dirichlet, dtype=float), self.mesh.boundary_nodes.shape
        ).copy()

    @property
    def operator(self) -> FemOperator:
        if self._op is None:
            self._op = FemOperator(self.mesh, self.forcing)
        return self._op

    def impose(self, v) -> np.ndarray:
        v = np.array(v, dtype=float, copy=True)
        v[self.mesh.boundary_nodes] = self.dirichlet
        return v


def assemble_system(p: DeterministicProblem, v) -> tuple[np.ndarray, sp.csr_matrix]:
    """Residual and Jacobian with identity rows and zero residual on the boundary."""
    v = np.asarray(v, dtype=float)
    op = p.operator
    R = op.residual(v, np.array([p.mu]))
    R[p.mesh.boundary_nodes] = 0.0
    Jm = op.jacobian(v, p.mu).tolil()
    for b in p.mesh.boundary_nodes:
        Jm.rows[b] = [b]
        Jm.data[b] = [1.0]
    return R, Jm.tocsr()


def newton_solve(
    p: DeterministicProblem,
    v0=None,
    tol_newton: float = NEWTON_TOL,
    max_newton: int = NEWTON_MAX,
) -> np.ndarray:
    if tol_newton <= 0:
        raise ValueError("tol_newton must be positive")
    v0 = np.zeros(p.mesh.n_nodes) if v0 is None else v0
    V, _ = p.operator.newton(p.impose(v0), np.array([p.mu]), tol_newton, max_newton)
    return V[:, 0]


def l2_error(mesh: Mesh, v: np.ndarray, exact: Forcing) -> float:
    """L2 norm of ``v_h - exact`` with 3x3 Gauss quadrature per element."""
    pts, wts = np.polynomial.legendre.leggauss(3)
    ex, ey = mesh.nx - 1, mesh.ny - 1
    I, J = np.meshgrid(np.arange(ex), np.arange(ey))
    base = (J * mesh.nx + I).ravel()
    conn = np.stack([base, base + 1, base + mesh.nx + 1, base + mesh.nx], axis=1)
    x0 = mesh.x_start + I.ravel() * mesh.hx
    y0 = mesh.y_start + J.ravel() * mesh.hy
    total = 0.0
    for s, ws in zip(pts, wts):
        for r, wr in zip(pts, wts):
            N, _, _ = _shape(r, s)
            vh = v[conn] @ N
            x = x0 + 0.5 * mesh.hx * (1 + r)
            y = y0 + 0.5 * mesh.hy * (1 + s)
            total += wr * ws * np.sum((vh - exact(x, y)) ** 2)
    return float(np.sqrt(total * 0.25 * mesh.hx * mesh.hy))


# --- overlapping decomposition -------------------------------------------------


@dataclass(frozen=True)
class Subdomain:
    id: int
    tile: tuple[int, int]  # (column, row) in the subdomain grid
    i_range: tuple[int, int]  # inclusive global node window along x
    j_range: tuple[int, int]
    mesh: Mesh
    global_nx: int

    @property
    def global_nodes(self) -> np.ndarray:
        """Global flat index of every local node, in local order."""
        nx_g = self.global_nx
        i = np.arange(self.i_range[0], self.i_range[1] + 1)
        j = np.arange(self.j_range[0], self.j_range[1] + 1)
        return (j[:, None] * nx_g + i[None, :]).ravel()


@dataclass(frozen=True)
class Decomposition:
    mesh: Mesh
    n_sub_x: int
    n_sub_y: int
    subdomains: tuple[Subdomain, ...]
    # (importer id, exporter id) -> global nodes on the importer's artificial boundary
    interface_maps: dict[tuple[int, int], tuple[int, ...]]
    owner: np.ndarray  # subdomain id owning each global node's solution

    def neighbors(self, sid: int) -> set[int]:
        return {e for (i, e) in self.interface_maps if i == sid}

    def artificial_boundary(self, sid: int) -> np.ndarray:
        nodes = [n for (i, _), ns in self.interface_maps.items() if i == sid for n in ns]
        return np.array(sorted(nodes), dtype=int)

    def exported(self, sid: int) -> np.ndarray:
        nodes = {n for (_, e), ns in self.interface_maps.items() if e == sid for n in ns}
        return np.array(sorted(nodes), dtype=int)


def _tile_windows(n_nodes: int, n_sub: int) -> tuple[int, list[tuple[int, int]]]:
    n_el = n_nodes - 1
    if n_sub < 1 or n_el % n_sub:
        raise ValueError(
            f"{n_el} elements per axis cannot be split into {n_sub} equal tiles"
        )
    e = n_el // n_sub
    return e, [(t * e, min((t + 1) * e + 1, n_el)) for t in range(n_sub)]


def decompose(mesh: Mesh, n_sub_x: int, n_sub_y: int) -> Decomposition:
    """Split the element grid into equal tiles, each extended by one element
    on its high side (except the last), so neighbours overlap by one element.

    A global interior node with coordinate ``c`` lies strictly inside the
    window of tile ``(c - 1) // e`` along that axis; that tile owns it, so
    every artificial-boundary node has exactly one supplier.
    """
    ex, win_x = _tile_windows(mesh.nx, n_sub_x)
    ey, win_y = _tile_windows(mesh.ny, n_sub_y)

    def owner_1d(c, e, n_sub):
        return min(max(c - 1, 0) // e, n_sub - 1)

    subs = []
    for b in range(n_sub_y):
        for a in range(n_sub_x):
            (i0, i1), (j0, j1) = win_x[a], win_y[b]
            sub_mesh = Mesh(
                i1 - i0 + 1, j1 - j0 + 1,
                x_start=i0 * mesh.hx, y_start=j0 * mesh.hy, hx=mesh.hx, hy=mesh.hy,
            )
            subs.append(
                Subdomain(b * n_sub_x + a + 1, (a, b), (i0, i1), (j0, j1), sub_mesh, mesh.nx)
            )

    jj, ii = np.divmod(np.arange(mesh.n_nodes), mesh.nx)
    ox = np.array([owner_1d(c, ex, n_sub_x) for c in range(mesh.nx)])
    oy = np.array([owner_1d(c, ey, n_sub_y) for c in range(mesh.ny)])
    owner = oy[jj] * n_sub_x + ox[ii] + 1

    maps: dict[tuple[int, int], list[int]] = {}
    global_boundary = mesh.boundary_mask
    for sub in subs:
        local = sub.mesh.boundary_nodes
        for g in sub.global_nodes[local]:
            if global_boundary[g]:
                continue
            src = int(owner[g])
            maps.setdefault((sub.id, src), []).append(int(g))
    interface = {k: tuple(sorted(v)) for k, v in sorted(maps.items())}
    return Decomposition(mesh, n_sub_x, n_sub_y, tuple(subs), interface, owner)


# --- stochastic benchmark --------------------------------------------------------


@dataclass(frozen=True)
class StochasticInputs:
    """PCE of the boundary value and reaction parameter with its basis and rule."""

    exo: PceExpansion
    rule: QuadratureRule

    def __post_init__(self):
        if self.exo.n_components != 2:
            raise ValueError("expected two input rows: boundary value and mu")
        if self.rule.dim != self.exo.basis.dim:
            raise ValueError("rule and basis dimensions differ")

    @property
    def basis(self) -> MultiIndexSet:
        return self.exo.basis

    @property
    def n_terms(self) -> int:
        return len(self.exo.basis)

    @property
    def exo_vector(self) -> np.ndarray:
        return self.exo.coeffs.ravel()

    def realize(self, exo_coeffs=None) -> tuple[np.ndarray, np.ndarray]:
        """Boundary value and mu at every quadrature node."""
        c = self.exo.coeffs if exo_coeffs is None else np.asarray(exo_coeffs).reshape(2, -1)
        vals = c @ self.psi.T
        return vals[0], vals[1]

    @cached_property
    def psi(self) -> np.ndarray:
        """Basis values at the quadrature nodes, ``[n_points, n_terms]``."""
        return self.basis.vandermonde(self.rule.nodes)

    @cached_property
    def projector(self) -> np.ndarray:
        return nisp_projection_matrix(self.basis, self.rule)


def benchmark_inputs(coeffs=BENCHMARK_INPUT_COEFFS, points_per_dim: int = 4) -> StochasticInputs:
    basis = total_degree_set(2, 3)
    return StochasticInputs(
        exo=PceExpansion(basis=basis, coeffs=np.array(coeffs, dtype=float)),
        rule=gauss_hermite_rule(points_per_dim, 2),
    )


class SubdomainPropagator:
    """NISP propagator for one subdomain with per-quadrature-node warm starts.

    Endogenous input: PCE coefficients of the artificial-boundary nodes,
    node-major. Exogenous input: the stacked boundary-value and mu
    coefficients. Output: PCE coefficients of ``out_nodes``, node-major.
    """

    def __init__(
        self,
        sub: Subdomain,
        decomp: Decomposition,
        inputs: StochasticInputs,
        out_nodes: np.ndarray,
        tol_newton: float = NEWTON_TOL,
        forcing: Forcing = sine_forcing,
    ):
        self.sub = sub
        self.inputs = inputs
        self.tol_newton = tol_newton
        self.op = FemOperator(sub.mesh, forcing)
        glob = sub.global_nodes
        local_of = {int(g): k for k, g in enumerate(glob)}
        bnd = sub.mesh.boundary_nodes
        physical = decomp.mesh.boundary_mask[glob[bnd]]
        self.physical_local = bnd[physical]
        self.endo_global = decomp.artificial_boundary(sub.id)
        self.endo_local = np.array([local_of[int(g)] for g in self.endo_global], dtype=int)
        self.out_global = np.asarray(out_nodes, dtype=int)
        self.out_local = np.array([local_of[int(g)] for g in self.out_global], dtype=int)
        self.state: np.ndarray | None = None
        self.newton_steps = 0

    def __call__(self, endo, exo) -> np.ndarray:
        P = self.inputs.n_terms
        psi, proj = self.inputs.psi, self.inputs.projector
        v_bnd, mu = self.inputs.realize(exo)
        if self.state is None:
            self.state = np.zeros((self.sub.mesh.n_nodes, psi.shape[0]))
        V = self.state
        V[self.physical_local] = v_bnd[None, :]
        if self.endo_local.size:
            V[self.endo_local] = np.asarray(endo, dtype=float).reshape(-1, P) @ psi.T
        try:
            V, steps = self.op.newton(V, mu, tol=self.tol_newton, min_steps=1)
        except NewtonConvergenceError as exc:
            raise NewtonConvergenceError(
                f"subdomain {self.sub.id}: {exc}", exc.residual
            ) from exc
        self.newton_steps += steps
        self.state = V
        return (V[self.out_local] @ proj).ravel()


@dataclass
class BenchmarkMeta:
    decomp: Decomposition
    inputs: StochasticInputs
    propagators: dict[int, SubdomainPropagator]
    out_nodes: dict[int, np.ndarray]
    probe_nodes: tuple[int, ...]
    probe_slots: dict[int, np.ndarray]  # probe node -> its coefficient slots in x


def probe_locations(mesh: Mesh) -> tuple[int, ...]:
    """Domain centre and the node one step in from the left edge at mid-height."""
    c_i, c_j = mesh.nx // 2, mesh.ny // 2
    return (c_j * mesh.nx + c_i, c_j * mesh.nx + 1)


def build_benchmark_network(
    mesh: Mesh,
    n_sub_x: int,
    n_sub_y: int,
    inputs: StochasticInputs | None = None,
    tol_newton: float = NEWTON_TOL,
    probes: tuple[int, ...] | None = None,
) -> tuple[Network, BenchmarkMeta]:
    inputs = benchmark_inputs() if inputs is None else inputs
    P = inputs.n_terms
    decomp = decompose(mesh, n_sub_x, n_sub_y)
    probes = probe_locations(mesh) if probes is None else tuple(probes)

    out_nodes = {}
    for sub in decomp.subdomains:
        owned_probes = [p for p in probes if decomp.owner[p] == sub.id]
        out_nodes[sub.id] = np.array(
            sorted(set(decomp.exported(sub.id).tolist()) | set(owned_probes)), dtype=int
        )

    comps, props = [], {}
    for sub in decomp.subdomains:
        prop = SubdomainPropagator(sub, decomp, inputs, out_nodes[sub.id], tol_newton)
        props[sub.id] = prop
        comps.append(
            Component(
                id=sub.id,
                n_endo=prop.endo_global.size * P,
                n_exo=2 * P,
                n_out=out_nodes[sub.id].size * P,
                propagator=prop,
            )
        )

    # output slot of node g's coefficient block, per owning component
    out_base: dict[int, int] = {}
    offset = 0
    for sub in decomp.subdomains:
        for k, g in enumerate(out_nodes[sub.id]):
            out_base[int(g)] = offset + k * P
        offset += out_nodes[sub.id].size * P

    edges = []
    endo_offset = 0
    for sub in decomp.subdomains:
        for k, g in enumerate(props[sub.id].endo_global):
            for t in range(P):
                edges.append((endo_offset + k * P + t, out_base[int(g)] + t))
        endo_offset += props[sub.id].endo_global.size * P

    probe_slots = {p: out_base[p] + np.arange(P) for p in probes}
    qoi = np.concatenate([probe_slots[p] for p in probes]) if probes else []
    net = assemble(comps, edges, qoi)
    return net, BenchmarkMeta(decomp, inputs, props, out_nodes, probes, probe_slots)


def global_uq_solve(
    mesh: Mesh,
    inputs: StochasticInputs | None = None,
    tol_newton: float = NEWTON_TOL,
    forcing: Forcing = sine_forcing,
) -> PceExpansion:
    """NISP over independent Newton solves of the whole mesh, one per quadrature node."""
    inputs = benchmark_inputs() if inputs is None else inputs
    op = FemOperator(mesh, forcing)
    v_bnd, mu = inputs.realize()
    V = np.zeros((mesh.n_nodes, v_bnd.size))
    V[mesh.boundary_nodes] = v_bnd[None, :]
    V, _ = op.newton(V, mu, tol=tol_newton)
    return PceExpansion(basis=inputs.basis, coeffs=V @ inputs.projector)


def field_from_network(x: np.ndarray, meta: BenchmarkMeta) -> dict[int, np.ndarray]:
    """Coefficient blocks of every exported or probed node, keyed by global node."""
    P = meta.inputs.n_terms
    out, offset = {}, 0
    for sub in meta.decomp.subdomains:
        for g in meta.out_nodes[sub.id]:
            out[int(g)] = x[offset : offset + P]
            offset += P
    return out


def field_from_states(meta: BenchmarkMeta) -> PceExpansion:
    """Whole-mesh PCE assembled from each subdomain's latest quadrature solutions.

    Every node takes its value from the subdomain that owns it; call after a
    solve so the propagator states hold the converged realizations.
    """
    mesh = meta.decomp.mesh
    coeffs = np.zeros((mesh.n_nodes, meta.inputs.n_terms))
    for sub in meta.decomp.subdomains:
        prop = meta.propagators[sub.id]
        if prop.state is None:
            raise RuntimeError(f"subdomain {sub.id} has not been evaluated yet")
        glob = sub.global_nodes
        mine = meta.decomp.owner[glob] == sub.id
        coeffs[glob[mine]] = prop.state[mine] @ meta.inputs.projector
    return PceExpansion(basis=meta.inputs.basis, coeffs=coeffs)


def field_to_csv(mesh: Mesh, values: np.ndarray) -> str:
    X, Y = mesh.coordinates()
    lines = ["x,y,value"]
    lines += [f"{x!r},{y!r},{v!r}" for x, y, v in zip(X.tolist(), Y.tolist(), np.asarray(values).tolist())]
    return "\n".join(lines) + "\n"
