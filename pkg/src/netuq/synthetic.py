"""Small analytic networks with known fixed points and Lipschitz constants."""

from __future__ import annotations

import numpy as np

from .network import Component, Network, assemble
from .pce import MultiIndexSet, QuadratureRule, gauss_hermite_rule, nisp_projection_matrix


def scalar_cycle(a: float = 0.5, c: float = 1.0, n: int = 2) -> Network:
    """``n`` scalar components on a ring, ``x_i <- a * x_{i-1} + c``."""

    def prop(endo, exo):
        return a * endo + c

    comps = [Component(i + 1, 1, 0, 1, prop) for i in range(n)]
    edges = [(i, (i - 1) % n) for i in range(n)]
    return assemble(comps, edges, qoi_slots=range(n))


def affine_network(M: np.ndarray, b: np.ndarray) -> Network:
    """One scalar component per row of ``x <- M x + b``; ``M`` must have a zero diagonal.

    Component ``i`` reads every output ``j`` with ``M[i, j] != 0`` through its
    own endogenous slot.
    """
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float)
    n = M.shape[0]
    if np.any(np.diag(M) != 0):
        raise ValueError("self-coupling is not allowed")
    comps, edges = [], []
    slot = 0
    for i in range(n):
        src = np.flatnonzero(M[i])
        weights = M[i, src]

        def prop(endo, exo, w=weights, bi=b[i]):
            return np.array([w @ endo + bi])

        comps.append(Component(i + 1, src.size, 0, 1, prop))
        edges.extend((slot + k, int(j)) for k, j in enumerate(src))
        slot += src.size
    return assemble(comps, edges, qoi_slots=range(n))


def affine_fixed_point(M, b) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return np.linalg.solve(np.eye(M.shape[0]) - M, np.asarray(b, dtype=float))


def contraction_with_norm(dim: int, norm: float, rng: np.random.Generator) -> np.ndarray:
    """Random matrix with prescribed spectral norm."""
    U, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    V, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    s = np.linspace(norm, 0.3 * norm, dim)
    return U @ np.diag(s) @ V.T


class LinearPceComponent:
    """NISP propagator of the random map ``x = a * y + b * u``.

    ``y`` arrives as coefficients over ``basis``; ``u`` over ``exo_basis``.
    The result is projected onto ``basis`` with ``rule``.
    """

    def __init__(
        self, a: float, b: float, basis: MultiIndexSet, exo_basis: MultiIndexSet, rule: QuadratureRule
    ):
        self.a, self.b = a, b
        self.psi = basis.vandermonde(rule.nodes)
        self.psi_exo = exo_basis.vandermonde(rule.nodes)
        self.proj = nisp_projection_matrix(basis, rule)

    def __call__(self, endo, exo):
        y = self.psi @ np.asarray(endo, dtype=float)
        u = self.psi_exo @ np.asarray(exo, dtype=float)
        return (self.a * y + self.b * u) @ self.proj


def linear_pce_ring(
    a: np.ndarray, b: np.ndarray, basis: MultiIndexSet, exo_basis: MultiIndexSet, points_per_dim: int = 4
) -> Network:
    """Ring of scalar random components, component ``i`` fed by ``i - 1``."""
    rule = gauss_hermite_rule(points_per_dim, basis.dim)
    n, P, Pu = len(a), len(basis), len(exo_basis)
    comps = [
        Component(i + 1, P, Pu, P, LinearPceComponent(a[i], b[i], basis, exo_basis, rule))
        for i in range(n)
    ]
    edges = [(i * P + t, ((i - 1) % n) * P + t) for i in range(n) for t in range(P)]
    return assemble(comps, edges)
