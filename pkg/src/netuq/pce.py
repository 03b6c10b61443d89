"""Hermite polynomial-chaos machinery.

Probabilists' Hermite polynomials over a standard-normal germ, total-degree
multi-index sets, tensor Gauss-Hermite quadrature and non-intrusive spectral
projection (NISP).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal

MultiIndex = tuple[int, ...]


@dataclass(frozen=True)
class MultiIndexSet:
    """Total-degree multi-index set in graded order, constant term first.

    Within one total degree the indices are sorted with the first entry
    descending, e.g. ``(2,0), (1,1), (0,2)``.
    """

    dim: int
    order: int
    indices: tuple[MultiIndex, ...] = field(repr=False)

    def __len__(self) -> int:
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def position(self, mi: MultiIndex) -> int:
        return self._lookup[tuple(mi)]

    @cached_property
    def _lookup(self) -> dict[MultiIndex, int]:
        return {mi: k for k, mi in enumerate(self.indices)}

    @cached_property
    def norms_sq(self) -> np.ndarray:
        return np.array([basis_norm_sq(mi) for mi in self.indices])

    @cached_property
    def labels(self) -> list[str]:
        return [index_label(mi) for mi in self.indices]

    def vandermonde(self, points: np.ndarray) -> np.ndarray:
        """Basis values at ``points`` (shape ``[n_points, dim]``) -> ``[n_points, n_terms]``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise ValueError(
                f"points have dimension {points.shape[1]}, basis has {self.dim}"
            )
        # table[k, d, q] = He_k(points[q, d])
        table = hermite_table(self.order, points.T)
        idx = np.array(self.indices, dtype=int).reshape(len(self), self.dim)
        out = np.ones((points.shape[0], len(self)))
        for d in range(self.dim):
            out *= table[idx[:, d], d, :].T
        return out


def total_degree_set(d: int, p: int) -> MultiIndexSet:
    if d < 1 or p < 0:
        raise ValueError(f"need d >= 1 and p >= 0, got d={d}, p={p}")
    indices = [
        mi for mi in itertools.product(range(p + 1), repeat=d) if sum(mi) <= p
    ]
    indices.sort(key=lambda mi: (sum(mi), tuple(-k for k in mi)))
    return MultiIndexSet(dim=d, order=p, indices=tuple(indices))


def index_label(mi: MultiIndex) -> str:
    return "(" + ",".join(str(k) for k in mi) + ")"


def parse_label(label: str) -> MultiIndex:
    return tuple(int(k) for k in label.strip().strip("()").split(","))


def hermite_eval(degree: int, x):
    """Probabilists' Hermite polynomial He_degree evaluated at ``x``."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if degree == 0:
        return prev if prev.ndim else float(prev)
    for k in range(1, degree):
        prev, cur = cur, x * cur - k * prev
    return cur if cur.ndim else float(cur)


def hermite_table(max_degree: int, x: np.ndarray) -> np.ndarray:
    """Stack of He_0..He_max_degree at ``x``; leading axis is the degree."""
    x = np.asarray(x, dtype=float)
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x
    for k in range(1, max_degree):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


def basis_eval(mi: MultiIndex, xi) -> float:
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.size != len(mi):
        raise ValueError(f"germ point has {xi.size} entries, multi-index has {len(mi)}")
    value = 1.0
    for k, x in zip(mi, xi):
        value *= hermite_eval(int(k), float(x))
    return value


def basis_norm_sq(mi: MultiIndex) -> float:
    """E[Psi_mi^2] under the standard normal measure: the product of factorials."""
    return float(math.prod(math.factorial(int(k)) for k in mi))


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray  # [n_points, dim]
    weights: np.ndarray  # [n_points], sums to one

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def __len__(self) -> int:
        return self.weights.size


def gauss_hermite_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Golub-Welsch nodes and probability weights for the standard normal."""
    if n < 1:
        raise ValueError("need at least one point")
    if n == 1:
        return np.zeros(1), np.ones(1)
    off = np.sqrt(np.arange(1, n, dtype=float))
    nodes, vecs = eigh_tridiagonal(np.zeros(n), off)
    weights = vecs[0, :] ** 2
    # the symmetric rule has exactly antisymmetric nodes; clean the round-off
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights / weights.sum()


def gauss_hermite_rule(points_per_dim: int, d: int) -> QuadratureRule:
    """Full tensor Gauss-Hermite rule; the last germ coordinate varies fastest."""
    x, w = gauss_hermite_1d(points_per_dim)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return QuadratureRule(nodes=nodes, weights=weights)


@dataclass(frozen=True)
class PceExpansion:
    basis: MultiIndexSet
    coeffs: np.ndarray  # [n_components, n_terms]

    def __post_init__(self):
        coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if coeffs.shape[1] != len(self.basis):
            raise ValueError(
                f"{coeffs.shape[1]} coefficient columns for a basis of {len(self.basis)} terms"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_components(self) -> int:
        return self.coeffs.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["component"] + self.basis.labels)
        for i, row in enumerate(self.coeffs):
            writer.writerow([i] + [repr(float(c)) for c in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> PceExpansion:
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        if header[0] != "component":
            raise ValueError("expected a 'component' header column")
        indices = tuple(parse_label(lab) for lab in header[1:])
        dim = len(indices[0])
        order = max(sum(mi) for mi in indices)
        basis = total_degree_set(dim, order)
        if basis.indices != indices:
            raise ValueError("CSV labels are not a total-degree set in canonical order")
        coeffs = np.array([[float(c) for c in row[1:]] for row in body])
        return cls(basis=basis, coeffs=coeffs.reshape(len(body), len(basis)))


def nisp_projection_matrix(basis: MultiIndexSet, rule: QuadratureRule) -> np.ndarray:
    """Matrix ``P`` with ``coeffs = evaluations.T @ P`` (shape ``[n_points, n_terms]``)."""
    if rule.dim != basis.dim:
        raise ValueError(f"rule dimension {rule.dim} != basis dimension {basis.dim}")
    psi = basis.vandermonde(rule.nodes)
    return rule.weights[:, None] * psi / basis.norms_sq[None, :]


def nisp_project(evaluations, basis: MultiIndexSet, rule: QuadratureRule) -> PceExpansion:
    evaluations = np.asarray(evaluations, dtype=float)
    if evaluations.ndim == 1:
        evaluations = evaluations[:, None]
    if evaluations.shape[0] != len(rule):
        raise ValueError(
            f"{evaluations.shape[0]} evaluation rows for a rule with {len(rule)} nodes"
        )
    proj = nisp_projection_matrix(basis, rule)
    return PceExpansion(basis=basis, coeffs=evaluations.T @ proj)


def eval_expansion(e: PceExpansion, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.size != e.basis.dim:
        raise ValueError(f"germ point has {xi.size} entries, basis has dimension {e.basis.dim}")
    return e.coeffs @ e.basis.vandermonde(xi[None, :])[0]


def moments(e: PceExpansion) -> tuple[np.ndarray, np.ndarray]:
    mean = e.coeffs[:, 0].copy()
    var = (e.coeffs[:, 1:] ** 2) @ e.basis.norms_sq[1:]
    return mean, var
