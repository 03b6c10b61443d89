"""Error norms, coefficient truncation and fixed-point error bounds.

All norms here are the second-moment norm of a PCE-valued vector,
``sqrt(sum_ij c_ij**2 * ||Psi_j||**2)``, unless a plain Euclidean norm is
requested by passing ``basis=None``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Callable, Iterator

import numpy as np

from .pce import MultiIndexSet

VectorMap = Callable[[np.ndarray], np.ndarray]


def weighted_norm(coeffs, basis: MultiIndexSet | None) -> float:
    """Second-moment norm of stacked PCE coefficients.

    ``coeffs`` is either ``[n_components, n_terms]`` or its row-major
    flattening. With ``basis=None`` this is the Euclidean norm.
    """
    c = np.asarray(coeffs, dtype=float)
    if basis is None:
        return float(np.linalg.norm(c.ravel()))
    c = c.reshape(-1, len(basis))
    return float(np.sqrt(np.sum(c * c * basis.norms_sq[None, :])))


@dataclass(frozen=True)
class CoefficientProjector:
    """Orthogonal projection from an order-``p_high`` to an order-``p_low`` basis."""

    full_basis: MultiIndexSet
    sub_basis: MultiIndexSet

    def __post_init__(self):
        if self.full_basis.dim != self.sub_basis.dim:
            raise ValueError("bases have different germ dimensions")
        missing = [mi for mi in self.sub_basis if mi not in set(self.full_basis)]
        if missing:
            raise ValueError(f"sub-basis terms {missing} are not in the full basis")

    @cached_property
    def slots(self) -> np.ndarray:
        return np.array([self.full_basis.position(mi) for mi in self.sub_basis], dtype=int)


def project(proj: CoefficientProjector, full) -> np.ndarray:
    """Keep sub-basis coefficients; the input layout (flat or 2-D) is preserved."""
    full = np.asarray(full, dtype=float)
    out = full.reshape(-1, len(proj.full_basis))[:, proj.slots]
    return out.ravel() if full.ndim == 1 else out


def embed(proj: CoefficientProjector, sub) -> np.ndarray:
    """Zero-pad sub-basis coefficients into the full basis."""
    sub = np.asarray(sub, dtype=float)
    rows = sub.reshape(-1, len(proj.sub_basis))
    out = np.zeros((rows.shape[0], len(proj.full_basis)))
    out[:, proj.slots] = rows
    return out.ravel() if sub.ndim == 1 else out


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    n_pairs: int

    @property
    def is_contraction(self) -> bool:
        return self.value < 1.0


def gaussian_pairs(dim: int, scale: float = 1.0) -> Callable[[np.random.Generator], tuple]:
    """Sampler drawing two independent Gaussian vectors."""

    def draw(rng):
        return scale * rng.standard_normal(dim), scale * rng.standard_normal(dim)

    return draw


def estimate_lipschitz(
    fmap: VectorMap,
    sampler: Callable[[np.random.Generator], tuple],
    n_pairs: int,
    rng_seed: int = 0,
    basis: MultiIndexSet | None = None,
) -> LipschitzEstimate:
    """Largest observed ratio ``||f(a) - f(b)|| / ||a - b||`` over sampled pairs.

    The result is a lower bound on the true constant. Coincident pairs are
    skipped and do not count toward ``n_pairs``.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(rng_seed)
    best, used = 0.0, 0
    for _ in range(n_pairs):
        a, b = (np.asarray(v, dtype=float) for v in sampler(rng))
        gap = weighted_norm(a - b, basis)
        if gap == 0.0:
            continue
        best = max(best, weighted_norm(fmap(a) - fmap(b), basis) / gap)
        used += 1
    return LipschitzEstimate(value=best, n_pairs=used)


def _contraction_factor(lipschitz: float) -> float:
    if not 0.0 <= lipschitz < 1.0:
        raise ValueError(f"bound needs a Lipschitz constant in [0, 1), got {lipschitz}")
    return 1.0 / (1.0 - lipschitz)


@dataclass(frozen=True)
class BoundReport:
    bound_type: str
    lipschitz: float
    defect_norm: float
    bound: float
    true_error: float | None = None

    def to_json(self) -> str:
        doc = asdict(self)
        if doc["true_error"] is None:
            del doc["true_error"]
        return json.dumps(doc)


def a_priori_report(xbar_star, step: VectorMap, lipschitz: float, basis=None) -> BoundReport:
    """Error of the fixed point of ``step`` estimated from the truth solution."""
    k = _contraction_factor(lipschitz)
    xbar_star = np.asarray(xbar_star, dtype=float)
    defect = weighted_norm(xbar_star - step(xbar_star), basis)
    return BoundReport("a_priori", lipschitz, defect, k * defect)


def a_posteriori_report(x_star, truth_step: VectorMap, lipschitz: float, basis=None) -> BoundReport:
    """Error of a computed solution estimated with one truth-operator step."""
    k = _contraction_factor(lipschitz)
    x_star = np.asarray(x_star, dtype=float)
    defect = weighted_norm(x_star - truth_step(x_star), basis)
    return BoundReport("a_posteriori", lipschitz, defect, k * defect)


def a_priori_bound(xbar_star, step: VectorMap, lipschitz: float, basis=None) -> float:
    return a_priori_report(xbar_star, step, lipschitz, basis).bound


def a_posteriori_bound(x_star, truth_step: VectorMap, lipschitz: float, basis=None) -> float:
    return a_posteriori_report(x_star, truth_step, lipschitz, basis).bound


def in_plane_error(x_star, xbar_star, proj: CoefficientProjector) -> float:
    """Norm of ``P xbar_star - x_star``; ``x_star`` lives in the sub-basis."""
    return weighted_norm(project(proj, xbar_star) - np.asarray(x_star, float), proj.sub_basis)


def out_of_plane_error(xbar_star, proj: CoefficientProjector) -> float:
    xbar_star = np.asarray(xbar_star, dtype=float)
    return weighted_norm(xbar_star - embed(proj, project(proj, xbar_star)), proj.full_basis)


def in_plane_apriori(xbar_star, step: VectorMap, proj: CoefficientProjector, lipschitz: float) -> float:
    """``||P xbar - G(P xbar)|| / (1 - L_G)`` with ``G`` acting on sub-basis vectors."""
    k = _contraction_factor(lipschitz)
    pxbar = project(proj, xbar_star)
    return k * weighted_norm(pxbar - step(pxbar), proj.sub_basis)


def in_plane_aposteriori(
    x_star, truth_step: VectorMap, proj: CoefficientProjector, lipschitz: float
) -> float:
    """``||x_star - P Gbar(x_star)|| / (1 - L_PGbar)`` with ``x_star`` zero-padded for ``Gbar``."""
    k = _contraction_factor(lipschitz)
    x_star = np.asarray(x_star, dtype=float)
    defect = x_star - project(proj, truth_step(embed(proj, x_star)))
    return k * weighted_norm(defect, proj.sub_basis)


def orthogonal_complement_samples(
    proj: CoefficientProjector, n_rows: int, n_samples: int, rng_seed: int = 0
) -> Iterator[np.ndarray]:
    """Random flat vectors ``v`` in the full basis with ``project(v) == 0``."""
    rng = np.random.default_rng(rng_seed)
    for _ in range(n_samples):
        v = rng.standard_normal((n_rows, len(proj.full_basis)))
        v[:, proj.slots] = 0.0
        yield v.ravel()
