"""Anderson acceleration of a fixed-point map ``x <- G(x)``."""

from __future__ import annotations

from collections import deque

import numpy as np

_RANK_TOL = 1e-12
_RIDGE = 1e-10


class AndersonState:
    """Histories of candidate iterates and their residuals, newest first.

    Parameters
    ----------
    memory : int
        Number of previous residuals mixed with the newest one. ``memory=0``
        reproduces the plain fixed-point iteration.
    """

    def __init__(self, memory: int):
        if memory < 0:
            raise ValueError("memory must be non-negative")
        self.memory = memory
        self.xhat_history: deque[np.ndarray] = deque(maxlen=memory + 1)
        self.f_history: deque[np.ndarray] = deque(maxlen=memory + 1)

    def __len__(self) -> int:
        return len(self.f_history)


def reset(state: AndersonState) -> AndersonState:
    state.xhat_history.clear()
    state.f_history.clear()
    return state


def mixing_weights(f_history) -> np.ndarray:
    """Solve min ||sum_i alpha_i f_i|| subject to sum_i alpha_i = 1.

    ``f_history[0]`` is the newest residual. The constraint is eliminated by
    writing ``alpha_0 = 1 - sum(gamma)`` and ``alpha_i = gamma_i``.
    """
    f0 = f_history[0]
    if len(f_history) == 1:
        return np.ones(1)
    D = np.stack([f - f0 for f in list(f_history)[1:]], axis=1)
    full_rank = False
    if D.shape[1] <= D.shape[0]:
        Q, R = np.linalg.qr(D)
        diag = np.abs(np.diag(R))
        full_rank = diag.min() > _RANK_TOL * max(diag.max(), np.finfo(float).tiny)
    if full_rank:
        gamma = np.linalg.solve(R, -(Q.T @ f0))
    else:
        # more history columns than unknowns is always rank deficient
        fro2 = float(np.sum(D * D))
        if fro2 == 0.0:
            gamma = np.zeros(D.shape[1])
        else:
            lam = _RIDGE * fro2
            gamma = np.linalg.solve(D.T @ D + lam * np.eye(D.shape[1]), -(D.T @ f0))
    return np.concatenate([[1.0 - gamma.sum()], gamma])


def aa_update(state: AndersonState, x_k, xhat_next) -> tuple[np.ndarray, np.ndarray]:
    """Record ``G(x_k)`` and return the accelerated iterate with its weights."""
    x_k = np.asarray(x_k, dtype=float)
    xhat_next = np.asarray(xhat_next, dtype=float)
    if state.f_history and state.f_history[0].shape != xhat_next.shape:
        raise ValueError("iterate dimension changed between updates")
    state.xhat_history.appendleft(xhat_next)
    state.f_history.appendleft(xhat_next - x_k)
    if state.memory == 0:
        return xhat_next, np.ones(1)
    alpha = mixing_weights(state.f_history)
    x_next = alpha[0] * state.xhat_history[0]
    for a, xh in zip(alpha[1:], list(state.xhat_history)[1:]):
        x_next = x_next + a * xh
    return x_next, alpha
