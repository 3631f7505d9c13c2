"""Optimization-based input update (Algorithm step S3).

Each time step's new input minimizes a one-step cost: the square of a
gain-weighted combination of the predicted current error and the last m-1
recorded errors, plus a movement penalty on the input increment. Solving the
stationarity condition under the secant relation dy = sum theta du gives a
causal in-order update where the correction at time t feeds on the
same-iteration increments already computed for earlier times.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidParams
from .estimator import EstimateTable


@dataclass(frozen=True)
class LearningParams:
    """Learning gains and weighting factors.

    ``gains`` is (gamma_1, ..., gamma_m); the memory order m is its length.
    ``selection_ok`` evaluates the gain-dominance half of the parameter
    selection condition, gamma_1 + gamma_2 > sum_{i>=3} gamma_i, with the
    first-order convention gamma_2 = ... = 0 when m = 1.
    """

    lam: float
    gains: tuple
    epsilon: float = 0.01
    mu1: float = 1.0
    mu2: float = 0.001
    horizon: int = 50

    def __post_init__(self):
        object.__setattr__(self, "gains", tuple(float(g) for g in np.atleast_1d(self.gains)))
        if self.lam <= 0.0:
            raise InvalidParams("params.lambda must be > 0")
        if len(self.gains) < 1:
            raise InvalidParams("params.gamma must have order m >= 1")
        if any(g <= 0.0 for g in self.gains):
            raise InvalidParams("params.gamma entries must all be > 0")
        if self.epsilon <= 0.0:
            raise InvalidParams("params.epsilon must be > 0")
        if self.mu1 <= 0.0:
            raise InvalidParams("params.mu1 must be > 0")
        if self.mu2 <= 0.0:
            raise InvalidParams("params.mu2 must be > 0")
        if self.horizon < 1:
            raise InvalidParams("horizon must be >= 1")

    @property
    def order(self) -> int:
        return len(self.gains)

    def gamma(self, i: int) -> float:
        """gamma_i with the convention gamma_i = 0 beyond the order."""
        return self.gains[i - 1] if 1 <= i <= self.order else 0.0

    @property
    def selection_ok(self) -> bool:
        return self.gamma(1) + self.gamma(2) > sum(self.gamma(i) for i in range(3, self.order + 1))


class ErrorHistory:
    """Ring of the most recent error trajectories.

    ``lookback(j)`` returns the error trajectory recorded j pushes ago;
    anything older than what was pushed reads as all zeros, which realizes
    the convention that errors of negative iteration indexes vanish. The
    ring stores max(1, m-1) trajectories: even the first-order law feeds on
    the latest error.
    """

    def __init__(self, horizon: int, order: int):
        self.horizon = horizon
        self.depth = max(1, order - 1)
        self._ring: deque = deque(maxlen=self.depth)

    def push(self, e: np.ndarray):
        e = np.asarray(e, dtype=float)
        if e.shape != (self.horizon,):
            raise DimensionMismatch(f"error trajectory must have length {self.horizon}")
        self._ring.appendleft(e)

    def lookback(self, j: int) -> np.ndarray:
        if j < 1:
            raise InvalidParams("lookback index must be >= 1")
        if j <= len(self._ring):
            return self._ring[j - 1]
        return np.zeros(self.horizon)


def update_input(u_prev: np.ndarray, est: EstimateTable, hist: ErrorHistory,
                 p: LearningParams, clamp: float | None = None) -> np.ndarray:
    """One input update (new trajectory from the previous one).

    Computed in increasing t; the inner correction sums the estimate row
    against the same-iteration increments du(0..t-1) already produced, so a
    single forward pass suffices. ``clamp`` optionally saturates each new
    input at +-clamp (off by default; the saturated value is what later time
    steps see as the realized increment).
    """
    u_prev = np.asarray(u_prev, dtype=float)
    T = est.horizon
    if u_prev.shape != (T,):
        raise DimensionMismatch(f"u_prev length {u_prev.shape} != horizon {T}")
    if p.horizon != T:
        raise DimensionMismatch(f"params horizon {p.horizon} != table horizon {T}")
    diag = est.diagonal()
    if np.any(diag < est.epsilon):
        raise InvalidParams("estimate diagonal fell below the reset floor")
    if clamp is not None and clamp <= 0.0:
        raise InvalidParams("clamp must be > 0 when set")

    g1 = p.gamma(1)
    bracket = g1 * hist.lookback(1)
    for i in range(2, p.order + 1):
        bracket = bracket + p.gamma(i) * hist.lookback(i - 1)

    th = est.values
    u_new = np.empty(T)
    du = np.empty(T)
    for t in range(T):
        dtt = diag[t]
        denom = p.lam + g1 * g1 * dtt * dtt
        inner = th[t, :t] @ du[:t]
        val = u_prev[t] - (g1 * g1 * dtt / denom) * inner + (g1 * dtt / denom) * bracket[t]
        if clamp is not None:
            val = min(max(val, -clamp), clamp)
        du[t] = val - u_prev[t]
        u_new[t] = val
    return u_new


def j_index(du_t: float, predicted_e: float, past_errors, p: LearningParams) -> float:
    """Per-step control cost at input increment du_t.

    ``past_errors`` is ordered (e_{k-1}, e_{k-2}, ...) and weighted by
    gamma_2, gamma_3, ...; the predicted current error is weighted by
    gamma_1.
    """
    past_errors = np.asarray(past_errors, dtype=float)
    if past_errors.shape != (p.order - 1,):
        raise DimensionMismatch(f"past_errors must have length m-1 = {p.order - 1}")
    acc = p.gamma(1) * predicted_e
    for i in range(2, p.order + 1):
        acc += p.gamma(i) * past_errors[i - 2]
    return float(acc * acc + p.lam * du_t * du_t)
