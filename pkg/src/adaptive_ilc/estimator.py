"""Adaptive estimation of the secant-linearization parameters.

The controller never sees the true secant matrices; it works with a
lower-triangular table of estimates, one row per time step, updated from the
measured input/output increments of the two latest completed trials. The
update is the closed-form minimizer of a regularized one-step regression
index (a data-fit term plus two Tikhonov pulls, one toward the previous
table and one toward zero); a reset rule restores the initial diagonal entry
whenever an update would push it below the floor ``epsilon``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidParams


@dataclass(frozen=True)
class EstimateTable:
    """Lower-triangular estimate table at one iteration.

    ``values[t, i]`` holds the estimate of the gain from du(i) to dy(t+1)
    for i <= t; entries above the diagonal are zero. ``initial`` is the
    frozen start-of-run table that diagonal resets restore from.
    """

    values: np.ndarray
    initial: np.ndarray
    epsilon: float
    iteration: int = 1
    resets_applied: int = 0

    @classmethod
    def filled(cls, horizon: int, fill: float, epsilon: float) -> "EstimateTable":
        """Constant-fill initial table (the S1 choice)."""
        if epsilon <= 0.0:
            raise InvalidParams("epsilon must be > 0")
        if fill < epsilon:
            raise InvalidParams(f"initial estimate fill {fill} violates the floor {epsilon}")
        values = np.tril(np.full((horizon, horizon), float(fill)))
        return cls(values=values, initial=values.copy(), epsilon=float(epsilon))

    @property
    def horizon(self) -> int:
        return self.values.shape[0]

    def row(self, t: int) -> np.ndarray:
        return self.values[t, : t + 1]

    def diagonal(self) -> np.ndarray:
        return np.diag(self.values)

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)


def update_estimates(prev: EstimateTable, du: np.ndarray, dy: np.ndarray,
                     mu1: float, mu2: float) -> EstimateTable:
    """One estimation update from trial increments (du, dy).

    ``du[i]`` is the input increment at time i and ``dy[t]`` the output
    increment at time t+1 between the two most recent completed trials.
    Row t of the new table is

        new_t = (mu1/(mu1+mu2)) prev_t
                + du * [dy(t+1) - (mu1/(mu1+mu2)) prev_t . du]
                      / (mu1 + mu2 + sum_{j<=t} du(j)^2)

    followed by the diagonal reset: any new_t(t) < epsilon is replaced by
    the frozen initial value (only the diagonal entry; off-diagonal entries
    keep their updated values).
    """
    if mu1 <= 0.0:
        raise InvalidParams("mu1 must be > 0")
    if mu2 <= 0.0:
        raise InvalidParams("mu2 must be > 0 (the mu2 = 0 legacy law is rejected)")
    T = prev.horizon
    du = np.asarray(du, dtype=float)
    dy = np.asarray(dy, dtype=float)
    if du.shape != (T,) or dy.shape != (T,):
        raise DimensionMismatch(
            f"increments must have length {T}, got {du.shape} and {dy.shape}"
        )
    c = mu1 / (mu1 + mu2)
    denom = mu1 + mu2 + np.cumsum(du * du)      # (T,), row-t normalizer
    s = prev.values @ du                        # row-t inner products (zeros above diag)
    coef = (dy - c * s) / denom
    new = np.tril(c * prev.values + np.outer(coef, du))

    diag = np.diagonal(new).copy()
    reset_idx = np.flatnonzero(diag < prev.epsilon)
    if reset_idx.size:
        new[reset_idx, reset_idx] = prev.initial[reset_idx, reset_idx]
    return EstimateTable(
        values=new,
        initial=prev.initial,
        epsilon=prev.epsilon,
        iteration=prev.iteration + 1,
        resets_applied=int(reset_idx.size),
    )


def q_matrix(du_vec: np.ndarray, mu1: float, mu2: float) -> np.ndarray:
    """Q = I - du du^T / (mu1 + mu2 + ||du||^2); symmetric, spectral norm <= 1."""
    du_vec = np.asarray(du_vec, dtype=float)
    if du_vec.ndim != 1:
        raise DimensionMismatch("du_vec must be one-dimensional")
    d = du_vec.size
    return np.eye(d) - np.outer(du_vec, du_vec) / (mu1 + mu2 + du_vec @ du_vec)


def apriori_bound(max_init_norm: float, mu1: float, mu2: float, horizon: int,
                  beta_theta: float) -> float:
    """Iteration-independent bound on every estimate row norm.

    Contraction of the update by mu1/(mu1+mu2) plus the bounded data term
    gives max_init_norm + ((mu1+mu2)/mu2) sqrt(T) beta_theta; no learning
    gain enters.
    """
    if beta_theta < 0.0:
        raise InvalidParams("beta_theta must be >= 0")
    if mu1 <= 0.0 or mu2 <= 0.0:
        raise InvalidParams("mu1 and mu2 must be > 0")
    return float(max_init_norm + (mu1 + mu2) / mu2 * np.sqrt(horizon) * beta_theta)


def h_index(theta_vec, theta_prev_vec, du, dy_scalar, mu1, mu2) -> float:
    """Estimation index: data misfit plus the two Tikhonov penalties."""
    theta_vec = np.asarray(theta_vec, dtype=float)
    theta_prev_vec = np.asarray(theta_prev_vec, dtype=float)
    du = np.asarray(du, dtype=float)
    if not (theta_vec.shape == theta_prev_vec.shape == du.shape):
        raise DimensionMismatch("h_index arguments must share one shape")
    misfit = dy_scalar - du @ theta_vec
    drift = theta_vec - theta_prev_vec
    return float(misfit * misfit + mu1 * (drift @ drift) + mu2 * (theta_vec @ theta_vec))


def export_estimates_csv(table: EstimateTable, path):
    """Write the table as rows (t, i, theta_hat), one line per stored entry."""
    lines = ["t,i,theta_hat"]
    for t in range(table.horizon):
        for i in range(t + 1):
            lines.append(f"{t},{i},{table.values[t, i]:.12e}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
