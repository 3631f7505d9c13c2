"""Finite-horizon nonlinear time-varying plants and nonrepetitive uncertainty.

The plant recursion is

    y(t+1) = f(y(t), ..., y(t-l), u(t), ..., u(t-n), t) + w(t),   t = 0..T-1

with y(0) = y0 + delta, off-horizon values (negative indices) read as zero,
and w/delta the iteration-varying disturbance and initial shift (both zero in
nominal mode).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import ConfigError, DimensionMismatch, NonFiniteOutput


def benchmark_step(y_t, y_tm1, u_t, u_tm1, t):
    """One step of the benchmark plant; broadcasts over array arguments."""
    ratio = (t + 1.0) / (t + 2.0)
    return np.sin(y_t) + np.cos(y_tm1) + ratio * u_t + np.cos(y_t) * np.sin(u_tm1)


@dataclass(frozen=True)
class PlantModel:
    """A plant as (orders, horizon, initial output, step map).

    ``dynamics(y_hist, u_hist, t)`` receives lag stacks with axis 0 the lag:
    ``y_hist[j] = y(t-j)`` for j = 0..l and ``u_hist[j] = u(t-j)`` for
    j = 0..n, off-horizon entries already substituted by zero. ``vectorized``
    plants must broadcast over trailing batch axes of the stacks (and over an
    array ``t``); ``complex_step`` declares that ``dynamics`` is analytic and
    safe to evaluate on complex inputs, which the linearization oracle uses
    for near-exact partial derivatives.
    """

    name: str
    output_order: int
    input_order: int
    horizon: int
    y0: float
    dynamics: Callable
    vectorized: bool = False
    complex_step: bool = False

    def __post_init__(self):
        if self.output_order < 0:
            raise ConfigError("output_order must be >= 0")
        if self.input_order < 0:
            raise ConfigError("input_order must be >= 0")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")


@dataclass(frozen=True)
class TrialRecord:
    """One iteration's trajectories: u has length T, y length T+1.

    ``e[t]`` stores the tracking error at time t+1, i.e.
    e(t+1) = y_d(t+1) - y(t+1); ``w`` and ``delta`` are the uncertainty
    realization applied to this trial (zeros in nominal mode).
    """

    iteration: int
    u: np.ndarray
    y: np.ndarray
    e: np.ndarray
    w: np.ndarray
    delta: float


@dataclass(frozen=True)
class UncertaintyModel:
    """Bounded nonrepetitive disturbance/initial-shift generator.

    Modes: ``none`` (zeros), ``bounded-random`` (iid uniform on [-beta, beta]
    per iteration and time step), ``decaying`` (the same draws scaled by
    rho**k so consecutive-iteration differences vanish as k grows). Draws are
    deterministic functions of (seed, k), so any trial can be replayed
    without replaying the whole run.
    """

    mode: str = "none"
    beta_w: float = 0.0
    beta_delta: float = 0.0
    rho: float = 0.99
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "bounded-random", "decaying"):
            raise ConfigError(f"uncertainty.mode: unknown mode '{self.mode}'")
        if self.beta_w < 0.0:
            raise ConfigError("uncertainty.beta_w must be >= 0")
        if self.beta_delta < 0.0:
            raise ConfigError("uncertainty.beta_delta must be >= 0")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError("uncertainty.rho must be in [0, 1)")


def sample_uncertainty(model: UncertaintyModel, k: int, horizon: int):
    """Return (delta_k, w_k) for iteration k; deterministic given (seed, k)."""
    if k < 0:
        raise ConfigError("iteration index must be >= 0")
    if model.mode == "none":
        return 0.0, np.zeros(horizon)
    rng = np.random.default_rng([model.seed, k])
    delta = rng.uniform(-model.beta_delta, model.beta_delta)
    w = rng.uniform(-model.beta_w, model.beta_w, horizon)
    if model.mode == "decaying":
        scale = model.rho ** k
        delta *= scale
        w = w * scale
    return delta, w


def _lag_stack(values, t, depth, zero):
    """Stack (value(t), ..., value(t-depth)) substituting zeros off-horizon."""
    cols = []
    for j in range(depth + 1):
        idx = t - j
        cols.append(values[..., idx] if idx >= 0 else zero)
    return np.stack(cols)


def simulate_trial(plant: PlantModel, u, delta=0.0, w=None, y_d=None, iteration=0) -> TrialRecord:
    """Run one trial of the plant under input u and an uncertainty sample.

    ``y_d`` (length T+1) fills the error trajectory; without it errors are
    returned as zeros. Raises NonFiniteOutput at the first non-finite output,
    tagged with (iteration, t).
    """
    T = plant.horizon
    u = np.asarray(u, dtype=float)
    if u.shape != (T,):
        raise DimensionMismatch(f"input length {u.shape} != horizon {T}")
    if not np.all(np.isfinite(u)):
        raise NonFiniteOutput("input contains non-finite entries", iteration, -1)
    w = np.zeros(T) if w is None else np.asarray(w, dtype=float)
    if w.shape != (T,):
        raise DimensionMismatch(f"disturbance length {w.shape} != horizon {T}")

    y = np.empty(T + 1)
    y[0] = plant.y0 + delta
    for t in range(T):
        y_hist = _lag_stack(y, t, plant.output_order, 0.0)
        u_hist = _lag_stack(u, t, plant.input_order, 0.0)
        y[t + 1] = plant.dynamics(y_hist, u_hist, t) + w[t]
        if not np.isfinite(y[t + 1]):
            raise NonFiniteOutput(
                f"output diverged at iteration {iteration}, t={t + 1}", iteration, t + 1
            )

    if y_d is None:
        e = np.zeros(T)
    else:
        y_d = np.asarray(y_d, dtype=float)
        if y_d.shape != (T + 1,):
            raise DimensionMismatch(f"reference length {y_d.shape} != horizon+1 {T + 1}")
        e = y_d[1:] - y[1:]
    return TrialRecord(iteration, u, y, e, w, float(delta))


def simulate_batch(plant: PlantModel, U, deltas, W):
    """Vectorized recursion over a batch of trials: U (B,T) -> Y (B,T+1).

    Falls back to row-by-row simulation for plants that do not declare
    ``vectorized``. Complex dtypes propagate (used by the oracle's
    complex-step derivatives).
    """
    U = np.asarray(U)
    B, T = U.shape
    if T != plant.horizon:
        raise DimensionMismatch(f"input length {T} != horizon {plant.horizon}")
    deltas = np.asarray(deltas)
    W = np.asarray(W)
    dtype = np.result_type(U.dtype, deltas.dtype, W.dtype, float)

    if not plant.vectorized:
        Y = np.empty((B, T + 1), dtype=dtype)
        zero = np.zeros((), dtype=dtype)
        for b in range(B):
            y = Y[b]
            y[0] = plant.y0 + deltas[b]
            for t in range(T):
                y_hist = _lag_stack(y[: t + 1], t, plant.output_order, zero)
                u_hist = _lag_stack(U[b], t, plant.input_order, zero)
                y[t + 1] = plant.dynamics(y_hist, u_hist, t) + W[b, t]
        if not np.all(np.isfinite(Y.real)):
            bad = np.argwhere(~np.isfinite(Y.real))
            raise NonFiniteOutput(
                f"batched output diverged (row {bad[0][0]}, t={bad[0][1]})", -1, int(bad[0][1])
            )
        return Y

    Y = np.empty((B, T + 1), dtype=dtype)
    Y[:, 0] = plant.y0 + deltas
    zero = np.zeros(B, dtype=dtype)
    for t in range(T):
        y_hist = _lag_stack(Y[:, : t + 1], t, plant.output_order, zero)
        u_hist = _lag_stack(U, t, plant.input_order, zero)
        Y[:, t + 1] = plant.dynamics(y_hist, u_hist, t) + W[:, t]
    if not np.all(np.isfinite(Y.real)):
        bad = np.argwhere(~np.isfinite(Y.real))
        raise NonFiniteOutput(
            f"batched output diverged (row {bad[0][0]}, t={bad[0][1]})", -1, int(bad[0][1])
        )
    return Y


def estimate_partial_bounds(plant: PlantModel, low=-10.0, high=10.0,
                            samples=2000, seed=0) -> dict:
    """Sampled finite-difference bounds on the partials of the step map.

    Draws random argument tuples in [low, high] (and random t) and measures
    central-difference partials of f with respect to each of its l+n+2
    argument slots. Returns the largest absolute partial seen plus the
    min/max of the direct input gain df/du(t). A sampled check, not a proof:
    the admissible state region is not bounded a priori.
    """
    rng = np.random.default_rng(seed)
    l, n = plant.output_order, plant.input_order
    P = l + n + 2
    args = rng.uniform(low, high, (samples, P))
    ts = rng.integers(0, plant.horizon, samples)
    h = 1e-6 * (1.0 + np.abs(args))

    def eval_at(a):
        if plant.vectorized:
            y_hist = a[:, : l + 1].T
            u_hist = a[:, l + 1 :].T
            return np.asarray(plant.dynamics(y_hist, u_hist, ts), dtype=float)
        return np.array([
            plant.dynamics(a[i, : l + 1], a[i, l + 1 :], int(ts[i]))
            for i in range(samples)
        ])

    max_abs = 0.0
    gain_min, gain_max = np.inf, -np.inf
    for p in range(P):
        ap = args.copy()
        am = args.copy()
        ap[:, p] += h[:, p]
        am[:, p] -= h[:, p]
        d = (eval_at(ap) - eval_at(am)) / (2.0 * h[:, p])
        max_abs = max(max_abs, float(np.max(np.abs(d))))
        if p == l + 1:  # direct input gain df/du(t)
            gain_min = float(np.min(d))
            gain_max = float(np.max(d))
    return {
        "max_abs_partial": max_abs,
        "input_gain_min": gain_min,
        "input_gain_max": gain_max,
    }


_PLANTS: dict[str, Callable[..., PlantModel]] = {}


def register_plant(name: str, factory: Callable[..., PlantModel]):
    """Register a plant factory under a config-addressable name."""
    _PLANTS[name] = factory


def make_plant(name: str, horizon: int | None = None, y0: float | None = None) -> PlantModel:
    """Instantiate a registered plant, optionally overriding horizon / y0."""
    if name not in _PLANTS:
        known = ", ".join(sorted(_PLANTS))
        raise ConfigError(f"plant: unknown plant '{name}' (known: {known})")
    plant = _PLANTS[name]()
    overrides = {}
    if horizon is not None:
        overrides["horizon"] = horizon
    if y0 is not None:
        overrides["y0"] = y0
    return replace(plant, **overrides) if overrides else plant


def _benchmark_dynamics(y_hist, u_hist, t):
    return benchmark_step(y_hist[0], y_hist[1], u_hist[0], u_hist[1], t)


def _make_benchmark() -> PlantModel:
    return PlantModel(
        name="benchmark-sec6",
        output_order=1,
        input_order=1,
        horizon=50,
        y0=1.5,
        dynamics=_benchmark_dynamics,
        vectorized=True,
        complex_step=True,
    )


register_plant("benchmark-sec6", _make_benchmark)
