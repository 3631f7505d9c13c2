"""Secant linearization oracle between two plant trials.

For a pair of trials (a, b) this module computes the exact secant
representation

    y_a(1..T) - y_b(1..T) = Theta (u_a - u_b) + Upsilon (w_a - w_b)
                            + vartheta (delta_a - delta_b)

used only by tests and diagnostics, never by the controller. Rather than a
non-constructive mean-value point, every per-step partial derivative of the
plant map f is replaced by its path integral along the straight segment
between the two argument tuples of that step (fundamental theorem of
calculus, so each step's secant identity is exact), and Theta / Upsilon /
vartheta are assembled by propagating the resulting exact linear time-varying
recursion. Each per-step integral is smooth and low-dimensional, so modest
Simpson + Richardson node counts reach near machine precision even for
trial pairs with large input differences; a straight-segment quadrature in
input space, by contrast, faces integrands whose oscillation grows with
(sensitivity x input distance) and is numerically hopeless at long horizons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvalidParams
from .plant import PlantModel, simulate_batch, simulate_trial

_COMPLEX_STEP = 1e-200


@dataclass(frozen=True)
class SecantLinearization:
    """Secant matrices between two trials.

    ``theta`` is lower triangular with zero entries above the diagonal,
    ``upsilon`` unit lower triangular (the disturbance enters each step
    additively, so its direct-feedthrough gain is exactly one), ``vartheta``
    the initial-shift column. ``nodes`` records the per-step quadrature node
    count used.
    """

    theta: np.ndarray
    upsilon: np.ndarray
    vartheta: np.ndarray
    nodes: int


def _quadrature(nodes):
    """Simpson nodes/weights on [0,1]; coarse weights for Richardson reuse."""
    if nodes == 1:
        return np.array([0.5]), np.array([1.0]), None
    if nodes < 3 or nodes % 2 == 0:
        raise InvalidParams("nodes must be 1 or an odd integer >= 3")
    s = np.linspace(0.0, 1.0, nodes)
    w = np.ones(nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w /= 3.0 * (nodes - 1)
    coarse = None
    if (nodes - 1) % 4 == 0 and nodes >= 5:
        m = (nodes + 1) // 2
        wc = np.ones(m)
        wc[1:-1:2] = 4.0
        wc[2:-1:2] = 2.0
        wc /= 3.0 * (m - 1)
        coarse = wc
    return s, w, coarse


def _argument_stacks(plant, y, u):
    """Endpoint argument tuples of every step, stacked as (P, T)."""
    T = plant.horizon
    rows = []
    for j in range(plant.output_order + 1):
        shifted = np.zeros(T)
        shifted[j:] = y[: T - j] if j > 0 else y[:T]
        rows.append(shifted)
    for j in range(plant.input_order + 1):
        shifted = np.zeros(T)
        shifted[j:] = u[: T - j] if j > 0 else u
        rows.append(shifted)
    return np.stack(rows)


def _eval_dynamics_grid(plant, grid, positions_t):
    """Evaluate f over a (..., P, T) argument grid; returns (..., T)."""
    l = plant.output_order
    y_hist = grid[..., : l + 1, :]
    u_hist = grid[..., l + 1 :, :]
    # dynamics expects lag axis first
    y_hist = np.moveaxis(y_hist, -2, 0)
    u_hist = np.moveaxis(u_hist, -2, 0)
    return plant.dynamics(y_hist, u_hist, positions_t)


def _step_coefficients(plant, y_a, u_a, y_b, u_b, nodes, fd, positions=None):
    """Per-step secant partials G[p, t] = integral of df/dx_p along the
    straight segment between the two argument tuples of step t."""
    T = plant.horizon
    s, w_fine, w_coarse = _quadrature(nodes)
    A = _argument_stacks(plant, y_a, u_a)
    B = _argument_stacks(plant, y_b, u_b)
    P = A.shape[0]
    if positions is None:
        positions = range(P)
    seg = B[None, :, :] + s[:, None, None] * (A - B)[None, :, :]  # (N, P, T)
    tt = np.arange(T)[None, :]

    G = np.zeros((P, nodes, T))
    if plant.vectorized:
        for p in positions:
            if fd == "complex":
                z = seg.astype(complex)
                z[:, p, :] += 1j * _COMPLEX_STEP
                G[p] = _eval_dynamics_grid(plant, z, tt).imag / _COMPLEX_STEP
            elif fd == 2:
                h = 1e-6 * (1.0 + np.abs(seg[:, p, :]))
                zp = seg.copy()
                zm = seg.copy()
                zp[:, p, :] += h
                zm[:, p, :] -= h
                G[p] = (
                    _eval_dynamics_grid(plant, zp, tt) - _eval_dynamics_grid(plant, zm, tt)
                ) / (2.0 * h)
            elif fd == 4:
                h = 1e-3 * (1.0 + np.abs(seg[:, p, :])) ** 0.25
                vals = []
                for c in (-2.0, -1.0, 1.0, 2.0):
                    z = seg.copy()
                    z[:, p, :] += c * h
                    vals.append(_eval_dynamics_grid(plant, z, tt))
                G[p] = (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * h)
            else:
                raise InvalidParams(f"fd must be 'complex', 2 or 4, got {fd!r}")
    else:
        l = plant.output_order
        for p in positions:
            for j in range(nodes):
                for t in range(T):
                    args = seg[j, :, t]

                    def f_at(v):
                        a = args.copy()
                        a[p] = v
                        return plant.dynamics(a[: l + 1], a[l + 1 :], t)

                    v0 = args[p]
                    if fd == 4:
                        h = 1e-3 * (1.0 + abs(v0)) ** 0.25
                        G[p, j, t] = (
                            f_at(v0 - 2 * h) - 8 * f_at(v0 - h) + 8 * f_at(v0 + h) - f_at(v0 + 2 * h)
                        ) / (12.0 * h)
                    else:
                        h = 1e-6 * (1.0 + abs(v0))
                        G[p, j, t] = (f_at(v0 + h) - f_at(v0 - h)) / (2.0 * h)

    coef = np.tensordot(w_fine, G, axes=([0], [1]))  # (P, T)
    if w_coarse is not None:
        coarse = np.tensordot(w_coarse, G[:, ::2, :], axes=([0], [1]))
        coef = coef + (coef - coarse) / 15.0
    return coef


def _endpoint_trajectories(plant, u_a, u_b, delta_a, delta_b, w_a, w_b):
    T = plant.horizon
    u_a = np.asarray(u_a, dtype=float)
    u_b = np.asarray(u_b, dtype=float)
    if u_a.shape != (T,) or u_b.shape != (T,):
        raise DimensionMismatch("input trajectories must have length equal to the horizon")
    w_a = np.zeros(T) if w_a is None else np.asarray(w_a, dtype=float)
    w_b = np.zeros(T) if w_b is None else np.asarray(w_b, dtype=float)
    if plant.vectorized:
        Y = simulate_batch(plant, np.stack([u_a, u_b]), np.array([delta_a, delta_b]),
                           np.stack([w_a, w_b]))
        y_a, y_b = Y[0], Y[1]
    else:
        y_a = simulate_trial(plant, u_a, delta_a, w_a).y
        y_b = simulate_trial(plant, u_b, delta_b, w_b).y
    return u_a, u_b, w_a, w_b, y_a, y_b


def _assemble(plant, coef):
    """Propagate the exact per-step linear recursion into Theta/Upsilon/vartheta."""
    T = plant.horizon
    l, n = plant.output_order, plant.input_order
    Ay = coef[: l + 1]
    Cu = coef[l + 1 :]
    theta = np.zeros((T, T))
    upsilon = np.zeros((T, T))
    vartheta = np.zeros(T)
    My = np.zeros((T + 1, T))  # d y(tau) / d u
    Wy = np.zeros((T + 1, T))  # d y(tau) / d w
    Dy = np.zeros(T + 1)       # d y(tau) / d delta
    Dy[0] = 1.0
    eye = np.eye(T)
    for t in range(T):
        m_row = np.zeros(T)
        w_row = np.zeros(T)
        d_val = 0.0
        for j in range(l + 1):
            if t - j >= 0:
                m_row += Ay[j, t] * My[t - j]
                w_row += Ay[j, t] * Wy[t - j]
                d_val += Ay[j, t] * Dy[t - j]
        for j in range(n + 1):
            if t - j >= 0:
                m_row += Cu[j, t] * eye[t - j]
        w_row += eye[t]  # additive disturbance: unit direct gain
        My[t + 1] = m_row
        Wy[t + 1] = w_row
        Dy[t + 1] = d_val
        theta[t] = m_row
        upsilon[t] = w_row
        vartheta[t] = d_val
    return theta, upsilon, vartheta


def secant_jacobian(plant: PlantModel, u_a, u_b, delta_a=0.0, delta_b=0.0,
                    w_a=None, w_b=None, nodes=129, fd=None) -> SecantLinearization:
    """Secant linearization between trials (u_a, delta_a, w_a) and (u_b, ...).

    ``nodes`` is the per-step quadrature node count (1 or odd >= 3; counts
    of the form 4j+1 get a Richardson refinement for free). ``fd`` selects
    the derivative backend: 'complex' (near-exact, requires
    plant.complex_step), 2 (central differences, step 1e-6*(1+|v|)) or 4
    (fourth-order stencil). Default: 'complex' when the plant supports it,
    else 2. With coincident trials the result is the plain Jacobian at that
    point.
    """
    if fd is None:
        fd = "complex" if plant.complex_step else 2
    if fd == "complex" and not plant.complex_step:
        raise InvalidParams("plant does not declare complex_step support")
    u_a, u_b, w_a, w_b, y_a, y_b = _endpoint_trajectories(
        plant, u_a, u_b, delta_a, delta_b, w_a, w_b
    )
    coef = _step_coefficients(plant, y_a, u_a, y_b, u_b, nodes, fd)
    theta, upsilon, vartheta = _assemble(plant, coef)
    return SecantLinearization(theta, upsilon, vartheta, nodes)


def secant_diagonal(plant: PlantModel, u_a, u_b, delta_a=0.0, delta_b=0.0,
                    w_a=None, w_b=None, nodes=17, fd=None) -> np.ndarray:
    """Diagonal of Theta only (the direct input gains), at a fraction of the
    full cost; used by per-iteration run diagnostics."""
    if fd is None:
        fd = "complex" if plant.complex_step else 2
    u_a, u_b, w_a, w_b, y_a, y_b = _endpoint_trajectories(
        plant, u_a, u_b, delta_a, delta_b, w_a, w_b
    )
    pos = plant.output_order + 1  # first input lag: df/du(t)
    coef = _step_coefficients(plant, y_a, u_a, y_b, u_b, nodes, fd, positions=[pos])
    return coef[pos]


def verify_linearization(plant: PlantModel, u_a, u_b, delta_a=0.0, delta_b=0.0,
                         w_a=None, w_b=None, nodes=129, fd=None) -> float:
    """Independent check of the secant identity.

    Simulates both trials directly and returns
    max_t |dy(t+1) - (Theta du + Upsilon dw + vartheta ddelta)(t+1)|.
    """
    lin = secant_jacobian(plant, u_a, u_b, delta_a, delta_b, w_a, w_b, nodes, fd)
    u_a, u_b, w_a, w_b, y_a, y_b = _endpoint_trajectories(
        plant, u_a, u_b, delta_a, delta_b, w_a, w_b
    )
    dy = y_a[1:] - y_b[1:]
    pred = lin.theta @ (u_a - u_b) + lin.upsilon @ (w_a - w_b) + lin.vartheta * (delta_a - delta_b)
    return float(np.max(np.abs(dy - pred)))


def refine_secant(plant: PlantModel, u_a, u_b, delta_a=0.0, delta_b=0.0,
                  w_a=None, w_b=None, start_nodes=17, target=1e-10,
                  max_nodes=1025, fd=None):
    """Double quadrature nodes until the secant residual meets ``target``.

    Returns (SecantLinearization, residual) for the best node count tried;
    stops early once the residual stops improving (floating-point floor).
    """
    u_a, u_b, w_a, w_b, y_a, y_b = _endpoint_trajectories(
        plant, u_a, u_b, delta_a, delta_b, w_a, w_b
    )
    if fd is None:
        fd = "complex" if plant.complex_step else 2
    dy = y_a[1:] - y_b[1:]
    du = u_a - u_b
    dw = w_a - w_b
    dd = delta_a - delta_b
    best = None
    best_res = np.inf
    nodes = start_nodes
    while True:
        coef = _step_coefficients(plant, y_a, u_a, y_b, u_b, nodes, fd)
        theta, upsilon, vartheta = _assemble(plant, coef)
        res = float(np.max(np.abs(dy - (theta @ du + upsilon @ dw + vartheta * dd))))
        if res < best_res:
            best = SecantLinearization(theta, upsilon, vartheta, nodes)
            best_res = res
        if best_res <= target or nodes >= max_nodes or (res > 2.0 * best_res):
            return best, best_res
        nodes = 2 * nodes - 1
