"""Executable convergence diagnostics.

Turns the convergence analysis into quantities computable on a recorded run:
the learning-parameter selection condition, per-(k, t) contraction gaps for
the error and input recursions, the companion-form lifting of the high-order
error dynamics with window products of its entrywise-absolute matrices, the
closed-form contraction bounds, and two consistency identities that replay
the recorded run through the analysis equations using true secant values
from the linearization oracle.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .controller import LearningParams
from .errors import DimensionMismatch, InvalidParams
from .estimator import apriori_bound
from .linearization import refine_secant
from .plant import estimate_partial_bounds


@dataclass(frozen=True)
class SelectionCheck:
    """Both halves of the learning-parameter selection condition."""

    cond_a: bool        # gamma_1 + gamma_2 > sum_{i>=3} gamma_i
    cond_b: bool        # lambda > (gamma_1^2 + gamma_1 gamma_2) beta_f beta_est
    margin: float       # lambda minus that product


def check_selection(p: LearningParams, beta_f_upper: float, beta_est: float) -> SelectionCheck:
    """Evaluate the selection condition for given bounds on the true diagonal
    gains (beta_f_upper) and on the estimate row norms (beta_est)."""
    if beta_f_upper < 0.0 or beta_est < 0.0:
        raise InvalidParams("bounds must be >= 0")
    g1, g2 = p.gamma(1), p.gamma(2)
    tail = sum(p.gamma(i) for i in range(3, p.order + 1))
    product = (g1 * g1 + g1 * g2) * beta_f_upper * beta_est
    return SelectionCheck(
        cond_a=bool(g1 + g2 > tail),
        cond_b=bool(p.lam > product),
        margin=float(p.lam - product),
    )


def contraction_gaps(theta_diag: float, theta_hat_diag: float, p: LearningParams):
    """Per-(k, t) contraction quantities (zeta, phi).

    zeta bounds the error recursion: |1 - (g1^2+g1 g2) th that / den| plus
    the absolute tail coefficients; phi is the input-recursion coefficient
    magnitude |1 - (g1^2+g1 g2) that th' / den|, where the caller passes the
    relevant true diagonal in ``theta_diag`` for each use.
    """
    g1, g2 = p.gamma(1), p.gamma(2)
    den = p.lam + g1 * g1 * theta_hat_diag * theta_hat_diag
    core = (g1 * g1 + g1 * g2) * theta_diag * theta_hat_diag / den
    tail = sum(
        abs(g1 * p.gamma(i) * theta_diag * theta_hat_diag / den)
        for i in range(3, p.order + 1)
    )
    zeta = abs(1.0 - core) + tail
    phi = abs(1.0 - core)
    return float(zeta), float(phi)


@dataclass(frozen=True)
class LiftedErrorMatrix:
    """Companion-form matrix of the lifted high-order error recursion."""

    P: np.ndarray
    theta_diag: float
    theta_hat_diag: float


def lifted_matrix(theta_diag: float, theta_hat_diag: float, p: LearningParams) -> LiftedErrorMatrix:
    """Companion matrix with top row (p_1, ..., p_{m-1}) and unit subdiagonal."""
    m = p.order
    if m < 2:
        raise InvalidParams("the lifting needs order m >= 2")
    g1, g2 = p.gamma(1), p.gamma(2)
    den = p.lam + g1 * g1 * theta_hat_diag * theta_hat_diag
    P = np.zeros((m - 1, m - 1))
    P[0, 0] = 1.0 - (g1 * g1 + g1 * g2) * theta_diag * theta_hat_diag / den
    for i in range(2, m):
        P[0, i - 1] = -g1 * p.gamma(i + 1) * theta_diag * theta_hat_diag / den
    for r in range(1, m - 1):
        P[r, r - 1] = 1.0
    return LiftedErrorMatrix(P=P, theta_diag=float(theta_diag),
                             theta_hat_diag=float(theta_hat_diag))


def window_product_norm(Ps, window: int) -> float:
    """Row-sum norm of the left product of entrywise-absolute companion
    matrices over one window: ||prod |P_k| . 1||_inf."""
    mats = [m.P if isinstance(m, LiftedErrorMatrix) else np.asarray(m, dtype=float)
            for m in Ps]
    if len(mats) != window:
        raise DimensionMismatch(f"window of {window} matrices expected, got {len(mats)}")
    dim = mats[0].shape[0]
    for m in mats:
        if m.shape != (dim, dim):
            raise DimensionMismatch("window matrices must share one square shape")
    v = np.ones(dim)
    for m in mats:
        v = np.abs(m) @ v
    return float(np.max(v))


def theta_bound_recursion(beta_f_upper: float, output_order: int, horizon: int) -> float:
    """Conservative a priori bound on the secant entries from the lag-chain
    recursion: b(0) = beta, b(N) = (l+1) beta b(N-1) + beta. Grows
    geometrically with the horizon; reported next to the empirical value to
    show how loose it is."""
    if beta_f_upper < 0.0:
        raise InvalidParams("beta_f_upper must be >= 0")
    b = beta_f_upper
    for _ in range(1, horizon):
        b = (output_order + 1) * beta_f_upper * b + beta_f_upper
    return float(b)


def bound_formulas(p: LearningParams, beta_f_lower: float, beta_est: float):
    """Closed-form contraction bounds (zeta_bar, phi_bar) from the floor
    epsilon, the lower input-gain bound and the estimate bound."""
    if beta_f_lower <= 0.0 or beta_est <= 0.0:
        raise InvalidParams("bounds must be > 0")
    g1, g2 = p.gamma(1), p.gamma(2)
    tail = sum(p.gamma(i) for i in range(3, p.order + 1))
    den = p.lam + g1 * g1 * beta_est * beta_est
    zeta_bar = 1.0 - g1 * (g1 + g2 - tail) * beta_f_lower * p.epsilon / den
    phi_bar = 1.0 - (g1 * g1 + g1 * g2) * beta_f_lower * p.epsilon / den
    return float(zeta_bar), float(phi_bar)


@dataclass
class DiagnosticsReport:
    """Everything the analysis pass derives from one recorded run."""

    robust: bool
    zeta: np.ndarray           # (K+1, T); nan at k=0
    phi: np.ndarray            # (K+1, T)
    kappa: np.ndarray          # (K+1, T) error-recursion driving signal
    psi: np.ndarray            # (K+1, T) input-recursion driving signal
    err_e: np.ndarray          # (K+1, T) relative error-recursion mismatch
    err_u: np.ndarray          # (K+1, T) relative input-recursion mismatch
    window_norm: np.ndarray    # (K+1, T); set on window-end iterations, else nan
    beta_est_empirical: float      # sup |estimate entries| over the run
    beta_est_rownorm: float        # sup of estimate row norms over the run
    beta_theta_empirical: float    # sup |theta entries| over oracle pairs
    beta_theta_recursion: float    # conservative lag-chain bound (same role)
    beta_diag_max: float           # sup of true diagonal gains seen
    beta_diag_min: float           # inf of true diagonal gains seen
    apriori_bound_empirical: float # row-norm bound fed with beta_theta_empirical
    selection_empirical: SelectionCheck
    selection_apriori: SelectionCheck
    zeta_bar: float
    phi_bar: float

    @property
    def max_err_e(self) -> float:
        return float(np.nanmax(self.err_e))

    @property
    def max_err_u(self) -> float:
        return float(np.nanmax(self.err_u))

    def lemma6_holds(self) -> bool:
        """Selection condition (empirical bounds) implies both observed gaps
        stay below their closed-form bounds, strictly inside 1."""
        sel = self.selection_empirical
        if not (sel.cond_a and sel.cond_b):
            return True  # implication holds vacuously
        return bool(
            self.zeta_bar < 1.0
            and self.phi_bar < 1.0
            and np.nanmax(self.zeta) <= self.zeta_bar + 1e-12
            and np.nanmax(self.phi) <= self.phi_bar + 1e-12
        )


def _is_robust_history(history) -> bool:
    return bool(np.any(history.W != 0.0) or np.any(history.deltas != 0.0))


def analyze_run(plant, p: LearningParams, history, robust=None,
                start_nodes=129, target_scale=1e-10, max_nodes=2049) -> DiagnosticsReport:
    """Replay a recorded run through the analysis equations.

    For every iteration the oracle computes refined secant matrices for the
    consecutive-trial pair (error recursion) and the pair against the initial
    trial (input recursion); the report carries the contraction gaps, driving
    signals, both consistency mismatches (relative to 1 + |recorded value|)
    and the empirical bound bookkeeping.
    """
    U, Y, E, W, deltas, tables = (history.U, history.Y, history.E,
                                  history.W, history.deltas, history.tables)
    K = U.shape[0] - 1
    T = U.shape[1]
    if robust is None:
        robust = _is_robust_history(history)
    m = p.order
    g1, g2 = p.gamma(1), p.gamma(2)

    zeta = np.full((K + 1, T), np.nan)
    phi = np.full((K + 1, T), np.nan)
    kappa = np.full((K + 1, T), np.nan)
    psi = np.full((K + 1, T), np.nan)
    err_e = np.full((K + 1, T), np.nan)
    err_u = np.full((K + 1, T), np.nan)
    window_norm = np.full((K + 1, T), np.nan)
    top_rows = np.full((K + 1, T, max(m - 1, 1)), np.nan)

    beta_est_emp = float(np.max(np.abs(tables)))
    beta_est_rownorm = float(np.max(np.linalg.norm(tables, axis=2)))
    beta_theta_emp = 0.0
    beta_diag_max = 0.0
    beta_diag_min = np.inf

    for k in range(1, K + 1):
        dy_cur = Y[k][1:] - Y[k - 1][1:]
        lin_cur, _ = refine_secant(
            plant, U[k], U[k - 1], deltas[k], deltas[k - 1], W[k], W[k - 1],
            start_nodes=start_nodes, target=target_scale * (1.0 + np.max(np.abs(dy_cur))),
            max_nodes=max_nodes)
        dy_base = Y[k - 1][1:] - Y[0][1:]
        lin_base, _ = refine_secant(
            plant, U[k - 1], U[0], deltas[k - 1], deltas[0], W[k - 1], W[0],
            start_nodes=start_nodes, target=target_scale * (1.0 + np.max(np.abs(dy_base))),
            max_nodes=max_nodes)

        for lin in (lin_cur, lin_base):
            beta_theta_emp = max(beta_theta_emp, float(np.max(np.abs(lin.theta))))
        diag_cur = np.diagonal(lin_cur.theta)
        diag_base = np.diagonal(lin_base.theta)
        beta_diag_max = max(beta_diag_max, float(diag_cur.max()), float(diag_base.max()))
        beta_diag_min = min(beta_diag_min, float(diag_cur.min()), float(diag_base.min()))

        that = tables[k]
        du_k = U[k] - U[k - 1]
        dw_k = W[k] - W[k - 1]
        dd_k = deltas[k] - deltas[k - 1]
        dw_base = W[k - 1] - W[0]
        dd_base = deltas[k - 1] - deltas[0]

        for t in range(T):
            th_t = lin_cur.theta[t]
            that_t = that[t]
            dtt = that_t[t]
            den = p.lam + g1 * g1 * dtt * dtt
            zeta[k, t], _ = contraction_gaps(th_t[t], dtt, p)
            _, phi[k, t] = contraction_gaps(lin_base.theta[t, t], dtt, p)

            # error recursion driving signal and identity
            kap = (g1 * g1 * th_t[t] * dtt / den) * (that_t[:t] @ du_k[:t]) \
                - th_t[:t] @ du_k[:t]
            if robust:
                kap -= lin_cur.upsilon[t, : t + 1] @ dw_k[: t + 1]
                kap -= lin_cur.vartheta[t] * dd_k
            kappa[k, t] = kap
            p1 = 1.0 - (g1 * g1 + g1 * g2) * th_t[t] * dtt / den
            rhs = p1 * E[k - 1][t] + kap
            for i in range(3, m + 1):
                e_old = E[k - i + 1][t] if k - i + 1 >= 0 else 0.0
                rhs -= (g1 * p.gamma(i) * th_t[t] * dtt / den) * e_old
            err_e[k, t] = abs(E[k][t] - rhs) / (1.0 + abs(E[k][t]))

            # input recursion driving signal and identity
            thb_t = lin_base.theta[t]
            bracket = (g1 + g2) * (thb_t[: t + 1] @ U[0][: t + 1]) \
                - (g1 + g2) * (thb_t[:t] @ U[k - 1][:t]) \
                - g1 * (that_t[:t] @ du_k[:t]) \
                + (g1 + g2) * E[0][t]
            for i in range(3, m + 1):
                e_old = E[k - i + 1][t] if k - i + 1 >= 0 else 0.0
                bracket += p.gamma(i) * e_old
            if robust:
                bracket -= (g1 + g2) * (lin_base.upsilon[t, : t + 1] @ dw_base[: t + 1])
                bracket -= (g1 + g2) * lin_base.vartheta[t] * dd_base
            ps = (g1 * dtt / den) * bracket
            psi[k, t] = ps
            coef = 1.0 - (g1 * g1 + g1 * g2) * dtt * thb_t[t] / den
            err_u[k, t] = abs(U[k][t] - (coef * U[k - 1][t] + ps)) / (1.0 + abs(U[k][t]))

            if m >= 2:
                lm = lifted_matrix(th_t[t], dtt, p)
                top_rows[k, t] = lm.P[0]

    # window products over consecutive blocks of m-1 iterations
    if m >= 2:
        w = m - 1
        s = 0
        while (w * s + 1) + w - 1 <= K:
            k_lo = w * s + 1
            k_hi = k_lo + w - 1
            for t in range(T):
                mats = [_companion_from_top(top_rows[k, t]) for k in range(k_lo, k_hi + 1)]
                window_norm[k_hi, t] = window_product_norm(mats, w)
            s += 1

    beta_diag_min = float(beta_diag_min) if np.isfinite(beta_diag_min) else 0.0
    apriori_emp = apriori_bound(
        float(np.max(np.linalg.norm(tables[0], axis=1))), p.mu1, p.mu2, T, beta_theta_emp
    )
    grid = estimate_partial_bounds(plant)
    beta_theta_rec = theta_bound_recursion(grid["max_abs_partial"],
                                           plant.output_order, T)
    sel_emp = check_selection(p, beta_diag_max, beta_est_emp)
    sel_apriori = check_selection(p, beta_diag_max, apriori_emp)
    if beta_diag_min > 0.0 and beta_est_emp > 0.0:
        zeta_bar, phi_bar = bound_formulas(p, beta_diag_min, beta_est_emp)
    else:
        zeta_bar, phi_bar = np.nan, np.nan

    return DiagnosticsReport(
        robust=robust,
        zeta=zeta, phi=phi, kappa=kappa, psi=psi,
        err_e=err_e, err_u=err_u, window_norm=window_norm,
        beta_est_empirical=beta_est_emp,
        beta_est_rownorm=beta_est_rownorm,
        beta_theta_empirical=beta_theta_emp,
        beta_theta_recursion=beta_theta_rec,
        beta_diag_max=beta_diag_max,
        beta_diag_min=beta_diag_min,
        apriori_bound_empirical=apriori_emp,
        selection_empirical=sel_emp,
        selection_apriori=sel_apriori,
        zeta_bar=zeta_bar,
        phi_bar=phi_bar,
    )


def _companion_from_top(top_row) -> np.ndarray:
    d = top_row.size
    P = np.zeros((d, d))
    P[0] = top_row
    for r in range(1, d):
        P[r, r - 1] = 1.0
    return P


def write_diagnostics_csv(report: DiagnosticsReport, path):
    """One row per (k, t) with the per-iteration analysis quantities."""
    rows = ["k,t,zeta_kt,phi_kt,window_norm,kappa,psi,consistency_err_e,consistency_err_u"]
    K1, T = report.zeta.shape
    for k in range(1, K1):
        for t in range(T):
            rows.append(
                f"{k},{t},{report.zeta[k, t]:.12e},{report.phi[k, t]:.12e},"
                f"{report.window_norm[k, t]:.12e},{report.kappa[k, t]:.12e},"
                f"{report.psi[k, t]:.12e},{report.err_e[k, t]:.12e},"
                f"{report.err_u[k, t]:.12e}"
            )
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(rows) + "\n")
    os.replace(tmp, path)
