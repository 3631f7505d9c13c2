"""End-to-end run orchestration.

One run executes the adaptive ILC loop for a configured plant, reference and
iteration budget: the initial trial applies u0; each later pass first updates
the estimate table from the two latest completed trials (from the second
pass on), then computes the next input and immediately runs its trial.
Trials are tagged by the index of the input that generated them, so the
record for iteration k always holds (u_k, y_k, e_k) and delta-quantities
difference consecutive tags.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .controller import ErrorHistory, LearningParams, update_input
from .diagnostics import contraction_gaps
from .errors import ConfigError, InvalidParams
from .estimator import EstimateTable, export_estimates_csv, update_estimates
from .linearization import secant_diagonal
from .plant import UncertaintyModel, make_plant, sample_uncertainty, simulate_trial


def reference_sec6(t: int) -> float:
    """Benchmark reference trajectory, defined for t = 0..50."""
    if not 0 <= t <= 50:
        raise InvalidParams(f"reference: t={t} outside 0..50")
    return 5.0 * np.sin(2.0 * np.pi * t / 50.0) + 0.8 * t * (50.0 - t) / 300.0


_REFERENCES: dict[str, Callable[[int], float]] = {"sec6": reference_sec6}


def register_reference(name: str, fn: Callable[[int], float]):
    _REFERENCES[name] = fn


def make_reference(name: str, horizon: int) -> np.ndarray:
    if name not in _REFERENCES:
        known = ", ".join(sorted(_REFERENCES))
        raise ConfigError(f"reference: unknown reference '{name}' (known: {known})")
    fn = _REFERENCES[name]
    return np.array([fn(t) for t in range(horizon + 1)], dtype=float)


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs; validated on construction."""

    params: LearningParams
    uncertainty: UncertaintyModel = UncertaintyModel()
    plant: str = "benchmark-sec6"
    reference: str = "sec6"
    iterations: int = 1000
    u0: float | np.ndarray = 0.0
    initial_estimate: float = 0.9
    seed: int = 0
    horizon: int | None = None
    clamp: float | None = None
    diagnostics: bool = True
    diagnostics_nodes: int = 17
    snapshots: tuple | None = None
    record_history: bool = True

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.initial_estimate < self.params.epsilon:
            raise ConfigError(
                f"initial_estimate {self.initial_estimate} below the floor "
                f"params.epsilon = {self.params.epsilon}"
            )
        if not np.all(np.isfinite(np.atleast_1d(self.u0))):
            raise ConfigError("u0 must be finite")

    def resolved_snapshots(self) -> tuple:
        sched = self.snapshots if self.snapshots is not None else (0, 400, self.iterations)
        return tuple(sorted({int(s) for s in sched if 0 <= int(s) <= self.iterations}))


@dataclass
class RunHistory:
    """Full per-iteration record needed to re-derive any analysis quantity."""

    U: np.ndarray           # (K+1, T) inputs
    Y: np.ndarray           # (K+1, T+1) outputs
    E: np.ndarray           # (K+1, T) errors, E[k, t] = e_k(t+1)
    W: np.ndarray           # (K+1, T) applied disturbances
    deltas: np.ndarray      # (K+1,) applied initial shifts
    tables: np.ndarray      # (K+1, T, T) estimate table in force at pass k
    resets: np.ndarray      # (K+1,) resets applied at pass k
    y_d: np.ndarray         # (T+1,) reference

    def save(self, path):
        with open(path, "wb") as fh:
            np.savez_compressed(fh, U=self.U, Y=self.Y, E=self.E, W=self.W,
                                deltas=self.deltas, tables=self.tables,
                                resets=self.resets, y_d=self.y_d)

    @classmethod
    def load(cls, path) -> "RunHistory":
        with np.load(path) as data:
            return cls(U=data["U"], Y=data["Y"], E=data["E"], W=data["W"],
                       deltas=data["deltas"], tables=data["tables"],
                       resets=data["resets"], y_d=data["y_d"])


@dataclass
class RunRecord:
    """Per-iteration metrics plus snapshots and boundedness report."""

    config: RunConfig
    y_d: np.ndarray
    max_abs_u: np.ndarray
    max_abs_e: np.ndarray
    max_est_norm: np.ndarray
    resets: np.ndarray
    zeta_max: np.ndarray
    phi_max: np.ndarray
    sup_abs_u: float
    sup_abs_y: float
    total_resets: int
    snapshots: dict = field(default_factory=dict)
    history: RunHistory | None = None

    @property
    def iterations(self) -> int:
        return self.max_abs_e.size - 1


def run(config: RunConfig) -> RunRecord:
    """Execute one full run; raises NonFiniteOutput with (k, t) on divergence."""
    plant = make_plant(config.plant, horizon=config.horizon)
    T = plant.horizon
    p = config.params
    if p.horizon != T:
        raise ConfigError(f"params horizon {p.horizon} != plant horizon {T}")
    y_d = make_reference(config.reference, T)
    unc = replace(config.uncertainty, seed=config.seed)
    K = config.iterations

    u0 = np.asarray(config.u0, dtype=float)
    if u0.ndim == 0:
        u0 = np.full(T, float(u0))
    if u0.shape != (T,):
        raise ConfigError(f"u0 must be scalar or length {T}")

    est = EstimateTable.filled(T, config.initial_estimate, p.epsilon)
    hist = ErrorHistory(T, p.order)
    snapshots_at = set(config.resolved_snapshots())

    U = np.empty((K + 1, T))
    Y = np.empty((K + 1, T + 1))
    E = np.empty((K + 1, T))
    Wd = np.empty((K + 1, T))
    deltas = np.empty(K + 1)
    tables = np.empty((K + 1, T, T)) if config.record_history else None
    metric_u = np.empty(K + 1)
    metric_e = np.empty(K + 1)
    metric_norm = np.empty(K + 1)
    metric_resets = np.zeros(K + 1, dtype=int)
    metric_zeta = np.full(K + 1, np.nan)
    metric_phi = np.full(K + 1, np.nan)
    snapshots = {}

    delta0, w0 = sample_uncertainty(unc, 0, T)
    trial = simulate_trial(plant, u0, delta0, w0, y_d, iteration=0)
    U[0], Y[0], E[0], Wd[0], deltas[0] = trial.u, trial.y, trial.e, trial.w, trial.delta
    if tables is not None:
        tables[0] = est.values
    hist.push(trial.e)
    metric_u[0] = np.max(np.abs(trial.u))
    metric_e[0] = np.max(np.abs(trial.e))
    metric_norm[0] = np.max(est.row_norms())
    if 0 in snapshots_at:
        snapshots[0] = (trial, est)

    for k in range(1, K + 1):
        if k >= 2:
            est = update_estimates(est, U[k - 1] - U[k - 2], Y[k - 1][1:] - Y[k - 2][1:],
                                   p.mu1, p.mu2)
            metric_resets[k] = est.resets_applied
        u_k = update_input(U[k - 1], est, hist, p, clamp=config.clamp)
        delta_k, w_k = sample_uncertainty(unc, k, T)
        trial = simulate_trial(plant, u_k, delta_k, w_k, y_d, iteration=k)
        U[k], Y[k], E[k], Wd[k], deltas[k] = trial.u, trial.y, trial.e, trial.w, trial.delta
        if tables is not None:
            tables[k] = est.values
        hist.push(trial.e)

        metric_u[k] = np.max(np.abs(trial.u))
        metric_e[k] = np.max(np.abs(trial.e))
        metric_norm[k] = np.max(est.row_norms())
        if config.diagnostics:
            diag_cur = secant_diagonal(plant, U[k], U[k - 1], deltas[k], deltas[k - 1],
                                       Wd[k], Wd[k - 1], nodes=config.diagnostics_nodes)
            diag_base = secant_diagonal(plant, U[k - 1], U[0], deltas[k - 1], deltas[0],
                                        Wd[k - 1], Wd[0], nodes=config.diagnostics_nodes)
            that = est.diagonal()
            zeta = np.empty(T)
            phi = np.empty(T)
            for t in range(T):
                zeta[t] = contraction_gaps(diag_cur[t], that[t], p)[0]
                phi[t] = contraction_gaps(diag_base[t], that[t], p)[1]
            metric_zeta[k] = np.max(zeta)
            metric_phi[k] = np.max(phi)
        if k in snapshots_at:
            snapshots[k] = (trial, est)

    history = None
    if config.record_history:
        history = RunHistory(U=U, Y=Y, E=E, W=Wd, deltas=deltas, tables=tables,
                             resets=metric_resets.copy(), y_d=y_d)
    return RunRecord(
        config=config,
        y_d=y_d,
        max_abs_u=metric_u,
        max_abs_e=metric_e,
        max_est_norm=metric_norm,
        resets=metric_resets,
        zeta_max=metric_zeta,
        phi_max=metric_phi,
        sup_abs_u=float(np.max(metric_u)),
        sup_abs_y=float(np.max(np.abs(Y))),
        total_resets=int(metric_resets.sum()),
        snapshots=snapshots,
        history=history,
    )


def _atomic_write(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_outputs(record: RunRecord, outdir):
    """Write iterations.csv, snapshot CSVs and (when recorded) history.npz."""
    os.makedirs(outdir, exist_ok=True)
    rows = ["k,max_abs_u,max_abs_e,max_est_norm,resets,zeta_max,phi_max"]
    for k in range(record.iterations + 1):
        rows.append(
            f"{k},{record.max_abs_u[k]:.12e},{record.max_abs_e[k]:.12e},"
            f"{record.max_est_norm[k]:.12e},{record.resets[k]},"
            f"{record.zeta_max[k]:.12e},{record.phi_max[k]:.12e}"
        )
    _atomic_write(os.path.join(outdir, "iterations.csv"), "\n".join(rows) + "\n")

    T = record.y_d.size - 1
    for k, (trial, est) in sorted(record.snapshots.items()):
        rows = ["t,u,y,y_d,e"]
        for t in range(T + 1):
            u_s = f"{trial.u[t]:.12e}" if t < T else "nan"
            e_s = f"{trial.e[t - 1]:.12e}" if t >= 1 else "nan"
            rows.append(f"{t},{u_s},{trial.y[t]:.12e},{record.y_d[t]:.12e},{e_s}")
        _atomic_write(os.path.join(outdir, f"trajectory_{k}.csv"), "\n".join(rows) + "\n")
        tmp = os.path.join(outdir, f"estimates_{k}.csv.tmp")
        export_estimates_csv(est, tmp)
        os.replace(tmp, os.path.join(outdir, f"estimates_{k}.csv"))

    if record.history is not None:
        tmp = os.path.join(outdir, "history.npz.tmp")
        record.history.save(tmp)
        os.replace(tmp, os.path.join(outdir, "history.npz"))


def summary_line(record: RunRecord) -> str:
    return (
        f"final max|e| = {record.max_abs_e[-1]:.6e}, sup max|u| = {record.sup_abs_u:.6e}, "
        f"resets = {record.total_resets}"
    )
