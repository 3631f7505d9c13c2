import numpy as np
import pytest

import adaptive_ilc as ai
from adaptive_ilc import (DimensionMismatch, ErrorHistory, EstimateTable,
                          InvalidParams, LearningParams)


def golden_section_min(f, lo, hi, tol=1e-11):
    """Independent scalar minimizer used as the optimality oracle."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def params_for(gains, T, lam=1.0):
    return LearningParams(lam=lam, gains=gains, epsilon=0.01, mu1=1.0,
                          mu2=0.001, horizon=T)


def table_for(rng, T, diag_lo=0.05, diag_hi=2.0):
    values = np.tril(rng.uniform(-1.0, 1.0, (T, T)), -1)
    values[np.diag_indices(T)] = rng.uniform(diag_lo, diag_hi, T)
    return EstimateTable(values=values, initial=values.copy(), epsilon=0.01)


def history_with(errors, T, order):
    hist = ErrorHistory(T, order)
    for e in reversed(errors):  # oldest first so the newest is lookback(1)
        hist.push(np.asarray(e, dtype=float))
    return hist


def test_zero_errors_is_exact_fixed_point():
    rng = np.random.default_rng(0)
    T = 6
    p = params_for((0.8, 0.14, 0.06), T)
    est = table_for(rng, T)
    hist = ErrorHistory(T, p.order)  # nothing pushed: all reads are zero
    u_prev = rng.uniform(-3, 3, T)
    assert np.array_equal(ai.update_input(u_prev, est, hist, p), u_prev)


def test_first_order_scalar_value():
    T = 1
    p = params_for((0.8,), T)
    est = EstimateTable.filled(T, 0.9, 0.01)
    hist = history_with([np.array([1.0])], T, p.order)
    u = ai.update_input(np.zeros(T), est, hist, p)
    assert u[0] == pytest.approx(0.379346680717, abs=1e-6)  # 0.576/1.5184


def test_third_order_scalar_value():
    T = 1
    p = params_for((0.8, 0.14, 0.06), T)
    est = EstimateTable.filled(T, 0.9, 0.01)
    hist = history_with([np.array([1.0]), np.array([1.0])], T, p.order)
    u = ai.update_input(np.zeros(T), est, hist, p)
    # latest error weighted by gamma1 + gamma2, the one before by gamma3
    assert u[0] == pytest.approx(0.474183350896, abs=1e-6)


def test_sequential_causality():
    rng = np.random.default_rng(1)
    T = 8
    p = params_for((0.8, 0.14, 0.06), T)
    est = table_for(rng, T)
    hist = history_with([rng.normal(0, 1, T), rng.normal(0, 1, T)], T, p.order)
    u_prev = rng.normal(0, 1, T)
    u1 = ai.update_input(u_prev, est, hist, p)
    cut = 4
    u_prev_perm = u_prev.copy()
    u_prev_perm[cut + 1:] = u_prev[cut + 1:][::-1]
    u2 = ai.update_input(u_prev_perm, est, hist, p)
    assert np.array_equal(u1[: cut + 1], u2[: cut + 1])


def test_first_order_matches_explicit_formula():
    rng = np.random.default_rng(2)
    T = 7
    p = params_for((0.8,), T)
    est = table_for(rng, T)
    e1 = rng.normal(0, 1, T)
    hist = history_with([e1], T, p.order)
    u_prev = rng.normal(0, 1, T)
    got = ai.update_input(u_prev, est, hist, p)
    # explicit first-order form: one combined bracket behind gamma1^2 that / den
    g1 = 0.8
    th = est.values
    exp = np.empty(T)
    du = np.empty(T)
    for t in range(T):
        dtt = th[t, t]
        den = p.lam + g1 * g1 * dtt * dtt
        inner = e1[t] - th[t, :t] @ du[:t]
        exp[t] = u_prev[t] + (g1 * g1 * dtt / den) * inner
        du[t] = exp[t] - u_prev[t]
    assert got == pytest.approx(exp, abs=1e-12)


@pytest.mark.parametrize("c", [0.5, 3.0])
def test_gain_scaling_invariance(c):
    rng = np.random.default_rng(3)
    T = 6
    base = params_for((0.8, 0.14, 0.06), T)
    scaled = params_for((0.8 * c, 0.14 * c, 0.06 * c), T, lam=base.lam * c * c)
    est = table_for(rng, T)
    errors = [rng.normal(0, 1, T), rng.normal(0, 1, T)]
    u_prev = rng.normal(0, 1, T)
    u_base = ai.update_input(u_prev, est, history_with(errors, T, 3), base)
    u_scaled = ai.update_input(u_prev, est, history_with(errors, T, 3), scaled)
    assert u_scaled == pytest.approx(u_base, rel=1e-12, abs=1e-12)


def test_j_index_values():
    p = params_for((0.8, 0.14, 0.06), 4)
    assert ai.j_index(0.0, 0.0, [0.0, 0.0], p) == 0.0
    assert ai.j_index(1.0, 0.0, [0.0, 0.0], p) == 1.0  # movement penalty only
    with pytest.raises(DimensionMismatch):
        ai.j_index(0.0, 0.0, [0.0], p)


def test_update_minimizes_j_index_against_golden_section():
    rng = np.random.default_rng(4)
    for _ in range(30):
        m = int(rng.integers(1, 5))
        T = int(rng.integers(1, 6))
        p = params_for(tuple(rng.uniform(0.05, 1.0, m)), T)
        est = table_for(rng, T)
        errors = [rng.normal(0, 1, T) for _ in range(max(1, m - 1))]
        hist = history_with(errors, T, m)
        u_prev = rng.normal(0, 1, T)
        u_new = ai.update_input(u_prev, est, hist, p)
        du = u_new - u_prev
        t = int(rng.integers(0, T))
        e_prev = errors[0][t]
        past = np.array([errors[i - 2][t] if i - 2 < len(errors) else 0.0
                         for i in range(2, m + 1)])
        fixed = est.values[t, :t] @ du[:t]

        def cost(du_t):
            predicted = e_prev - fixed - est.values[t, t] * du_t
            return ai.j_index(du_t, predicted, past, p)

        best = golden_section_min(cost, du[t] - 2.0, du[t] + 2.0)
        assert cost(du[t]) <= cost(best) + 1e-10
        assert abs(du[t] - best) < 1e-5


def test_error_history_zero_convention_and_order():
    hist = ErrorHistory(3, 3)
    assert np.array_equal(hist.lookback(1), np.zeros(3))
    e1, e2, e3 = (np.full(3, float(i)) for i in (1, 2, 3))
    hist.push(e1)
    hist.push(e2)
    assert np.array_equal(hist.lookback(1), e2)
    assert np.array_equal(hist.lookback(2), e1)
    hist.push(e3)  # ring depth m-1 = 2: e1 falls out
    assert np.array_equal(hist.lookback(1), e3)
    assert np.array_equal(hist.lookback(2), e2)
    with pytest.raises(InvalidParams):
        hist.lookback(0)


def test_first_order_history_still_provides_latest_error():
    hist = ErrorHistory(2, 1)
    hist.push(np.array([1.0, 2.0]))
    assert np.array_equal(hist.lookback(1), np.array([1.0, 2.0]))


def test_param_validation_names_offender():
    with pytest.raises(InvalidParams, match="lambda"):
        params_for((0.8,), 4, lam=0.0)
    with pytest.raises(InvalidParams, match="gamma"):
        params_for((0.8, -0.1), 4)
    with pytest.raises(InvalidParams, match="gamma"):
        LearningParams(lam=1.0, gains=(), horizon=4)
    with pytest.raises(InvalidParams, match="epsilon"):
        LearningParams(lam=1.0, gains=(0.8,), epsilon=0.0, horizon=4)
    with pytest.raises(InvalidParams, match="mu2"):
        LearningParams(lam=1.0, gains=(0.8,), mu2=0.0, horizon=4)


def test_selection_flag():
    assert params_for((0.8, 0.14, 0.06), 4).selection_ok          # 0.94 > 0.06
    assert params_for((0.8,), 4).selection_ok                     # first-order mode
    assert not params_for((0.1, 0.1, 0.5), 4).selection_ok


def test_optional_clamp_saturates_and_defaults_off():
    rng = np.random.default_rng(6)
    T = 6
    p = params_for((0.8, 0.14, 0.06), T)
    est = table_for(rng, T, diag_lo=0.5)
    errors = [rng.normal(0, 5, T), rng.normal(0, 5, T)]
    u_prev = rng.normal(0, 5, T)
    free = ai.update_input(u_prev, est, history_with(errors, T, 3), p)
    assert np.max(np.abs(free)) > 0.5  # the clamp below actually binds
    clamped = ai.update_input(u_prev, est, history_with(errors, T, 3), p, clamp=0.5)
    assert np.max(np.abs(clamped)) <= 0.5
    again = ai.update_input(u_prev, est, history_with(errors, T, 3), p, clamp=None)
    assert np.array_equal(free, again)
    with pytest.raises(InvalidParams):
        ai.update_input(u_prev, est, history_with(errors, T, 3), p, clamp=0.0)


def test_update_input_validation():
    rng = np.random.default_rng(5)
    T = 4
    p = params_for((0.8,), T)
    est = table_for(rng, T)
    hist = ErrorHistory(T, 1)
    with pytest.raises(DimensionMismatch):
        ai.update_input(np.zeros(T + 1), est, hist, p)
    low = EstimateTable(values=np.tril(np.full((T, T), 0.001)),
                        initial=np.tril(np.full((T, T), 0.9)), epsilon=0.01)
    with pytest.raises(InvalidParams):
        ai.update_input(np.zeros(T), low, hist, p)
