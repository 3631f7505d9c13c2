"""Shared fixtures: the expensive reference runs are executed once per session."""

import time

import numpy as np
import pytest

import adaptive_ilc as ai


def sec6_params(gains=(0.8, 0.14, 0.06), horizon=50):
    return ai.LearningParams(lam=1.0, gains=gains, epsilon=0.01, mu1=1.0,
                             mu2=0.001, horizon=horizon)


def sec6_config(**over):
    defaults = dict(
        params=sec6_params(over.pop("gains", (0.8, 0.14, 0.06)),
                           over.pop("horizon_params", 50)),
        uncertainty=ai.UncertaintyModel(),
        plant="benchmark-sec6",
        reference="sec6",
        iterations=1000,
        u0=0.0,
        initial_estimate=0.9,
        seed=0,
    )
    defaults.update(over)
    return ai.RunConfig(**defaults)


@pytest.fixture(scope="session")
def nominal_run():
    """Full benchmark reproduction run (K=1000), timed."""
    cfg = sec6_config(record_history=True, diagnostics=True)
    t0 = time.perf_counter()
    record = ai.run(cfg)
    elapsed = time.perf_counter() - t0
    return record, elapsed


@pytest.fixture(scope="session")
def robust_run():
    cfg = sec6_config(
        uncertainty=ai.UncertaintyModel(mode="bounded-random", beta_w=0.01,
                                        beta_delta=0.01),
        record_history=False, diagnostics=False,
    )
    return ai.run(cfg)


@pytest.fixture(scope="session")
def decaying_run():
    cfg = sec6_config(
        uncertainty=ai.UncertaintyModel(mode="decaying", beta_w=0.01,
                                        beta_delta=0.01, rho=0.99),
        record_history=False, diagnostics=False,
    )
    return ai.run(cfg)


@pytest.fixture(scope="session")
def first_order_run():
    cfg = sec6_config(gains=(0.8,), record_history=False, diagnostics=False)
    return ai.run(cfg)


@pytest.fixture(scope="session")
def nominal_diagnose():
    """200-iteration nominal run with history plus its analysis report."""
    cfg = sec6_config(iterations=200, record_history=True, diagnostics=False)
    record = ai.run(cfg)
    plant = ai.make_plant(cfg.plant)
    report = ai.analyze_run(plant, cfg.params, record.history)
    return record, report


@pytest.fixture(scope="session")
def robust_diagnose():
    cfg = sec6_config(
        iterations=200,
        uncertainty=ai.UncertaintyModel(mode="bounded-random", beta_w=0.01,
                                        beta_delta=0.01),
        record_history=True, diagnostics=False,
    )
    record = ai.run(cfg)
    plant = ai.make_plant(cfg.plant)
    report = ai.analyze_run(plant, cfg.params, record.history)
    return record, report
