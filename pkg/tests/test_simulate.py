"""Tests for scenario configuration, the closed loop, and the audits."""

import numpy as np
import pytest

from sacbf.dynamics import make_unicycle
from sacbf.simulate import (ChainDecl, ConfigError, InitialMembershipError,
                            ScenarioConfig, audit_bounds, audit_invariance,
                            audit_to_csv, run_scenario, step_zoh,
                            summary_to_text, trace_to_csv)


def _chains():
    return (
        ChainDecl(kind="safety", name="obstacle", center=(0.0, 0.0),
                  radius=1.0, weight=200.0),
        ChainDecl(kind="reach", name="target", center=(3.0, 0.0), radius=1.0,
                  eps0=7.0, t_start=0.0, t_reach=5.0, weight=200.0),
    )


def _config(**overrides):
    base = dict(state=(-3.0, 0.0, 0.0, 1.0), dt=0.1, horizon=0.5,
                controller="hocbf", chains=_chains(),
                u_lower=(-10.0, -10.0), u_upper=(10.0, 10.0))
    base.update(overrides)
    return ScenarioConfig(**base)


def test_step_zoh_straight_line():
    model = make_unicycle()
    x0 = np.array([0.0, 0.0, 0.0, 2.0])
    x1 = step_zoh(model, np.zeros(2), x0, 0.0, 0.5)
    assert np.allclose(x1, [1.0, 0.0, 0.0, 2.0], atol=1e-9)
    with pytest.raises(ValueError):
        step_zoh(model, np.zeros(2), x0, 0.0, 0.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        _config(dt=-0.1).validate()
    with pytest.raises(ConfigError):
        _config(horizon=0.55).validate()
    with pytest.raises(ConfigError):
        _config(controller="mpc").validate()
    with pytest.raises(ConfigError):
        _config(nodes=9).validate()
    with pytest.raises(ConfigError):
        _config(infeasibility="coast").validate()
    with pytest.raises(ConfigError):
        _config(u_rate=(1.0, 1.0, 1.0)).validate()
    with pytest.raises(ConfigError):
        _config(u_rate=(-1.0, 1.0)).validate()
    with pytest.raises(ConfigError):
        _config(chains=()).validate()
    with pytest.raises(ConfigError):
        _config(chains=_chains() + _chains()).validate()
    assert _config().validate() is not None


def test_scalar_rate_broadcasts():
    config = _config(u_rate=20.0)
    assert config.u_rate == (20.0, 20.0)
    assert _config(u_rate=None).u_rate is None


def test_chain_decl_validation():
    with pytest.raises(ConfigError):
        ChainDecl(kind="goal", name="g", center=(0.0, 0.0), radius=1.0)
    with pytest.raises(ConfigError):
        ChainDecl(kind="reach", name="r", center=(0.0, 0.0), radius=1.0)
    with pytest.raises(ConfigError):
        ChainDecl(kind="safety", name="s", center=(0.0, 0.0), radius=1.0,
                  lams=(2.0,), etas=(1.0, 1.0))


def test_initial_membership_enforced():
    config = _config(state=(0.5, 0.0, 0.0, 1.0))
    with pytest.raises(InitialMembershipError):
        run_scenario(config)


def test_short_run_is_deterministic():
    config = _config(controller="sacbf", horizon=0.3)
    trace_a = run_scenario(config)
    trace_b = run_scenario(config)
    assert len(trace_a.steps) == 3
    for sa, sb in zip(trace_a.steps, trace_b.steps):
        assert np.array_equal(sa.input, sb.input)
        assert np.array_equal(sa.state, sb.state)
        assert sa.status == sb.status


def test_trace_contents_and_serialization():
    config = _config(controller="r_sacbf", horizon=0.3)
    trace = run_scenario(config)
    summary = trace.summary()
    assert summary["steps"] == 3
    assert "min_psi0[obstacle]" in summary
    assert "reach_time[target]" in summary
    for step in trace.steps:
        assert step.dense_t[0] == step.t
        assert np.isclose(step.dense_t[-1], step.t + config.dt)
        rec = step.chains["obstacle"]
        if step.status == "optimal":
            assert rec.m_bar is not None
            assert rec.omega is not None

    csv_text = trace_to_csv(trace)
    header = csv_text.splitlines()[0].split(",")
    assert header[:5] == ["t", "x0", "x1", "x2", "x3"]
    assert "obstacle.mbar" in header
    assert len(csv_text.splitlines()) == 4

    audit_lines = audit_to_csv(trace).splitlines()
    assert audit_lines[0] == "t,chain_id,psi_top,psi0"
    assert len(audit_lines) > 3
    assert "min_psi0[obstacle]" in summary_to_text(trace)


def test_audits_clean_on_short_run():
    config = _config(controller="sacbf", horizon=0.5)
    trace = run_scenario(config)
    report = audit_invariance(trace)
    assert report.ok
    assert report.steps_checked > 0
    dom, tube, checked = audit_bounds(trace)
    assert (dom, tube) == (0, 0)
    assert checked == len(trace.steps)


def test_heading_override():
    config = _config().with_heading(0.7)
    assert config.state[2] == 0.7
    assert config.state[0] == -3.0
