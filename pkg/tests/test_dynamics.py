"""Unit tests for the system models and input boxes."""

import numpy as np
import pytest

from sacbf.dynamics import (DimensionError, InputBox, eval_field, from_fields,
                            make_unicycle)
from sacbf.numdiff import central_dt, central_grad, central_jac


def test_unicycle_field_values():
    model = make_unicycle()
    x = np.array([1.0, -2.0, np.pi / 3, 2.0])
    u = np.array([0.5, -1.0])
    field = eval_field(model, x, u, 0.0)
    expected = np.array([2.0 * np.cos(np.pi / 3), 2.0 * np.sin(np.pi / 3),
                         0.5, -1.0])
    assert np.allclose(field, expected, atol=1e-12)


def test_unicycle_jacobians_match_finite_differences():
    model = make_unicycle()
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.normal(0.0, 2.0, 4)
        t = rng.uniform(0.0, 5.0)
        jac_fd = central_jac(lambda s: model.drift(s, t), x)
        assert np.allclose(model.drift_jac_x(x, t), jac_fd, atol=1e-7)
        gjac_fd = central_jac(lambda s: model.actuation(s, t), x)
        assert np.allclose(model.actuation_jac_x(x, t), gjac_fd, atol=1e-7)
        assert np.allclose(model.drift_dt(x, t),
                           central_dt(lambda s: model.drift(x, s), t),
                           atol=1e-7)


def test_from_fields_fills_missing_oracles():
    def drift(x, t):
        return np.array([np.sin(x[1]) + t, x[0] ** 2])

    def actuation(x, t):
        return np.array([[1.0], [x[0]]])

    model = from_fields(2, 1, drift, actuation)
    x = np.array([0.7, -0.3])
    jac = model.drift_jac_x(x, 1.0)
    expected = np.array([[0.0, np.cos(-0.3)], [1.4, 0.0]])
    assert np.allclose(jac, expected, atol=1e-6)
    assert np.allclose(model.drift_dt(x, 1.0), np.array([1.0, 0.0]),
                       atol=1e-6)
    # The actuation Jacobian tensor has shape (n, q, n).
    gx = model.actuation_jac_x(x, 0.0)
    assert gx.shape == (2, 1, 2)
    assert np.isclose(gx[1, 0, 0], 1.0, atol=1e-6)


def test_dimension_checks():
    model = make_unicycle()
    with pytest.raises(DimensionError):
        model.check_state(np.zeros(3))
    with pytest.raises(DimensionError):
        model.check_input(np.zeros(3))


def test_input_box_vertices_and_clip():
    box = InputBox((-1.0, -2.0), (1.0, 3.0))
    verts = box.vertices()
    assert verts.shape == (4, 2)
    # Every corner combination appears exactly once.
    expected = {(-1.0, -2.0), (-1.0, 3.0), (1.0, -2.0), (1.0, 3.0)}
    assert {tuple(v) for v in verts} == expected
    assert np.allclose(box.clip([5.0, -7.0]), [1.0, -2.0])
    assert box.contains([0.0, 0.0])
    assert not box.contains([0.0, 3.5])


def test_input_box_validation():
    with pytest.raises(ValueError):
        InputBox((1.0,), (0.0,))
    with pytest.raises(DimensionError):
        InputBox((0.0, 0.0), (1.0,))
