import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lpteich.calculus import field
from lpteich.energy import Functional
from lpteich.mesh import build_disk_mesh
from lpteich.optimizer import (ROUNDOFF, BumpField, LineSearchFailure, OptimizerSettings, SolveConfig,
                               SolveError, default_test_fields, initial_map, inner_variation_residual,
                               line_search, mobius, sample_test_field, solve)

from _maps import random_feasible_map


def cfg(**kw):
    kw.setdefault("target_edge_length", 0.1)
    return SolveConfig(**kw)


@pytest.fixture(scope="module")
def pinned():
    c = cfg(p=2, pin_target=-0.3)
    return c, solve(c)


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(pin_target=1.0)
    with pytest.raises(ValueError):
        SolveConfig(optimizer=OptimizerSettings(gradient_tolerance=0))
    with pytest.raises(ValueError):
        SolveConfig(side="sideways")
    with pytest.raises(SolveError):
        solve(SolveConfig(p=1.0))


def test_pin_zero_gives_identity():
    r = solve(cfg(p=2))
    assert abs(r.energy.value - 1) < 1e-8
    assert np.max(np.abs(r.map.images - r.map.mesh.vertices)) < 1e-12
    assert r.converged


def test_initial_map_at_zero_is_identity():
    c = cfg()
    m = c.build_mesh()
    assert np.array_equal(initial_map(c, m).images, m.vertices)


def test_pinned_solve(pinned):
    c, r = pinned
    assert r.converged and r.energy.value > 1
    assert r.energy.gradient_norm <= c.optimizer.gradient_tolerance
    assert r.min_jacobian > 0
    tr = np.array(r.trace)
    assert np.all(np.isfinite(tr))
    assert np.all(np.diff(tr) <= ROUNDOFF * np.abs(tr[:-1]))
    assert tr[-1] < tr[0]
    k = r.map.mesh.pinned_index
    assert r.map.images[k] == -0.3


def test_report_json_roundtrip(pinned):
    import json
    _, r = pinned
    d = json.loads(r.dumps())
    assert d["converged"] is True and d["energy"]["value"] == r.energy.value


def test_mobius():
    assert mobius(0, 0.3) == 0.3
    z = np.exp(1j * np.linspace(0, 6, 7))
    assert np.allclose(np.abs(mobius(z, 0.4 - 0.2j)), 1)


def test_line_search_rejects_flipping_step():
    m = build_disk_mesh(0.2)
    f = Functional(m, "power", 2)
    w = m.vertices.copy()
    k = m.find_vertex(0j)
    w[k] = 0.05
    f0, g = f.value_and_grad(w)
    d = np.zeros_like(w)
    d[k] = -g[k] / abs(g[k]) * 0.5  # far enough to fold the star of vertex k
    assert not f.feasible(w + d)
    t, trial, f1, _ = line_search(f, w, f0, g, d)
    assert t < 1 and f.feasible(trial) and f1 < f0


def test_line_search_failures():
    m = build_disk_mesh(0.2)
    f = Functional(m, "power", 2)
    w = m.vertices.copy()
    k = m.find_vertex(0j)
    w[k] = 0.05
    f0, g = f.value_and_grad(w)
    with pytest.raises(LineSearchFailure, match="descent"):
        line_search(f, w, f0, g, g)
    d = np.zeros_like(w)
    d[k] = -g[k] / abs(g[k]) * 0.5
    with pytest.raises(LineSearchFailure, match="underflow"):
        line_search(f, w, f0, g, d, min_step=0.9)


def test_test_field_vanishing_rules():
    m = build_disk_mesh(0.1, 0, -0.3)
    with pytest.raises(ValueError):
        sample_test_field(m, BumpField(hole=0.5, inner=0.0, outer=0.3))
    vals = sample_test_field(m, BumpField(hole=-0.3))
    assert np.all(vals[m.boundary] == 0)


def test_inner_variation_identity_is_small():
    m = build_disk_mesh(0.1)
    res = inner_variation_residual(m, m.vertices, 2, default_test_fields())
    assert max(res) < 1e-10


def test_inner_variation_of_initial_map_is_large(pinned):
    c, r = pinned
    start = initial_map(c, r.map.mesh)
    r0 = inner_variation_residual(r.map.mesh, start, 2, default_test_fields(r.map.mesh.pin_location))
    assert min(np.array(r0) / np.array(r.inner_variation_residuals)) > 10


def test_conjugation_symmetry(pinned):
    c, r = pinned
    m = r.map.mesh
    z, w = m.vertices, r.map.images
    order = {complex(np.round(v, 10)): i for i, v in enumerate(z)}
    partner = np.array([order.get(complex(np.round(np.conj(v), 10)), -1) for v in z])
    assert np.all(partner >= 0)
    assert np.max(np.abs(w[partner] - np.conj(w))) <= 10 * c.optimizer.gradient_tolerance


@pytest.mark.parametrize("theta", [0.7, 2.0])
def test_rotation_equivariance(pinned, theta):
    c, r = pinned
    rot = np.exp(1j * theta)
    mr = r.map.mesh.rotated(theta)
    rr = solve(SolveConfig(p=2, pin_target=-0.3 * rot, target_edge_length=0.1), mesh=mr)
    assert rr.converged
    assert np.max(np.abs(rr.map.images - rot * r.map.images)) < 1e-6


def test_inverse_side_pins_mesh_not_image():
    c = cfg(p=2, pin_target=-0.3, side="inverse")
    r = solve(c)
    m = r.map.mesh
    assert m.pin_location == -0.3 and r.map.images[m.pinned_index] == 0
    assert r.converged


def test_exponential_solve_converges():
    r = solve(cfg(kind="exponential", p=1, pin_target=-0.3))
    assert r.converged and np.isfinite(r.energy.value)


@settings(max_examples=50)
@given(seed=st.integers(0, 2 ** 31), p=st.floats(1.2, 4.0), t=st.floats(-0.4, 0.4),
       amp=st.floats(0.0, 0.3))
def test_descent_over_random_instances(seed, p, t, amp):
    c = SolveConfig(p=p, pin_target=t, target_edge_length=0.25, seed=seed, perturbation=amp,
                    optimizer=OptimizerSettings(max_iterations=40))
    r = solve(c)
    tr = np.array(r.trace)
    assert np.all(np.isfinite(tr))
    steps = np.diff(tr)
    assert np.all((steps < 0) | (np.abs(steps) <= ROUNDOFF * np.abs(tr[:-1])))
    assert tr[-1] <= tr[0] and r.min_jacobian > 0
