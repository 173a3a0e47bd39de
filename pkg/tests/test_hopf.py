import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpteich.calculus import PLMap, field, identity_map
from lpteich.mesh import build_disk_mesh, refine
from lpteich.hopf import (HopfError, cauchy_dbar, cauchy_transform_F, contour_integral, hopf_field,
                          hopf_from_values, pole_fit, prescribed_Fz, symmetric_derivative_residual,
                          triangle_cauchy_integrals)
from lpteich.optimizer import SolveConfig, default_test_fields, solve
from lpteich.oracle import grotzsch_problem

from _maps import random_feasible_map


@pytest.fixture(scope="module")
def graded():
    return build_disk_mesh(0.05, 0.5, -0.3)


@pytest.fixture(scope="module")
def disk():
    return build_disk_mesh(0.1)


def test_identity_field_vanishes(disk):
    hf = hopf_field(disk, identity_map(disk), 2)
    assert np.max(np.abs(hf.phi)) < 1e-14 and np.nanmax(hf.cr_residual) < 1e-12


def test_affine_stretch_constant_field():
    g = grotzsch_problem(2.0)
    hf = hopf_field(g.mesh, g.minimizer, 2)
    assert np.max(np.abs(hf.phi - 15 / 16)) < 1e-13
    assert np.nanmax(hf.cr_residual) < 1e-10


def test_reversed_map_rejected(disk):
    with pytest.raises(HopfError):
        hopf_field(disk, np.conj(disk.vertices), 2)


def test_cr_residual_first_order_for_smooth_map():
    # h(w) = w + 0.1 conj(w)^2 has Phi = 0.2 w IK, so |dPhi/dzbar| = 0.016 |w|^2 / (1 - s)^2
    errs = []
    for h in (0.1, 0.05):
        m = build_disk_mesh(h)
        z = m.vertices
        hf = hopf_field(m, PLMap(m, z + 0.1 * np.conj(z) ** 2, "prescribed"), 2)
        s = 0.04 * np.abs(z) ** 2
        exact = 0.016 * np.abs(z) ** 2 / (1 - s) ** 2
        sel = (np.abs(z) < 0.7) & ~m.boundary
        errs.append(np.median(np.abs(hf.cr_residual[sel] - exact[sel])))
    assert errs[1] <= errs[0] / 1.8


def test_cr_residual_of_polynomials_refines():
    for g in (lambda z: z, lambda z: z * z):
        res = []
        for h in (0.1, 0.05):
            m = build_disk_mesh(h)
            hf = hopf_from_values(m, g(m.centroids))
            res.append(np.nanmedian(hf.cr_residual))
        assert res[1] <= res[0] / 1.8 or res[1] < 1e-12


@given(c=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_cr_residual_of_constant_is_zero(c):
    m = build_disk_mesh(0.2, 0, 0.3)
    hf = hopf_from_values(m, np.full(m.n_triangles, c))
    assert np.nanmax(hf.cr_residual) <= 1e-12 * max(1, abs(c))


@given(seed=st.integers(0, 10 ** 6), p=st.sampled_from([1.5, 2.0, 3.0]))
def test_modulus_identity(seed, p):
    m = build_disk_mesh(0.2)
    f = random_feasible_map(m, np.random.default_rng(seed), 0.5)
    F = field(m, f)
    hf = hopf_field(m, f, p)
    amu = np.abs(F.beltrami)
    expect = F.distortion ** p * F.jacobian * amu / (1 + amu ** 2)
    np.testing.assert_allclose(np.abs(hf.phi), expect, rtol=1e-12, atol=1e-300)


def test_contour_integral_exact_for_polynomials(disk):
    hf = hopf_from_values(disk, disk.centroids * 0 + 1)
    assert abs(contour_integral(hf, 0.1, 0.5)) < 1e-12


def test_pole_fit_calibration(graded):
    c = graded.centroids
    pin = -0.3
    s = pole_fit(hopf_from_values(graded, 1 / (c - pin)), pin)
    assert abs(s.loglog_slope + 1) <= 0.1 and abs(s.laurent_coefficient - 1) <= 0.05
    d = pole_fit(hopf_from_values(graded, 1 / (c - pin) ** 2), pin)
    assert abs(d.loglog_slope + 2) <= 0.15 and abs(d.laurent_coefficient) <= 0.05
    k = pole_fit(hopf_from_values(graded, np.full(len(c), 1 - 2j)), pin)
    assert abs(k.laurent_coefficient) < 1e-10 and k.loglog_slope == pytest.approx(0, abs=1e-10)
    assert all(np.diff(s.radii) < 0)


def test_pole_fit_guards(disk):
    hf = hopf_from_values(disk, np.ones(disk.n_triangles))
    with pytest.raises(HopfError):
        pole_fit(hf, 0, [0.5, 0.4])
    with pytest.raises(HopfError):
        pole_fit(hf, 0, [0.3, 0.4, 0.5])
    with pytest.raises(HopfError):
        pole_fit(hf, 0, [0.5, 0.3, 0.15])


def test_triangle_cauchy_integral_matches_quadrature():
    corners = np.array([[0.1 + 0.05j, 0.4 + 0.1j, 0.2 + 0.35j]])
    for v in (0.9 + 0.9j, 0.2 + 0.15j, 0.25 + 0.075j, 0.1 + 0.05j):
        exact = triangle_cauchy_integrals(corners, v)[0]
        # fine barycentric midpoint rule, singularity excluded by symmetric subdivision
        n = 400
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        keep = i + j < n
        a, b = (i[keep] + 1 / 3) / n, (j[keep] + 1 / 3) / n
        z0, z1, z2 = corners[0]
        pts = z0 + a * (z1 - z0) + b * (z2 - z0)
        area = 0.5 * abs(np.imag(np.conj(z1 - z0) * (z2 - z0)))
        approx = np.sum(1 / (pts - v)) * area / keep.sum()
        tol = 1e-5 if abs(v - corners[0]).min() > 0.3 else 2e-2
        assert abs(exact - approx) <= tol * abs(exact)


def test_cauchy_transform_of_identity_is_zero(disk):
    assert np.all(cauchy_transform_F(disk, identity_map(disk), 2) == 0)


def test_cauchy_transform_of_constant_density():
    m = build_disk_mesh(0.05)
    F = cauchy_transform_F(m, None, 1.0, density=np.full(m.n_triangles, 0.7))
    inner = ~m.boundary & (np.abs(m.vertices) > 0.2)
    rel = np.abs(F[inner] - 0.7 * np.conj(m.vertices[inner])) / (0.7 * np.abs(m.vertices[inner]))
    assert rel.max() <= 0.05


@pytest.fixture(scope="module")
def solved_f():
    c = SolveConfig(p=2, pin_target=-0.3, target_edge_length=0.05)
    return solve(c)


def test_cauchy_dbar_self_consistency(solved_f):
    m, f = solved_f.map.mesh, solved_f.map
    F = cauchy_transform_F(m, f, 2)
    assert np.all(np.isfinite(F))
    dens = field(m, f).distortion ** 2 - 1
    dbar = cauchy_dbar(m, f, 2, F_vertices=F)
    err = np.sum(m.areas * np.abs(dbar - dens)) / np.sum(m.areas * np.abs(dens))
    assert err <= 0.10


def test_symmetric_derivative_residual_examples():
    m = build_disk_mesh(0.1)
    fields = default_test_fields()
    assert max(symmetric_derivative_residual(m, np.zeros(m.n_vertices), fields)) == 0
    res = []
    for h in (0.1, 0.05):
        mh = build_disk_mesh(h)
        z = mh.centroids
        r = symmetric_derivative_residual(mh, mh.vertices ** 2, fields, Fz=2 * z, Fzbar=0 * z)
        res.append(max(r))
    assert res[1] < res[0]


def test_symmetric_derivative_with_prescribed_Fz_decreases():
    vals = []
    for h in (0.1, 0.05):
        r = solve(SolveConfig(p=2, pin_target=-0.3, target_edge_length=h))
        m = r.map.mesh
        F = cauchy_transform_F(m, r.map, 2)
        dens = field(m, r.map).distortion ** 2 - 1
        fields = default_test_fields(m.pin_location)
        vals.append(symmetric_derivative_residual(m, F, fields, Fz=prescribed_Fz(m, r.map, 2), Fzbar=dens))
    assert np.all(np.array(vals[1]) < np.array(vals[0]))
