import numpy as np
import pytest
from hypothesis import given, strategies as st

from lpteich.calculus import (CalculusError, PLMap, beltrami, distortion, field, identity_map, load_plmap,
                              save_plmap, wirtinger)
from lpteich.mesh import build_annulus_mesh, build_disk_mesh, build_rectangle_mesh

finite = st.floats(-3, 3, allow_nan=False)
cplx = st.builds(complex, finite, finite)


@pytest.fixture(scope="module")
def disk():
    return build_disk_mesh(0.15)


def test_wirtinger_examples():
    m = build_rectangle_mesh(1, 1, 0.5)
    z = m.vertices
    for w, expect in ((z, (1, 0)), (np.conj(z), (0, 1)), (2 * z.real + 1j * z.imag, (1.5, 0.5))):
        for t in range(m.n_triangles):
            fz, fzb = wirtinger(m, w, t)
            assert abs(fz - expect[0]) < 1e-13 and abs(fzb - expect[1]) < 1e-13


def test_distortion_examples():
    assert distortion(1, 0) == 1
    assert abs(distortion(1.5, 0.5) - 1.25) < 1e-15
    assert distortion(0, 0) == 1
    assert distortion(0.5, 1.0) == np.inf


def test_beltrami_examples():
    assert beltrami(1, 0) == 0
    assert abs(beltrami(1.5, 0.5) - 1 / 3) < 1e-15
    assert abs(beltrami(1, 1)) == 1
    with pytest.raises(CalculusError):
        beltrami(0, 1)


def test_identity_field(disk):
    F = field(disk, identity_map(disk))
    assert np.allclose(F.distortion, 1) and np.allclose(F.beltrami, 0) and np.allclose(F.jacobian, 1)


def test_reflection_is_flagged(disk):
    F = field(disk, np.conj(disk.vertices))
    assert np.allclose(F.jacobian, -1)
    assert F.reversed.all()
    assert np.all(np.isinf(F.distortion))


def test_radial_stretch_converges_first_order():
    errs = []
    for h in (0.1, 0.05):
        m = build_annulus_mesh(0.5, 1.0, h)
        F = field(m, np.abs(m.vertices) * m.vertices)
        errs.append(np.max(np.abs(F.distortion - 1.25)))
    assert errs[1] < errs[0] / 1.8


@pytest.mark.parametrize("a", [1, 2, 5, 1 / 3])
def test_affine_stretch_distortion_exact(a):
    m = build_rectangle_mesh(1, 1, 0.25)
    F = field(m, a * m.vertices.real + 1j * m.vertices.imag)
    np.testing.assert_allclose(F.distortion, (a * a + 1) / (2 * a), rtol=1e-13)


def test_plmap_validation(disk):
    w = disk.vertices.copy()
    w[np.flatnonzero(disk.boundary)[0]] += 0.01
    with pytest.raises(CalculusError):
        PLMap(disk, w, "identity")
    with pytest.raises(CalculusError):
        PLMap(disk, disk.vertices[:-1])


def test_plmap_roundtrip(tmp_path):
    m = build_disk_mesh(0.2, 0, -0.3)
    w = m.vertices.copy()
    w[~m.boundary] *= 0.9
    pm = PLMap(m, w, "identity", w[m.pinned_index])
    save_plmap(pm, tmp_path / "w.txt")
    back = load_plmap(tmp_path / "w.txt", m)
    assert np.array_equal(back.images, pm.images)
    assert back.boundary_condition == "identity" and back.pin_target == pm.pin_target


@given(fz=cplx, fzb=cplx)
def test_distortion_matches_beltrami_form(fz, fzb):
    if abs(fz) ** 2 - abs(fzb) ** 2 <= 1e-6 * (abs(fz) ** 2 + 1e-300):
        return
    mu = fzb / fz
    expect = (1 + abs(mu) ** 2) / (1 - abs(mu) ** 2)
    assert abs(distortion(fz, fzb) - expect) <= 1e-9 * expect


@given(fz=cplx, fzb=cplx)
def test_distortion_conjugation_invariant(fz, fzb):
    assert distortion(np.conj(fz), np.conj(fzb)) == distortion(fz, fzb)


@given(theta=st.floats(0, 2 * np.pi), eps=st.floats(-0.3, 0.3))
def test_distortion_rotation_invariant(theta, eps):
    m = build_disk_mesh(0.25)
    z = m.vertices
    w = z + eps * np.conj(z) ** 2 / 2
    K1 = field(m, w).distortion
    K2 = field(m, np.exp(1j * theta) * w).distortion
    ok = np.isfinite(K1)
    np.testing.assert_allclose(K2[ok], K1[ok], rtol=1e-12)
