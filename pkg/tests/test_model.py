"""Parameters, phase points and the functional catalogue."""

import numpy as np
import pytest

from eppsvi.model import (
    ANTISYMMETRIC,
    FUNCTIONAL_NAMES,
    Functional,
    INTERIOR,
    MINUS_RAY,
    OscillatorParams,
    PLUS_RAY,
    PhasePoint,
    SYMMETRIC,
    drift,
    get_functional,
    reflect,
    region_code,
    region_name,
    symmetrize,
)


def test_params_validation():
    OscillatorParams(1.0, 2.0, 0.5)
    for bad in ((0.0, 1, 1), (1, -1, 1), (1, 1, float("nan")), (1, 1, float("inf"))):
        with pytest.raises(ValueError):
            OscillatorParams(*bad)


def test_sigma_y():
    assert OscillatorParams(0.5, 1.0, 1.0).sigma_y == 1.0
    assert np.isclose(OscillatorParams(2.0, 1.0, 1.0).sigma_y, 0.5)


def test_region_names_roundtrip():
    for code in (INTERIOR, PLUS_RAY, MINUS_RAY):
        assert region_code(region_name(code)) == code
    with pytest.raises(ValueError):
        region_code("nowhere")


def test_phase_point_validation():
    p = OscillatorParams(1, 1, 1)
    PhasePoint(0.3, 0.5).validate(p)
    PhasePoint(0.7, 1.0, "plus-ray").validate(p)
    PhasePoint(-0.7, -1.0, "minus-ray").validate(p)
    with pytest.raises(ValueError):
        PhasePoint(-0.1, 1.0, "plus-ray")  # wrong velocity sign
    with pytest.raises(ValueError):
        PhasePoint(0.1, -1.0, "minus-ray")
    with pytest.raises(ValueError):
        PhasePoint(0.0, 1.5).validate(p)  # outside the strip
    with pytest.raises(ValueError):
        PhasePoint(0.5, 0.5, "plus-ray").validate(p)  # ray needs z = Y
    with pytest.raises(ValueError):
        PhasePoint(0.0, 0.0, "elsewhere")


def test_drift():
    p = OscillatorParams(2.0, 3.0, 1.0)
    assert drift(p, PhasePoint(0.5, -0.25)) == -(2.0 * 0.5 + 3.0 * -0.25)


def test_reflect_is_involution_and_swaps_rays():
    q = PhasePoint(0.7, 1.0, "plus-ray")
    m = reflect(q)
    assert (m.y, m.z, m.region) == (-0.7, -1.0, "minus-ray")
    back = reflect(m)
    assert (back.y, back.z, back.region) == (q.y, q.z, q.region)
    assert reflect(PhasePoint(0.1, -0.2)).region == "interior"


def _mirror_values(f, y, z, r):
    return f.eval(-y, -z, -r)


def test_catalogue_symmetry_tags():
    """Every declared tag is verified numerically under (y,z) -> (-y,-z)."""
    rng = np.random.default_rng(7)
    y = rng.normal(size=200) * 2.0
    z = rng.uniform(-1.0, 1.0, size=200)
    r = rng.integers(-1, 2, size=200)
    for name in FUNCTIONAL_NAMES:
        f = get_functional(name)
        vals = f(y, z, r)
        mirr = _mirror_values(f, y, z, r)
        if f.symmetry == SYMMETRIC:
            assert np.allclose(mirr, vals, atol=1e-12), name
        elif f.symmetry == ANTISYMMETRIC:
            assert np.allclose(mirr, -vals, atol=1e-12), name


def test_yz3_plus_y3_is_not_odd():
    """y z^3 is even under the mirror map, so yz^3 + y^3 is mixed."""
    f = get_functional("yz3_plus_y3")
    assert f.symmetry not in (SYMMETRIC, ANTISYMMETRIC)
    assert f(2.0, 0.5, 0) == 2.0 * 0.125 + 8.0
    # mirror value differs from both +f and -f
    v, m = float(f(1.0, 0.5, 0)), float(_mirror_values(f, 1.0, 0.5, 0))
    assert abs(m - v) > 0.1 and abs(m + v) > 0.1


def test_symmetrize_recombines():
    rng = np.random.default_rng(3)
    y = rng.normal(size=50)
    z = rng.uniform(-1, 1, size=50)
    r = np.zeros(50, dtype=int)
    for name in ("y_plus_y2", "yz3_plus_y3", "plastic_plus"):
        f = get_functional(name)
        s = symmetrize(f)
        total = s.f_sym(y, z, r) + s.f_asym(y, z, r)
        assert np.allclose(total, f(y, z, r), atol=1e-12)
        assert np.allclose(s.f_sym(y, z, r), _mirror_values(s.f_sym, y, z, r))
        assert np.allclose(s.f_asym(y, z, r), -_mirror_values(s.f_asym, y, z, r))


def test_plastic_indicator_uses_region_not_coordinates():
    f = get_functional("plastic_plus")
    assert float(f(0.5, 1.0, PLUS_RAY)) == 1.0
    assert float(f(0.5, 1.0, INTERIOR)) == 0.0
    assert float(f(-0.5, -1.0, MINUS_RAY)) == 0.0


def test_mirrored_functional():
    f = get_functional("plastic_plus").mirrored()
    # the mirror of the plus-ray indicator is the minus-ray indicator
    assert float(f(-0.5, -1.0, MINUS_RAY)) == 1.0
    assert float(f(0.5, 1.0, PLUS_RAY)) == 0.0


def test_functional_validation():
    with pytest.raises(ValueError):
        Functional("bad", lambda y, z, r: y, "sideways")
    with pytest.raises(ValueError):
        Functional("bad", lambda y, z, r: y, bound=-1.0)
    with pytest.raises(ValueError):
        get_functional("not_a_functional")
