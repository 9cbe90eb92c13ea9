import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lacerec import (InvalidParameterError, PureRandomWalk, SymmetryError, SyntheticFamilySpec,
                     SyntheticTheta, TruncationError, build_uniform_box, compute_beta, fourier, gap,
                     load_xspace_model, save_xspace_model)
from lacerec.model import xspace_model_from_dict


def _k(d, n, seed=0):
    return np.random.default_rng(seed).uniform(-np.pi, np.pi, size=(n, d))


def test_pure_random_walk_coefficients():
    D = build_uniform_box(2, 2)
    m = PureRandomWalk(D)
    k = _k(2, 7)
    G = m.g_table([1, 2, 3], k, 0.9)
    assert np.allclose(G[:, 0], 0.9 * fourier(D, k))
    assert np.all(G[:, 1:] == 0)
    assert np.all(m.e_table([1, 2, 5], k, 0.9) == 0)
    assert m.g_lap([1], 1.0)[0] == pytest.approx(-D.sigma2)
    assert m.effective_order(50) == 1


def test_synthetic_closed_forms(box53):
    m = SyntheticTheta(SyntheticFamilySpec(box53, beta0=0.02, theta=2.5, beta_e=0.01))
    k = _k(5, 5)
    z = 0.97
    dh = fourier(box53, k)
    for mm in (2, 3, 10):
        w = z**mm * mm**-2.5
        assert np.allclose(m.g(mm, k, z), 0.02 * w * dh**2, rtol=1e-14)
        assert np.allclose(m.e(mm, k, z), 0.01 * w * dh**2, rtol=1e-14)
    assert m.g(1, k[0], z) == pytest.approx(z * dh[0])
    assert m.e(1, k[0], z) == 0.0


def test_synthetic_rejects_small_theta(box53):
    with pytest.raises(InvalidParameterError):
        SyntheticTheta(SyntheticFamilySpec(box53, theta=2.0))


def test_synthetic_derivatives_against_finite_differences(synth25):
    D = synth25.kernel
    ms = np.arange(1, 8)
    z = 0.99
    # Laplacian at 0 by central differences along each axis
    h = 1e-3
    fd = np.zeros(len(ms))
    for i in range(D.d):
        e = h * np.eye(D.d)[i]
        fd += (synth25.g_table(ms, e, z)[0] - 2 * synth25.g0(ms, z) + synth25.g_table(ms, -e, z)[0]) / h**2
    assert np.allclose(synth25.g_lap(ms, z), fd, rtol=1e-5, atol=1e-12)
    hz = 1e-6
    fdz = (synth25.g0(ms, z + hz) - synth25.g0(ms, z - hz)) / (2 * hz)
    assert np.allclose(synth25.g_dz(ms, z), fdz, rtol=1e-7)


@settings(max_examples=50, deadline=None)
@given(m=st.integers(2, 200), z=st.floats(0.9, 1.0),
       k=st.lists(st.floats(-np.pi, np.pi), min_size=5, max_size=5),
       beta0=st.floats(-0.05, 0.05))
def test_taylor_remainder_identity(box53, m, z, k, beta0):
    model = SyntheticTheta(SyntheticFamilySpec(box53, beta0=beta0, theta=3.0))
    k = np.array(k)
    s2 = box53.sigma2
    rem = model.g(m, k, z) - model.g0([m], z)[0] - gap(box53, k) * model.g_lap([m], z)[0] / s2
    closed = beta0 * z**m * m**-3.0 * gap(box53, k) ** 2
    assert rem == pytest.approx(closed, abs=1e-12)
    assert model.taylor_remainder(m, k, z) == pytest.approx(closed, abs=1e-15)


def test_synthetic_EG_constants_hold(box53):
    """``C_g = 2|beta0|/beta`` and ``C_e = |beta_e|/beta`` bound all four G and
    both E families for m <= 1000 and z <= 1."""
    beta0, beta_e, th = 0.01, 0.004, 3.0
    model = SyntheticTheta(SyntheticFamilySpec(box53, beta0=beta0, theta=th, beta_e=beta_e))
    beta = compute_beta(3, 5, 2)
    Cg, Ce = 2 * beta0 / beta, beta_e / beta
    ms = np.arange(2, 1001)
    mf = ms.astype(float)
    k = np.vstack([_k(5, 64, 3), np.full((1, 5), np.pi)])
    a = gap(box53, k)[:, None]
    s2 = box53.sigma2
    for z in (0.95, 0.99, 1.0):
        G = model.g_table(ms, k, z)
        E = model.e_table(ms, k, z)
        assert np.all(np.abs(G) <= Cg * beta * mf**-th * (1 + 1e-12))
        assert np.all(np.abs(model.g_lap(ms, z)) <= Cg * s2 * beta * mf ** (1 - th) * (1 + 1e-12))
        assert np.all(np.abs(model.g_dz(ms, z)) <= Cg * beta * mf ** (1 - th) * (1 + 1e-12))
        rem = np.abs(G - model.g0(ms, z) - a * model.g_lap(ms, z) / s2)
        for ep in (0.0, 0.5, 1.0):
            assert np.all(rem <= Cg * beta * a ** (1 + ep) * mf ** (1 + ep - th) + 1e-12)
        assert np.all(np.abs(E) <= Ce * beta * mf**-th * (1 + 1e-12))
        assert np.all(np.abs(E - model.e0(ms, z)) <= Ce * a * beta * mf ** (1 - th) * (1 + 1e-12))


def test_synthetic_tail_bound(synth3):
    t = synth3.tail_bound(100, 1.0)
    ms = np.arange(101, 200001)
    assert math_sum(np.abs(synth3.g0(ms, 1.0))) <= t["g"]
    assert synth3.tail_bound(100, 1.01)["g"] == float("inf")


def math_sum(x):
    import math
    return math.fsum(x)


def _tab_spec():
    return {
        "M": 5,
        "z_powers": [2, 3, 4, 5],
        "beyond": "zero",
        "g": {"2": [{"x": [1, 0], "weight": "1/100"}, {"x": [-1, 0], "weight": "1/100"},
                    {"x": [0, 1], "weight": "1/100"}, {"x": [0, -1], "weight": "1/100"}],
              "4": [{"x": [0, 0], "weight": -0.003}]},
        "e": {"3": [{"x": [0, 0], "weight": 0.002}]},
    }


def test_tabulated_model_lattice_sums():
    D = build_uniform_box(2, 1)
    m = xspace_model_from_dict(_tab_spec(), D)
    k = _k(2, 6)
    z = 0.8
    expect = 0.01 * z**2 * 2 * (np.cos(k[:, 0]) + np.cos(k[:, 1]))
    assert np.allclose(m.g(2, k, z), expect, rtol=1e-14)
    assert np.allclose(m.g(1, k, z), z * fourier(D, k))
    assert m.g_lap([2], z)[0] == pytest.approx(-0.04 * z**2)
    assert m.g_dz([2, 4], z) == pytest.approx([2 * z * 0.04, -4 * z**3 * 0.003])
    assert np.all(m.g_table([6, 9], k, z) == 0)
    assert m.e(3, k[0], z) == pytest.approx(0.002 * z**3)


def test_tabulated_roundtrip(tmp_path):
    D = build_uniform_box(2, 1)
    m = xspace_model_from_dict(_tab_spec(), D)
    p = tmp_path / "m.json"
    save_xspace_model(m, p)
    m2 = load_xspace_model(p, D)
    k = _k(2, 4)
    assert np.allclose(m.g_table(range(1, 6), k, 0.9), m2.g_table(range(1, 6), k, 0.9))


def test_tabulated_rejections():
    D = build_uniform_box(2, 1)
    spec = _tab_spec()
    spec["extra"] = 1
    with pytest.raises(InvalidParameterError):
        xspace_model_from_dict(spec, D)
    spec = _tab_spec()
    spec["g"]["2"] = spec["g"]["2"][:3]
    with pytest.raises(SymmetryError):
        xspace_model_from_dict(spec, D)
    spec = _tab_spec()
    spec["g"]["1"] = [{"x": [1, 0], "weight": 1}]
    with pytest.raises(InvalidParameterError):
        xspace_model_from_dict(spec, D)
    spec = _tab_spec()
    spec["e"]["1"] = [{"x": [0, 0], "weight": 0.1}]
    with pytest.raises(InvalidParameterError):
        xspace_model_from_dict(spec, D)


def test_truncation_error_reports_order():
    D = build_uniform_box(2, 1)
    spec = dict(_tab_spec(), beyond="undefined")
    m = xspace_model_from_dict(spec, D)
    with pytest.raises(TruncationError) as err:
        m.effective_order(6)
    assert err.value.n == 5
    assert m.effective_order(5) == 5


def test_tabulated_json_file_layout(tmp_path):
    D = build_uniform_box(2, 1)
    p = tmp_path / "m.json"
    p.write_text(json.dumps(_tab_spec()))
    m = load_xspace_model(p, D)
    assert m.max_order == 5 and m.vanishes_beyond
