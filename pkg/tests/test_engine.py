import csv

import numpy as np
import pytest

from lacerec import (NoConvergenceError, PureRandomWalk, RatioBreakdownError, SyntheticFamilySpec,
                     SyntheticTheta, TruncationError, build_uniform_box, constants_Av,
                     critical_point, evolve, evolve_hessian, evolve_values, extract_r, extract_s,
                     fourier, intervals, reconstruct_from_s, susceptibility, velocity_sequences,
                     write_trace_csv, zeta, zn_sequence)
from lacerec.model import xspace_model_from_dict

# Reference values from an independent high-precision solve with the
# polylogarithm closed forms: sum_{m>=2} z^m m^-s = Li_s(z) - z.
ZC_25 = 0.99663499041818232
ZC_3 = 0.99799225707451254
A_25, V_25 = 0.98933152559989004, 0.99266063566312798
A_3, V_3 = 0.99570178784381428, 0.99770090106425292
A_25_E = 0.99099608063150901  # beta_e = 0.005


def test_pure_rw_examples():
    D = build_uniform_box(1, 1)
    m = PureRandomWalk(D)
    tr = evolve(m, 0.9, [[0.0]], 5)
    assert np.allclose(tr.f0, 0.9 ** np.arange(6), rtol=1e-15)
    tr = evolve(m, 1.0, [[np.pi / 2]], 4)
    idx = tr.k_index([np.pi / 2])
    assert np.all(np.abs(tr.f[idx, 1:]) < 1e-15)
    assert tr.f[idx, 0] == 1.0


def test_evolve_adds_origin_and_invariants(synth3):
    k = np.random.default_rng(0).uniform(-1, 1, size=(4, 5))
    tr = evolve(synth3, 0.98, k, 10)
    assert np.all(tr.kset[tr.zero_index] == 0)
    assert np.all(tr.f[:, 0] == 1.0)
    assert np.allclose(tr.f[:, 1], 0.98 * fourier(synth3.kernel, tr.kset), rtol=1e-15)
    assert tr.b[1] == pytest.approx(0.98) and tr.c[1] == 0 and tr.v[1] == pytest.approx(0.98)
    assert np.array_equal(tr.v, tr.b / (1 + tr.c))


def test_synthetic_hand_unrolled(synth3):
    f = evolve_values(synth3, 1.0, np.zeros((1, 5)), 3)[0]
    assert f[2] == pytest.approx(1.00125, rel=1e-15)
    assert f[3] == pytest.approx(f[2] + 0.00125 + 0.01 / 27, rel=1e-15)


def test_hessian_examples():
    for L, s2 in ((1, 1.0), (2, 2.5)):
        lap = evolve_hessian(PureRandomWalk(build_uniform_box(1, L)), 1.0, 30)
        assert lap[0] == 0
        assert np.allclose(lap, -s2 * np.arange(31), rtol=1e-14)


def test_zn_examples(synth3):
    assert np.all(zn_sequence(PureRandomWalk(build_uniform_box(2, 1)), 20) == 1.0)
    zs = zn_sequence(synth3, 3000)
    assert zs[0] == zs[1] == 1.0
    assert zs[2] == pytest.approx(0.99875, abs=1e-16)
    assert zs[-1] == pytest.approx(ZC_3, abs=1e-12)


def test_critical_point(synth3, synth25):
    cp = critical_point(PureRandomWalk(build_uniform_box(1, 1)), 100)
    assert cp.z_N == 1.0 and cp.error_bound == 0.0 and cp.converged
    for model, zc in ((synth3, ZC_3), (synth25, ZC_25)):
        cp = critical_point(model, 3000, tol=1e-10)
        assert cp.converged
        assert abs(cp.z_N - zc) <= max(cp.error_bound, 1e-13)


def test_critical_point_negative_beta_above_one(box53):
    m = SyntheticTheta(SyntheticFamilySpec(box53, beta0=-0.01, theta=3.0))
    zs = zn_sequence(m, 400)
    assert zs[-1] > 1.0


def test_no_convergence_error(box53):
    class Harmonic(SyntheticTheta):
        """z-independent coefficients 1e-3/m: increments of z_n decay like 1/n."""

        def g0(self, ms, z):
            ms = np.asarray(ms)
            return np.where(ms == 1, z, 1e-3 / ms)

    m = Harmonic(SyntheticFamilySpec(box53, beta0=0.01, theta=3.0))
    with pytest.raises(NoConvergenceError):
        critical_point(m, 500)


def test_diverging_sequence_is_no_convergence(box53):
    m = SyntheticTheta(SyntheticFamilySpec(box53, beta0=-0.01, theta=2.5))
    with pytest.raises(NoConvergenceError):
        critical_point(m, 3000)


def test_zeta_examples():
    m = PureRandomWalk(build_uniform_box(2, 1))
    assert all(zeta(m, 1.0, n) == 0 for n in range(1, 6))
    assert zeta(m, 0.95, 4) == pytest.approx(-0.05)
    assert zeta(m, 1.0, 0) == -1.0


def test_constants_pure_rw():
    C = constants_Av(PureRandomWalk(build_uniform_box(2, 2)), 1.0)
    assert C.A == 1.0 and C.v == 1.0 and C.residuals["critical"] == 0.0


@pytest.mark.parametrize("theta,beta_e,zc,A,v", [
    (2.5, 0.0, ZC_25, A_25, V_25),
    (3.0, 0.0, ZC_3, A_3, V_3),
    (2.5, 0.005, ZC_25, A_25_E, V_25),
])
def test_constants_against_series_oracle(box53, theta, beta_e, zc, A, v):
    m = SyntheticTheta(SyntheticFamilySpec(box53, beta0=0.01, theta=theta, beta_e=beta_e))
    C = constants_Av(m, zc, M_max=100_000, tail_tol=1e-10)
    tol = 10 * C.residuals["tail_mg"] + 1e-13
    assert C.A == pytest.approx(A, abs=tol)
    assert C.v == pytest.approx(v, abs=tol)
    assert abs(C.residuals["critical"]) < 1e-12
    # the product form of A agrees with the ratio of sums
    assert abs(C.residuals["A_difference"]) < 1e-8


def test_susceptibility_examples(synth3):
    s = susceptibility(PureRandomWalk(build_uniform_box(1, 1)), 0.5, 200)
    assert s.chi_N == pytest.approx(2.0, rel=1e-14) and s.closed_form == pytest.approx(2.0)
    s = susceptibility(PureRandomWalk(build_uniform_box(1, 1)), 0.99, 2000)
    assert s.chi_N == pytest.approx(100.0, abs=1e-6)
    s = susceptibility(synth3, 0.99, 4000)
    assert s.gap < 1e-10


def test_truncation_error_names_order():
    D = build_uniform_box(2, 1)
    spec = {"M": 3, "z_powers": [2, 3], "beyond": "undefined",
            "g": {"2": [{"x": [0, 0], "weight": 0.01}]}}
    m = xspace_model_from_dict(spec, D)
    with pytest.raises(TruncationError) as err:
        evolve(m, 1.0, [[0.0, 0.0]], 10)
    assert err.value.n == 3


def test_r_and_s_pure_rw():
    m = PureRandomWalk(build_uniform_box(2, 2))
    k = [[0.3, -0.2], [1.0, 0.5]]
    tr = evolve(m, 1.0, k, 40)
    for kk in k:
        assert np.allclose(extract_r(tr, kk)[1:], 0.0, atol=1e-14)
        assert np.allclose(extract_s(tr, kk)[1:], 0.0, atol=1e-14)
    tr = evolve(m, 0.9, k, 10)
    assert np.allclose(extract_r(tr, [0.0, 0.0])[1:], -0.1, atol=1e-15)


def test_ratio_breakdown():
    m = PureRandomWalk(build_uniform_box(1, 1))
    tr = evolve(m, 1.0, [[np.pi / 2]], 5)
    tr.f[1, 1:] = 0.0
    with pytest.raises(RatioBreakdownError) as err:
        extract_r(tr, [np.pi / 2])
    assert err.value.n == 2


def test_product_reconstruction(synth25):
    k = np.random.default_rng(2).uniform(-0.3, 0.3, size=(8, 5))
    tr = evolve(synth25, ZC_25, k, 300)
    for i in range(len(tr.kset)):
        rebuilt = reconstruct_from_s(tr, i)
        assert np.allclose(rebuilt, tr.f[i], rtol=1e-10, atol=0)


def test_r0_decay_rate(synth3):
    tr = evolve(synth3, ZC_3, np.zeros((1, 5)), 200)
    r0 = np.abs(extract_r(tr, 0))
    # z_c < 1 adds a factor z_c^n, visible beyond n ~ 1/(1 - z_c); fit before it
    n = np.arange(10, 101)
    slope = np.polyfit(np.log(n), np.log(r0[n]), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.2)


def test_v_is_cauchy(synth25):
    seq = velocity_sequences(synth25, ZC_25, 4000)
    dv = np.abs(np.diff(seq["v"]))
    n = np.arange(400, 4001)
    slope = np.polyfit(np.log(n), np.log(dv[n - 1]), 1)[0]
    assert slope <= -(2.5 - 2) + 0.1


def test_nested_intervals(synth25):
    zs = zn_sequence(synth25, 200)
    I = intervals(zs, 5.0, 3.0**-2.5, 2.5)
    assert np.all(I[2:, 0] >= I[1:-1, 0]) and np.all(I[2:, 1] <= I[1:-1, 1])


def test_compensated_mode_agrees(synth25):
    k = np.random.default_rng(5).uniform(-1, 1, size=(3, 5))
    a = evolve_values(synth25, 0.99, k, 300)
    b = evolve_values(synth25, 0.99, k, 300, compensated=True)
    assert np.allclose(a, b, rtol=1e-12)


def test_trace_csv(tmp_path, synth3):
    tr = evolve(synth3, 1.0, [[0.1, 0, 0, 0, 0]], 3)
    p = tmp_path / "t.csv"
    write_trace_csv(tr, p, tmp_path / "k.csv")
    raw = p.read_bytes()
    assert b"\r\n" in raw
    rows = list(csv.reader(p.open(newline="")))
    assert rows[0] == ["n", "k_index", "f", "lap_f", "b", "c", "v", "z_n", "zeta"]
    assert len(rows) == 1 + 4 * 2
    assert float(rows[1][2]) == 1.0
