import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lacerec import (IncompleteTraceError, InductionConfig, InvalidParameterError, PureRandomWalk,
                     QuadratureSpec, SyntheticFamilySpec, SyntheticTheta, build_uniform_box,
                     check_assumptions_EG, check_conv_lemma, check_fbdsp, check_H1_H4,
                     check_lemma_cA, check_lemma_fder, compute_beta, evolve, validate_config)
from lacerec.certifier import (CertificateReport, Record, certification_kset, check_intervals,
                               check_product_form, check_zeta_decay, conv_rate, conv_sum_bruteforce,
                               conv_sums, fit_constants, fit_lemma_cA, fit_lemma_fder,
                               structural_failures)

ZC_25 = 0.99663499041818232

DOC = dict(d=5, L=3, theta=2.5, epsilon=0.4, gamma=0.2, delta=0.15, lam=2.4,
           K1=5, K2=15, K3=500, K4=40, K5=400, c=1.0)


def cfg(**kw):
    return InductionConfig(**{**DOC, **kw})


def test_compute_beta_examples():
    assert compute_beta(1, 5, 1) == 1.0
    assert compute_beta(2, 4, 2) == 0.25
    assert compute_beta(3, 5, 2) == pytest.approx(0.0641500299, abs=1e-10)
    with pytest.raises(InvalidParameterError):
        compute_beta(0, 1, 1)


def test_validate_config_examples():
    rep = validate_config(cfg(theta=3.0, epsilon=0.5, gamma=0.25, delta=0.2, lam=2.8))
    assert all(r.passed for r in rep.select("agddef"))
    rep = validate_config(cfg(theta=2.5, epsilon=0.9))
    assert [r.check for r in rep.failures("eps")] == ["eps<theta-2"]
    rep = validate_config(cfg(epsilon=0.5, gamma=0.4, delta=0.2, theta=3.0, lam=2.8))
    assert [r.check for r in structural_failures(rep)] == ["agddef.delta<(1^eps)-gamma"]


def test_documented_config_orderings():
    rep = validate_config(cfg())
    assert not structural_failures(rep)
    # the documented constants do not satisfy K1 > K4' or K2 >= 3 K4'
    assert {r.check for r in rep.failures("Kcond")} == {"Kcond.K1>K4'", "Kcond.K2>=3K4'"}
    assert rep.notes["K4prime"] == 40


def test_k4prime_from_tables():
    c = cfg(C_g=[[0, 0.0], [100, 100.0]], C_e=7.0, c=2.0)
    assert c.K4prime == pytest.approx(80.0)


def test_record_tolerance():
    assert Record("x", 1, 1.0, 1.0 + 5e-13).passed
    assert not Record("x", 1, 1.0, 1.0 + 1e-9).passed
    assert not Record("x", 1, 1.0, 1.0, strict=True).passed
    assert Record("x", 1, 0.0, 1e-301).passed


def test_report_outputs(tmp_path):
    rep = CertificateReport()
    rep.add("H1", 1, 1.0, 0.5)
    rep.add("H1", 2, 1.0, 2.0, k=[0.1, 0.2])
    s = rep.summary()
    assert s["failures"] == 1 and s["first_failure"]["index"] == 2
    assert s["worst_margin"]["margin"] == -1.0
    rep.write_json(tmp_path / "r.json")
    rep.write_csv(tmp_path / "r.csv")
    data = json.loads((tmp_path / "r.json").read_text())
    assert data["records"][1]["k"] == [0.1, 0.2]
    assert (tmp_path / "r.csv").read_bytes().startswith(b"check,index,k,bound,actual,margin,pass\r\n")


@pytest.fixture(scope="module")
def rw_trace():
    D = build_uniform_box(2, 1)
    return evolve(PureRandomWalk(D), 1.0, certification_kset(D, 24), 100), D


def test_pure_rw_hypotheses(rw_trace):
    tr, D = rw_trace
    c = cfg(d=2, L=1, K4=2**(2.4 + 1), K5=2**(2.4 + 1) * 10)
    rep = check_H1_H4(tr, D, c)
    for r in rep.select("H1") + rep.select("H3"):
        assert r.actual <= 1e-15 and r.margin == pytest.approx(r.bound, abs=1e-15)
    assert not rep.failures("H4.f")
    assert rep.notes["coverage"]["H3_pairs"] + rep.notes["coverage"]["H4_pairs"] \
        == rep.notes["coverage"]["pairs"]
    assert not rep.notes["coverage_warnings"]


def test_pure_rw_lemmas(rw_trace):
    tr, D = rw_trace
    c = cfg(d=2, L=1)
    assert check_lemma_cA(tr, D, c, 0.0).passed
    assert fit_lemma_cA(tr, c) == 0.0
    fd = check_lemma_fder(tr, c, 0.0)
    assert fd.passed and all(abs(r.margin) <= 1e-9 * r.bound for r in fd.records)
    assert fit_lemma_fder(tr, c) == pytest.approx(0.0, abs=1e-12)
    m09 = evolve(PureRandomWalk(D), 0.9, np.zeros((1, 2)), 50)
    assert check_lemma_fder(m09, c, 0.0).passed


def test_adversarial_trace_fails_cA():
    D = build_uniform_box(2, 3)
    bad = evolve(PureRandomWalk(D), 1.0, certification_kset(D, 24), 100)
    bad.f[:] = 1.0
    c = cfg(d=2, L=3)
    C = 1e-3
    slope = 1 - C * (c.K2 + c.K3) * c.beta
    rep = check_lemma_cA(bad, D, c, C)
    assert rep.failures()
    for r in rep.records:
        idx = int(np.flatnonzero(np.all(bad.kset == r.k, axis=1))[0])
        above = slope * r.index * bad.a[idx] > C * c.K3 * c.beta * (1 + 1e-9)
        assert r.passed != above


def test_fbdsp_pure_rw(rw_trace):
    tr, D = rw_trace
    c = cfg(d=2, L=1, p_list=(1.0,), pstar=2.0)
    rep = check_fbdsp(tr, D, c, K=1.5, n=20, spec=QuadratureSpec(nodes=64))
    assert rep.passed
    lap = rep.select("fbdsp.lap")
    assert all(r.margin == pytest.approx(0.5 * D.sigma2 * r.index) for r in lap)
    assert rep.select("fbdsp.f0")[3].actual == 1.0


def test_fbdsp_requires_hessian(rw_trace):
    tr, D = rw_trace
    broken = evolve(PureRandomWalk(D), 1.0, tr.kset[:2], 5)
    broken.lap = None
    with pytest.raises(IncompleteTraceError):
        check_fbdsp(broken, D, cfg(d=2, L=1), 2.0, 5)


def test_EG_pure_rw_trivial():
    D = build_uniform_box(2, 2)
    rep = check_assumptions_EG(PureRandomWalk(D), 1.0, cfg(d=2, L=2), 0.0, 0.0, 20,
                               certification_kset(D, 8), [0.0])
    assert rep.passed
    assert all(r.actual == 0 for r in rep.records)


def test_EG_synthetic(synth3):
    c = cfg(theta=3.0)
    Cg = 2 * 0.01 / c.beta
    k = certification_kset(synth3.kernel, 16)
    rep = check_assumptions_EG(synth3, 0.998, c, 0.0, Cg, 100, k, [0.0, 0.4])
    assert rep.passed
    rep = check_assumptions_EG(synth3, 0.998, c, 0.0, 0.3 * Cg, 100, k, [0.0])
    assert rep.failures("G.i") and rep.failures("G.ii")
    with pytest.raises(InvalidParameterError):
        check_assumptions_EG(synth3, 1.0, c, 0.0, Cg, 10, k, [0.9])


def test_synthetic_small_beta_sweep(synth25):
    c = cfg()
    tr = evolve(synth25, ZC_25, certification_kset(synth25.kernel), 200)
    rep = check_H1_H4(tr, synth25.kernel, c)
    assert rep.passed
    assert check_lemma_cA(tr, synth25.kernel, c, 10.0).passed
    assert check_lemma_fder(tr, c, 10.0).passed
    assert check_product_form(tr, c).passed
    fitted = fit_constants(rep, c)
    assert set(fitted) == {"K1", "K2", "K3", "K4", "K5"}
    assert all(fitted[k] < getattr(c, k) for k in fitted)
    # shrinking a constant below its fit makes that family fail
    rep2 = check_H1_H4(tr, synth25.kernel, c.replace(K3=0.5 * fitted["K3"]))
    assert rep2.failures("H3")


@settings(max_examples=25, deadline=None)
@given(scale=st.lists(st.floats(1.0, 10.0), min_size=5, max_size=5))
def test_monotone_in_K(rw_trace, scale):
    tr, D = rw_trace
    c0 = cfg(d=2, L=1, K1=1e-3, K2=1e-3, K3=1e-3, K4=1.0, K5=1.0)
    c1 = c0.replace(**{f"K{i + 1}": getattr(c0, f"K{i + 1}") * s for i, s in enumerate(scale)})
    r0 = check_H1_H4(tr, D, c0).records
    r1 = check_H1_H4(tr, D, c1).records
    assert len(r0) == len(r1)
    assert all(b.passed for a, b in zip(r0, r1) if a.passed)


def test_zeta_decay(synth3):
    assert check_zeta_decay(synth3, 50, 500).passed


def test_intervals(synth25):
    tr = evolve(synth25, ZC_25, np.zeros((1, 5)), 200)
    assert check_intervals(tr, cfg()).passed


def test_conv_examples():
    S = conv_sums(3, 3, 10)
    assert S[10] == pytest.approx(conv_sum_bruteforce(3, 3, 10), rel=1e-14)
    assert conv_rate(3, 3) == ("a,b>2", 3)
    assert conv_rate(1.5, 1.5) == ("a,b>1", 0.5)
    assert conv_rate(2.5, 1.5) == ("a>2,b>1", 1.5)
    assert conv_rate(2.2, 0.5) == ("a>2,b>0", pytest.approx(0.2))
    with pytest.raises(InvalidParameterError):
        conv_rate(1.0, 3.0)


def test_conv_lemma_report():
    rep = check_conv_lemma(3, 3, 2000)
    assert rep.passed
    assert rep.notes["conv.case"] == "a,b>2"
    assert math.isfinite(rep.notes["conv.sup"])
