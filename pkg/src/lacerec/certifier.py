"""Numerical certificates for the hypotheses and lemmas of the inductive analysis.

Every check produces :class:`Record` objects comparing an observed quantity
with its bound.  Certificates are floating-point statements about a concrete
``(model, config, n)`` triple and a finite k set; they are not proofs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .engine import RecursionTrace
from .errors import IncompleteTraceError, InvalidParameterError
from .fitting import decade_slope
from .kernel import StepKernel, gap
from .model import ModelCoefficients

__all__ = [
    "Record",
    "CertificateReport",
    "InductionConfig",
    "compute_beta",
    "validate_config",
    "check_fbdsp",
    "check_assumptions_EG",
    "check_H1_H4",
    "check_lemma_cA",
    "fit_lemma_cA",
    "check_lemma_fder",
    "fit_lemma_fder",
    "check_intervals",
    "check_zeta_decay",
    "zeta_on_intervals",
    "check_product_form",
    "conv_sums",
    "conv_rate",
    "check_conv_lemma",
    "fit_constants",
    "certification_kset",
    "structural_failures",
]

REL_SLACK = 1e-12
ABS_SLACK = 1e-300


def passes(actual: float, bound: float, strict: bool = False) -> bool:
    if strict:
        return bool(actual < bound)
    return bool(actual <= bound + REL_SLACK * abs(bound) + ABS_SLACK)


@dataclass
class Record:
    check: str
    index: int | None
    bound: float
    actual: float
    k: tuple | None = None
    passed: bool = field(default=None)
    strict: bool = False

    def __post_init__(self):
        self.bound = float(self.bound)
        self.actual = float(self.actual)
        if self.passed is None:
            self.passed = passes(self.actual, self.bound, self.strict)

    @property
    def margin(self) -> float:
        with np.errstate(invalid="ignore"):
            return float(self.bound - self.actual)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "index": self.index,
            "k": None if self.k is None else [float(c) for c in self.k],
            "bound": self.bound,
            "actual": self.actual,
            "margin": self.margin,
            "pass": self.passed,
        }


@dataclass
class CertificateReport:
    records: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def add(self, check, index, bound, actual, k=None, strict=False):
        self.records.append(Record(check, index, bound, actual,
                                   None if k is None else tuple(float(c) for c in k),
                                   strict=strict))

    def extend(self, other: "CertificateReport"):
        self.records.extend(other.records)
        for key, val in other.notes.items():
            self.notes[key] = val
        return self

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def failures(self, prefix: str = "") -> list:
        return [r for r in self.records if not r.passed and r.check.startswith(prefix)]

    def select(self, prefix: str) -> list:
        return [r for r in self.records if r.check.startswith(prefix)]

    def summary(self) -> dict:
        fails = self.failures()
        worst = min(self.records, key=lambda r: r.margin, default=None)
        return {
            "records": len(self.records),
            "failures": len(fails),
            "first_failure": fails[0].to_dict() if fails else None,
            "worst_margin": None if worst is None else worst.to_dict(),
        }

    def to_dict(self) -> dict:
        return {"summary": self.summary(), "notes": self.notes,
                "records": [r.to_dict() for r in self.records]}

    def write_json(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["check", "index", "k", "bound", "actual", "margin", "pass"])
            for r in self.records:
                k = "" if r.k is None else " ".join(format(c, ".17g") for c in r.k)
                w.writerow([r.check, "" if r.index is None else r.index, k,
                            format(r.bound, ".17g"), format(r.actual, ".17g"),
                            format(r.margin, ".17g"), int(r.passed)])


def compute_beta(L: int, d: int, pstar: float) -> float:
    """``beta = L^(-d/p*)``."""
    if L < 1 or d < 1 or pstar < 1:
        raise InvalidParameterError("need L >= 1, d >= 1, p* >= 1")
    return float(L) ** (-d / pstar)


def _as_function(c):
    """Constant, callable, or ``[[K, C], ...]`` table (linear interpolation)."""
    if callable(c):
        return c
    if isinstance(c, (int, float)):
        return lambda K: float(c)
    table = np.asarray(c, dtype=float)
    return lambda K: float(np.interp(K, table[:, 0], table[:, 1]))


@dataclass
class InductionConfig:
    d: int
    L: int
    theta: float
    epsilon: float
    gamma: float
    delta: float
    lam: float
    K1: float
    K2: float
    K3: float
    K4: float
    K5: float
    pstar: float = 2.0
    p_list: tuple = (2.0,)
    c: float = 1.0
    C_e: object = 0.0
    C_g: object = 0.0
    ratio_threshold: float = 10.0

    @property
    def beta(self) -> float:
        return compute_beta(self.L, self.d, self.pstar)

    @property
    def K4prime(self) -> float:
        K = self.c * self.K4
        return max(_as_function(self.C_e)(K), _as_function(self.C_g)(K), self.K4)

    def replace(self, **kw) -> "InductionConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(kw)
        return InductionConfig(**data)

    @classmethod
    def from_dict(cls, data: dict) -> "InductionConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidParameterError(f"unknown induction fields: {sorted(unknown)}")
        data = dict(data)
        if "p_list" in data:
            data["p_list"] = tuple(float(p) for p in data["p_list"])
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["p_list"] = list(self.p_list)
        for key in ("C_e", "C_g"):
            if callable(out[key]):
                out[key] = repr(out[key])
        out["beta"] = self.beta
        return out


STRUCTURAL = ("theta", "eps", "agddef", "p_list")


def validate_config(cfg: InductionConfig, ratio: float | None = None) -> CertificateReport:
    """Each parameter constraint becomes a record.

    ``a >> b`` is checked as ``a / b >= ratio`` (default ``cfg.ratio_threshold``).
    Checks named ``theta``, ``eps.*``, ``agddef.*`` and ``p_list.*`` are
    structural; ``Kcond.*`` are the constant orderings.
    """
    t = cfg.ratio_threshold if ratio is None else ratio
    rep = CertificateReport()
    th, eps, g, dl, lam = cfg.theta, cfg.epsilon, cfg.gamma, cfg.delta, cfg.lam
    one_eps = min(1.0, eps)
    # records read "actual < bound" (strict) or "actual <= bound"
    rep.add("theta>2", None, th, 2.0, strict=True)
    rep.add("eps>0", None, eps, 0.0, strict=True)
    rep.add("eps<theta-2", None, th - 2.0, eps, strict=True)
    rep.add("agddef.gamma>0", None, g, 0.0, strict=True)
    rep.add("agddef.gamma<1^eps", None, one_eps, g, strict=True)
    rep.add("agddef.delta>0", None, dl, 0.0, strict=True)
    rep.add("agddef.delta<(1^eps)-gamma", None, one_eps - g, dl, strict=True)
    rep.add("agddef.lambda>theta-gamma", None, lam, th - g, strict=True)
    rep.add("agddef.lambda<theta", None, th, lam, strict=True)
    rep.add("agddef.lambda>2", None, lam, 2.0, strict=True)
    rep.add("p_list.pstar>=1", None, cfg.pstar, 1.0)
    for p in cfg.p_list:
        rep.add(f"p_list.p={p:g}>=1", None, p, 1.0)
        rep.add(f"p_list.p={p:g}<=pstar", None, cfg.pstar, p)
    K4p = cfg.K4prime
    rep.add("Kcond.K3>>K1", None, cfg.K3 / cfg.K1, t)
    rep.add("Kcond.K1>K4'", None, cfg.K1, K4p, strict=True)
    rep.add("Kcond.K4'>=K4", None, K4p, cfg.K4)
    rep.add("Kcond.K4>>1", None, cfg.K4, t)
    rep.add("Kcond.K2>=K1", None, cfg.K2, cfg.K1)
    rep.add("Kcond.K2>=3K4'", None, cfg.K2, 3 * K4p)
    rep.add("Kcond.K5>>K4", None, cfg.K5 / cfg.K4, t)
    rep.notes["K4prime"] = K4p
    rep.notes["beta"] = cfg.beta
    return rep


def structural_failures(report: CertificateReport) -> list:
    return [r for r in report.failures() if not r.check.startswith("Kcond")]


def _thresholds(gamma, n):
    j = np.arange(n + 1, dtype=float)
    out = np.zeros(n + 1)
    out[1:] = gamma * np.log(j[1:]) / j[1:]
    return out


def _require(trace: RecursionTrace, *names):
    for name in names:
        if getattr(trace, name) is None:
            raise IncompleteTraceError(f"trace has no {name} data")


def check_fbdsp(trace: RecursionTrace, D: StepKernel, cfg: InductionConfig, K: float,
                n: int | None = None, spec=None, norms=None) -> CertificateReport:
    """A-priori bounds: L^p norms of ``D^2 f_m``, ``|f_m(0)|`` and ``|lap f_m(0)|``.

    Norm records compare ``norm + quadrature error`` with the bound.  Pass
    precomputed ``norms`` (one :class:`NormSweep` per p in ``cfg.p_list``) to
    skip the quadrature.
    """
    from .quadrature import QuadratureSpec, lp_norms

    _require(trace, "lap")
    n = trace.N if n is None else n
    if n > trace.N:
        raise IncompleteTraceError(f"trace stops at N={trace.N} < n={n}")
    rep = CertificateReport()
    if norms is None:
        norms = lp_norms(trace, D, cfg.p_list, spec or QuadratureSpec())
    s2 = D.sigma2
    for sw in norms:
        p = sw.p
        for m in range(1, n + 1):
            bound = K * float(D.L) ** (-D.d / p) * m ** (-min(D.d / (2 * p), cfg.theta))
            rep.add(f"fbdsp.p={p:g}", m, bound, sw.norm[m] + sw.error[m])
        rep.notes[f"fbdsp.p={p:g}.method"] = sw.method
        if sw.seed is not None:
            rep.notes[f"fbdsp.p={p:g}.seed"] = sw.seed
    for m in range(1, n + 1):
        rep.add("fbdsp.f0", m, K, abs(trace.f0[m]))
        rep.add("fbdsp.lap", m, K * s2 * m, abs(trace.lap[m]))
    return rep


def check_assumptions_EG(model: ModelCoefficients, z: float, cfg: InductionConfig,
                         C_e: float, C_g: float, n: int, kgrid,
                         eps_prime_list=(0.0,)) -> CertificateReport:
    """Decay bounds on ``e_m`` and ``g_m`` for ``2 <= m <= n+1``.

    One record per family and order, at the k of smallest margin.
    ``d/dz g_m(0)`` is exact where the model provides it.
    """
    beta, th = cfg.beta, cfg.theta
    kgrid = np.atleast_2d(np.asarray(kgrid, dtype=float))
    D = model.kernel
    a = gap(D, kgrid)
    s2 = D.sigma2
    Meff = model.effective_order(n + 1)
    ms = np.arange(2, n + 2)
    live = ms[ms <= Meff]
    rep = CertificateReport()
    for ep in eps_prime_list:
        if not 0 <= ep <= cfg.epsilon:
            raise InvalidParameterError(f"eps' = {ep} outside [0, eps]")
    G = np.zeros((len(kgrid), len(ms)))
    E = np.zeros((len(kgrid), len(ms)))
    G0 = np.zeros(len(ms))
    E0 = np.zeros(len(ms))
    Gl = np.zeros(len(ms))
    Gz = np.zeros(len(ms))
    if len(live):
        sl = slice(0, len(live))
        G[:, sl] = model.g_table(live, kgrid, z)
        E[:, sl] = model.e_table(live, kgrid, z)
        G0[sl] = model.g0(live, z)
        E0[sl] = model.e0(live, z)
        Gl[sl] = model.g_lap(live, z)
        Gz[sl] = model.g_dz(live, z)
    pos = a > 0

    def worst(name, m, bounds, actual):
        with np.errstate(invalid="ignore"):
            margins = bounds - actual
        i = int(np.nanargmin(margins))
        rep.add(name, int(m), bounds[i], actual[i], k=kgrid[i])

    for j, m in enumerate(ms):
        mf = float(m)
        worst("E.i", m, np.full(len(a), C_e * beta * mf**-th), np.abs(E[:, j]))
        if pos.any():
            bnd = C_e * a[pos] * beta * mf ** (1 - th)
            act = np.abs(E[pos, j] - E0[j])
            i = int(np.argmin(bnd - act))
            rep.add("E.ii", int(m), bnd[i], act[i], k=kgrid[pos][i])
        worst("G.i", m, np.full(len(a), C_g * beta * mf**-th), np.abs(G[:, j]))
        rep.add("G.ii", int(m), C_g * s2 * beta * mf ** (1 - th), abs(Gl[j]))
        rep.add("G.iii", int(m), C_g * beta * mf ** (1 - th), abs(Gz[j]))
        rem = np.abs(G[:, j] - G0[j] - a * Gl[j] / s2)
        for ep in eps_prime_list:
            bnd = C_g * beta * a ** (1 + ep) * mf ** (-th + 1 + ep)
            worst(f"G.iv.eps'={ep:g}", m, bnd, rem)
    rep.notes["EG.z"] = float(z)
    rep.notes["EG.grid_points"] = int(len(kgrid))
    return rep


def _r_table(trace: RecursionTrace, idx, upto):
    """``r_i(k)`` for i = 1..upto at trace row ``idx`` (NaN where undefined)."""
    f = trace.f[idx, : upto + 1]
    out = np.full(upto + 1, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = np.abs(f[:-1]) >= 1e-300
        ratio = np.where(ok, f[1:] / np.where(ok, f[:-1], 1.0), np.nan)
    out[1:] = ratio - 1.0 + trace.v[1 : upto + 1] * trace.a[idx]
    return out


def check_H1_H4(trace: RecursionTrace, D: StepKernel, cfg: InductionConfig,
                n: int | None = None) -> CertificateReport:
    """Induction hypotheses on the stored trace for ``1 <= j <= n``.

    Each ``(j, k)`` pair falls under the near-critical bounds when
    ``a(k) <= gamma log(j)/j`` and under the large-k bounds otherwise; the
    pair counts are reported in ``notes``.
    """
    _require(trace, "zs")
    n = trace.N if n is None else n
    beta, th = cfg.beta, cfg.theta
    K1, K2, K3, K4, K5 = cfg.K1, cfg.K2, cfg.K3, cfg.K4, cfg.K5
    rep = CertificateReport()
    zs, v = trace.zs, trace.v
    for j in range(1, n + 1):
        rep.add("H1", j, K1 * beta * j**-th, abs(zs[j] - zs[j - 1]))
    for j in range(1, n + 1):
        rep.add("H2", j, K2 * beta * j ** (1 - th), abs(v[j] - v[j - 1]))

    thr = _thresholds(cfg.gamma, n)
    a = trace.a
    z0 = trace.zero_index
    r0 = _r_table(trace, z0, n)
    for i in range(1, n + 1):
        rep.add("H3.r0", i, K3 * beta * i ** (1 - th), abs(r0[i]))
    h3_pairs = np.zeros(n + 1, dtype=int)
    h4_pairs = np.zeros(n + 1, dtype=int)
    for idx in range(len(trace.kset)):
        ak = a[idx]
        region = ak <= thr[1:]  # j = 1..n
        h3_pairs[1:] += region
        h4_pairs[1:] += ~region
        k = trace.kset[idx]
        if idx != z0 and region.any():
            top = int(np.flatnonzero(region).max()) + 1
            rk = _r_table(trace, idx, top)
            for i in range(1, top + 1):
                act = abs(rk[i] - r0[i]) if np.isfinite(rk[i]) else np.inf
                rep.add("H3.rk", i, K3 * beta * ak * i**-cfg.delta, act, k=k)
        for j in np.flatnonzero(~region) + 1:
            fj, fjm = trace.f[idx, j], trace.f[idx, j - 1]
            rep.add("H4.f", int(j), K4 * ak**-cfg.lam * j**-th, abs(fj), k=k)
            rep.add("H4.df", int(j), K5 * ak ** (1 - cfg.lam) * j**-th, abs(fj - fjm), k=k)
    nonzero = np.array([i != z0 for i in range(len(trace.kset))])
    rep.notes["coverage"] = {
        "pairs": int(n * len(trace.kset)),
        "H3_pairs": int(h3_pairs.sum()),
        "H4_pairs": int(h4_pairs.sum()),
        "H3_nonzero_k": int(sum(1 for i in range(len(a)) if nonzero[i] and a[i] <= thr[1:].max())),
    }
    warn = []
    if rep.notes["coverage"]["H3_nonzero_k"] == 0:
        warn.append("no nonzero k falls in the near-critical regime")
    if rep.notes["coverage"]["H4_pairs"] == 0:
        warn.append("no (j, k) pair falls in the large-k regime")
    rep.notes["coverage_warnings"] = warn
    return rep


def _h3_pairs(trace, gamma, n):
    thr = _thresholds(gamma, n)
    for idx in range(len(trace.kset)):
        for j in np.flatnonzero(trace.a[idx] <= thr[1:]) + 1:
            yield idx, int(j)


def check_lemma_cA(trace: RecursionTrace, D: StepKernel, cfg: InductionConfig, C: float,
                   n: int | None = None) -> CertificateReport:
    """``|f_j(k)| <= exp(C K3 beta) exp(-(1 - C(K2+K3) beta) j a(k))`` in the
    near-critical regime; compared in log space."""
    n = trace.N if n is None else n
    beta = cfg.beta
    rep = CertificateReport()
    for idx, j in _h3_pairs(trace, cfg.gamma, n):
        ak = trace.a[idx]
        log_bound = C * cfg.K3 * beta - (1 - C * (cfg.K2 + cfg.K3) * beta) * j * ak
        f = abs(trace.f[idx, j])
        with np.errstate(over="ignore"):
            bound = math.exp(min(log_bound, 709.0)) if log_bound < 709.0 else math.inf
        rep.add("cA", j, bound, f, k=trace.kset[idx])
    return rep


def fit_lemma_cA(trace: RecursionTrace, cfg: InductionConfig, n: int | None = None) -> float:
    """Smallest ``C >= 0`` for which :func:`check_lemma_cA` passes."""
    n = trace.N if n is None else n
    beta = cfg.beta
    best = 0.0
    for idx, j in _h3_pairs(trace, cfg.gamma, n):
        ak = trace.a[idx]
        f = abs(trace.f[idx, j])
        if f == 0:
            continue
        need = (math.log(f) + j * ak) / (beta * (cfg.K3 + (cfg.K2 + cfg.K3) * j * ak))
        best = max(best, need)
    return best


def check_lemma_fder(trace: RecursionTrace, cfg: InductionConfig, C: float,
                     n: int | None = None) -> CertificateReport:
    """``|lap f_j(0)| <= (1 + C(K2+K3) beta) sigma^2 j``."""
    _require(trace, "lap")
    n = trace.N if n is None else n
    s2 = trace.model.kernel.sigma2
    rep = CertificateReport()
    for j in range(1, n + 1):
        rep.add("fder", j, (1 + C * (cfg.K2 + cfg.K3) * cfg.beta) * s2 * j, abs(trace.lap[j]))
    return rep


def fit_lemma_fder(trace: RecursionTrace, cfg: InductionConfig, n: int | None = None) -> float:
    n = trace.N if n is None else n
    s2 = trace.model.kernel.sigma2
    j = np.arange(1, n + 1)
    need = (np.abs(trace.lap[1 : n + 1]) / (s2 * j) - 1.0) / ((cfg.K2 + cfg.K3) * cfg.beta)
    return float(max(0.0, need.max()))


def check_intervals(trace: RecursionTrace, cfg: InductionConfig,
                    n: int | None = None) -> CertificateReport:
    """Nesting ``I_j subset I_{j-1}`` and membership of the trace's ``z`` in ``I_j``."""
    from .engine import intervals

    _require(trace, "zs")
    n = trace.N if n is None else n
    I = intervals(trace.zs[: n + 1], cfg.K1, cfg.beta, cfg.theta)
    rep = CertificateReport()
    for j in range(2, n + 1):
        rep.add("I.nested.lo", j, I[j, 0], I[j - 1, 0] - 0.0)
        rep.add("I.nested.hi", j, I[j - 1, 1], I[j, 1])
    for j in range(1, n + 1):
        w = cfg.K1 * cfg.beta * j ** (1 - cfg.theta)
        rep.add("I.member", j, w, abs(trace.z - trace.zs[j]))
    return rep


def zeta_on_intervals(model: ModelCoefficients, N: int) -> np.ndarray:
    """``zeta_n(z_n)`` for n = 0..N: each ``zeta_n`` evaluated at the centre of ``I_n``."""
    from .engine import zeta, zn_sequence

    zs = zn_sequence(model, max(N, 1))
    return np.array([zeta(model, zs[n], n) for n in range(N + 1)])


def check_zeta_decay(model: ModelCoefficients, lo: int, hi: int,
                     slope_tol: float = 0.0, theta: float | None = None) -> CertificateReport:
    """Fitted slope of ``|zeta_n(z_n)| n^(theta-1)`` over ``[lo, hi]`` must be ``<= slope_tol``."""
    from .fitting import loglog_fit

    th = model.theta if theta is None else theta
    if th is None:
        raise InvalidParameterError("model has no decay exponent; pass theta")
    zt = zeta_on_intervals(model, hi)
    n = np.arange(lo, hi + 1)
    slope, _ = loglog_fit(n, np.abs(zt[n]) * n ** (th - 1))
    rep = CertificateReport()
    rep.add("zeta.slope", None, slope_tol, slope)
    rep.notes["zeta.window"] = [int(lo), int(hi)]
    return rep


def check_product_form(trace: RecursionTrace, cfg: InductionConfig, rtol: float = 1e-10,
                       n: int | None = None) -> CertificateReport:
    """Rebuild ``f_j(k) = f_j(0) prod_i [1 - v_i a(k) + s_i(k)]`` where the
    near-critical regime applies and compare with the trace."""
    from .engine import reconstruct_from_s

    n = trace.N if n is None else n
    thr = _thresholds(cfg.gamma, n)
    rep = CertificateReport()
    for idx in range(len(trace.kset)):
        js = np.flatnonzero(trace.a[idx] <= thr[1:]) + 1
        if len(js) == 0:
            continue
        top = int(js.max())
        rebuilt = reconstruct_from_s(trace, idx)
        for j in js:
            ref = trace.f[idx, j]
            rep.add("H3.product", int(j), rtol * abs(ref), abs(rebuilt[j] - ref),
                    k=trace.kset[idx])
        del top
    return rep


def conv_sums(a: float, b: float, n_max: int) -> np.ndarray:
    """``S(n) = sum_{m=2}^n m^-a sum_{j=n-m+1}^n j^-b`` for n = 0..n_max (0 below 2)."""
    j = np.arange(1, n_max + 1, dtype=float)
    prefix = np.concatenate([[0.0], np.cumsum(j**-b)])
    w = j**-a  # w[m-1] = m^-a
    S = np.zeros(n_max + 1)
    for n in range(2, n_max + 1):
        m = np.arange(2, n + 1)
        S[n] = np.dot(w[m - 1], prefix[n] - prefix[n - m])
    return S


def conv_sum_bruteforce(a: float, b: float, n: int) -> float:
    return math.fsum(m**-a * j**-b for m in range(2, n + 1) for j in range(n - m + 1, n + 1))


def conv_rate(a: float, b: float) -> tuple:
    """Strongest applicable decay rate of ``S(n)``; returns ``(case, rate)``."""
    if a > 2 and b > 2:
        return "a,b>2", min(a, b)
    if a > 2 and b > 1:
        return "a>2,b>1", min(a - 1, b)
    if a > 2 and b > 0:
        return "a>2,b>0", min(a - 2, b)
    if a > 1 and b > 1:
        return "a,b>1", min(a, b) - 1
    raise InvalidParameterError(f"exponents (a={a}, b={b}) fit none of the convolution cases")


def check_conv_lemma(a: float, b: float, n_max: int, slope_tol: float = 0.02,
                     brute_n: int = 40) -> CertificateReport:
    """``S(n) n^rate`` stays bounded: its fitted log-log slope over the largest
    decade of n is at most ``slope_tol``; prefix-sum values are cross-checked
    against the literal double sum for ``n <= brute_n``."""
    case, rate = conv_rate(a, b)
    S = conv_sums(a, b, n_max)
    n = np.arange(2, n_max + 1)
    scaled = S[n] * n.astype(float) ** rate
    slope, window = decade_slope(n, scaled)
    rep = CertificateReport()
    rep.add("conv.slope", None, slope_tol, slope)
    rep.add("conv.sup_finite", None, math.inf, float(np.max(scaled)))
    for m in range(2, min(brute_n, n_max) + 1):
        ref = conv_sum_bruteforce(a, b, m)
        rep.add("conv.brute", m, 1e-12 * ref, abs(S[m] - ref))
    rep.notes.update({"conv.case": case, "conv.rate": rate, "conv.window": list(window),
                      "conv.a": a, "conv.b": b, "conv.sup": float(np.max(scaled))})
    return rep


_FAMILY_CONSTANTS = {"H1": "K1", "H2": "K2", "H3": "K3", "H4.f": "K4", "H4.df": "K5"}


def fit_constants(report: CertificateReport, cfg: InductionConfig) -> dict:
    """Smallest ``K_i`` making each induction family pass; the bounds are
    linear in their constants, so ``K_min = K max(actual/bound)``."""
    out = {}
    for prefix, name in _FAMILY_CONSTANTS.items():
        recs = report.select(prefix)
        if not recs:
            continue
        K = getattr(cfg, name)
        ratios = [r.actual / r.bound for r in recs if r.bound > 0]
        out[name] = float(K * max(ratios, default=0.0))
    return out


def certification_kset(D: StepKernel, count: int = 48, a_min: float = 1e-5) -> np.ndarray:
    """Origin plus points along the first axis whose gaps ``a(k)`` run from
    ``a_min`` up to the largest gap on that axis, roughly log-spaced.

    Near-critical and large-k regimes are both populated for any ``n``.
    """
    t = np.linspace(0.0, np.pi, 4097)[1:]
    pts = np.zeros((len(t), D.d))
    pts[:, 0] = t
    a = gap(D, pts)
    top = int(np.argmax(a))
    # a is increasing on [0, t_top] up to small ripples; invert by monotone hull
    t_up, a_up = t[: top + 1], np.maximum.accumulate(a[: top + 1])
    targets = np.geomspace(a_min, a_up[-1], count)
    ks = np.interp(targets, a_up, t_up)
    out = np.zeros((count + 1, D.d))
    out[1:, 0] = np.unique(ks)[: count] if len(np.unique(ks)) == count else ks
    return out
