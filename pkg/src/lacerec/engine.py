"""Solver for the convolution recursion and its k = 0 derivatives.

The recursion is diagonal in Fourier space, so ``f_n(k)`` is advanced
independently at every requested k.  Sequences indexed by n alone (Hessians,
``b_n, c_n, v_n``, ``zeta_n`` and the critical-point approximants ``z_n``) are
computed from the coefficients at ``k = 0``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateModelError, InvalidParameterError, NoConvergenceError, RatioBreakdownError
from .kernel import gap
from .model import ModelCoefficients

__all__ = [
    "RecursionTrace",
    "LimitConstants",
    "CriticalPoint",
    "Susceptibility",
    "evolve",
    "evolve_values",
    "evolve_hessian",
    "velocity_sequences",
    "zn_sequence",
    "intervals",
    "critical_point",
    "zeta",
    "constants_Av",
    "susceptibility",
    "extract_r",
    "extract_s",
    "reconstruct_from_s",
    "write_trace_csv",
]

_CHUNK = 2048


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _rowsum(P, compensated):
    if compensated:
        return np.array([math.fsum(row) for row in P])
    return P.sum(axis=1)


def evolve_values(model: ModelCoefficients, z: float, k, N: int,
                  compensated: bool = False) -> np.ndarray:
    """``f_n(k; z)`` for ``n = 0..N`` at each row of ``k``; shape ``(n_k, N+1)``.

    With ``compensated`` the m-sums are exactly rounded (``math.fsum``);
    otherwise numpy's pairwise summation is used.
    """
    if N < 1:
        raise InvalidParameterError("N must be at least 1")
    k = np.atleast_2d(np.asarray(k, dtype=float))
    Meff = model.effective_order(N)
    ms = np.arange(1, Meff + 1)
    out = np.empty((len(k), N + 1))
    for s in range(0, len(k), _CHUNK):
        kc = k[s : s + _CHUNK]
        G = model.g_table(ms, kc, z)
        E = model.e_table(ms, kc, z)
        F = np.zeros((len(kc), N + 1))
        F[:, 0] = 1.0
        for n in range(N):
            mm = min(n + 1, Meff)
            P = G[:, :mm] * F[:, n::-1][:, :mm]
            F[:, n + 1] = _rowsum(P, compensated)
            if n < Meff:
                F[:, n + 1] += E[:, n]
        out[s : s + _CHUNK] = F
    return out


def evolve_hessian(model: ModelCoefficients, z: float, N: int, with_f0: bool = False):
    """``lap f_n(0)`` for ``n = 0..N`` from the twice-differentiated recursion.

    Mixed partials vanish by symmetry, so only the Laplacian propagates.
    """
    if N < 1:
        raise InvalidParameterError("N must be at least 1")
    Meff = model.effective_order(N)
    ms = np.arange(1, Meff + 1)
    g0 = model.g0(ms, z)
    e0 = model.e0(ms, z)
    gl = model.g_lap(ms, z)
    el = model.e_lap(ms, z)
    f0 = np.zeros(N + 1)
    lap = np.zeros(N + 1)
    f0[0] = 1.0
    for n in range(N):
        mm = min(n + 1, Meff)
        prev_f = f0[n::-1][:mm]
        prev_l = lap[n::-1][:mm]
        f0[n + 1] = np.dot(g0[:mm], prev_f)
        lap[n + 1] = np.dot(gl[:mm], prev_f) + np.dot(g0[:mm], prev_l)
        if n < Meff:
            f0[n + 1] += e0[n]
            lap[n + 1] += el[n]
    return (lap, f0) if with_f0 else lap


def _padded(values, N):
    out = np.zeros(N)
    out[: len(values)] = values
    return out


def velocity_sequences(model: ModelCoefficients, z: float, N: int) -> dict:
    """``b_n, c_n, v_n`` and ``zeta_n`` for ``n = 0..N``.

    ``b_0 = v_0 = 1`` and ``c_0 = 0``; ``zeta_0 = -1`` (the empty sum).
    """
    Meff = model.effective_order(N)
    ms = np.arange(1, Meff + 1)
    g0 = _padded(model.g0(ms, z), N)
    gl = _padded(model.g_lap(ms, z), N)
    mf = np.arange(1, N + 1, dtype=float)
    b = np.concatenate([[1.0], -np.cumsum(gl) / model.kernel.sigma2])
    c = np.concatenate([[0.0], np.cumsum((mf - 1) * g0)])
    v = b / (1.0 + c)
    zt = np.concatenate([[0.0], np.cumsum(g0)]) - 1.0
    return {"b": b, "c": c, "v": v, "zeta": zt}


def zeta(model: ModelCoefficients, z: float, n: int) -> float:
    """``zeta_n = sum_{m=1}^n g_m(0; z) - 1``."""
    if n < 0:
        raise InvalidParameterError("n must be nonnegative")
    if n == 0:
        return -1.0
    Meff = model.effective_order(n)
    return math.fsum(model.g0(np.arange(1, Meff + 1), z)) - 1.0


def zn_sequence(model: ModelCoefficients, N: int) -> np.ndarray:
    """``z_0 = z_1 = 1``, ``z_{n+1} = 1 - sum_{m=2}^{n+1} g_m(0; z_n)``."""
    if N < 1:
        raise InvalidParameterError("N must be at least 1")
    Meff = model.effective_order(N)
    zs = np.ones(N + 1)
    for n in range(1, N):
        top = min(n + 1, Meff)
        if top < 2:
            zs[n + 1] = 1.0
            continue
        zs[n + 1] = 1.0 - math.fsum(model.g0(np.arange(2, top + 1), zs[n]))
    return zs


def intervals(zs, K1: float, beta: float, theta: float) -> np.ndarray:
    """``I_n = [z_n - K1 beta n^(1-theta), z_n + K1 beta n^(1-theta)]`` for n >= 1.

    Row 0 is NaN.
    """
    zs = np.asarray(zs, dtype=float)
    n = np.arange(len(zs), dtype=float)
    out = np.full((len(zs), 2), np.nan)
    w = K1 * beta * n[1:] ** (1.0 - theta)
    out[1:, 0] = zs[1:] - w
    out[1:, 1] = zs[1:] + w
    return out


@dataclass
class RecursionTrace:
    """Solution of the recursion at one ``z``.

    ``f[i, n]`` is ``f_n(kset[i]; z)``; ``kset[zero_index]`` is the origin.
    """

    model: ModelCoefficients
    z: float
    kset: np.ndarray
    f: np.ndarray
    lap: np.ndarray
    b: np.ndarray
    c: np.ndarray
    v: np.ndarray
    zeta: np.ndarray
    zs: np.ndarray | None = None
    zero_index: int = 0
    a: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.a is None:
            self.a = gap(self.model.kernel, self.kset)

    @property
    def N(self) -> int:
        return self.f.shape[1] - 1

    @property
    def f0(self) -> np.ndarray:
        return self.f[self.zero_index]

    def k_index(self, k) -> int:
        if isinstance(k, (int, np.integer)):
            return int(k)
        k = np.asarray(k, dtype=float)
        hits = np.flatnonzero(np.all(self.kset == k, axis=1))
        if len(hits) == 0:
            raise KeyError(f"k = {k.tolist()} is not in the trace's k set")
        return int(hits[0])


def evolve(model: ModelCoefficients, z: float, kset, N: int, compensated: bool = False,
           with_zn: bool = True) -> RecursionTrace:
    """Run the recursion to ``N`` at every point of ``kset`` (the origin is
    added when missing)."""
    k = np.atleast_2d(np.asarray(kset, dtype=float))
    if k.shape[1] != model.kernel.d:
        raise InvalidParameterError("k set dimension does not match the kernel")
    zero = np.flatnonzero(np.all(k == 0, axis=1))
    if len(zero) == 0:
        k = np.vstack([np.zeros(model.kernel.d), k])
        zi = 0
    else:
        zi = int(zero[0])
    f = evolve_values(model, z, k, N, compensated=compensated)
    lap = evolve_hessian(model, z, N)
    seq = velocity_sequences(model, z, N)
    zs = zn_sequence(model, N) if with_zn else None
    return RecursionTrace(model=model, z=float(z), kset=k, f=f, lap=lap, zs=zs,
                          zero_index=zi, **seq)


@dataclass
class CriticalPoint:
    z_N: float
    error_bound: float
    rate: float | None
    extrapolated: float
    converged: bool
    zs: np.ndarray = field(repr=False)
    window: tuple = (0, 0)


def critical_point(model: ModelCoefficients, N: int, tol: float = 1e-10) -> CriticalPoint:
    """``z_N`` with a tail bound fitted to the decay of ``|z_j - z_{j-1}|``.

    The increments over the last decade ``[N/10, N]`` are fitted to
    ``C j^-rate``; the bound is ``C N^(1-rate)/(rate-1)``.  Increments at the
    rounding floor count as converged.
    """
    from .fitting import loglog_fit

    zs = zn_sequence(model, N)
    if not np.all(np.isfinite(zs)):
        bad = int(np.flatnonzero(~np.isfinite(zs))[0])
        raise NoConvergenceError(f"z_n diverges (non-finite at n = {bad})")
    inc = np.abs(np.diff(zs))  # inc[j-1] = |z_j - z_{j-1}|
    j = np.arange(1, N + 1)
    lo = max(2, N // 10)
    win = (j >= lo)
    floor = 8 * np.finfo(float).eps * max(1.0, abs(zs[-1]))
    live = win & (inc > floor)
    zN = float(zs[-1])
    if live.sum() < 5:
        bound = float(np.max(inc[win], initial=0.0))
        return CriticalPoint(zN, bound, None, zN, bound < tol, zs, (lo, N))
    slope, logC = loglog_fit(j[live], inc[live])
    rate = -slope
    if rate <= 1.0:
        raise NoConvergenceError(
            f"increments of z_n do not decay summably (fitted exponent {slope:.3g} on [{lo}, {N}])")
    C = math.exp(logC)
    bound = C * N ** (1 - rate) / (rate - 1)
    sign = math.copysign(1.0, zs[-1] - zs[-2]) if zs[-1] != zs[-2] else 0.0
    return CriticalPoint(zN, bound, rate, zN + sign * bound, bound < tol, zs, (lo, N))


@dataclass
class LimitConstants:
    z_c: float
    A: float
    v: float
    residuals: dict
    tail_tol: float
    M_max: int

    def to_dict(self) -> dict:
        return {"z_c": self.z_c, "A": self.A, "v": self.v, "residuals": self.residuals,
                "tail_tol": self.tail_tol, "M_max": self.M_max}

    def write_json(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def constants_Av(model: ModelCoefficients, z_c: float, M_max: int = 4000,
                 tail_tol: float = 1e-10, product_N: int | None = None) -> LimitConstants:
    """Amplitude ``A`` and diffusion constant ``v`` from the m-sums at ``z_c``.

    Sums are truncated at ``M_max``; the model's tail envelope is reported.
    ``A`` is also obtained as ``f_n(0; z_c) = prod_i [1 + r_i(0)]`` at
    ``n = product_N`` and the difference is reported.
    """
    Meff = model.effective_order(M_max)
    ms = np.arange(1, Meff + 1)
    g0 = model.g0(ms, z_c)
    e0 = model.e0(ms, z_c)
    gl = model.g_lap(ms, z_c)
    tails = model.tail_bound(M_max, z_c)
    sum_g = math.fsum(g0)
    sum_mg = math.fsum(ms * g0)
    sum_e = math.fsum(e0)
    sum_lap = math.fsum(gl)
    if abs(sum_mg) <= max(tail_tol, tails["mg"] if np.isfinite(tails["mg"]) else 0.0):
        raise DegenerateModelError("sum_m m g_m(0; z_c) vanishes within the tail tolerance")
    A = (1.0 + sum_e) / sum_mg
    v = -sum_lap / (model.kernel.sigma2 * sum_mg)
    pN = product_N if product_N is not None else min(M_max, 4000)
    _, f0 = evolve_hessian(model, z_c, max(pN, 1), with_f0=True)
    residuals = {
        "critical": 1.0 - sum_g,
        "tail_g": tails["g"],
        "tail_mg": tails["mg"],
        "tail_lap": tails["lap"],
        "tail_e": tails["e"],
        "tail_ok": bool(all(np.isfinite(t) and t <= tail_tol for t in tails.values())),
        "A_product": float(f0[-1]),
        "A_product_n": int(pN),
        "A_difference": float(f0[-1] - A),
    }
    return LimitConstants(float(z_c), float(A), float(v), residuals, tail_tol, int(M_max))


@dataclass
class Susceptibility:
    z: float
    partial_sums: np.ndarray = field(repr=False)
    chi_N: float = 0.0
    closed_form: float = 0.0

    @property
    def gap(self) -> float:
        return abs(self.chi_N - self.closed_form) / abs(self.closed_form)


def closed_form_chi(model: ModelCoefficients, z: float, M: int) -> float:
    """``(1 + E(z)) / (1 - z - G(z))`` with the m-sums truncated at ``M``."""
    Meff = model.effective_order(M)
    ms = np.arange(1, Meff + 1)
    den = 1.0 - math.fsum(model.g0(ms, z))
    num = 1.0 + math.fsum(model.e0(ms, z)[1:])
    return num / den


def susceptibility(model: ModelCoefficients, z: float, N: int) -> Susceptibility:
    """Partial sums ``chi_n = sum_{j<=n} f_j(0; z)`` and the closed form."""
    _, f0 = evolve_hessian(model, z, N, with_f0=True)
    partial = np.cumsum(f0)
    return Susceptibility(float(z), partial, float(partial[-1]), closed_form_chi(model, z, N))


def _ratio_terms(trace: RecursionTrace, idx: int):
    f = trace.f[idx]
    bad = np.flatnonzero(np.abs(f[:-1]) < 1e-300)
    if len(bad):
        n = int(bad[0]) + 1
        raise RatioBreakdownError(f"|f_{n - 1}(k)| underflows; r_{n}(k) undefined", n=n)
    return f[1:] / f[:-1]


def extract_r(trace: RecursionTrace, k) -> np.ndarray:
    """``r_n(k) = f_n(k)/f_{n-1}(k) - 1 + v_n a(k)`` for n = 1..N (index 0 is NaN)."""
    idx = trace.k_index(k)
    ratio = _ratio_terms(trace, idx)
    r = np.full(trace.N + 1, np.nan)
    r[1:] = ratio - 1.0 + trace.v[1:] * trace.a[idx]
    return r


def extract_s(trace: RecursionTrace, k) -> np.ndarray:
    """``s_i(k) = [v_i a(k) r_i(0) + r_i(k) - r_i(0)] / [1 + r_i(0)]`` (index 0 NaN)."""
    idx = trace.k_index(k)
    r0 = extract_r(trace, trace.zero_index)
    rk = extract_r(trace, idx)
    den = 1.0 + r0[1:]
    bad = np.flatnonzero(np.abs(den) < 1e-300)
    if len(bad):
        raise DegenerateModelError(f"1 + r_{int(bad[0]) + 1}(0) vanishes")
    s = np.full(trace.N + 1, np.nan)
    s[1:] = (trace.v[1:] * trace.a[idx] * r0[1:] + rk[1:] - r0[1:]) / den
    return s


def reconstruct_from_s(trace: RecursionTrace, k) -> np.ndarray:
    """``f_j(0) prod_{i<=j} [1 - v_i a(k) + s_i(k)]`` for j = 0..N."""
    idx = trace.k_index(k)
    s = extract_s(trace, idx)
    factors = 1.0 - trace.v[1:] * trace.a[idx] + s[1:]
    return trace.f0 * np.concatenate([[1.0], np.cumprod(factors)])


def write_trace_csv(trace: RecursionTrace, path, kset_path=None):
    """Long-format CSV: one row per (n, k-index) with the per-n sequences."""
    zs = trace.zs if trace.zs is not None else np.full(trace.N + 1, np.nan)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["n", "k_index", "f", "lap_f", "b", "c", "v", "z_n", "zeta"])
        for n in range(trace.N + 1):
            per_n = [_fmt(trace.lap[n]), _fmt(trace.b[n]), _fmt(trace.c[n]), _fmt(trace.v[n]),
                     _fmt(zs[n]), _fmt(trace.zeta[n])]
            for i in range(len(trace.kset)):
                w.writerow([n, i, _fmt(trace.f[i, n])] + per_n)
    if kset_path is not None:
        with open(kset_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["k_index"] + [f"k{i + 1}" for i in range(trace.kset.shape[1])] + ["a"])
            for i, (kk, a) in enumerate(zip(trace.kset, trace.a)):
                w.writerow([i] + [_fmt(c) for c in kk] + [_fmt(a)])
