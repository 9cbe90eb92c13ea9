"""Checks of the large-n behaviour at the critical point and of the
susceptibility characterisation of ``z_c``."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .engine import LimitConstants, closed_form_chi, evolve_hessian, evolve_values
from .errors import BracketError, InvalidParameterError, OutOfDomainError
from .fitting import loglog_fit
from .kernel import gap
from .model import ModelCoefficients

__all__ = [
    "GaussianCheckResult",
    "gaussian_profile",
    "profile_envelope",
    "HessianRatio",
    "hessian_ratio",
    "G_sum",
    "zc_from_susceptibility",
    "ChiIdentity",
    "chi_identity_check",
    "a_consistency",
    "chi_linear_growth",
    "radial_kgrid",
    "write_profile_csv",
    "write_chi_csv",
]


@dataclass
class GaussianCheckResult:
    """Comparison of ``f_n(k / sqrt(v sigma^2 n); z_c)`` with ``A exp(-|k|^2/2d)``.

    ``deviation`` is ``|ratio - 1|`` and is NaN outside the admissible region
    ``a(k / sqrt(v sigma^2 n)) <= gamma log(n)/n``.  ``const_term`` and
    ``k2_term`` are the least-squares coefficients of ``ratio - 1 = c0 + c2 |k|^2``
    over the admissible points.
    """

    n: int
    k: np.ndarray = field(repr=False)
    f_scaled: np.ndarray = field(repr=False)
    gaussian: np.ndarray = field(repr=False)
    deviation: np.ndarray = field(repr=False)
    admissible: np.ndarray = field(repr=False)
    threshold: float = 0.0
    max_deviation: float = float("nan")
    excluded: int = 0
    const_term: float = float("nan")
    k2_term: float = float("nan")


def radial_kgrid(d: int, k_max: float = 2.0, radii: int = 9, directions: int = 3) -> np.ndarray:
    """Scaled k points along the first axis, the main diagonal and a mixed
    direction, at ``radii`` evenly spaced lengths up to ``k_max`` (origin included)."""
    dirs = [np.eye(d)[0], np.ones(d) / math.sqrt(d)]
    mixed = np.arange(1, d + 1, dtype=float)
    dirs.append(mixed / np.linalg.norm(mixed))
    dirs = dirs[:directions]
    rs = np.linspace(0.0, k_max, radii)[1:]
    pts = [np.zeros(d)] + [r * u for u in dirs for r in rs]
    return np.array(pts)


def gaussian_profile(model: ModelCoefficients, constants: LimitConstants, n_list, kgrid_scaled,
                     gamma: float = 0.2) -> list:
    """Profile check for each ``n`` in ``n_list`` from one recursion run up to
    ``max(n_list)`` over all rescaled points."""
    n_list = [int(n) for n in n_list]
    if any(n < 2 for n in n_list) or n_list != sorted(n_list):
        raise InvalidParameterError("n_list must be ascending with n >= 2")
    if not 0 < gamma < 1:
        raise InvalidParameterError("gamma must lie in (0, 1)")
    D = model.kernel
    k = np.atleast_2d(np.asarray(kgrid_scaled, dtype=float))
    if k.shape[1] != D.d:
        raise InvalidParameterError("k grid dimension does not match the kernel")
    scale = constants.v * D.sigma2
    if scale <= 0:
        raise InvalidParameterError("v sigma^2 must be positive")
    blocks = [k / math.sqrt(scale * n) for n in n_list]
    F = evolve_values(model, constants.z_c, np.vstack(blocks), max(n_list))
    k2 = np.sum(k**2, axis=1)
    gauss = constants.A * np.exp(-k2 / (2 * D.d))
    out = []
    for b, (n, kap) in enumerate(zip(n_list, blocks)):
        f = F[b * len(k) : (b + 1) * len(k), n]
        thr = gamma * math.log(n) / n
        ok = gap(D, kap) <= thr
        dev = np.where(ok, np.abs(f / gauss - 1.0), np.nan)
        res = GaussianCheckResult(n, k, f, gauss, dev, ok, thr,
                                  float(np.nanmax(dev)) if ok.any() else float("nan"),
                                  int((~ok).sum()))
        if ok.sum() >= 2 and np.ptp(k2[ok]) > 0:
            c2, c0 = np.polyfit(k2[ok], (f / gauss - 1.0)[ok], 1)
            res.const_term, res.k2_term = float(c0), float(c2)
        out.append(res)
    return out


def profile_envelope(results) -> dict:
    """Log-log slopes in n of the maximal deviation and of the two regression terms."""
    n = np.array([r.n for r in results], dtype=float)
    out = {"n": n.tolist()}
    for name in ("max_deviation", "const_term", "k2_term"):
        y = np.array([getattr(r, name) for r in results])
        try:
            out[name + "_slope"] = loglog_fit(n, y)[0]
        except InvalidParameterError:
            out[name + "_slope"] = float("nan")
    return out


@dataclass
class HessianRatio:
    n: np.ndarray
    ratio: np.ndarray
    exponent: float
    window: tuple


def hessian_ratio(model: ModelCoefficients, constants: LimitConstants, n_list) -> HessianRatio:
    """``-lap f_n(0) / (f_n(0) v sigma^2 n)`` at ``z_c``; ``exponent`` is the fitted
    slope of ``|ratio - 1|`` over the listed n (NaN if the ratio is exact)."""
    n = np.asarray(n_list, dtype=int)
    if n.min() < 1:
        raise InvalidParameterError("n must be positive")
    lap, f0 = evolve_hessian(model, constants.z_c, int(n.max()), with_f0=True)
    ratio = -lap[n] / (f0[n] * constants.v * model.kernel.sigma2 * n)
    dev = np.abs(ratio - 1.0)
    try:
        exponent = loglog_fit(n, dev)[0]
    except InvalidParameterError:
        exponent = float("nan")
    return HessianRatio(n, ratio, exponent, (int(n.min()), int(n.max())))


def G_sum(model: ModelCoefficients, z: float, M_max: int) -> float:
    """``G(z) = sum_{m=2}^{M} g_m(0; z)`` (exactly rounded)."""
    Meff = model.effective_order(M_max)
    if Meff < 2:
        return 0.0
    with np.errstate(over="ignore"):
        return math.fsum(model.g0(np.arange(2, Meff + 1), z))


def _susc_den(model, z, M_max):
    return 1.0 - z - G_sum(model, z, M_max)


def zc_from_susceptibility(model: ModelCoefficients, z_lo: float, z_hi: float,
                           tol: float = 1e-14, M_max: int = 100_000) -> float:
    """Root ``z_c'`` of ``1 - z - G(z)`` in ``[z_lo, z_hi]`` (Brent's method).

    ``G`` is truncated at ``M_max`` terms.
    """
    if not z_lo < z_hi:
        raise InvalidParameterError("need z_lo < z_hi")
    flo = _susc_den(model, z_lo, M_max)
    fhi = _susc_den(model, z_hi, M_max)
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
        raise BracketError(f"1 - z - G(z) has no sign change on [{z_lo}, {z_hi}]")
    if flo == 0:
        return float(z_lo)
    if fhi == 0:
        return float(z_hi)
    return float(brentq(lambda z: _susc_den(model, z, M_max), z_lo, z_hi, xtol=tol,
                        rtol=4 * np.finfo(float).eps, maxiter=500))


def find_bracket(model: ModelCoefficients, M_max: int, z_max: float = 2.0, steps: int = 2000):
    """First sign change of ``1 - z - G(z)`` scanning upward from 0."""
    zs = np.linspace(0.0, z_max, steps + 1)
    prev = _susc_den(model, zs[0], M_max)
    for a, b in zip(zs[:-1], zs[1:]):
        cur = _susc_den(model, b, M_max)
        if np.isfinite(cur) and prev * cur <= 0:
            return float(a), float(b)
        prev = cur
    raise BracketError(f"1 - z - G(z) keeps its sign on [0, {z_max}]")


@dataclass
class ChiIdentity:
    z_c: float
    z: np.ndarray
    chi_N: np.ndarray
    closed_form: np.ndarray
    gap: np.ndarray
    exponent: float


def chi_identity_check(model: ModelCoefficients, z_list, N: int, z_c: float | None = None,
                       M_max: int | None = None) -> ChiIdentity:
    """Compare ``chi_N(z) = sum_{n<=N} f_n(0; z)`` with ``(1 + E)/(1 - z - G)``.

    The divergence exponent is the log-log slope of the closed form against
    ``z_c' - z``.  ``M_max`` (default ``N``) truncates the m-sums.
    """
    M = N if M_max is None else M_max
    if z_c is None:
        z_c = zc_from_susceptibility(model, *find_bracket(model, M), M_max=M)
    z = np.asarray(z_list, dtype=float)
    if np.any(z >= z_c):
        raise OutOfDomainError(f"z must lie strictly below z_c' = {z_c!r}")
    chi = np.empty(len(z))
    cf = np.empty(len(z))
    for i, zz in enumerate(z):
        _, f0 = evolve_hessian(model, zz, N, with_f0=True)
        chi[i] = math.fsum(f0)
        cf[i] = closed_form_chi(model, zz, M)
    gaps = np.abs(chi - cf) / np.abs(cf)
    try:
        exponent = loglog_fit(z_c - z, cf)[0] if len(z) >= 2 else float("nan")
    except InvalidParameterError:
        exponent = float("nan")
    return ChiIdentity(float(z_c), z, chi, cf, gaps, exponent)


def a_consistency(model: ModelCoefficients, constants: LimitConstants, N: int) -> dict:
    """``f_N(0; z_c) = prod_{i<=N} [1 + r_i(0)]`` against ``A``."""
    _, f0 = evolve_hessian(model, constants.z_c, N, with_f0=True)
    return {"N": int(N), "product": float(f0[-1]), "A": constants.A,
            "difference": float(f0[-1] - constants.A)}


def chi_linear_growth(model: ModelCoefficients, constants: LimitConstants, N: int) -> dict:
    """Slope of ``chi_n = sum_{j<=n} f_j(0; z_c)`` over the last decade of n, against ``A``."""
    _, f0 = evolve_hessian(model, constants.z_c, N, with_f0=True)
    chi = np.cumsum(f0)
    n = np.arange(N + 1)
    mask = n >= N // 10
    slope = float(np.polyfit(n[mask], chi[mask], 1)[0])
    return {"N": int(N), "slope": slope, "A": constants.A, "difference": slope - constants.A}


def write_profile_csv(results, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["n", "k_index", "k_norm", "f_scaled", "gaussian", "deviation", "admissible"])
        for r in results:
            norms = np.linalg.norm(r.k, axis=1)
            for i in range(len(r.k)):
                w.writerow([r.n, i, format(norms[i], ".17g"), format(r.f_scaled[i], ".17g"),
                            format(r.gaussian[i], ".17g"),
                            "" if not r.admissible[i] else format(r.deviation[i], ".17g"),
                            int(r.admissible[i])])


def write_chi_csv(result: ChiIdentity, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["z", "chi_N", "closed_form", "gap"])
        for row in zip(result.z, result.chi_N, result.closed_form, result.gap):
            w.writerow([format(x, ".17g") for x in row])
