"""Step distributions D_L on Z^d and their Fourier transforms.

A :class:`StepKernel` is a finite, symmetric probability distribution on the
lattice.  Uniform boxes are evaluated through a per-axis product formula, other
kernels by direct summation over the support.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from .errors import InvalidParameterError, SymmetryError

__all__ = [
    "StepKernel",
    "KernelCheck",
    "KernelCertificate",
    "build_uniform_box",
    "kernel_from_entries",
    "load_kernel",
    "save_kernel",
    "fourier",
    "gap",
    "moment",
    "default_kgrid",
    "certify_assumption_D",
    "fit_assumption_D",
]

_CHUNK = 4096


def _as_fraction(w):
    if isinstance(w, Fraction):
        return w
    if isinstance(w, int):
        return Fraction(w)
    if isinstance(w, str):
        return Fraction(w.strip())
    return None


@dataclass(frozen=True, eq=False)
class StepKernel:
    """Finite-range step distribution.

    Parameters
    ----------
    d : int
        Lattice dimension.
    L : int
        Range parameter (box half-width for uniform kernels).
    points : ndarray of int, shape (n, d)
        Support of the kernel.
    weights : ndarray of float, shape (n,)
        Probabilities ``D(x)``.
    exact_weights : tuple of Fraction, optional
        Exact rational weights when known.
    box : tuple (L, include_origin), optional
        Set for uniform boxes; enables the product formula.
    """

    d: int
    L: int
    points: np.ndarray
    weights: np.ndarray
    exact_weights: tuple | None = None
    box: tuple | None = field(default=None)

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @cached_property
    def sigma2(self) -> float:
        sq = np.sum(self.points.astype(float) ** 2, axis=1)
        return float(np.dot(sq, self.weights))

    @cached_property
    def sup_norm(self) -> float:
        return float(np.max(self.weights))

    @property
    def size(self) -> int:
        return len(self.weights)

    def moment(self, r: float) -> float:
        return moment(self, r)

    def fourier(self, k):
        return fourier(self, k)

    def gap(self, k):
        return gap(self, k)

    def to_dict(self) -> dict:
        if self.exact_weights is not None:
            ws = [str(w) for w in self.exact_weights]
        else:
            ws = [float(w) for w in self.weights]
        return {
            "d": self.d,
            "L": self.L,
            "entries": [
                {"x": [int(c) for c in x], "weight": w}
                for x, w in zip(self.points, ws)
            ],
        }


def _orbit(x):
    """All images of ``x`` under coordinate sign flips and permutations."""
    out = set()
    for perm in itertools.permutations(x):
        for signs in itertools.product((1, -1), repeat=len(x)):
            out.add(tuple(s * c for s, c in zip(signs, perm)))
    return out


def check_symmetry(table: dict, what: str = "table", tol: float = 1e-12):
    """Raise :class:`SymmetryError` unless ``table`` (point -> weight) is
    invariant under sign flips and coordinate permutations."""
    for x, w in table.items():
        for y in _orbit(x):
            wy = table.get(y, 0)
            if isinstance(w, Fraction) and isinstance(wy, Fraction):
                same = w == wy
            else:
                same = abs(float(w) - float(wy)) <= tol * max(1.0, abs(float(w)))
            if not same:
                raise SymmetryError(
                    f"{what} is not symmetric: weight at {x} is {w}, at {y} is {wy}",
                    pair=(x, y),
                )


def kernel_from_entries(d: int, L: int, entries, check: bool = True) -> StepKernel:
    """Build a kernel from ``[(x, weight), ...]``; weights may be Fractions,
    ``"num/den"`` strings or floats."""
    if d <= 0 or L <= 0:
        raise InvalidParameterError(f"need d >= 1 and L >= 1, got d={d}, L={L}")
    table = {}
    for x, w in entries:
        x = tuple(int(c) for c in x)
        if len(x) != d:
            raise InvalidParameterError(f"point {x} does not have dimension {d}")
        fw = _as_fraction(w)
        table[x] = table.get(x, 0) + (fw if fw is not None else float(w))
    if not table:
        raise InvalidParameterError("kernel has empty support")
    exact = all(isinstance(w, Fraction) for w in table.values())
    if any(float(w) < 0 for w in table.values()):
        raise InvalidParameterError("kernel weights must be nonnegative")
    total = sum(table.values()) if exact else sum(float(w) for w in table.values())
    if abs(float(total) - 1.0) > 1e-12:
        raise InvalidParameterError(f"kernel weights sum to {float(total)}, not 1")
    if check:
        check_symmetry(table, "kernel")
    pts = sorted(table)
    return StepKernel(
        d=d,
        L=L,
        points=np.array(pts, dtype=np.int64).reshape(len(pts), d),
        weights=np.array([float(table[p]) for p in pts]),
        exact_weights=tuple(table[p] for p in pts) if exact else None,
    )


def build_uniform_box(d: int, L: int, include_origin: bool = False) -> StepKernel:
    """Uniform distribution on ``{x : 0 < |x|_inf <= L}`` (origin optional)."""
    if d <= 0 or L <= 0:
        raise InvalidParameterError(f"need d >= 1 and L >= 1, got d={d}, L={L}")
    axis = np.arange(-L, L + 1)
    pts = np.array(np.meshgrid(*([axis] * d), indexing="ij")).reshape(d, -1).T
    if not include_origin:
        pts = pts[np.any(pts != 0, axis=1)]
    n = len(pts)
    w = Fraction(1, n)
    return StepKernel(
        d=d,
        L=L,
        points=np.ascontiguousarray(pts, dtype=np.int64),
        weights=np.full(n, 1.0 / n),
        exact_weights=(w,) * n,
        box=(L, include_origin),
    )


def load_kernel(path) -> StepKernel:
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    try:
        d, L, entries = spec["d"], spec["L"], spec["entries"]
    except KeyError as exc:
        raise InvalidParameterError(f"kernel file missing field {exc}") from None
    return kernel_from_entries(d, L, [(e["x"], e["weight"]) for e in entries])


def save_kernel(D: StepKernel, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(D.to_dict(), fh, indent=1)
        fh.write("\n")


def _as_points(D, k):
    k = np.asarray(k, dtype=float)
    single = k.ndim == 1
    k = np.atleast_2d(k)
    if k.shape[-1] != D.d:
        raise InvalidParameterError(f"k has dimension {k.shape[-1]}, kernel has {D.d}")
    return k, single


def _box_parts(D, k):
    """Per-axis pieces of the box product formula.

    Returns ``(P, Q)`` with ``P = prod_i S(k_i)`` and ``Q = c^d - P`` computed
    without cancellation, where ``S(t) = sum_{|x|<=L} cos(t x)`` and ``c = 2L+1``.
    """
    L = D.box[0]
    c = 2 * L + 1
    xs = np.arange(1, L + 1, dtype=float)
    P = np.ones(len(k))
    Q = np.zeros(len(k))
    for i in range(D.d):
        # T = c - S(t) = 4 sum_x sin^2(t x / 2) >= 0
        T = 4.0 * np.sum(np.sin(np.outer(k[:, i], xs) / 2.0) ** 2, axis=1)
        Q = c * Q + T * P
        P = P * (c - T)
    return P, Q


def fourier(D: StepKernel, k):
    """``D^(k) = sum_x cos(k.x) D(x)``; accepts one point or an array of points."""
    k, single = _as_points(D, k)
    if D.box is not None:
        P, _ = _box_parts(D, k)
        out = (P - (0.0 if D.box[1] else 1.0)) / D.size
    else:
        out = np.empty(len(k))
        X = D.points.astype(float)
        for s in range(0, len(k), _CHUNK):
            out[s : s + _CHUNK] = np.cos(k[s : s + _CHUNK] @ X.T) @ D.weights
    return float(out[0]) if single else out


def gap(D: StepKernel, k):
    """``a(k) = 1 - D^(k)``, evaluated as ``sum_x 2 sin^2(k.x/2) D(x)``."""
    k, single = _as_points(D, k)
    if D.box is not None:
        _, Q = _box_parts(D, k)
        out = Q / D.size
    else:
        out = np.empty(len(k))
        X = D.points.astype(float)
        for s in range(0, len(k), _CHUNK):
            out[s : s + _CHUNK] = (2.0 * np.sin(k[s : s + _CHUNK] @ X.T / 2.0) ** 2) @ D.weights
    return float(out[0]) if single else out


def moment(D: StepKernel, r: float) -> float:
    """``sum_x |x|^r D(x)``."""
    if r < 0:
        raise InvalidParameterError("moment order must be nonnegative")
    norms = np.sqrt(np.sum(D.points.astype(float) ** 2, axis=1))
    if r == 0:
        return float(np.sum(D.weights))
    return float(np.dot(norms**r, D.weights))


def default_kgrid(D: StepKernel, n_axis: int | None = None, n_fill: int = 1024,
                  n_small: int | None = None) -> np.ndarray:
    """Certification grid on the torus.

    Tensor grid on ``[-pi, pi]^d``, a second tensor grid on the small-k box
    ``|k|_inf <= 1/L`` and an unscrambled Halton fill.  Deterministic.
    """
    d = D.d
    if n_axis is None:
        n_axis = max(5, int(round(20000 ** (1.0 / d))) | 1)
    if n_small is None:
        n_small = n_axis
    big = np.linspace(-np.pi, np.pi, n_axis)
    small = np.linspace(-1.0 / D.L, 1.0 / D.L, n_small)
    grids = [
        np.array(np.meshgrid(*([big] * d), indexing="ij")).reshape(d, -1).T,
        np.array(np.meshgrid(*([small] * d), indexing="ij")).reshape(d, -1).T,
    ]
    if n_fill > 0:
        fill = qmc.Halton(d, scramble=False).random(n_fill + 1)[1:]
        grids.append((2.0 * fill - 1.0) * np.pi)
    return np.concatenate(grids)


@dataclass
class KernelCheck:
    name: str
    constant: float
    worst_k: list | None
    margin: float
    passed: bool
    value: float | None = None
    points: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "constant": self.constant,
            "worst_k": self.worst_k,
            "margin": self.margin,
            "pass": self.passed,
            "value": self.value,
            "points": self.points,
        }


@dataclass
class KernelCertificate:
    d: int
    L: int
    checks: list
    grid_points: int
    fitted: dict | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> KernelCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        out = {
            "d": self.d,
            "L": self.L,
            "grid_points": self.grid_points,
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }
        if self.fitted is not None:
            out["fitted"] = self.fitted
        return out


def _regimes(D, kgrid):
    kgrid = np.asarray(kgrid, dtype=float)
    if kgrid.size == 0:
        raise InvalidParameterError("empty k grid")
    kgrid = np.atleast_2d(kgrid)
    if np.any(np.abs(kgrid) > np.pi + 1e-12):
        raise InvalidParameterError("k grid leaves the torus [-pi, pi]^d")
    kinf = np.max(np.abs(kgrid), axis=1)
    near = kinf <= 1.0 / D.L
    far = kinf >= 1.0 / D.L
    return kgrid, near, far


def certify_assumption_D(D: StepKernel, eta: float, c1: float, c2: float, C: float,
                         eps: float, kgrid) -> KernelCertificate:
    """Grid certificate for the spread-out bounds on ``D``.

    A passing certificate holds up to the resolution of ``kgrid``.
    """
    if min(eta, c1, c2, C) <= 0 or eps <= 0:
        raise InvalidParameterError("candidate constants must be positive")
    kgrid, near, far = _regimes(D, kgrid)
    k2 = np.sum(kgrid**2, axis=1)
    small = near & (k2 > 0)
    if not small.any() or not far.any():
        raise InvalidParameterError("k grid must cover both |k|_inf <= 1/L and >= 1/L")
    a = gap(D, kgrid)
    L2 = float(D.L) ** 2
    checks = []

    def worst(name, const, margins, mask, strict=False):
        idx = np.flatnonzero(mask)
        i = idx[np.argmin(margins[idx])]
        m = float(margins[i])
        ok = m > 0 if strict else m >= -1e-12 * max(1.0, abs(const))
        # -pi and pi are the same torus point; report the positive representative
        wk = np.where(kgrid[i] == -np.pi, np.pi, kgrid[i])
        checks.append(KernelCheck(name, const, [float(v) for v in wk], m, bool(ok),
                                  points=int(len(idx))))

    mom = moment(D, 2 + 2 * eps)
    checks.append(KernelCheck("momentD", eps, None, float("inf") if np.isfinite(mom) else -1.0,
                              bool(np.isfinite(mom)), value=mom))
    bound = C * float(D.L) ** (-D.d)
    checks.append(KernelCheck("Dinf", C, None, bound - D.sup_norm, D.sup_norm <= bound,
                              value=D.sup_norm))
    checks.append(KernelCheck("sigma2", C, None, C * L2 - D.sigma2, D.sigma2 <= C * L2,
                              value=D.sigma2))
    worst("Dbound1.lower", c1, a - c1 * L2 * k2, small)
    worst("Dbound1.upper", c2, c2 * L2 * k2 - a, small)
    worst("Dbound2", eta, a - eta, far, strict=True)
    worst("Dbound3", eta, (2.0 - eta) - a, np.ones(len(a), bool), strict=True)
    return KernelCertificate(D.d, D.L, checks, len(kgrid))


def fit_assumption_D(D: StepKernel, kgrid) -> dict:
    """Tightest constants observed on ``kgrid``."""
    kgrid, near, far = _regimes(D, kgrid)
    k2 = np.sum(kgrid**2, axis=1)
    small = near & (k2 > 0)
    a = gap(D, kgrid)
    ratio = a[small] / (float(D.L) ** 2 * k2[small])
    eta = min(float(np.min(a[far])), float(np.min(2.0 - a)))
    return {
        "c1": float(np.min(ratio)),
        "c2": float(np.max(ratio)),
        "eta": eta,
        "C": max(D.sup_norm * float(D.L) ** D.d, D.sigma2 / float(D.L) ** 2),
    }
