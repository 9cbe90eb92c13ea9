"""Coefficient providers ``g_m(k; z)`` and ``e_m(k; z)`` for the recursion.

Three families are available: the pure random walk (exactly solvable), a
closed-form synthetic family with power-law decay in ``m``, and tabulated
x-space models read from file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidParameterError, TruncationError
from .kernel import StepKernel, check_symmetry, fourier, gap

__all__ = [
    "ModelCoefficients",
    "PureRandomWalk",
    "SyntheticFamilySpec",
    "SyntheticTheta",
    "TabulatedModel",
    "pure_random_walk",
    "synthetic_theta",
    "load_xspace_model",
    "save_xspace_model",
]


def _orders(ms):
    ms = np.atleast_1d(np.asarray(ms, dtype=np.int64))
    if np.any(ms < 1):
        raise InvalidParameterError("coefficient orders start at m = 1")
    return ms


def _kpoints(d, k):
    k = np.asarray(k, dtype=float)
    single = k.ndim == 1
    return np.atleast_2d(k).reshape(-1, d), single


class ModelCoefficients:
    """Given data of the recursion.

    Subclasses implement :meth:`g_table` / :meth:`e_table` and the exact
    derivatives at ``k = 0``.  Tables are laid out ``(n_k, n_orders)`` so the
    order axis is contiguous.

    Attributes
    ----------
    kernel : StepKernel
    max_order : int or None
        Largest order the model defines; ``None`` for closed-form families.
    vanishes_beyond : bool
        If true, all coefficients of order above ``max_order`` are zero.
    theta : float or None
        Decay exponent of ``|g_m|`` in ``m``.
    """

    name = "model"
    kernel: StepKernel
    max_order: int | None = None
    vanishes_beyond: bool = False
    theta: float | None = None
    exact_dz = True

    # -- orders ---------------------------------------------------------
    def check_order(self, M: int):
        if self.max_order is not None and M > self.max_order and not self.vanishes_beyond:
            raise TruncationError(
                f"{self.name} defines orders up to {self.max_order}, need {M}", n=self.max_order
            )

    def effective_order(self, M: int) -> int:
        """Number of possibly nonzero orders among ``1..M``."""
        self.check_order(M)
        if self.max_order is not None and self.vanishes_beyond:
            return min(M, self.max_order)
        return M

    # -- evaluators -----------------------------------------------------
    def g_table(self, ms, k, z):
        raise NotImplementedError

    def e_table(self, ms, k, z):
        raise NotImplementedError

    def g_lap(self, ms, z):
        raise NotImplementedError

    def e_lap(self, ms, z):
        raise NotImplementedError

    def g_dz(self, ms, z):
        h = 1e-6 * max(1.0, abs(z))
        return (self.g0(ms, z + h) - self.g0(ms, z - h)) / (2 * h)

    def g0(self, ms, z):
        return self.g_table(ms, np.zeros(self.kernel.d), z)[0]

    def e0(self, ms, z):
        return self.e_table(ms, np.zeros(self.kernel.d), z)[0]

    def g(self, m, k, z):
        """``g_m(k; z)`` for one order and one or many k points."""
        kk, single = _kpoints(self.kernel.d, k)
        out = self.g_table([m], kk, z)[:, 0]
        return float(out[0]) if single else out

    def e(self, m, k, z):
        kk, single = _kpoints(self.kernel.d, k)
        out = self.e_table([m], kk, z)[:, 0]
        return float(out[0]) if single else out

    def tail_bound(self, M: int, z: float) -> dict:
        """Bounds on ``sum_{m>M}`` of ``|g_m(0)|, m|g_m(0)|, |lap g_m(0)|, |e_m(0)|``.

        ``nan`` means the model cannot bound its tail; ``inf`` that it diverges.
        """
        if self.max_order is not None and self.vanishes_beyond and M >= self.max_order:
            return {"g": 0.0, "mg": 0.0, "lap": 0.0, "e": 0.0}
        nan = float("nan")
        return {"g": nan, "mg": nan, "lap": nan, "e": nan}

    def describe(self) -> dict:
        return {"name": self.name}


class PureRandomWalk(ModelCoefficients):
    """``g_1 = z D^(k)``; every other coefficient vanishes."""

    name = "pure_rw"
    max_order = 1
    vanishes_beyond = True

    def __init__(self, D: StepKernel):
        self.kernel = D

    def g_table(self, ms, k, z):
        ms = _orders(ms)
        kk, _ = _kpoints(self.kernel.d, k)
        out = np.zeros((len(kk), len(ms)))
        if np.any(ms == 1):
            out[:, ms == 1] = (z * fourier(self.kernel, kk))[:, None]
        return out

    def e_table(self, ms, k, z):
        kk, _ = _kpoints(self.kernel.d, k)
        return np.zeros((len(kk), len(_orders(ms))))

    def g0(self, ms, z):
        return np.where(_orders(ms) == 1, float(z), 0.0)

    def e0(self, ms, z):
        return np.zeros(len(_orders(ms)))

    def g_lap(self, ms, z):
        return np.where(_orders(ms) == 1, -z * self.kernel.sigma2, 0.0)

    def e_lap(self, ms, z):
        return np.zeros(len(_orders(ms)))

    def g_dz(self, ms, z):
        return np.where(_orders(ms) == 1, 1.0, 0.0)


def pure_random_walk(D: StepKernel) -> PureRandomWalk:
    return PureRandomWalk(D)


@dataclass(frozen=True)
class SyntheticFamilySpec:
    """``g_m = beta0 z^m m^-theta D^2`` and ``e_m = beta_e z^m m^-theta D^2`` for m >= 2."""

    kernel: StepKernel
    beta0: float = 0.01
    theta: float = 3.0
    beta_e: float = 0.0


class SyntheticTheta(ModelCoefficients):
    name = "synthetic"

    def __init__(self, spec: SyntheticFamilySpec):
        if not spec.theta > 2:
            raise InvalidParameterError(f"theta must exceed 2, got {spec.theta}")
        self.spec = spec
        self.kernel = spec.kernel
        self.theta = float(spec.theta)
        self.beta0 = float(spec.beta0)
        self.beta_e = float(spec.beta_e)

    def _weights(self, ms, z):
        """``z^m m^-theta``, zero at m = 1."""
        mf = ms.astype(float)
        with np.errstate(over="ignore"):
            w = np.power(float(z), mf) * mf ** (-self.theta)
        return np.where(ms >= 2, w, 0.0)

    def g_table(self, ms, k, z):
        ms = _orders(ms)
        kk, _ = _kpoints(self.kernel.d, k)
        dh = fourier(self.kernel, kk)
        out = np.outer(dh * dh, self.beta0 * self._weights(ms, z))
        if np.any(ms == 1):
            out[:, ms == 1] = (z * dh)[:, None]
        return out

    def e_table(self, ms, k, z):
        ms = _orders(ms)
        kk, _ = _kpoints(self.kernel.d, k)
        dh = fourier(self.kernel, kk)
        return np.outer(dh * dh, self.beta_e * self._weights(ms, z))

    def g0(self, ms, z):
        ms = _orders(ms)
        return np.where(ms == 1, float(z), self.beta0 * self._weights(ms, z))

    def e0(self, ms, z):
        ms = _orders(ms)
        return self.beta_e * self._weights(ms, z)

    def g_lap(self, ms, z):
        ms = _orders(ms)
        s2 = self.kernel.sigma2
        return np.where(ms == 1, -z * s2, -2.0 * s2 * self.beta0 * self._weights(ms, z))

    def e_lap(self, ms, z):
        ms = _orders(ms)
        return -2.0 * self.kernel.sigma2 * self.beta_e * self._weights(ms, z)

    def g_dz(self, ms, z):
        ms = _orders(ms)
        mf = ms.astype(float)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            w = self.beta0 * mf * np.power(float(z), mf - 1) * mf ** (-self.theta)
        return np.where(ms == 1, 1.0, w)

    def taylor_remainder(self, m, k, z):
        """Closed form of ``g_m(k) - g_m(0) - a(k) sigma^-2 lap g_m(0)`` (m >= 2)."""
        a = gap(self.kernel, k)
        return self.beta0 * self._weights(_orders([m]), z)[0] * np.asarray(a) ** 2

    def tail_bound(self, M, z):
        if z > 1:
            inf = float("inf")
            return {"g": inf, "mg": inf, "lap": inf, "e": inf}
        t = self.theta
        zf = float(z) ** (M + 1)
        # sum_{m>M} m^-s <= M^(1-s)/(s-1)
        s0 = zf * M ** (1 - t) / (t - 1)
        s1 = zf * M ** (2 - t) / (t - 2)
        return {
            "g": abs(self.beta0) * s0,
            "mg": abs(self.beta0) * s1,
            "lap": 2 * self.kernel.sigma2 * abs(self.beta0) * s0,
            "e": abs(self.beta_e) * s0,
        }

    def describe(self):
        return {"name": self.name, "beta0": self.beta0, "theta": self.theta,
                "beta_e": self.beta_e}


def synthetic_theta(spec: SyntheticFamilySpec) -> SyntheticTheta:
    return SyntheticTheta(spec)


class TabulatedModel(ModelCoefficients):
    """Finite-range x-space tables ``g_m(x)``, ``e_m(x)`` times ``z^p(m)``.

    Fourier transforms and Laplacians at 0 are exact lattice sums.
    """

    name = "tabulated"
    exact_dz = True

    def __init__(self, D: StepKernel, g_tables: dict, e_tables: dict, M: int,
                 z_powers: dict, e_z_powers: dict | None = None, beyond: str = "zero"):
        self.kernel = D
        self.max_order = int(M)
        self.vanishes_beyond = beyond == "zero"
        self.z_powers = {int(m): int(p) for m, p in z_powers.items()}
        self.z_powers[1] = 1
        self.e_z_powers = dict(self.z_powers if e_z_powers is None else
                               {int(m): int(p) for m, p in e_z_powers.items()})
        self._g = {int(m): self._pack(t) for m, t in g_tables.items()}
        self._e = {int(m): self._pack(t) for m, t in e_tables.items()}
        self.raw_g = g_tables
        self.raw_e = e_tables

    def _pack(self, table):
        if not table:
            return np.zeros((0, self.kernel.d)), np.zeros(0)
        pts = sorted(table)
        return (np.array(pts, dtype=float).reshape(len(pts), self.kernel.d),
                np.array([float(table[p]) for p in pts]))

    def _table(self, tables, powers, ms, k, z):
        ms = _orders(ms)
        kk, _ = _kpoints(self.kernel.d, k)
        out = np.zeros((len(kk), len(ms)))
        for j, m in enumerate(ms):
            m = int(m)
            if m > self.max_order:
                self.check_order(m)
                continue
            if m not in tables:
                continue
            X, w = tables[m]
            out[:, j] = float(z) ** powers.get(m, m) * (np.cos(kk @ X.T) @ w)
        return out

    def g_table(self, ms, k, z):
        return self._table(self._g, self.z_powers, ms, k, z)

    def e_table(self, ms, k, z):
        return self._table(self._e, self.e_z_powers, ms, k, z)

    def _lap(self, tables, powers, ms, z):
        ms = _orders(ms)
        out = np.zeros(len(ms))
        for j, m in enumerate(ms):
            m = int(m)
            if m > self.max_order:
                self.check_order(m)
            if m in tables:
                X, w = tables[m]
                out[j] = -float(z) ** powers.get(m, m) * float(np.sum(X**2, axis=1) @ w)
        return out

    def g_lap(self, ms, z):
        return self._lap(self._g, self.z_powers, ms, z)

    def e_lap(self, ms, z):
        return self._lap(self._e, self.e_z_powers, ms, z)

    def g_dz(self, ms, z):
        ms = _orders(ms)
        out = np.zeros(len(ms))
        for j, m in enumerate(ms):
            m = int(m)
            if m in self._g:
                p = self.z_powers.get(m, m)
                out[j] = p * float(z) ** (p - 1) * float(np.sum(self._g[m][1])) if p else 0.0
        return out

    def describe(self):
        return {"name": self.name, "M": self.max_order}


def _read_table(entries, d, what):
    table = {}
    for e in entries:
        x = tuple(int(c) for c in e["x"])
        if len(x) != d:
            raise InvalidParameterError(f"{what}: point {x} does not have dimension {d}")
        w = e["weight"]
        w = Fraction(w) if isinstance(w, (str, int)) else float(w)
        table[x] = table.get(x, 0) + w
    check_symmetry(table, what)
    return table


def load_xspace_model(path, D: StepKernel) -> TabulatedModel:
    """Read a tabulated model.

    File layout (JSON)::

        {"M": 5, "z_powers": [p(2), ..., p(M)], "beyond": "zero",
         "g": {"2": [{"x": [..], "weight": "1/8"}, ...], ...},
         "e": {"3": [...]}}

    ``g["1"]`` may be omitted; when present it must equal ``D``.
    """
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    return xspace_model_from_dict(spec, D)


def xspace_model_from_dict(spec: dict, D: StepKernel) -> TabulatedModel:
    unknown = set(spec) - {"M", "z_powers", "e_z_powers", "beyond", "g", "e", "d"}
    if unknown:
        raise InvalidParameterError(f"unknown fields in model file: {sorted(unknown)}")
    M = int(spec["M"])
    if spec.get("d", D.d) != D.d:
        raise InvalidParameterError("model dimension differs from the kernel's")
    zp = spec.get("z_powers", list(range(2, M + 1)))
    if len(zp) != M - 1:
        raise InvalidParameterError(f"z_powers must list p(2..M): {M - 1} entries")
    z_powers = {m: p for m, p in zip(range(2, M + 1), zp)}
    e_zp = spec.get("e_z_powers")
    e_z_powers = None if e_zp is None else {m: p for m, p in zip(range(2, M + 1), e_zp)}
    g_tables = {}
    for m, entries in spec.get("g", {}).items():
        g_tables[int(m)] = _read_table(entries, D.d, f"g_{m}")
    e_tables = {}
    for m, entries in spec.get("e", {}).items():
        if int(m) == 1 and entries:
            raise InvalidParameterError("e_1 must vanish")
        e_tables[int(m)] = _read_table(entries, D.d, f"e_{m}")
    if any(m > M or m < 1 for m in list(g_tables) + list(e_tables)):
        raise InvalidParameterError("table orders must lie in 1..M")
    ref = {tuple(int(c) for c in x): (D.exact_weights[i] if D.exact_weights else float(D.weights[i]))
           for i, x in enumerate(D.points)}
    if 1 in g_tables:
        g1 = g_tables[1]
        for x in set(g1) | set(ref):
            a, b = g1.get(x, 0), ref.get(x, 0)
            if abs(float(a) - float(b)) > 1e-12 and a != b:
                raise InvalidParameterError(
                    f"g_1 table differs from D at {x}: {a} vs {b}")
    g_tables[1] = ref
    return TabulatedModel(D, g_tables, e_tables, M, z_powers, e_z_powers,
                          beyond=spec.get("beyond", "zero"))


def save_xspace_model(model: TabulatedModel, path):
    def enc(table):
        return [{"x": list(x), "weight": str(w) if isinstance(w, Fraction) else w}
                for x, w in sorted(table.items())]

    M = model.max_order
    out = {
        "d": model.kernel.d,
        "M": M,
        "z_powers": [model.z_powers.get(m, m) for m in range(2, M + 1)],
        "beyond": "zero" if model.vanishes_beyond else "undefined",
        "g": {str(m): enc(t) for m, t in sorted(model.raw_g.items()) if m != 1},
        "e": {str(m): enc(t) for m, t in sorted(model.raw_e.items())},
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")

