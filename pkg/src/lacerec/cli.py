"""Command-line front end: ``lacerec <subcommand> --config run.json --out DIR``.

Configuration is strict JSON; unknown fields are rejected at every level.
Exit codes: 0 all records pass, 1 some record fails, 2 usage or configuration
error (nothing written), 3 a pipeline stage raised (partial outputs kept).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .asymptotics import (chi_identity_check, find_bracket, gaussian_profile, hessian_ratio,
                          profile_envelope, radial_kgrid, write_chi_csv, write_profile_csv,
                          zc_from_susceptibility)
from .certifier import (CertificateReport, InductionConfig, certification_kset,
                        check_assumptions_EG, check_fbdsp, check_H1_H4, check_lemma_cA,
                        check_lemma_fder, check_product_form, fit_constants, fit_lemma_cA,
                        fit_lemma_fder, structural_failures, validate_config)
from .engine import constants_Av, critical_point, evolve, write_trace_csv
from .errors import LaceRecError
from .kernel import (build_uniform_box, certify_assumption_D, default_kgrid, fit_assumption_D,
                     load_kernel)
from .model import PureRandomWalk, SyntheticFamilySpec, SyntheticTheta, load_xspace_model
from .quadrature import QuadratureSpec, lp_norms, write_norms_csv

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_STAGE = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def _strict(data, allowed, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(unknown)}")
    return data


@dataclass
class RunConfig:
    kernel: dict
    model: dict = field(default_factory=lambda: {"name": "pure_rw"})
    z: object = 1.0
    N: int = 100
    kset: dict = field(default_factory=lambda: {"type": "certification"})
    induction: dict | None = None
    quadrature: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None
    kernel_check: dict | None = None
    critical: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    certify: dict = field(default_factory=dict)
    gaussian: dict = field(default_factory=dict)
    norms: dict = field(default_factory=dict)
    susceptibility: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "RunConfig":
        names = [f.name for f in fields(cls) if f.name != "base_dir"]
        _strict(data, names, "config")
        if "kernel" not in data:
            raise ConfigError("config has no kernel")
        cfg = cls(**data, base_dir=Path(base_dir))
        cfg._check()
        return cfg

    def _check(self):
        _strict(self.kernel, ("type", "d", "L", "include_origin", "path"), "kernel")
        if "path" not in self.kernel and not {"d", "L"} <= set(self.kernel):
            raise ConfigError("kernel needs either path or d and L")
        _strict(self.model, ("name", "beta0", "theta", "beta_e", "path"), "model")
        if not (self.z == "critical" or isinstance(self.z, (int, float))):
            raise ConfigError('z must be a number or "critical"')
        if not isinstance(self.N, int) or self.N < 1:
            raise ConfigError("N must be a positive integer")
        _strict(self.kset, ("type", "count", "a_min", "points"), "kset")
        _strict(self.quadrature, [f.name for f in fields(QuadratureSpec)], "quadrature")
        if self.kernel_check is not None:
            _strict(self.kernel_check, ("eta", "c1", "c2", "C", "eps", "n_axis", "n_fill"),
                    "kernel_check")
        _strict(self.critical, ("N", "tol", "M_max"), "critical")
        _strict(self.constants, ("M_max", "tail_tol", "product_N"), "constants")
        _strict(self.certify, ("fbdsp_K", "lemma_C", "eps_prime", "n", "fbdsp"), "certify")
        _strict(self.gaussian, ("n_list", "k_max", "radii", "directions", "max_deviation"),
                "gaussian")
        _strict(self.norms, ("p_list", "gamma"), "norms")
        _strict(self.susceptibility, ("z_list", "N", "M_max"), "susceptibility")

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return RunConfig.from_dict(data, base_dir=path.parent)


def build_kernel(cfg: RunConfig):
    spec = cfg.kernel
    if "path" in spec:
        return load_kernel(cfg.path(spec["path"]))
    if spec.get("type", "box") != "box":
        raise ConfigError(f"unknown kernel type {spec['type']!r}")
    return build_uniform_box(int(spec["d"]), int(spec["L"]), bool(spec.get("include_origin", False)))


def build_model(cfg: RunConfig, D):
    spec = cfg.model
    if "path" in spec:
        return load_xspace_model(cfg.path(spec["path"]), D)
    name = spec.get("name", "pure_rw")
    if name == "pure_rw":
        return PureRandomWalk(D)
    if name == "synthetic":
        kw = {k: float(spec[k]) for k in ("beta0", "theta", "beta_e") if k in spec}
        return SyntheticTheta(SyntheticFamilySpec(D, **kw))
    raise ConfigError(f"unknown model {name!r}")


def build_induction(cfg: RunConfig, D) -> InductionConfig | None:
    if cfg.induction is None:
        return None
    data = dict(cfg.induction)
    for key in ("d", "L"):
        if key in data and data[key] != getattr(D, key):
            raise ConfigError(f"induction.{key} disagrees with the kernel")
        data[key] = getattr(D, key)
    return InductionConfig.from_dict(data)


def build_kset(cfg: RunConfig, D):
    spec = cfg.kset
    kind = spec.get("type", "certification")
    if kind == "certification":
        return certification_kset(D, int(spec.get("count", 48)), float(spec.get("a_min", 1e-5)))
    if kind == "points":
        pts = np.atleast_2d(np.asarray(spec["points"], dtype=float))
        if pts.shape[1] != D.d:
            raise ConfigError("kset points have the wrong dimension")
        return pts
    raise ConfigError(f"unknown kset type {kind!r}")


def quad_spec(cfg: RunConfig) -> QuadratureSpec:
    data = dict(cfg.quadrature)
    data.setdefault("seed", cfg.seed)
    return QuadratureSpec(**data)


class Workspace:
    """Output directory plus a record of every file written, for the manifest."""

    def __init__(self, out: Path, cfg: RunConfig, command: str):
        self.out = out
        self.cfg = cfg
        self.command = command
        self.files = []
        out.mkdir(parents=True, exist_ok=True)

    def file(self, name) -> Path:
        self.files.append(name)
        return self.out / name

    def json(self, name, obj):
        with open(self.file(name), "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_plain(obj), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def manifest(self, status, failed_stage=None, extra=None):
        entries = {}
        for name in sorted(set(self.files)):
            p = self.out / name
            if p.exists():
                entries[name] = hashlib.sha256(p.read_bytes()).hexdigest()
        cfg = {f.name: getattr(self.cfg, f.name) for f in fields(self.cfg)
               if f.name not in ("base_dir", "out")}
        inputs = {}
        for spec in (self.cfg.kernel, self.cfg.model):
            if "path" in spec:
                p = self.cfg.path(spec["path"])
                inputs[str(spec["path"])] = hashlib.sha256(p.read_bytes()).hexdigest()
        data = {
            "command": self.command,
            "status": status,
            "failed_stage": failed_stage,
            "config": cfg,
            "seed": self.cfg.seed,
            "inputs": inputs,
            "outputs": entries,
            "versions": {"lacerec": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
        }
        if extra:
            data.update(extra)
        with open(self.out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_plain(data), fh, indent=1, sort_keys=True)
            fh.write("\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


class Stage:
    """Context manager tagging errors with the pipeline stage that raised them."""

    def __init__(self, state, name):
        self.state, self.name = state, name

    def __enter__(self):
        self.state["stage"] = self.name

    def __exit__(self, *exc):
        return False


def _resolve_z(cfg, model, ws, state):
    if cfg.z != "critical":
        return float(cfg.z), None
    with Stage(state, "critical_point"):
        cp = critical_point(model, int(cfg.critical.get("N", max(cfg.N, 2000))),
                            float(cfg.critical.get("tol", 1e-10)))
    ws.json("critical_point.json", {"z_N": cp.z_N, "error_bound": cp.error_bound,
                                    "rate": cp.rate, "extrapolated": cp.extrapolated,
                                    "converged": cp.converged, "window": cp.window})
    return cp.z_N, cp


def _constants(cfg, model, z, ws, state):
    with Stage(state, "constants_Av"):
        C = constants_Av(model, z, int(cfg.constants.get("M_max", 4000)),
                         float(cfg.constants.get("tail_tol", 1e-10)),
                         cfg.constants.get("product_N"))
    C.write_json(ws.file("constants.json"))
    return C


def _certify(cfg, D, model, ind, trace, ws, state, fit, report):
    c = cfg.certify
    n = int(c.get("n", trace.N))
    K = float(c.get("fbdsp_K", ind.c * ind.K4))
    Cl = float(c.get("lemma_C", 10.0))
    with Stage(state, "check_H1_H4"):
        report.extend(check_H1_H4(trace, D, ind, n))
    with Stage(state, "check_product_form"):
        report.extend(check_product_form(trace, ind, n=n))
    with Stage(state, "check_assumptions_EG"):
        eps_p = c.get("eps_prime", [0.0, ind.epsilon])
        from .certifier import _as_function
        Kc = ind.c * K
        report.extend(check_assumptions_EG(model, trace.z, ind, _as_function(ind.C_e)(Kc),
                                           _as_function(ind.C_g)(Kc), n,
                                           default_kgrid(D, n_fill=256), eps_p))
    with Stage(state, "check_lemma_cA"):
        report.extend(check_lemma_cA(trace, D, ind, Cl, n))
    with Stage(state, "check_lemma_fder"):
        report.extend(check_lemma_fder(trace, ind, Cl, n))
    if c.get("fbdsp", True):
        with Stage(state, "check_fbdsp"):
            report.extend(check_fbdsp(trace, D, ind, K, n, quad_spec(cfg)))
    if fit:
        fitted = fit_constants(report, ind)
        fitted["lemma_cA_C"] = fit_lemma_cA(trace, ind, n)
        fitted["lemma_fder_C"] = fit_lemma_fder(trace, ind, n)
        ws.json("fit.json", fitted)


def _write_report(report, ws, stem):
    report.write_json(ws.file(stem + ".json"))
    report.write_csv(ws.file(stem + ".csv"))


def cmd_certify_kernel(cfg: RunConfig, ws: Workspace, state, fit=False) -> int:
    D = build_kernel(cfg)
    kc = dict(cfg.kernel_check or {})
    grid = default_kgrid(D, kc.pop("n_axis", None), int(kc.pop("n_fill", 1024)))
    with Stage(state, "certify_assumption_D"):
        if fit:
            fitted = fit_assumption_D(D, grid)
            ws.json("kernel_fit.json", fitted)
            if not {"eta", "c1", "c2", "C"} <= set(kc):
                return EXIT_OK
        cert = certify_assumption_D(D, float(kc["eta"]), float(kc["c1"]), float(kc["c2"]),
                                    float(kc["C"]), float(kc.get("eps", 0.1)), grid)
    ws.json("kernel_certificate.json", cert.to_dict())
    return EXIT_OK if cert.passed else EXIT_FAIL


def _prepare(cfg: RunConfig):
    D = build_kernel(cfg)
    model = build_model(cfg, D)
    ind = build_induction(cfg, D)
    cfg_report = validate_config(ind) if ind is not None else None
    if cfg_report is not None:
        bad = structural_failures(cfg_report)
        if bad:
            raise ConfigError("induction config violates " + ", ".join(r.check for r in bad))
    return D, model, ind, cfg_report


def cmd_run(cfg: RunConfig, ws: Workspace, state, fit=False) -> int:
    D, model, ind, cfg_report = _prepare(cfg)
    if cfg_report is not None:
        _write_report(cfg_report, ws, "config_report")
    z, _ = _resolve_z(cfg, model, ws, state)
    with Stage(state, "evolve"):
        kset = build_kset(cfg, D)
        trace = evolve(model, z, kset, cfg.N)
    write_trace_csv(trace, ws.file("trace.csv"), ws.file("kset.csv"))
    C = _constants(cfg, model, z, ws, state)
    report = CertificateReport()
    if ind is not None:
        _certify(cfg, D, model, ind, trace, ws, state, fit, report)
        _write_report(report, ws, "certificate")
    if cfg.z == "critical" and cfg.gaussian:
        _gaussian(cfg, model, C, ind, ws, state, report)
    return EXIT_OK if report.passed else EXIT_FAIL


def _gaussian(cfg, model, C, ind, ws, state, report):
    g = cfg.gaussian
    n_list = [int(n) for n in g.get("n_list", [250, 500, 1000, 2000])]
    gamma = ind.gamma if ind is not None else 0.2
    with Stage(state, "gaussian_profile"):
        kg = radial_kgrid(model.kernel.d, float(g.get("k_max", 2.0)), int(g.get("radii", 9)),
                          int(g.get("directions", 3)))
        res = gaussian_profile(model, C, n_list, kg, gamma)
        env = profile_envelope(res)
        hr = hessian_ratio(model, C, n_list)
    write_profile_csv(res, ws.file("gaussian.csv"))
    summary = {
        "n": n_list,
        "max_deviation": [r.max_deviation for r in res],
        "excluded": [r.excluded for r in res],
        "threshold": [r.threshold for r in res],
        "const_term": [r.const_term for r in res],
        "k2_term": [r.k2_term for r in res],
        "envelope": env,
        "hessian_ratio": hr.ratio,
        "hessian_exponent": hr.exponent,
    }
    ws.json("gaussian.json", summary)
    if "max_deviation" in g:
        tol = float(g["max_deviation"])
        for r in res:
            report.add("gaussian.max_deviation", r.n, tol, r.max_deviation)
        report.add("gaussian.envelope_slope", None, 0.0, env["max_deviation_slope"], strict=True)


def cmd_critical_point(cfg: RunConfig, ws: Workspace, state, fit=False) -> int:
    D, model, _, _ = _prepare(cfg)
    N = int(cfg.critical.get("N", max(cfg.N, 2000)))
    with Stage(state, "critical_point"):
        cp = critical_point(model, N, float(cfg.critical.get("tol", 1e-10)))
    M = int(cfg.critical.get("M_max", N))
    with Stage(state, "zc_from_susceptibility"):
        root = zc_from_susceptibility(model, *find_bracket(model, M), M_max=M)
    ws.json("critical_point.json", {"z_N": cp.z_N, "error_bound": cp.error_bound, "rate": cp.rate,
                                    "extrapolated": cp.extrapolated, "converged": cp.converged,
                                    "window": cp.window, "z_c_susceptibility": root,
                                    "M_max": M, "difference": cp.z_N - root})
    return EXIT_OK


def cmd_certify_induction(cfg: RunConfig, ws: Workspace, state, fit=False) -> int:
    D, model, ind, cfg_report = _prepare(cfg)
    if ind is None:
        raise ConfigError("certify-induction needs an induction section")
    _write_report(cfg_report, ws, "config_report")
    z, _ = _resolve_z(cfg, model, ws, state)
    with Stage(state, "evolve"):
        trace = evolve(model, z, build_kset(cfg, D), cfg.N)
    report = CertificateReport()
    _certify(cfg, D, model, ind, trace, ws, state, fit, report)
    _write_report(report, ws, "certificate")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_gaussian_check(cfg: RunConfig, ws: Workspace, state, fit=False) -> int:
    D, model, ind, _ = _prepare(cfg)
    if cfg.z != "critical":
        raise ConfigError('gaussian-check needs z = "critical"')
    z, _ = _resolve_z(cfg, model, ws, state)
    C = _constants(cfg, model, z, ws, state)
    report = CertificateReport()
    _gaussian(cfg, model, C, ind, ws, state, report)
    if report.records:
        _write_report(report, ws, "gaussian_report")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_norms(cfg: RunConfig, ws: Workspace, state, fit=False) -> int:
    D, model, ind, _ = _prepare(cfg)
    z, _ = _resolve_z(cfg, model, ws, state)
    p_list = cfg.norms.get("p_list", list(ind.p_list) if ind is not None else [1.0])
    spec = quad_spec(cfg).resolve(D.d)
    with Stage(state, "evolve"):
        trace = evolve(model, z, np.zeros((1, D.d)), cfg.N, with_zn=False)
    with Stage(state, "lp_norm_D2f"):
        sweeps = lp_norms(trace, D, p_list, spec, cfg.norms.get("gamma"))
    write_norms_csv(sweeps, ws.file("norms.csv"))
    ws.json("norms.json", {"method": spec.method, "points": sweeps[0].points,
                           "seed": spec.seed if spec.method == "monte-carlo" else None,
                           "warnings": [s.warning for s in sweeps if s.warning]})
    return EXIT_OK


def cmd_susceptibility(cfg: RunConfig, ws: Workspace, state, fit=False) -> int:
    D, model, _, _ = _prepare(cfg)
    s = cfg.susceptibility
    N = int(s.get("N", cfg.N))
    M = int(s.get("M_max", N))
    with Stage(state, "zc_from_susceptibility"):
        zc = zc_from_susceptibility(model, *find_bracket(model, M), M_max=M)
        z_list = s.get("z_list") or [zc - 10.0**-j for j in range(1, 5)]
    with Stage(state, "chi_identity_check"):
        res = chi_identity_check(model, z_list, N, z_c=zc, M_max=M)
    write_chi_csv(res, ws.file("chi.csv"))
    ws.json("chi.json", {"z_c": res.z_c, "exponent": res.exponent, "gap": res.gap})
    return EXIT_OK


COMMANDS = {
    "certify-kernel": cmd_certify_kernel,
    "run": cmd_run,
    "critical-point": cmd_critical_point,
    "certify-induction": cmd_certify_induction,
    "gaussian-check": cmd_gaussian_check,
    "norms": cmd_norms,
    "susceptibility": cmd_susceptibility,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lacerec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="root seed (overrides config)")
        p.add_argument("--fit", action="store_true", help="also report fitted minimal constants")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.quadrature = {**cfg.quadrature, "seed": args.seed}
        out = args.out or cfg.out
        if out is None:
            raise ConfigError("no output directory (--out or config out)")
        if args.command == "certify-kernel" and not (cfg.kernel_check or args.fit):
            raise ConfigError("certify-kernel needs a kernel_check section or --fit")
        # build everything that can fail on bad input before touching the disk
        D = build_kernel(cfg)
        build_model(cfg, D)
        ind = build_induction(cfg, D)
        if ind is not None:
            bad = structural_failures(validate_config(ind))
            if bad:
                raise ConfigError("induction config violates " + ", ".join(r.check for r in bad))
        quad_spec(cfg)
    except (ConfigError, LaceRecError, KeyError, TypeError, ValueError, OSError) as exc:
        print(f"lacerec: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    ws = Workspace(Path(out), cfg, args.command)
    state = {"stage": "setup"}
    try:
        code = COMMANDS[args.command](cfg, ws, state, fit=args.fit)
    except ConfigError as exc:
        print(f"lacerec: usage error: {exc}", file=sys.stderr)
        ws.manifest("usage-error")
        return EXIT_USAGE
    except (LaceRecError, ArithmeticError, ValueError) as exc:
        print(f"lacerec: stage {state['stage']} failed: {exc}", file=sys.stderr)
        ws.manifest("stage-error", failed_stage=state["stage"])
        return EXIT_STAGE
    ws.manifest("fail" if code else "pass")
    return code


if __name__ == "__main__":
    sys.exit(main())
