"""Command-line experiment runner: JSON config in, CSV/JSON artifacts and a manifest out."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import ids, quasi1d
from .eigen import count_eigenvalues, lowest_eigenpairs
from .lattice import GridSpec, make_column, make_cube
from .operator import BoundarySpec, assemble, cell_decompose, form_value
from .potential import CouplingDistribution, alloy_field, sample_configuration, u_preset, v0_preset
from .spectral_min import (PRESETS, brute_force_e0, classify, ground_state_curve, preset_model,
                           reference_ground_state)

COMMANDS = ("spectral-min", "ids", "quasi1d", "combinatorics", "counterexample", "verify")
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, fieldname: str, msg: str):
        super().__init__(f"config field '{fieldname}': {msg}")
        self.field = fieldname


@dataclass
class ExperimentConfig:
    command: str = "verify"
    model: str = "kn"
    V0: str | None = None
    u: str | None = None
    dist: str | None = None          # bernoulli | uniform
    a: float | None = None
    b: float | None = None
    p_b: float | None = None
    eps: float | None = None
    d: int = 1
    n: int = 8
    L: int = 5
    Ms: list = field(default_factory=lambda: list(range(3, 42, 2)))
    m: int = 3
    attach: str = "a"
    W0: list | None = None
    R: int = 20
    bc: list = field(default_factory=lambda: ["dirichlet", "mezincescu", "neumann"])
    E_grid: dict | list = field(default_factory=lambda: {"start": -1.0, "stop": 10.0, "num": 23})
    window: list | None = None
    K: int = 30
    tol: float = 1e-9
    brute_force_R: int = 0
    rare_events: bool = False
    mc_samples: int = 100000
    mu: float = 0.5
    cell_decompose_bc: str = "neumann"
    seed: int = 0
    workers: int = 1
    out: str = "alloylab-out"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        for k in d:
            if k not in names:
                raise ConfigError(k, "unknown field")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError("command", f"must be one of {COMMANDS}")
        if self.model not in PRESETS:
            raise ConfigError("model", f"unknown preset; choose from {sorted(PRESETS)}")
        for key, fn in (("V0", v0_preset), ("u", u_preset)):
            val = getattr(self, key)
            if val is not None:
                try:
                    fn(val, GridSpec(max(8, self.n), self.d))
                except ValueError as exc:
                    raise ConfigError(key, str(exc)) from None
        if self.dist not in (None, "bernoulli", "uniform"):
            raise ConfigError("dist", "must be 'bernoulli' or 'uniform'")
        for key in ("L", "m"):
            v = getattr(self, key)
            if not isinstance(v, int) or v < 1 or v % 2 == 0:
                raise ConfigError(key, f"must be an odd positive integer, got {v!r}")
        if any((not isinstance(M, int)) or M < 1 or M % 2 == 0 for M in self.Ms):
            raise ConfigError("Ms", "entries must be odd positive integers")
        if not isinstance(self.n, int) or self.n < 2 or self.n % 2:
            raise ConfigError("n", "must be an even integer >= 2")
        if self.d not in (1, 2, 3):
            raise ConfigError("d", "must be 1, 2 or 3")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", "must be an integer in [0, 2^64)")
        if self.R < 1:
            raise ConfigError("R", "must be >= 1")
        for b in self.bc:
            if b not in ("dirichlet", "neumann", "mezincescu", "periodic"):
                raise ConfigError("bc", f"unknown boundary condition {b!r}")
        if self.attach not in ("a", "b"):
            raise ConfigError("attach", "must be 'a' or 'b'")
        try:
            self.energies()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("E_grid", str(exc)) from None

    def energies(self) -> np.ndarray:
        if isinstance(self.E_grid, dict):
            E = np.linspace(float(self.E_grid["start"]), float(self.E_grid["stop"]), int(self.E_grid["num"]))
        else:
            E = np.asarray(self.E_grid, float)
        if E.ndim != 1 or E.size == 0 or np.any(np.diff(E) < 0):
            raise ValueError("energy grid must be a nonempty sorted list")
        return E

    def spec(self) -> GridSpec:
        return GridSpec(self.n, self.d)

    def build_model(self, spec: GridSpec | None = None):
        spec = spec or self.spec()
        dist = None
        if self.dist or self.a is not None or self.b is not None or self.p_b is not None:
            base = PRESETS[self.model][2]
            kind = self.dist or base[0]
            a = self.a if self.a is not None else base[1]
            b = self.b if self.b is not None else base[2]
            if kind == "bernoulli":
                dist = CouplingDistribution.bernoulli(a, b, self.p_b if self.p_b is not None else 0.5)
            else:
                dist = CouplingDistribution.uniform(a, b)
        return preset_model(self.model, spec, self.V0, self.u, dist)


# -- output helpers ------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


class Outputs:
    def __init__(self, out: Path):
        self.out = out
        self.files: list = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows):
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])
        self.files.append(name)

    def json(self, name: str, obj):
        path = self.out / name
        with open(path, "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(name)


def _jsonable(o):
    if dataclasses.is_dataclass(o) and not isinstance(o, type):
        return {f.name: _jsonable(getattr(o, f.name)) for f in dataclasses.fields(o)
                if not f.name.startswith("_")}
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if np.isfinite(f) else str(f)
    if isinstance(o, (int, str)) or o is None:
        return o
    return str(o)


# -- pipelines ------------------------------------------------------------------

def run_spectral_min(cfg: ExperimentConfig, out: Outputs) -> dict:
    model = cfg.build_model()
    rep = classify(model)
    checks = {}
    for tag, t in (("phi_a", model.a), ("phi_b", model.b)):
        _, phi = reference_ground_state(model, t)
        curve = ground_state_curve(model, phi, tag=tag)
        out.csv(f"curve_{tag}.csv", ["t", "E", "second_difference"], curve.to_csv_rows())
        checks[f"concave_{tag}"] = curve.concave()
        if model.u.sign_indefinite:
            checks[f"strictly_concave_{tag}"] = curve.strictly_concave()
    report = {"classification": rep, "model": model.name, "u": model.u.name, "V0": model.V0.name}
    if cfg.brute_force_R > 0:
        bf = brute_force_e0(model, cfg.L, cfg.brute_force_R, cfg.seed)
        lo, hi = rep.E0_bounds
        slack = model.spec.h + 3 * bf.stderr
        report["brute_force"] = {"e0": bf.e0, "stderr": bf.stderr, "const_a": bf.const_a, "const_b": bf.const_b}
        checks["brute_force_bracket"] = bool(lo - slack <= bf.e0)
    out.json("spectral_min.json", report)
    return checks


def run_ids(cfg: ExperimentConfig, out: Outputs) -> dict:
    model = cfg.build_model()
    E = cfg.energies()
    curves = {}
    for b in cfg.bc:
        c = ids.estimate_ids(model, cfg.L, b, E, cfg.R, cfg.seed, cfg.workers)
        curves[b] = c
        out.csv(f"ids_{b}.csv", ["E", "mean_count", "stderr"], c.to_csv_rows())
    rep = classify(model)
    E0 = rep.E0_bounds[0]
    fits = {b: ids.lifshitz_fit(c, E0, cfg.window) for b, c in curves.items()}
    checks = {f"nondecreasing_{b}": bool(np.all(np.diff(c.mean_counts) >= 0)) for b, c in curves.items()}
    checks["no_dropped_realizations"] = all(not c.dropped for c in curves.values())
    order = [b for b in ("dirichlet", "mezincescu", "neumann") if b in curves]
    if "dirichlet" in curves:
        for b in order[1:]:
            checks[f"realizationwise_dirichlet_le_{b}"] = bool(np.all(curves["dirichlet"].counts <= curves[b].counts))
    out.json("ids_report.json", {
        "E0_reference": E0, "fits": fits,
        "dropped": {b: c.dropped for b, c in curves.items()},
        "cross_check_mismatches": {b: c.cross_check_mismatches for b, c in curves.items()},
        "realizations": {b: c.realizations for b, c in curves.items()},
    })
    return checks


def run_quasi1d(cfg: ExperimentConfig, out: Outputs) -> dict:
    model = cfg.build_model()
    W0 = tuple(cfg.W0) if cfg.W0 is not None else (0.5 * (model.a + model.b),) * ((cfg.m - 1) // 2)
    inst = quasi1d.Quasi1DInstance(model, cfg.m, cfg.attach, W0)
    fam = quasi1d.gse_family(inst, cfg.Ms, workers=cfg.workers)
    fit = quasi1d.inverse_square_fit(fam)
    out.csv("gse_family.csv", ["M", "lambda_min", "gap"], fam.to_csv_rows())
    nu = quasi1d.nu_dichotomy(model, cfg.attach, [M for M in cfg.Ms if M >= 3][:6] or [3, 5])
    out.json("quasi1d_report.json", {"family": fam, "fit": fit, "nu_dichotomy": nu})
    checks = {"bracketing": fam.bracketing_ok}
    if fam.hypothesis_ok:
        checks["gaps_positive"] = bool(np.all(fam.gaps > 0))
        checks["slope_at_least_-2.3"] = fit.ok
        checks["strict_positivity_small_M"] = fam.strict_positivity
    return checks


def run_combinatorics(cfg: ExperimentConfig, out: Outputs) -> dict:
    nc = ids.nonadjacent_count(cfg.L)
    report = {"nonadjacent": dataclasses.asdict(nc), "total": nc.total, "fibonacci_ok": nc.ok}
    checks = {"fibonacci_identity": nc.ok}
    if cfg.rare_events:
        bounds = {
            "non-Bernoulli-pairs": ids.rare_config_probability("non-Bernoulli-pairs", {"mu": cfg.mu}, cfg.L,
                                                               cfg.mc_samples, cfg.seed),
            "fibonacci": ids.rare_config_probability("fibonacci", {"mu": cfg.mu}, cfg.L, cfg.mc_samples, cfg.seed),
            "Bernoulli-quadruples": ids.rare_config_probability("Bernoulli-quadruples", {"mu_a": cfg.mu}, cfg.L,
                                                                cfg.mc_samples, cfg.seed),
        }
        report["rare_events"] = bounds
        for k, v in bounds.items():
            if v.applicable:
                checks[f"bound_dominates_{k}"] = v.dominated
    out.json("combinatorics.json", report)
    return checks


def run_counterexample(cfg: ExperimentConfig, out: Outputs) -> dict:
    spec = GridSpec(cfg.n, 1)
    model = preset_model("kn", spec)
    dom = make_cube(cfg.L, spec)
    base = assemble(dom, None, BoundarySpec.neumann())
    rows = []
    worst = 0.0
    for bits in itertools.product([0, 1], repeat=cfg.L):
        om = [model.b if x else model.a for x in bits]
        r = ids.explicit_ground_state_check(model, dom, om, op=base)
        rows.append(("".join(map(str, bits)), r.rayleigh, r.lambda_min, r.residual))
        worst = max(worst, abs(r.rayleigh), abs(r.lambda_min))
    out.csv("counterexample.csv", ["omega", "rayleigh", "lambda_min", "residual"], rows)
    nu = quasi1d.nu_dichotomy(model, "b", [3, 5, 7, 9])
    vh = ids.van_hove_contrast()
    report = {"max_abs_energy": worst, "configurations": len(rows), "nu_dichotomy": nu,
              "van_hove": {"lifshitz_slope": vh["lifshitz"].slope, "van_hove_slope": vh["van_hove"].slope,
                           "difference": vh["difference"], "van_hove_flag": bool(vh["difference"] >= 0.4)}}
    out.json("counterexample.json", report)
    return {"ground_energies_near_zero": worst <= 5e-3, "nu_inherited": nu.case == "inherited",
            "nu_is_one": nu.nu is not None and abs(nu.nu - 1) <= 5e-3,
            "van_hove_flag": bool(vh["difference"] >= 0.4)}


def _verify_checks(cfg: ExperimentConfig) -> list:
    """(name, status, detail) with status in {pass, fail, skipped}."""
    res = []
    rng = np.random.default_rng(cfg.seed)

    def add(name, ok, detail=""):
        res.append((name, "pass" if ok else "fail", detail))

    for spec, L in ((GridSpec(8, 1), 5), (GridSpec(4, 2), 3)):
        dom = make_cube(L, spec)
        model = preset_model("dipole", spec)
        V = alloy_field(model.V0, model.u, sample_configuration(model.dist, dom, cfg.seed, 0), dom)
        kind = cfg.cell_decompose_bc
        if kind not in ("neumann", "mezincescu"):
            res.append((f"bracketing_d{spec.d}", "skipped",
                        f"cell decomposition requires Neumann/Mezincescu, not {kind}"))
            continue
        bc = ids.resolve_bc(model, kind)
        op = assemble(dom, V, bc)
        cells = cell_decompose(op)
        f = rng.standard_normal(op.dim)
        tot = sum(form_value(c, f[c.embedding]) for c in cells)
        add(f"bracketing_d{spec.d}", abs(tot - form_value(op, f)) <= 1e-12 * abs(form_value(op, f)))
        counts, reps = count_eigenvalues(op, np.linspace(-5, 50, 12))
        add(f"inertia_vs_dense_d{spec.d}", all(r.dense_count == r.count for r in reps))
        dn = lowest_eigenpairs(op, 3, method="dense")
        lz = lowest_eigenpairs(op, 3, method="lanczos")
        add(f"lanczos_vs_dense_d{spec.d}", max(abs(p.value - q.value) for p, q in zip(dn, lz)) <= 1e-8)
    spec = GridSpec(8, 1)
    model = preset_model("kn", spec)
    _, phi = reference_ground_state(model, model.a)
    add("concavity_kn", ground_state_curve(model, phi).concave())
    s = ids.sandwich_check(model, 5, np.linspace(0, 30, 16), 8, cfg.seed)
    add("sandwich_kn", s["ok"])
    add("fibonacci", all(ids.nonadjacent_count(L).ok for L in range(1, 61)))
    pc = quasi1d.poincare_check(3, [rng.standard_normal(make_column(0, 1, spec).nnodes) for _ in range(10)], spec)
    add("poincare_M3", pc.holds)
    inst = quasi1d.Quasi1DInstance(model, 3, "a", (0.5,))
    T = quasi1d.dtn_map(inst, inst.E0)
    add("dtn_symmetry", T.asymmetry <= 1e-8)
    add("dtn_coercive", T.coercivity() > 0)
    nu = quasi1d.nu_dichotomy(model, "a", [3, 5])
    add("nu_inherited_attach_a", nu.case == "inherited" and abs(nu.nu - 1) <= 1e-6)
    return res


def run_verify(cfg: ExperimentConfig, out: Outputs) -> dict:
    rows = _verify_checks(cfg)
    out.csv("verify.csv", ["check", "status", "detail"], rows)
    return {name: (status != "fail") for name, status, _ in rows}


PIPELINES = {"spectral-min": run_spectral_min, "ids": run_ids, "quasi1d": run_quasi1d,
             "combinatorics": run_combinatorics, "counterexample": run_counterexample, "verify": run_verify}


def run(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    out = Outputs(Path(cfg.out))
    t0 = time.perf_counter()
    checks = PIPELINES[cfg.command](cfg, out)
    manifest = {
        "config": dataclasses.asdict(cfg),
        "files": list(out.files),
        "versions": {"alloylab": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "timing_seconds": time.perf_counter() - t0,
        "checks": {k: bool(v) for k, v in checks.items()},
        "passed": all(bool(v) for v in checks.values()),
    }
    out.files.append("manifest.json")
    manifest["files"] = list(out.files)
    with open(out.out / "manifest.json", "w") as fh:     # written last
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def verify(cfg: ExperimentConfig | None = None) -> dict:
    cfg = cfg or ExperimentConfig()
    cfg.command = "verify"
    return run(cfg)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alloylab", description=__doc__)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=str)
    p.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                   help="override one config field (value parsed as JSON, else string)")
    return p


def load_config(args) -> ExperimentConfig:
    d = {}
    if args.config is not None:
        try:
            d = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("config", str(exc)) from None
        if not isinstance(d, dict):
            raise ConfigError("config", "top level must be a JSON object")
    for item in args.set:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        k, v = item.split("=", 1)
        try:
            d[k] = json.loads(v)
        except json.JSONDecodeError:
            d[k] = v
    d["command"] = args.command
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["out"] = args.out
    env = os.environ.get("ALLOYLAB_WORKERS")
    if args.workers is not None:
        d["workers"] = args.workers
    elif env:
        d["workers"] = int(env)
    try:
        return ExperimentConfig.from_dict(d)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = run(cfg)
    for k, v in manifest["checks"].items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    print(f"artifacts in {cfg.out}")
    return EXIT_PASS if manifest["passed"] else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
