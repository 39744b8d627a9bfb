"""Configuration parsing, experiment orchestration and serialized outputs.

A run is described by one JSON file; see the README for the schema and the
defaults.  ``run`` computes a :class:`RunRecord` without touching the file
system, ``write_outputs`` serializes it, and ``main`` is the command line
entry point::

    platesim <simulate|energy-audit|attractor|upper-semi|validate-coeffs> \\
        --config <path> --out <dir> [--seed <u64>] [--threads <n>]

Exit status: 0 when every certificate passes, 2 when one fails (outputs are
still written), 1 for configuration problems (nothing is written).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from platesim import __version__
from platesim.coefficients import (
    PROFILE_KEYS,
    NONLINEARITY_KEYS,
    DampingSpec,
    NonlinearitySpec,
    Profile,
    fit_dissipativity,
    validate_damping,
    verify_growth,
)
from platesim.energy import (
    W_values,
    absorbing_certificate,
    estimate_c_bar,
    F_integrals,
    homogeneous_decay_certificate,
    norms_squared,
    quadrature_size,
    select_constants,
    semilinear_certificate,
)
from platesim.errors import ConfigError, PlatesimError
from platesim.evolution import ProcessConfig, evolve_batch
from platesim.kernels import default_threads
from platesim.pullback import (
    check_invariance,
    pullback_converge,
    sample_ball,
    semicontinuity_experiment,
)
from platesim.spectral import build_grid, mode_eigenvalues

KINDS = ("simulate", "energy-audit", "attractor", "upper-semi", "validate-coeffs")

DEFAULTS = {
    "N": 16,
    "dt": 0.01,
    "dim": 1,
    "order": 2,
    "lambda": 1.0,
}

_TOP_KEYS = {"kind", "seed", "discretization", "lambda", "damping", "nonlinearity", "energy", "experiment"}
_DISC_KEYS = {"N", "M", "dim", "dt", "order"}
_DAMP_KEYS = {"base", "perturbation", "epsilon", "eps_list", "alpha0", "alpha1", "beta", "holder_C"}
_PROFILE_KEYS = {"key", "params"}
_NONLIN_KEYS = {"key", "params", "rho", "c"}
_ENERGY_KEYS = {"nu", "safety", "r"}
_EXP_KEYS = {
    "t0", "t1", "record_every", "radius", "initial", "count",
    "t", "T_back", "n_max", "tol", "m", "invariance_lag", "resolution_factor",
    "radii", "horizon", "samples", "deviation_window",
}


@dataclass(frozen=True)
class Violation:
    kind: str  # syntax | unknown-key | unknown-catalog-entry | range | type
    field: str
    message: str

    def __str__(self) -> str:
        where = f" [{self.field}]" if self.field else ""
        return f"{self.kind}{where}: {self.message}"


class ConfigViolations(ConfigError):
    """All problems found in one configuration text."""

    def __init__(self, violations):
        self.items = list(violations)
        super().__init__([str(v) for v in self.items])

    def kinds(self) -> set:
        return {v.kind for v in self.items}

    def fields(self) -> set:
        return {v.field for v in self.items}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration of one experiment."""

    kind: str
    seed: int
    N: int
    M: int | None
    dim: int
    dt: float
    order: int
    lam: float
    damping: DampingSpec
    eps_list: tuple
    nonlinearity: NonlinearitySpec
    nu: float
    safety: float
    r: float | None
    experiment: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, compare=False)

    def process(self, epsilon: float | None = None) -> ProcessConfig:
        damping = self.damping if epsilon is None else self.damping.with_epsilon(epsilon)
        return ProcessConfig(damping, self.nonlinearity, lam=self.lam, N=self.N, M=self.M,
                             dim=self.dim, dt=self.dt, order=self.order)

    def param(self, name: str):
        return self.experiment.get(name, _EXP_DEFAULTS[self.kind].get(name))

    def echo(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "discretization": {"N": self.N, "M": self.process().M, "dim": self.dim, "dt": self.dt,
                               "order": self.order},
            "lambda": self.lam,
            "damping": {
                "base": {"key": self.damping.base.key, "params": dict(self.damping.base.params)},
                "perturbation": {"key": self.damping.perturbation.key,
                                 "params": dict(self.damping.perturbation.params)},
                "epsilon": self.damping.epsilon,
                "eps_list": list(self.eps_list),
                "alpha0": self.damping.alpha0,
                "alpha1": self.damping.alpha1,
                "beta": self.damping.beta,
                "holder_C": self.damping.holder_C,
            },
            "nonlinearity": {"key": self.nonlinearity.key, "params": dict(self.nonlinearity.params),
                             "rho": self.nonlinearity.rho, "c": self.nonlinearity.c},
            "energy": {"nu": self.nu, "safety": self.safety, "r": self.r},
            "experiment": {k: self.param(k) for k in sorted(_EXP_DEFAULTS[self.kind])},
        }


_EXP_DEFAULTS = {
    "simulate": {"t0": 0.0, "t1": 10.0, "record_every": 10, "radius": 1.0, "initial": None},
    "energy-audit": {"t0": 0.0, "t1": 20.0, "record_every": 10, "count": 20, "samples": 10000,
                     "radii": [2.0, 5.0], "horizon": 50.0},
    "attractor": {"t": 0.0, "T_back": 5.0, "n_max": 40, "tol": 1e-3, "m": 200, "radius": 5.0,
                  "invariance_lag": 5.0, "resolution_factor": 3.0},
    "upper-semi": {"t": 0.0, "T_back": 5.0, "n_max": 40, "tol": 1e-3, "m": 200, "radius": 5.0,
                   "deviation_window": 10.0},
    "validate-coeffs": {"samples": 20001},
}


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


class _Collector:
    def __init__(self):
        self.items: list[Violation] = []

    def add(self, kind, fld, msg):
        self.items.append(Violation(kind, fld, msg))

    def unknown(self, section: dict, allowed: set, prefix: str):
        for k in sorted(set(section) - allowed):
            self.add("unknown-key", f"{prefix}{k}", f"unknown key {k!r}")

    def section(self, raw: dict, name: str) -> dict:
        val = raw.get(name, {})
        if not isinstance(val, dict):
            self.add("type", name, "must be an object")
            return {}
        return val

    def number(self, sec: dict, key: str, fld: str, default, *, integer=False, cond=None, what=""):
        val = sec.get(key, default)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.add("type", fld, f"expected a number, got {val!r}")
            return default
        if integer and not float(val).is_integer():
            self.add("type", fld, f"expected an integer, got {val!r}")
            return default
        val = int(val) if integer else float(val)
        if cond is not None and not cond(val):
            self.add("range", fld, f"{fld} {what}, got {val}")
        return val


def _profile(col: _Collector, spec, fld: str) -> Profile | None:
    if spec is None:
        return Profile("zero")
    if isinstance(spec, str):
        spec = {"key": spec}
    if not isinstance(spec, dict):
        col.add("type", fld, "must be a catalog key or an object")
        return None
    col.unknown(spec, _PROFILE_KEYS, fld + ".")
    key = spec.get("key")
    if key not in PROFILE_KEYS:
        col.add("unknown-catalog-entry", fld + ".key", f"unknown damping profile {key!r}; have {list(PROFILE_KEYS)}")
        return None
    try:
        return Profile.make(key, **spec.get("params", {}))
    except (PlatesimError, TypeError, ValueError) as exc:
        col.add("range", fld + ".params", str(exc))
        return None


def parse_config(text: str, *, kind: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Validate a JSON configuration.

    ``kind`` and ``seed`` override the corresponding entries (the command
    line passes them).  Every problem is collected before raising
    :class:`ConfigViolations`.
    """
    col = _Collector()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        col.add("syntax", "", f"line {exc.lineno}, column {exc.colno}: {exc.msg}")
        raise ConfigViolations(col.items) from None
    if not isinstance(raw, dict):
        col.add("type", "", "top level must be an object")
        raise ConfigViolations(col.items)
    col.unknown(raw, _TOP_KEYS, "")

    kind = kind or raw.get("kind")
    if kind not in KINDS:
        col.add("range", "kind", f"kind must be one of {list(KINDS)}, got {kind!r}")
    if raw.get("kind") is not None and kind is not None and raw["kind"] != kind:
        col.add("range", "kind", f"config declares kind {raw['kind']!r} but {kind!r} was requested")
    if seed is None:
        seed = raw.get("seed")
    if seed is None:
        col.add("range", "seed", "a seed is mandatory")
    elif isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        col.add("range", "seed", f"seed must be an integer in [0, 2^64), got {seed!r}")

    disc = col.section(raw, "discretization")
    col.unknown(disc, _DISC_KEYS, "discretization.")
    N = col.number(disc, "N", "N", DEFAULTS["N"], integer=True, cond=lambda v: v >= 1, what="must be >= 1")
    M = col.number(disc, "M", "M", None, integer=True, cond=lambda v: v >= 1, what="must be >= 1")
    dim = col.number(disc, "dim", "dim", DEFAULTS["dim"], integer=True, cond=lambda v: v in (1, 2), what="must be 1 or 2")
    dt = col.number(disc, "dt", "dt", DEFAULTS["dt"], cond=lambda v: v > 0, what="must be positive")
    order = col.number(disc, "order", "order", DEFAULTS["order"], integer=True, cond=lambda v: v in (1, 2),
                       what="must be 1 or 2")
    lam = col.number(raw, "lambda", "lambda", DEFAULTS["lambda"], cond=lambda v: v > 0, what="must be positive")

    damp = col.section(raw, "damping")
    col.unknown(damp, _DAMP_KEYS, "damping.")
    base = _profile(col, damp.get("base", "constant"), "damping.base")
    pert = _profile(col, damp.get("perturbation"), "damping.perturbation")
    in01 = lambda v: 0 <= v <= 1  # noqa: E731
    eps = col.number(damp, "epsilon", "damping.epsilon", 0.0, cond=in01, what="must lie in [0, 1]")
    eps_raw = damp.get("eps_list", [eps])
    eps_list = ()
    if not isinstance(eps_raw, list) or not eps_raw:
        col.add("type", "damping.eps_list", "must be a nonempty list of numbers")
    else:
        vals = [col.number({"e": e}, "e", "damping.eps_list", 0.0, cond=in01, what="entries must lie in [0, 1]")
                for e in eps_raw]
        eps_list = tuple(sorted({v for v in vals if v is not None}, reverse=True))
    alpha0 = col.number(damp, "alpha0", "damping.alpha0", 1.0, cond=lambda v: v > 0, what="must be positive")
    alpha1 = col.number(damp, "alpha1", "damping.alpha1", max(alpha0 or 1.0, 1.0))
    if alpha0 is not None and alpha1 is not None and alpha1 < alpha0:
        col.add("range", "damping.alpha1", f"damping.alpha1 must be >= alpha0, got {alpha1} < {alpha0}")
    beta = col.number(damp, "beta", "damping.beta", 1.0, cond=lambda v: 0 < v <= 1, what="must lie in (0, 1]")
    holder_C = col.number(damp, "holder_C", "damping.holder_C", None, cond=lambda v: v >= 0, what="must be >= 0")

    nl = raw.get("nonlinearity", {"key": "zero"})
    if isinstance(nl, str):
        nl = {"key": nl}
    nonlin = None
    if not isinstance(nl, dict):
        col.add("type", "nonlinearity", "must be a catalog key or an object")
    else:
        col.unknown(nl, _NONLIN_KEYS, "nonlinearity.")
        key = nl.get("key", "zero")
        if key not in NONLINEARITY_KEYS:
            col.add("unknown-catalog-entry", "nonlinearity.key",
                    f"unknown nonlinearity {key!r}; have {list(NONLINEARITY_KEYS)}")
        else:
            try:
                nonlin = NonlinearitySpec.make(key, rho=nl.get("rho"), c=nl.get("c"), **nl.get("params", {}))
            except (PlatesimError, TypeError, ValueError) as exc:
                col.add("range", "nonlinearity", str(exc))

    en = col.section(raw, "energy")
    col.unknown(en, _ENERGY_KEYS, "energy.")
    nu_default = 0.25 * lam if lam and lam > 0 else 0.25
    nu = col.number(en, "nu", "energy.nu", nu_default,
                    cond=lambda v: lam is not None and 0 < v < lam / 2, what="must lie in (0, lambda/2)")
    safety = col.number(en, "safety", "energy.safety", 0.5, cond=lambda v: 0 < v < 1, what="must lie in (0, 1)")
    r = col.number(en, "r", "energy.r", None, cond=lambda v: v > 0, what="must be positive")

    exp = col.section(raw, "experiment")
    col.unknown(exp, _EXP_KEYS, "experiment.")
    experiment = _check_experiment(col, exp, kind, dt)

    damping = None
    if base is not None and pert is not None and None not in (eps, alpha0, alpha1, beta):
        try:
            damping = DampingSpec(base, pert, eps, alpha0, alpha1, beta, holder_C)
        except PlatesimError as exc:
            col.add("range", "damping", str(exc))

    if not col.items and damping is not None and nonlin is not None:
        try:
            ProcessConfig(damping, nonlin, lam=lam, N=N, M=M, dim=dim, dt=dt, order=order)
        except PlatesimError as exc:
            col.add("range", "discretization.M", str(exc))
    if col.items:
        raise ConfigViolations(col.items)
    return ExperimentConfig(kind, int(seed), N, M, dim, dt, order, lam, damping, eps_list, nonlin,
                            nu, safety, r, experiment, raw)


def _check_experiment(col: _Collector, exp: dict, kind, dt) -> dict:
    out = {}
    if kind not in KINDS:
        return out
    pos = lambda v: v > 0  # noqa: E731
    nonneg = lambda v: v >= 0  # noqa: E731
    rules = {
        "t0": (False, None, ""), "t1": (False, None, ""), "t": (False, None, ""),
        "record_every": (True, pos, "must be positive"),
        "radius": (False, nonneg, "must be >= 0"),
        "count": (True, pos, "must be positive"),
        "T_back": (False, pos, "must be positive"),
        "n_max": (True, lambda v: v >= 2, "must be >= 2"),
        "tol": (False, pos, "must be positive"),
        "m": (True, pos, "must be positive"),
        "invariance_lag": (False, nonneg, "must be >= 0"),
        "resolution_factor": (False, pos, "must be positive"),
        "horizon": (False, pos, "must be positive"),
        "samples": (True, pos, "must be positive"),
        "deviation_window": (False, nonneg, "must be >= 0"),
    }
    for key, (integer, cond, what) in rules.items():
        if key in exp:
            out[key] = col.number(exp, key, f"experiment.{key}", None, integer=integer, cond=cond, what=what)
    if "radii" in exp:
        radii = exp["radii"]
        if not isinstance(radii, list) or not radii or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) and x >= 0 for x in radii):
            col.add("range", "experiment.radii", "must be a nonempty list of nonnegative numbers")
        else:
            out["radii"] = [float(x) for x in radii]
    if "initial" in exp:
        ini = exp["initial"]
        if not (isinstance(ini, dict) and set(ini) <= {"u", "v"}
                and all(isinstance(ini.get(k, []), list) for k in ("u", "v"))):
            col.add("type", "experiment.initial", "must be an object with coefficient lists 'u' and 'v'")
        else:
            out["initial"] = {k: [float(x) for x in ini.get(k, [])] for k in ("u", "v")}
    t0 = out.get("t0", _EXP_DEFAULTS[kind].get("t0"))
    t1 = out.get("t1", _EXP_DEFAULTS[kind].get("t1"))
    if t0 is not None and t1 is not None and t1 < t0:
        col.add("range", "experiment.t1", f"experiment.t1 must be >= t0, got {t1} < {t0}")
    T_back = out.get("T_back")
    if T_back and dt and abs(T_back / dt - round(T_back / dt)) > 1e-9 * T_back / dt:
        col.add("range", "experiment.T_back", f"experiment.T_back={T_back} must be a multiple of dt={dt}")
    return out


# ---------------------------------------------------------------------------
# records and serialization
# ---------------------------------------------------------------------------


@dataclass
class Table:
    header: list
    rows: list


@dataclass
class RunRecord:
    """Everything a run produces, ready for :func:`write_outputs`."""

    config: dict
    summary: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    def add_certificate(self, name: str, passed: bool, **measured) -> None:
        self.certificates[name] = {"passed": bool(passed), **measured}

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.certificates.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 2


def fmt(x) -> str:
    """17 significant digits, round-trip exact for doubles."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written by :func:`fmt`."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_, int, np.integer, float, np.floating)):
        return fmt(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def eps_tag(eps: float) -> str:
    return format(float(eps), "g")


def write_outputs(record: RunRecord, directory) -> list[Path]:
    """Write the record; returns the paths written.

    ``config.json`` and ``summary.json`` are always written,
    ``certificates.json`` when the record holds certificates, and one CSV per
    table.
    """
    out = Path(directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []

        def emit(name, text):
            p = out / name
            p.write_text(text, encoding="utf-8")
            written.append(p)

        emit("config.json", to_json({**record.config, "version": __version__}) + "\n")
        summary = {**record.summary, "version": __version__, "passed": record.passed}
        emit("summary.json", to_json(summary) + "\n")
        if record.certificates:
            emit("certificates.json", to_json(record.certificates) + "\n")
        for name, table in sorted(record.tables.items()):
            p = out / name
            with p.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(table.header)
                for row in table.rows:
                    w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
            written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write outputs to {exc.filename or out}: {exc.strerror}") from exc
    return written


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _constants(cfg: ExperimentConfig, r: float):
    spec = cfg.nonlinearity
    cert = None
    C_nu = 0.0
    if not spec.is_zero:
        cert = fit_dissipativity(spec, cfg.nu, strict=False)
        C_nu = cert.C_nu
    c_bar = estimate_c_bar(spec, r, cfg.N, cfg.lam, cfg.dim, seed=cfg.seed % 2**32)
    consts = select_constants(cfg.damping.alpha0, cfg.damping.alpha1, cfg.lam, cfg.nu, r=r, c_bar=c_bar,
                              rho=spec.rho, safety=cfg.safety, C_nu=C_nu)
    return consts, cert


def _trajectory_table(bt, j, consts, cfg: ExperimentConfig, pcfg: ProcessConfig) -> Table:
    U, V = bt.U[:, j], bt.V[:, j]
    nu2, nv2, _ = norms_squared(U, V, cfg.N, cfg.lam, cfg.dim)
    W = W_values(U, V, consts.b, cfg.N, cfg.lam, cfg.dim)
    grid = build_grid(quadrature_size(cfg.nonlinearity, cfg.N), cfg.dim)
    calW = W - F_integrals(U, cfg.nonlinearity, cfg.N, grid)
    rows = [[t, math.sqrt(a + b), math.sqrt(a), math.sqrt(b), w, cw]
            for t, a, b, w, cw in zip(bt.times, nu2, nv2, W, calW)]
    return Table(["t", "norm_X0", "norm_half_u", "norm_L2_v", "W", "calW"], rows)


def _run_simulate(cfg: ExperimentConfig, rec: RunRecord, threads):
    pcfg = cfg.process()
    t0, t1 = cfg.param("t0"), cfg.param("t1")
    ini = cfg.param("initial")
    if ini is not None:
        nm = pcfg.nm
        U0 = np.zeros(nm)
        V0 = np.zeros(nm)
        U0[: min(nm, len(ini["u"]))] = ini["u"][:nm]
        V0[: min(nm, len(ini["v"]))] = ini["v"][:nm]
    else:
        cloud = sample_ball(cfg.param("radius"), 1, cfg.seed, cfg.N, cfg.lam, cfg.dim, shell=True)
        U0, V0 = cloud.U[0], cloud.V[0]
    bt = evolve_batch(U0[None], V0[None], t0, t1, pcfg, record_every=cfg.param("record_every"), threads=threads)
    r = cfg.r or max(1.0, float(np.sqrt(norms_squared(U0, V0, cfg.N, cfg.lam, cfg.dim)[0])))
    consts, _ = _constants(cfg, r)
    rec.tables["trajectory.csv"] = _trajectory_table(bt, 0, consts, cfg, pcfg)
    rec.summary["constants"] = consts.as_dict()
    rec.summary["samples"] = len(bt.times)
    if cfg.nonlinearity.is_zero:
        rep = homogeneous_decay_certificate(bt, consts, dt=pcfg.dt)
        rec.add_certificate("homogeneous_decay", rep.passed, max_ratio=rep.max_ratio, tol=rep.tol,
                            margin=rep.margin, rate=rep.rate, argmax_time=rep.argmax_time)
    else:
        rep = semilinear_certificate(bt, consts, pcfg)
        rec.add_certificate("semilinear_energy", rep.passed, worst_excess=rep.worst_excess,
                            margin=-rep.worst_excess, checked_steps=rep.checked_steps,
                            skipped_steps=rep.skipped_steps, worst_time=rep.worst_time)


def _run_energy_audit(cfg: ExperimentConfig, rec: RunRecord, threads):
    rng = np.random.default_rng(cfg.seed)
    pcfg = cfg.process()
    count = cfg.param("count")

    # norm-equivalence sandwich on random states
    n = cfg.param("samples")
    nm = pcfg.nm
    scale = 1.0 / mode_eigenvalues(cfg.N, cfg.dim).ravel()
    U = rng.standard_normal((n, nm)) * scale
    V = rng.standard_normal((n, nm)) * scale
    nu2, nv2, _ = norms_squared(U, V, cfg.N, cfg.lam, cfg.dim)
    worst = math.inf
    for b in (0.05, 0.1, 0.25):
        W = W_values(U, V, b, cfg.N, cfg.lam, cfg.dim)
        x2 = nu2 + nv2
        worst = min(worst, float(np.min(W - 0.25 * x2)), float(np.min(0.75 * x2 - W)))
    rec.add_certificate("sandwich", worst >= -1e-12, min_slack=worst, samples=n)

    radii = cfg.param("radii")
    r = cfg.r or max(radii)
    consts, dcert = _constants(cfg, r)
    if dcert is not None:
        rec.summary["dissipativity"] = {"nu": dcert.nu, "M_nu": dcert.M_nu, "C_nu": dcert.C_nu,
                                        "argmax": dcert.argmax, "boundary_attained": dcert.boundary_attained}

    # homogeneous decay from the unit ball
    hom = pcfg.homogeneous()
    ball = sample_ball(1.0, count, cfg.seed, cfg.N, cfg.lam, cfg.dim)
    bt = evolve_batch(ball.U, ball.V, cfg.param("t0"), cfg.param("t1"), hom,
                      record_every=cfg.param("record_every"), threads=threads)
    rep = homogeneous_decay_certificate(bt, consts, dt=pcfg.dt)
    rec.add_certificate("homogeneous_decay", rep.passed, max_ratio=rep.max_ratio, tol=rep.tol,
                        margin=rep.margin, rate=rep.rate)

    if not cfg.nonlinearity.is_zero:
        groups = {}
        horizon = cfg.param("horizon")
        for i, R in enumerate(radii):
            cl = sample_ball(R, count, cfg.seed + i + 1, cfg.N, cfg.lam, cfg.dim)
            groups[R] = [evolve_batch(cl.U, cl.V, 0.0, horizon, pcfg, record_every=cfg.param("record_every"),
                                      threads=threads)]
        ab = absorbing_certificate(groups, consts)
        rec.add_certificate(
            "absorbing", ab.passed, K1_ratio=ab.K1_ratio, K1=ab.K1,
            fits=[{"radius": f.radius, "K": f.K, "K1": f.K1, "rate": f.rate, "K_certified": f.K_certified,
                   "entry_time": f.entry_time, "exited_after_entry": f.exited_after_entry} for f in ab.fits],
        )
        # one-pass bootstrap of r from the absorbing fit
        r2 = max(ab.fits[-1].absorbing_radius, min(radii)) if cfg.r is None else cfg.r
        consts, _ = _constants(cfg, r2)
        worst, checked, skipped = -math.inf, 0, 0
        for trajs in groups.values():
            for bt2 in trajs:
                s = semilinear_certificate(bt2, consts, pcfg)
                worst = max(worst, s.worst_excess)
                checked += s.checked_steps
                skipped += s.skipped_steps
        rec.add_certificate("semilinear_energy", worst <= 0.0, worst_excess=worst, margin=-worst,
                            checked_steps=checked, skipped_steps=skipped, r=consts.r,
                            left_r_ball=skipped > 0)
    rec.summary["constants"] = consts.as_dict()


def _section_tables(rec: RunRecord, sec, eps: float, dim: int, N: int):
    tag = eps_tag(eps)
    nm = N**dim
    if dim == 1:
        labels = [str(k) for k in range(1, N + 1)]
    else:
        labels = [f"{k1}_{k2}" for k1 in range(1, N + 1) for k2 in range(1, N + 1)]
    header = ["point_id"] + [f"u_coeff_{s}" for s in labels] + [f"v_coeff_{s}" for s in labels]
    rows = [[i, *sec.cloud.U[i, :nm], *sec.cloud.V[i, :nm]] for i in range(len(sec.cloud))]
    rec.tables[f"attractor_section_{tag}.csv"] = Table(header, rows)
    conv = [[h.n, h.tau, h.dist_forward, h.dist_backward] for h in sec.history]
    rec.tables[f"convergence_{tag}.csv"] = Table(["n", "tau", "dist_forward", "dist_backward"], conv)


def _run_attractor(cfg: ExperimentConfig, rec: RunRecord, threads):
    t = cfg.param("t")
    B = sample_ball(cfg.param("radius"), cfg.param("m"), cfg.seed, cfg.N, cfg.lam, cfg.dim)
    lag = cfg.param("invariance_lag")
    for eps in cfg.eps_list:
        pcfg = cfg.process(eps)
        kw = dict(T_back=cfg.param("T_back"), n_max=cfg.param("n_max"), tol=cfg.param("tol"), threads=threads)
        sec = pullback_converge(t, B, pcfg, None, **kw)
        _section_tables(rec, sec, eps, cfg.dim, cfg.N)
        tag = eps_tag(eps)
        rec.add_certificate(f"pullback_convergence_{tag}", sec.converged, n_used=sec.n_used,
                            last_distance=sec.convergence[-1] if sec.convergence else None, tol=sec.tol,
                            resolution=sec.resolution)
        if lag:
            sec_s = pullback_converge(t - lag, B, pcfg, None, **kw)
            inv = check_invariance(sec_s, sec, pcfg, None, cfg.param("tol"), cfg.param("resolution_factor"),
                                   threads=threads)
            rec.add_certificate(f"invariance_{tag}", inv.passed and sec_s.converged, s=inv.s, t=inv.t,
                                image_to_section=inv.image_to_section, section_to_image=inv.section_to_image,
                                threshold=inv.threshold, resolution=inv.resolution)


def _run_upper_semi(cfg: ExperimentConfig, rec: RunRecord, threads):
    eps_list = cfg.eps_list if 0.0 in cfg.eps_list else tuple(cfg.eps_list) + (0.0,)
    rep = semicontinuity_experiment(
        cfg.param("t"), eps_list, cfg.process(), m=cfg.param("m"), R=cfg.param("radius"), seed=cfg.seed,
        T_back=cfg.param("T_back"), n_max=cfg.param("n_max"), tol=cfg.param("tol"),
        deviation_window=cfg.param("deviation_window"), threads=threads,
    )
    cols = ["eps", "damping_gap_sup", "hausdorff_eps_to_0", "hausdorff_0_to_eps", "cloud_resolution",
            "gronwall_bound", "max_traj_deviation"]
    rec.tables["semicontinuity.csv"] = Table(cols, [[getattr(r, c) for c in cols] for r in rep.rows])
    for eps, sec in rep.sections.items():
        _section_tables(rec, sec, eps, cfg.dim, cfg.N)
    rec.summary["C_fit"] = rep.C_fit
    rec.add_certificate("sections_converged", rep.all_converged)
    rec.add_certificate("distance_monotone_in_eps", rep.monotone)
    rec.add_certificate("distance_within_fit", rep.within_fit, C_fit=rep.C_fit)
    rec.add_certificate("distance_contrast", rep.contrast)
    for row in rep.rows:
        rec.add_certificate(f"gronwall_{eps_tag(row.eps)}", row.deviation_passed,
                            max_traj_deviation=row.max_traj_deviation, gronwall_bound=row.gronwall_bound,
                            margin=row.gronwall_bound - row.max_traj_deviation)


def _run_validate_coeffs(cfg: ExperimentConfig, rec: RunRecord, threads):
    for eps in cfg.eps_list:
        rep = validate_damping(cfg.damping.with_epsilon(eps), dim=cfg.dim)
        rec.add_certificate(
            f"damping_bounds_{eps_tag(eps)}", rep.bounds_ok,
            measured_min=rep.measured_min, measured_max=rep.measured_max,
            declared_alpha0=cfg.damping.alpha0, declared_alpha1=cfg.damping.alpha1,
            min_witness=[rep.min_witness[0], list(rep.min_witness[1])],
            max_witness=[rep.max_witness[0], list(rep.max_witness[1])],
            margin=min(rep.measured_min - cfg.damping.alpha0, cfg.damping.alpha1 - rep.measured_max),
        )
        if rep.holder_ok is not None:
            rec.add_certificate(f"damping_holder_{eps_tag(eps)}", rep.holder_ok, quotient=rep.holder_quotient,
                                declared=cfg.damping.holder_C, witness=list(rep.holder_witness))
    spec = cfg.nonlinearity
    g = verify_growth(spec, samples=cfg.param("samples"), seed=cfg.seed % 2**32)
    rec.add_certificate("growth", g.passed, derivative_ratio=g.derivative_ratio,
                        derivative_witness=g.derivative_witness, pair_ratio=g.pair_ratio,
                        pair_witness=list(g.pair_witness))
    d = fit_dissipativity(spec, cfg.nu, strict=False)
    rec.add_certificate("dissipativity", not d.boundary_attained, nu=d.nu, M_nu=d.M_nu, C_nu=d.C_nu,
                        argmax=d.argmax)
    mismatch = spec.check_primitive()
    rec.add_certificate("primitive", mismatch <= 1e-6, mismatch=mismatch)


_RUNNERS = {
    "simulate": _run_simulate,
    "energy-audit": _run_energy_audit,
    "attractor": _run_attractor,
    "upper-semi": _run_upper_semi,
    "validate-coeffs": _run_validate_coeffs,
}


def run(cfg: ExperimentConfig, *, threads: int | None = None) -> RunRecord:
    """Execute the experiment; deterministic in ``(cfg, seed)``."""
    rec = RunRecord(config=cfg.echo())
    rec.summary["kind"] = cfg.kind
    rec.summary["seed"] = cfg.seed
    _RUNNERS[cfg.kind](cfg, rec, threads)
    rec.summary["certificates_passed"] = sum(c["passed"] for c in rec.certificates.values())
    rec.summary["certificates_total"] = len(rec.certificates)
    return rec


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="platesim", description="Structurally damped plate simulator")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"platesim: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
        return 1
    try:
        cfg = parse_config(text, kind=args.kind, seed=args.seed)
    except ConfigError as exc:
        print("platesim: invalid configuration", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 1
    threads = args.threads if args.threads is not None else default_threads()
    if threads < 1:
        print("platesim: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        rec = run(cfg, threads=threads)
    except PlatesimError as exc:
        print(f"platesim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    write_outputs(rec, args.out)
    for name, c in sorted(rec.certificates.items()):
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}")
    return rec.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
