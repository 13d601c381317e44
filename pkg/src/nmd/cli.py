"""Experiment runner: TOML config in, CSV + JSON manifest out.

Every run is reproducible from its manifest: the resolved config, the master
seed and the derived stream seeds are recorded next to the emitted files
together with their checksums.  Files are written atomically
(temp-then-rename) and floats are formatted with shortest round-trip repr,
so a rerun with the same seed produces byte-identical CSVs.

Commands::

    nmd run --config cfg.toml [--out DIR] [--seed N]
    nmd sweep --config cfg.toml --axis potential.delta --values 0.1,0.2 [--parallelism K]
    nmd validate --config cfg.toml

The worker-pool width for sweeps is capped by the NMD_THREADS environment
variable.  CSV dialect: comma separator, '.' decimal point, header row, LF
line endings.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import dynamics, eigensolve, estimators, model
from .errors import ConfigError

ARTIFACT_VERSION = "0.1.0"

KINDS = ("spectrum", "pe-eig", "pe-md", "observable", "ergodicity",
         "landau-zener", "lyapunov", "multipath", "hitting-times")


def _obs_one(X):
    return np.ones(X.shape[0])


OBSERVABLES: dict[str, Callable] = {
    "one": _obs_one,
    "sin_x1x2": lambda X: np.sin(X[:, 0] * X[:, 1]),
    "x1": lambda X: X[:, 0],
    "x2": lambda X: X[:, 1],
    "abs_x_sq": lambda X: np.sum(X ** 2, axis=1),
    "cos_x1": lambda X: np.cos(X[:, 0]),
}


# -- configuration -----------------------------------------------------------


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    M: float
    E: Optional[float]
    potential: model.PotentialSpec
    out_dir: Optional[str] = None
    grid: dict = field(default_factory=dict)
    dynamics: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    eigensolve: dict = field(default_factory=dict)
    landau_zener: dict = field(default_factory=dict)


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"{where}.{key}", "missing required field")
    return table[key]


def _positive(value, where: str) -> float:
    value = float(value)
    if not value > 0 or not math.isfinite(value):
        raise ConfigError(where, f"must be positive and finite, got {value}")
    return value


def parse_potential(table: dict) -> model.PotentialSpec:
    variant = _require(table, "variant", "potential")
    try:
        if variant == "oned":
            return model.OneDCrossing(
                delta=float(_require(table, "delta", "potential")),
                a_l=float(table.get("a_l", -2.0)),
                a_r=float(table.get("a_r", 3.0)))
        if variant == "line2d":
            return model.LineCrossing2D(
                delta=float(_require(table, "delta", "potential")),
                alpha=float(table.get("alpha", math.sqrt(2.0))),
                beta=float(table.get("beta", 2.0)),
                eta=float(table.get("eta", 0.5)))
        if variant == "cone2d":
            return model.ConicalCrossing2D(
                a=tuple(_require(table, "a", "potential")),
                alpha=float(table.get("alpha", math.sqrt(2.0))),
                beta=float(table.get("beta", 2.0)),
                eta=float(table.get("eta", 0.5)))
    except ValueError as exc:
        raise ConfigError("potential", str(exc)) from exc
    raise ConfigError("potential.variant", f"unknown variant {variant!r}")


def potential_to_dict(spec: model.PotentialSpec) -> dict:
    if isinstance(spec, model.OneDCrossing):
        return {"variant": "oned", "delta": spec.delta, "a_l": spec.a_l,
                "a_r": spec.a_r}
    if isinstance(spec, model.LineCrossing2D):
        return {"variant": "line2d", "delta": spec.delta, "alpha": spec.alpha,
                "beta": spec.beta, "eta": spec.eta}
    return {"variant": "cone2d", "a": list(spec.a), "alpha": spec.alpha,
            "beta": spec.beta, "eta": spec.eta}


def config_from_dict(data: dict) -> ExperimentConfig:
    kind = _require(data, "kind", "config")
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown kind {kind!r}; pick one of {KINDS}")
    seed = int(data.get("seed", 0))
    if seed < 0:
        raise ConfigError("seed", "must be non-negative")
    M = _positive(_require(data, "M", "config"), "M")
    E = data.get("E")
    E = None if E is None else float(E)
    spec = parse_potential(_require(data, "potential", "config"))
    cfg = ExperimentConfig(
        kind=kind, seed=seed, M=M, E=E, potential=spec,
        out_dir=data.get("out_dir"),
        grid=dict(data.get("grid", {})),
        dynamics=dict(data.get("dynamics", {})),
        estimator=dict(data.get("estimator", {})),
        eigensolve=dict(data.get("eigensolve", {})),
        landau_zener=dict(data.get("landau_zener", {})))
    _validate(cfg)
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {"kind": cfg.kind, "seed": cfg.seed, "M": cfg.M,
           "potential": potential_to_dict(cfg.potential)}
    if cfg.E is not None:
        out["E"] = cfg.E
    if cfg.out_dir is not None:
        out["out_dir"] = cfg.out_dir
    for name in ("grid", "dynamics", "estimator", "eigensolve", "landau_zener"):
        table = getattr(cfg, name)
        if table:
            out[name] = dict(table)
    return out


def _validate(cfg: ExperimentConfig) -> None:
    dyn = cfg.dynamics
    for key in ("dt", "T", "ehrenfest_dt"):
        if key in dyn:
            _positive(dyn[key], f"dynamics.{key}")
    if "stride" in dyn and int(dyn["stride"]) < 1:
        raise ConfigError("dynamics.stride", "must be >= 1")
    if dyn.get("mode", "canonical") not in ("canonical", "paper-literal"):
        raise ConfigError("dynamics.mode", "must be canonical or paper-literal")
    est = cfg.estimator
    if "n_samples" in est and int(est["n_samples"]) < 1:
        raise ConfigError("estimator.n_samples", "must be >= 1")
    if "events" in est and est["events"] not in ("plane", "poisson"):
        raise ConfigError("estimator.events", "must be plane or poisson")
    if est.get("events") == "poisson":
        _positive(est.get("rate", 0.0), "estimator.rate")
    if "observable" in est and est["observable"] not in OBSERVABLES:
        raise ConfigError("estimator.observable",
                          f"unknown observable; pick one of {sorted(OBSERVABLES)}")
    eig = cfg.eigensolve
    if "k" in eig and int(eig["k"]) < 1:
        raise ConfigError("eigensolve.k", "must be >= 1")
    if "tol" in eig:
        _positive(eig["tol"], "eigensolve.tol")
    grid = cfg.grid
    if grid:
        preset = grid.get("preset", "explicit")
        if preset not in ("paper-1d", "paper-2d", "explicit"):
            raise ConfigError("grid.preset", f"unknown preset {preset!r}")
        if preset == "explicit":
            _positive(_require(grid, "h", "grid"), "grid.h")
            if "domain" not in grid:
                raise ConfigError("grid.domain", "explicit grids need a domain")
    lz = cfg.landau_zener
    for key in ("delta", "P0", "T0", "dt"):
        if key in lz and key != "delta":
            _positive(lz[key], f"landau_zener.{key}")
    if "delta" in lz and float(lz["delta"]) < 0:
        raise ConfigError("landau_zener.delta", "must be >= 0")
    needs_E = {"pe-eig", "pe-md", "observable", "ergodicity", "multipath"}
    if cfg.kind in needs_E and cfg.E is None:
        raise ConfigError("E", f"kind {cfg.kind} needs the energy E")


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return config_from_dict(data)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def derive_seed(master: int, *parts) -> int:
    """Stable stream seed from the master seed and a label tuple."""
    blob = json.dumps([master, *parts], sort_keys=True).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1


# -- experiment execution ----------------------------------------------------


@dataclass
class ExperimentResult:
    files: dict  # name -> (header tuple, list of row tuples)
    scalars: dict  # name -> float


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build_grid(cfg: ExperimentConfig) -> eigensolve.Grid:
    grid = cfg.grid
    preset = grid.get("preset", "paper-1d" if cfg.potential.dim == 1 else "paper-2d")
    if preset == "explicit":
        domain = grid["domain"]
        if not isinstance(domain[0], (list, tuple)):
            domain = [domain]
        return eigensolve.build_grid(
            cfg.potential, cfg.M,
            eigensolve.ExplicitGrid(float(grid["h"]),
                                    tuple(tuple(map(float, d)) for d in domain)))
    return eigensolve.build_grid(cfg.potential, cfg.M, preset)


def _init_phase(cfg: ExperimentConfig) -> dynamics.PhasePoint:
    dyn = cfg.dynamics
    X0 = np.asarray(dyn.get("init_X", [0.0] * cfg.potential.dim), dtype=float)
    if "init_P" in dyn:
        P0 = np.asarray(dyn["init_P"], dtype=float)
    elif "init_angle" in dyn and cfg.potential.dim == 2:
        speed = dynamics.momentum_on_shell(cfg.potential, cfg.E, X0)
        ang = float(dyn["init_angle"])
        P0 = speed * np.array([math.cos(ang), math.sin(ang)])
    elif dyn.get("init_P_style") == "paper-2d":
        speed_sq = 2.0 * (cfg.E - float(model.lambda_minus(cfg.potential, X0)))
        if speed_sq < 1.0:
            raise ConfigError("dynamics.init_P_style",
                              "paper-2d momentum needs 2(E - lambda_-) >= 1")
        P0 = np.array([1.0, math.sqrt(speed_sq - 1.0)])
    else:
        speed = dynamics.momentum_on_shell(cfg.potential, cfg.E, X0)
        P0 = np.zeros(cfg.potential.dim)
        P0[0] = speed
    return dynamics.PhasePoint(X0, P0)


def _events_mode(cfg: ExperimentConfig):
    est = cfg.estimator
    kind = est.get("events", "plane")
    if kind == "plane":
        return estimators.PlaneMode(tuple(est.get("plane_point", (0.0, 1.0))),
                                    tuple(est.get("plane_normal", (0.0, 1.0))))
    return estimators.PoissonMode(float(est["rate"]),
                                  derive_seed(cfg.seed, "poisson-events"))


def _observable(cfg: ExperimentConfig) -> Callable:
    return OBSERVABLES[cfg.estimator.get("observable", "sin_x1x2")]


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return _RUNNERS[cfg.kind](cfg)


def _run_spectrum(cfg: ExperimentConfig) -> ExperimentResult:
    grid = _build_grid(cfg)
    eig = cfg.eigensolve
    H = eigensolve.assemble_hamiltonian(grid, cfg.potential, cfg.M)
    pairs = eigensolve.eigs_near(H, float(eig.get("sigma", cfg.E or 0.0)),
                                 k=int(eig.get("k", 8)),
                                 tol=float(eig.get("tol", 1e-8)),
                                 seed=derive_seed(cfg.seed, "eigs"))
    rows = [(i, p.E, p.residual) for i, p in enumerate(pairs)]
    return ExperimentResult({"spectrum.csv": (("index", "E", "residual"), rows)},
                            {"n_eigenvalues": float(len(pairs))})


def _run_pe_eig(cfg: ExperimentConfig) -> ExperimentResult:
    grid = _build_grid(cfg)
    eig = cfg.eigensolve
    spec = cfg.potential
    tol = float(eig.get("tol", 1e-8))
    H = eigensolve.assemble_hamiltonian(grid, spec, cfg.M)
    pairs = eigensolve.eigs_near(H, float(eig.get("sigma", cfg.E)),
                                 k=int(eig.get("k", 20)), tol=tol,
                                 seed=derive_seed(cfg.seed, "eigs"))
    energies = [p.E for p in pairs]
    pad = float(eig.get("window_pad", 0.5))
    window = (min(energies) - pad, max(energies) + pad)
    minus = eigensolve.scalar_spectra(grid, spec, cfg.M, "-", window, tol=tol,
                                      seed=derive_seed(cfg.seed, "minus"))
    plus = eigensolve.scalar_spectra(grid, spec, cfg.M, "+", window, tol=tol,
                                     seed=derive_seed(cfg.seed, "plus"))
    lam0 = float(model.lambda_minus(
        spec, np.zeros(spec.dim) if spec.dim == 2 else 0.0))
    delta = spec.delta if hasattr(spec, "delta") else 0.0
    C = float(eig.get("C", 10.0))
    rows = []
    for p in pairs:
        pe = eigensolve.excited_probability(p, spec, grid)
        pe_hat = eigensolve.resonance_estimate(p.E, minus, plus, delta, cfg.M,
                                               lam0, C)
        rows.append((p.E, pe.value, pe_hat, int(pe.warning)))
    rows.sort(key=lambda r: r[0])
    return ExperimentResult(
        {"pe_eig.csv": (("E", "p_e", "pe_hat", "warning"), rows)},
        {"min_p_e": min(r[1] for r in rows), "min_pe_hat": min(r[2] for r in rows)})


def _run_pe_md(cfg: ExperimentConfig) -> ExperimentResult:
    dyn = cfg.dynamics
    res = estimators.pe_md(
        cfg.potential, cfg.E, _init_phase(cfg), _events_mode(cfg), cfg.M,
        float(dyn.get("dt", 0.01)), float(_require(dyn, "T", "dynamics")),
        ehrenfest_dt=float(dyn["ehrenfest_dt"]) if "ehrenfest_dt" in dyn else None,
        ehrenfest_mode=dyn.get("mode", "canonical"))
    seg_rows = [tuple(r) for r in res.segments]
    return ExperimentResult(
        {"pe_md.csv": (("pe_hat", "n_events", "T"),
                       [(res.pe_hat, res.events.count, res.T)]),
         "segments.csv": (("t1", "t2", "integral"), seg_rows)},
        {"pe_hat": res.pe_hat})


def _run_observable(cfg: ExperimentConfig) -> ExperimentResult:
    est = cfg.estimator
    g = _observable(cfg)
    rows = []
    scalars = {}
    if est.get("with_md", True):
        mc = estimators.gmd_monte_carlo(
            cfg.potential, g, cfg.E, int(est.get("n_samples", 1_000_000)),
            derive_seed(cfg.seed, "gmd"),
            bounding_box=est.get("bounding_box"))
        rows.append(("g_md", mc.value, mc.standard_error))
        scalars["g_md"] = mc.value
    if est.get("with_bo", True):
        dyn = cfg.dynamics
        traj = dynamics.bo_trajectory(cfg.potential, _init_phase(cfg),
                                      float(dyn.get("dt", 0.01)),
                                      float(_require(dyn, "T", "dynamics")),
                                      stride=int(dyn.get("stride", 1)))
        val = estimators.gbo_time_average(traj, g, est.get("window", "full"))
        rows.append(("g_bo", val, 0.0))
        scalars["g_bo"] = val
    if est.get("with_schrodinger", False):
        grid = _build_grid(cfg)
        eig = cfg.eigensolve
        H = eigensolve.assemble_hamiltonian(grid, cfg.potential, cfg.M)
        pairs = eigensolve.eigs_near(H, float(eig.get("sigma", cfg.E)),
                                     k=int(eig.get("k", 8)),
                                     tol=float(eig.get("tol", 1e-8)),
                                     seed=derive_seed(cfg.seed, "eigs"))
        for p in pairs:
            rows.append((f"g_s[{_fmt(p.E)}]",
                         eigensolve.schrodinger_observable(p, g, grid), 0.0))
    return ExperimentResult(
        {"observable.csv": (("quantity", "value", "stderr"), rows)}, scalars)


def _run_ergodicity(cfg: ExperimentConfig) -> ExperimentResult:
    est = cfg.estimator
    g = _observable(cfg)
    mc = estimators.gmd_monte_carlo(
        cfg.potential, g, cfg.E, int(est.get("n_samples", 4_000_000)),
        derive_seed(cfg.seed, "gmd"), bounding_box=est.get("bounding_box"))
    scan = estimators.ergodicity_scan(
        cfg.potential, g, cfg.E, _init_phase(cfg),
        float(cfg.dynamics.get("dt", 0.01)),
        [float(T) for T in _require(est, "T_list", "estimator")], mc.value)
    rows = list(zip(scan.T, scan.g_bo, scan.error))
    scalars = {"g_md": mc.value}
    if scan.slope is not None:
        scalars["slope"] = scan.slope
    return ExperimentResult(
        {"ergodicity.csv": (("T", "g_bo", "abs_error"), rows)}, scalars)


def _run_landau_zener(cfg: ExperimentConfig) -> ExperimentResult:
    lz = cfg.landau_zener
    delta = float(_require(lz, "delta", "landau_zener"))
    if "P0" in lz:
        P0 = float(lz["P0"])
    else:
        lam0 = float(model.lambda_minus(
            cfg.potential, np.zeros(cfg.potential.dim) if cfg.potential.dim == 2 else 0.0))
        P0 = math.sqrt(2.0 * (cfg.E - lam0))
    T0, dt = landau_zener_presets(delta, cfg.M, P0)
    T0 = float(lz.get("T0", T0))
    dt = float(lz.get("dt", dt))
    closed = dynamics.landau_zener_closed_form(delta, cfg.M, P0)
    ode = dynamics.landau_zener_ode(delta, cfg.M, P0, T0, dt)
    rows = [(delta, cfg.M, P0, closed, ode.adiabatic_excited,
             ode.survival_diabatic, T0, dt)]
    return ExperimentResult(
        {"landau_zener.csv": (("delta", "M", "P0", "p_lz_closed",
                               "adiabatic_excited", "survival_diabatic",
                               "T0", "dt"), rows)},
        {"p_lz_closed": closed, "adiabatic_excited": ode.adiabatic_excited})


def landau_zener_presets(delta: float, M: float, P0: float):
    """Documented (T0, dt): T0 = 50x the transition time scale, dt at the
    resolution bound 0.1 / (sqrt(M) (P0 T0 + delta))."""
    t_c = max(delta / P0, 1.0 / math.sqrt(P0 * math.sqrt(M)))
    T0 = 50.0 * t_c
    dt = 0.1 / (math.sqrt(M) * (P0 * T0 + delta))
    return T0, dt


def _run_lyapunov(cfg: ExperimentConfig) -> ExperimentResult:
    dyn = cfg.dynamics
    val = dynamics.max_lyapunov(cfg.potential, _init_phase(cfg),
                                float(dyn.get("dt", 0.01)),
                                float(_require(dyn, "T", "dynamics")),
                                renorm_every=int(dyn.get("renorm_every", 10)))
    return ExperimentResult(
        {"lyapunov.csv": (("lambda_max", "T", "dt"),
                          [(val, float(dyn["T"]), float(dyn.get("dt", 0.01)))])},
        {"lambda_max": val})


def _run_multipath(cfg: ExperimentConfig) -> ExperimentResult:
    est = cfg.estimator
    g = _observable(cfg)
    mc = estimators.gmd_monte_carlo(
        cfg.potential, g, cfg.E, int(est.get("n_samples", 4_000_000)),
        derive_seed(cfg.seed, "gmd"), bounding_box=est.get("bounding_box"))
    table = estimators.multipath_sampling_error(
        cfg.potential, g, cfg.E,
        [int(n) for n in _require(est, "N_list", "estimator")],
        float(est.get("delta_v", 1e-6)), float(est.get("base_angle", 1.2)),
        float(cfg.dynamics.get("dt", 0.01)),
        float(_require(cfg.dynamics, "T", "dynamics")), mc.value)
    slope = estimators.loglog_slope(table[:, 0], table[:, 1])
    scalars = {"g_md": mc.value}
    if slope is not None:
        scalars["slope"] = slope
    return ExperimentResult(
        {"multipath.csv": (("N", "error"), [tuple(r) for r in table])}, scalars)


def _run_hitting_times(cfg: ExperimentConfig) -> ExperimentResult:
    est = cfg.estimator
    dyn = cfg.dynamics
    traj = dynamics.bo_trajectory(cfg.potential, _init_phase(cfg),
                                  float(dyn.get("dt", 0.01)),
                                  float(_require(dyn, "T", "dynamics")))
    plane = estimators.PlaneMode(tuple(est.get("plane_point", (0.0, 0.0))),
                                 tuple(est.get("plane_normal", (1.0, 0.0))))
    stats = estimators.hitting_time_histogram(traj, plane,
                                              int(est.get("n_bins", 30)))
    rows = [(stats.bin_edges[i], stats.bin_edges[i + 1], int(stats.counts[i]))
            for i in range(len(stats.counts))]
    return ExperimentResult(
        {"hitting_gaps.csv": (("bin_lo", "bin_hi", "count"), rows),
         "hitting_stats.csv": (("rate", "ks_distance", "n_gaps"),
                               [(stats.rate, stats.ks_distance, stats.n_gaps)])},
        {"rate": stats.rate, "ks_distance": stats.ks_distance})


_RUNNERS = {
    "spectrum": _run_spectrum,
    "pe-eig": _run_pe_eig,
    "pe-md": _run_pe_md,
    "observable": _run_observable,
    "ergodicity": _run_ergodicity,
    "landau-zener": _run_landau_zener,
    "lyapunov": _run_lyapunov,
    "multipath": _run_multipath,
    "hitting-times": _run_hitting_times,
}


# -- output ------------------------------------------------------------------


def _atomic_write(path: str, data: bytes) -> None:
    tmp = path + f".tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _csv_bytes(header, rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return ("\n".join(lines) + "\n").encode()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def run(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    """Execute one experiment; returns the manifest dict (also written)."""
    out_dir = out_dir or cfg.out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    result = run_experiment(cfg)
    files = {}
    for name, (header, rows) in result.files.items():
        data = _csv_bytes(header, rows)
        _atomic_write(os.path.join(out_dir, name), data)
        files[name] = _sha256(data)
    scalars = dict(sorted(result.scalars.items()))
    summary = _csv_bytes(("key", "value"), list(scalars.items()))
    _atomic_write(os.path.join(out_dir, "summary.csv"), summary)
    files["summary.csv"] = _sha256(summary)
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "files": files,
        "scalars": scalars,
        "started": started,
        "finished": time.time(),
    }
    _atomic_write(os.path.join(out_dir, "manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True).encode())
    return manifest


def _set_leaf(data: dict, path: str, value):
    parts = path.split(".")
    node = data
    for part in parts[:-1]:
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node.setdefault(part, {})
    leaf = parts[-1]
    if isinstance(node, list):
        node[int(leaf)] = value
    else:
        node[leaf] = value


def _sweep_child(args):
    base_dict, axis, value, idx, out_dir, master_seed = args
    child = json.loads(json.dumps(base_dict))
    _set_leaf(child, axis, value)
    child["seed"] = derive_seed(master_seed, "sweep", idx)
    child.pop("out_dir", None)
    cfg = config_from_dict(child)
    sub = os.path.join(out_dir, f"{idx:03d}__{value}")
    try:
        manifest = run(cfg, sub)
        return idx, value, manifest["scalars"], None
    except Exception as exc:  # noqa: BLE001 - reported in the summary
        return idx, value, {}, f"{type(exc).__name__}: {exc}"


def sweep(cfg: ExperimentConfig, axis: str, values, out_dir: str,
          parallelism: int = 1) -> dict:
    """Run one experiment per value of a config leaf; merge the summaries.

    Child seeds are derived from (master seed, value index), so the summary
    is identical for any parallelism degree.
    """
    os.makedirs(out_dir, exist_ok=True)
    base = config_to_dict(cfg)
    jobs = [(base, axis, v, i, out_dir, cfg.seed) for i, v in enumerate(values)]
    cap = os.environ.get("NMD_THREADS")
    if cap:
        parallelism = max(1, min(parallelism, int(cap)))
    if parallelism > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_sweep_child, jobs))
    else:
        results = [_sweep_child(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    keys = sorted({k for _, _, sc, _ in results for k in sc})
    rows = []
    failures = []
    for idx, value, scalars, error in results:
        rows.append((idx, value, *(scalars.get(k, "") for k in keys),
                     error or ""))
        if error:
            failures.append((idx, value, error))
    data = _csv_bytes(("index", axis, *keys, "error"), rows)
    _atomic_write(os.path.join(out_dir, "sweep_summary.csv"), data)
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "axis": axis,
        "values": list(values),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "failures": failures,
        "files": {"sweep_summary.csv": _sha256(data)},
    }
    _atomic_write(os.path.join(out_dir, "sweep_manifest.json"),
                  json.dumps(manifest, indent=2, sort_keys=True).encode())
    return manifest


# -- entry point -------------------------------------------------------------


def _parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nmd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute one configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_sweep = sub.add_parser("sweep", help="run the experiment per axis value")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated list of axis values")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--parallelism", type=int, default=1)
    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("--config", required=True)
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            print(json.dumps({"ok": True, "config_hash": config_hash(cfg)}))
            return 0
        if args.command == "run":
            if args.seed is not None:
                cfg.seed = args.seed
            manifest = run(cfg, args.out)
            print(json.dumps({"ok": True, "out": args.out or cfg.out_dir or ".",
                              "scalars": manifest["scalars"]}))
            return 0
        values = [_parse_value(v) for v in args.values.split(",")]
        out = args.out or cfg.out_dir or "sweep_out"
        manifest = sweep(cfg, args.axis, values, out, args.parallelism)
        if manifest["failures"]:
            print(json.dumps({"ok": False, "failures": manifest["failures"]}),
                  file=sys.stderr)
            return 1
        print(json.dumps({"ok": True, "out": out}))
        return 0
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(json.dumps({"ok": False,
                          "error": {"type": type(exc).__name__,
                                    "detail": str(exc)}}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
