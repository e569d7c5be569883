"""Experiment registry and runners.

Every experiment turns an :class:`~hambvp.config.ExperimentConfig` into a set
of tables (written through :func:`hambvp.output.emit`) and a summary
dictionary; :func:`run_experiment` wraps both into a :class:`RunReport` and
writes ``report.json`` next to the tables.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import breaks as _breaks
from .breaks import BreakResult, pitchfork_break, scaling_fit
from .config import ConfigError, ExperimentConfig, with_defaults
from .continuation import ContinuationError, _trajectory, diagram, trace_branch
from .integrators import METHODS
from .mesh import WARPS, MeshError, make_mesh
from .output import Table, emit
from .shooting import (NonConvergenceError, ShootingDivergence, bind, dirichlet_problem,
                       multistart_sweep, neumann_problem, newton_solve)
from .singularity import (NormalFormProblem, ShootingLevelFamily, cusp_level_set, find_corank2,
                          level_bifurcation_set, shooting_corank2_target)
from .systems import SYSTEMS, linear_invariant


class NumericalFailure(RuntimeError):
    """A numerical sub-operation failed (exit code 2 on the command line)."""


NUMERICAL_ERRORS = (NonConvergenceError, ShootingDivergence, ContinuationError,
                    _breaks.CuspNotFoundError, _breaks.UnmeasurableBreakError,
                    np.linalg.LinAlgError, ArithmeticError)


@dataclass
class RunReport:
    experiment: str
    variant: str | None
    config: dict
    files: list
    summary: dict
    wall_clock: float

    def to_dict(self):
        return {"experiment": self.experiment, "variant": self.variant, "config": self.config,
                "files": [str(f) for f in self.files], "summary": self.summary,
                "wall_clock": self.wall_clock}


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    runner: Callable
    variants: tuple = ()
    default_variant: str | None = None


EXPERIMENTS: dict[str, Experiment] = {}


def register(name, description, variants=(), default_variant=None):
    def deco(fn):
        EXPERIMENTS[name] = Experiment(name, description, fn, tuple(variants), default_variant)
        return fn
    return deco


def plain(v):
    """Recursively convert numpy scalars/arrays to JSON-friendly values."""
    if isinstance(v, dict):
        return {str(k): plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [plain(x) for x in v.tolist()]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def parallel_map(fn, items, jobs=1):
    """``map`` over a process pool when ``jobs > 1``; results keep input order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def run_experiment(config: ExperimentConfig) -> RunReport:
    t0 = time.perf_counter()
    try:
        exp = EXPERIMENTS[config.experiment]
    except KeyError:
        raise ConfigError(f"unknown experiment {config.experiment!r}; "
                          f"known: {', '.join(sorted(EXPERIMENTS))}") from None
    variant = config.variant or exp.default_variant
    if exp.variants and variant not in exp.variants:
        raise ConfigError(f"experiment {exp.name!r} needs a variant from "
                          f"{', '.join(exp.variants)}; got {variant!r}")
    if not exp.variants and config.variant:
        raise ConfigError(f"experiment {exp.name!r} takes no variant")
    if config.method is not None and config.method not in METHODS:
        raise ConfigError(f"unknown method {config.method!r}; known: {', '.join(METHODS)}")
    if config.mesh is not None and config.mesh not in ("uniform", "warped", "adaptive"):
        raise ConfigError(f"unknown mesh kind {config.mesh!r}")
    if config.warp not in WARPS:
        raise ConfigError(f"unknown warp {config.warp!r}; known: {', '.join(WARPS)}")
    out_dir = config.out_dir() / (exp.name + (f"-{variant}" if variant else ""))
    try:
        tables, summary = exp.runner(config, variant)
    except NUMERICAL_ERRORS as exc:
        raise NumericalFailure(f"{exp.name}: {type(exc).__name__}: {exc}") from exc
    except MeshError as exc:
        raise ConfigError(str(exc)) from None
    files = []
    for table in tables:
        files += emit(table, out_dir, config.formats)
    report = RunReport(exp.name, variant, plain(config.echo()), files, plain(summary),
                       time.perf_counter() - t0)
    path = out_dir / "report.json"
    report.files.append(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    for f in report.files:
        if not Path(f).is_file() or Path(f).stat().st_size == 0:
            raise OSError(f"artifact {f} is missing or empty")
    return report


def _range(cfg, default):
    """``(lo, hi, step)`` from the config, falling back to ``default``."""
    r = cfg.param_range or default
    return float(r[0]), float(r[1]), (r[2] if len(r) > 2 else None)


def _diagram_rows(D, tag_cols=()):
    return [tuple(tag_cols) + (bid, i, lam, val, tag) for bid, i, lam, val, tag in D.rows()]


# ---------------------------------------------------------------------------
# bratu

BRATU_STEPS = (25, 50, 100, 200)


def bratu_fold_reference():
    """Exact fold of the continuous problem.

    Solutions satisfy ``theta = sqrt(2 C) cosh(theta / 4)``; the fold is the
    maximum of ``C(theta) = theta^2 / (2 cosh^2(theta / 4))``, where
    ``(theta / 4) tanh(theta / 4) = 1``.
    """
    u = 1.2
    for _ in range(50):
        f = u * math.tanh(u) - 1.0
        df = math.tanh(u) + u / math.cosh(u) ** 2
        du = f / df
        u -= du
        if abs(du) < 1e-16:
            break
    theta = 4.0 * u
    return theta * theta / (2.0 * math.cosh(u) ** 2)


def bratu_problem(method, N, mesh="uniform", warp="exp-sine"):
    return dirichlet_problem("bratu", method, make_mesh(mesh, N, 1.0, warp), [0.0], [0.0],
                             name=f"bratu-N{N}")


def _bratu_job(args):
    method, N, mesh, warp, lo, hi, ds, functional = args
    prob = bratu_problem(method, N, mesh, warp)
    starts = multistart_sweep(prob, [lo], [[float(v)] for v in np.linspace(0.0, 20.0, 21)])
    if not len(starts):
        raise NonConvergenceError(f"no Bratu solution at C={lo}")
    seed = min(starts, key=lambda s: s.x[0])
    br = trace_branch(prob, seed, (lo, hi), ds, 4000, direction=0, functionals=[functional])
    rows = [(N, i, p.lam, p.functionals[functional], p.tag) for i, p in enumerate(br.points)]
    folds = [(p.lam, float(p.x[0])) for p in br.folds]
    return rows, folds


@register("bratu", "continuation of the Bratu problem through its fold")
def run_bratu(cfg: ExperimentConfig, variant):
    cfg = with_defaults(cfg, method="stormer-verlet", steps=BRATU_STEPS, mesh="uniform",
                        functional="l2norm-q")
    lo, hi, step = _range(cfg, (3.0, 4.0, 0.05))
    ds = step or 0.05
    jobs = [(cfg.method, N, cfg.mesh, cfg.warp, lo, hi, ds, cfg.functional) for N in cfg.steps]
    results = parallel_map(_bratu_job, jobs, cfg.jobs)
    ref = bratu_fold_reference()
    rows, fold_rows, folds = [], [], {}
    for N, (r, f) in zip(cfg.steps, results):
        rows += r
        for lam, x in f:
            fold_rows.append((N, 1.0 / N, lam, x, abs(lam - ref)))
        if f:
            folds[N] = f[0][0]
    summary = {"fold_reference": ref, "folds": folds}
    if folds:
        finest = max(folds)
        summary["fold_C"] = folds[finest]
        summary["fold_N"] = finest
    Ns = sorted(folds)
    errs = [abs(folds[N] - ref) for N in Ns]
    if len(Ns) >= 2 and all(e > 0 for e in errs):
        summary["error_slope"] = float(np.polyfit(np.log(1.0 / np.array(Ns)), np.log(errs), 1)[0])
    tables = [Table("bratu_diagram", ("steps", "index", "C", cfg.functional, "tag"), rows,
                    plot=("C", cfg.functional, "steps"))]
    if fold_rows:
        tables.append(Table("bratu_folds", ("steps", "h", "C", "p0", "error"), fold_rows,
                            plot=("h", "error")))
    return tables, summary


# ---------------------------------------------------------------------------
# Henon-Heiles umbilic

HH_BOX = ((-0.5, 0.5), (1.6, 2.3), (1.2, 1.6))
HH_PARAM_NAMES = ("q0_2", "Q_1", "Q_2")


def henon_heiles_problem(method="stormer-verlet", N=10, tau=1.0):
    """Dirichlet problem with ``q(0) = (0, q0_2)`` and free right-hand data.

    Unknowns are the initial momenta; the right-hand positions are bound to
    parameters, so the residual is the end position minus ``(Q_1, Q_2)``.
    """
    return dirichlet_problem("henon-heiles", method, make_mesh("uniform", N, tau), (0.0, 1.4),
                             (0.0, 0.0), binding=bind("left:1", "right:0", "right:1"),
                             name=f"henon-heiles-N{N}")


def henon_heiles_umbilics(method="stormer-verlet", N=10, box=HH_BOX, seeds=10, tol=1e-8):
    prob = henon_heiles_problem(method, N)
    target = shooting_corank2_target(prob, (box[2][0], 0.0, 0.0), 0)
    return prob, find_corank2(target, box, seeds=seeds, tol=tol)


@register("henon-heiles-umbilic", "corank-2 search and level bifurcation set for Henon-Heiles")
def run_henon_heiles(cfg: ExperimentConfig, variant):
    cfg = with_defaults(cfg, method="stormer-verlet", steps=(10,), grid=48)
    N = cfg.steps[0]
    prob, recs = henon_heiles_umbilics(cfg.method, N, tol=cfg.tolerances.get("corank2", 1e-8))
    rec_rows = [tuple(float(v) for v in r.params) + (r.cls,) + tuple(float(v) for v in r.phase)
                + tuple(float(v) for v in r.cubic) + (float(r.discriminant), float(r.residual))
                for r in recs]
    fam = ShootingLevelFamily(prob, (HH_BOX[2][0], 0.0, 0.0), 0)
    L = level_bifurcation_set(fam, HH_BOX[:2], HH_BOX[2], grid=cfg.grid,
                              slices=max(8, cfg.grid // 2))
    cols = HH_PARAM_NAMES + ("class", "p0_1", "p0_2", "det_residual")
    tables = [Table("henon_heiles_level_set", cols, L.rows(), plot=("Q_1", "Q_2", "class"))]
    if rec_rows:
        tables.append(Table("henon_heiles_corank2",
                            HH_PARAM_NAMES + ("class", "p0_1", "p0_2", "a", "b", "c", "d",
                                              "discriminant", "residual"), rec_rows))
    summary = {"steps": N, "corank2": [{"class": r.cls, "p0": r.phase, "params": r.params,
                                        "cubic": r.cubic, "discriminant": r.discriminant,
                                        "residual": r.residual} for r in recs],
               "counts": {c: L.count(c) for c in ("A2", "A3", "A4", "D4plus", "D4minus")}}
    return tables, summary


# ---------------------------------------------------------------------------
# normal forms

NF_BOX = ((-0.6, 0.6), (-0.6, 0.6))
NF_SLICES = (-0.3, 0.3)
NF_VARIANTS = {"d4plus": "D4plus", "d4minus": "D4minus", "cusp": "cusp"}


def normal_form_set(kind, epsilon=0.0, grid=128, slices=None):
    nf = NormalFormProblem(kind, epsilon)
    return level_bifurcation_set(nf, NF_BOX, NF_SLICES, grid=grid, slices=slices or grid)


def _nf_slice(rows, target=0.1):
    # rows at the scan slice nearest ``target`` (column 2 is mu3)
    vals = sorted({r[2] for r in rows})
    if not vals:
        return []
    s = min(vals, key=lambda v: abs(v - target))
    return [r for r in rows if r[2] == s]


@register("normal-form", "level bifurcation sets of cusp and umbilic normal forms",
          variants=tuple(NF_VARIANTS), default_variant="d4plus")
def run_normal_form(cfg: ExperimentConfig, variant):
    kind = NF_VARIANTS[variant]
    eps = 0.05 if cfg.epsilon is None else cfg.epsilon
    grid = cfg.grid or 128
    if kind == "cusp":
        nf = NormalFormProblem("cusp")
        rows = [(m1, m2, "A2", x) for m1, m2, x in cusp_level_set(nf, (-1.0, 1.0), (-1.0, 0.0),
                                                                 grid=max(grid, 200))]
        rows.append((0.0, 0.0, "A3", 0.0))
        t = Table("normal_form_cusp", ("mu1", "mu2", "class", "x"), rows,
                  plot=("mu1", "mu2", "class"))
        return [t], {"counts": {"A2": len(rows) - 1, "A3": 1}}
    tables, summary = [], {"epsilon": eps, "grid": grid}
    cols = ("mu1", "mu2", "mu3", "class", "x", "y", "det_residual")
    for e in sorted({0.0, float(eps)}):
        L = normal_form_set(kind, e, grid)
        rows = L.rows()
        tag = f"eps{e:g}"
        tables.append(Table(f"normal_form_{variant}_{tag}", cols, rows))
        sl = _nf_slice(rows)
        if sl:
            tables.append(Table(f"normal_form_{variant}_{tag}_slice", cols, sl,
                                plot=("mu1", "mu2", "class")))
        summary[tag] = {"counts": {c: L.count(c) for c in ("A2", "A3", "A4", "D4plus",
                                                           "D4minus")},
                        "corank2": [{"class": r.cls, "params": r.params} for r in L.corank2],
                        "A4": [p.params for p in L.of_class("A4")]}
        if e:
            nf = NormalFormProblem(kind, e)
            pts = np.random.default_rng(0).uniform(-0.6, 0.6, size=(256, 2))
            asym = [nf.asymmetry(x, (0.1, -0.2, 0.05)) for x in pts]
            summary[tag]["asymmetry_error"] = float(np.max(np.abs(np.array(asym) - 2 * e)))
    return tables, summary


# ---------------------------------------------------------------------------
# pitchfork

PITCHFORK_TAU = 1.7
PITCHFORK_BC = 0.2
PITCHFORK_RANGE = (-7.5, -4.5)
PITCHFORK_WIDTH = PITCHFORK_RANGE[1] - PITCHFORK_RANGE[0]
PITCHFORK_VARIANTS = {"sv": "stormer-verlet", "rk2": "rk2", "lobatto3a": "lobatto3a"}
PITCHFORK_STEPS = {"stormer-verlet": (14, 21, 28), "rk2": (25, 100, 400),
                   "lobatto3a": (10, 20, 40)}
# reference parameter for counting inner-branch solutions
WINDOW_MU = -6.5
WINDOW = 1.0
_MULTISTART = tuple(float(v) for v in np.linspace(-8.0, 4.0, 25))


def pitchfork_problem(method, N, mesh="uniform", warp="exp-sine", times=None):
    m = make_mesh(mesh, N, PITCHFORK_TAU, warp, times)
    return dirichlet_problem("pitchfork", method, m, [PITCHFORK_BC], [PITCHFORK_BC],
                             name=f"pitchfork-{mesh}-N{N}")


def pitchfork_cusp_guess(prob, lam_range=PITCHFORK_RANGE):
    """Cusp candidates from a grid scan, nearest to the symmetric point first."""
    lo, hi = lam_range
    cands = _breaks.locate_cusps(prob, (-1.5, 1.5), (lo - 2.0, hi), [0.0], grid=64)
    cands.sort(key=lambda c: (abs(c[0]), abs(c[1] - 0.5 * (lo + hi))))
    return [np.array([c[0], c[1]]) for c in cands] + [np.array([0.0, 0.5 * (lo + hi)])]


def pitchfork_breaks(method, steps, mesh="uniform", warp="exp-sine", width=PITCHFORK_WIDTH,
                     guess=None) -> list:
    """Break magnitudes for each step count, solved finest first and chained."""
    out = {}
    for N in sorted(steps, reverse=True):
        prob = pitchfork_problem(method, N, mesh, warp)
        guesses = [guess] if guess is not None else pitchfork_cusp_guess(prob)
        res, err = None, None
        for g in guesses:
            try:
                res = pitchfork_break(prob, g, [float(g[-1])], 0, width)
                break
            except NUMERICAL_ERRORS as exc:
                err = exc
        if res is None:
            raise err
        out[N] = res
        guess = np.concatenate([res.x_cusp, [res.mu_cusp]])
    return [(N, out[N]) for N in steps]


def window_solutions(method, N, mesh="uniform", warp="exp-sine", mu=WINDOW_MU, window=WINDOW):
    prob = pitchfork_problem(method, N, mesh, warp)
    sols = multistart_sweep(prob, [mu], [[v] for v in np.linspace(-8.0, 4.0, 49)])
    return sorted(float(s.x[0]) for s in sols if abs(s.x[0]) < window)


def _pitchfork_diagram_job(args):
    method, N, mesh, warp, lo, hi, ds, functional = args
    prob = pitchfork_problem(method, N, mesh, warp)
    D = diagram(prob, (lo, hi), functional, (0.5 * (lo + hi),), 0,
                seed_lams=np.linspace(lo, hi, 3), grid=[[v] for v in _MULTISTART], ds=ds,
                max_points=4000)
    rows = _diagram_rows(D, (N,))
    return rows, [(p.lam, float(p.x[0])) for _, p in D.folds]


def _break_rows(method, results, tau=PITCHFORK_TAU):
    return [(method, N, tau / N, r.magnitude, r.rho, r.mu_cusp, r.mu_fold) for N, r in results]


BREAK_COLUMNS = ("method", "steps", "h", "break", "rho", "mu_cusp", "mu_fold")


def _fit_summary(Ns, results, tau=PITCHFORK_TAU):
    pos = [(N, r.magnitude) for N, r in results if r.magnitude > 0]
    if len(pos) < 4:
        return {"fit": None, "zero_breaks": len(results) - len(pos)}
    f = scaling_fit([p[0] for p in pos], [p[1] for p in pos], tau)
    return {"fit": {"model": f.model, "rate": f.rate, "beta": f.beta, "kappa": f.kappa,
                    "residual_exponential": f.residual_exponential,
                    "residual_power": f.residual_power},
            "zero_breaks": len(results) - len(pos)}


@register("pitchfork", "pitchfork diagrams and break magnitudes for one integrator",
          variants=tuple(PITCHFORK_VARIANTS), default_variant="sv")
def run_pitchfork(cfg: ExperimentConfig, variant):
    method = cfg.method or PITCHFORK_VARIANTS[variant]
    cfg = with_defaults(cfg, steps=PITCHFORK_STEPS.get(method, (10, 20, 40)), mesh="uniform",
                        functional="x0")
    if cfg.mesh == "adaptive":
        raise ConfigError("adaptive meshes belong to the pitchfork-mesh experiment")
    lo, hi, step = _range(cfg, PITCHFORK_RANGE + (None,))
    ds = step or 0.05
    jobs = [(method, N, cfg.mesh, cfg.warp, lo, hi, ds, cfg.functional) for N in cfg.steps]
    diags = parallel_map(_pitchfork_diagram_job, jobs, cfg.jobs)
    results = pitchfork_breaks(method, cfg.steps, cfg.mesh, cfg.warp, hi - lo)
    rows = [r for d, _ in diags for r in d]
    tables = [Table(f"pitchfork_{variant}_diagram",
                    ("steps", "branch", "index", "mu", cfg.functional, "tag"), rows,
                    plot=("mu", cfg.functional, "steps")),
              Table(f"pitchfork_{variant}_breaks", BREAK_COLUMNS, _break_rows(method, results),
                    plot=("steps", "break"))]
    mags = [r.magnitude for _, r in results]
    order = sorted(range(len(cfg.steps)), key=lambda i: cfg.steps[i])
    summary = {"method": method, "breaks": {N: r.magnitude for N, r in results},
               "mu_cusp": {N: r.mu_cusp for N, r in results},
               "folds": {N: f for N, (_, f) in zip(cfg.steps, diags)},
               "strictly_decreasing": all(mags[order[i + 1]] < mags[order[i]]
                                          for i in range(len(order) - 1)),
               "window_solutions": {N: window_solutions(method, N, cfg.mesh, cfg.warp)
                                    for N in cfg.steps}}
    summary.update(_fit_summary(cfg.steps, results))
    return tables, summary


# ---------------------------------------------------------------------------
# mesh pathologies

WARPED_PAIRS = {225: 100, 904: 400}


def uniform_partner(N):
    """Uniform step count compared against a warped mesh with ``N`` steps."""
    return WARPED_PAIRS.get(N, max(1, round(N / 2.25)))


def equidistributed_times(times, traj, n_steps, tau, snap=2 ** -10):
    """``n_steps`` intervals of equal trajectory arclength, snapped to a fixed lattice.

    Snapping to multiples of ``snap * tau`` keeps the mesh crude: nodes jump
    between lattice points as the trajectory changes with the parameter.
    """
    seg = np.sqrt(np.sum(np.diff(traj, axis=0) ** 2, axis=1))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        t = np.linspace(0.0, tau, n_steps + 1)
    else:
        t = np.interp(np.linspace(0.0, s[-1], n_steps + 1), s, times)
    t = np.round(t / (snap * tau)) * (snap * tau)
    t = np.unique(np.clip(t, 0.0, tau))
    t[0], t[-1] = 0.0, tau
    return t


def adaptive_sweep(method, N, lams, x0=None):
    """Natural-parameter sweep re-meshing at every parameter value.

    Per value: solve on a uniform ``N``-step mesh, equidistribute ``2N``
    steps along the computed trajectory, re-solve on that mesh.  Returns the
    first unknown at every parameter value.
    """
    coarse = pitchfork_problem(method, N)
    if x0 is None:
        sols = multistart_sweep(coarse, [float(lams[0])], [[v] for v in _MULTISTART])
        x0 = max(s.x[0] for s in sols)
    x = np.array([x0], dtype=float)
    out = []
    for lam in lams:
        sol = newton_solve(coarse, x, [float(lam)])
        x = sol.x
        traj = np.asarray(sol.trajectory, dtype=float)
        t = equidistributed_times(np.asarray(coarse.mesh.times), traj, 2 * N, PITCHFORK_TAU)
        fine = pitchfork_problem(method, len(t) - 1, "explicit", times=tuple(float(v) for v in t))
        out.append(float(newton_solve(fine, x, [float(lam)]).x[0]))
    return np.array(out)


def fixed_sweep(method, N, lams, x0):
    prob = pitchfork_problem(method, N)
    x = np.array([x0], dtype=float)
    out = []
    for lam in lams:
        x = newton_solve(prob, x, [float(lam)]).x
        out.append(float(x[0]))
    return np.array(out)


def roughness(values):
    """Root-mean-square second difference of a sampled curve."""
    d2 = np.diff(np.asarray(values, dtype=float), 2)
    return float(np.sqrt(np.mean(d2 * d2)))


@register("pitchfork-mesh", "pitchfork on warped fixed meshes and on per-parameter adaptive meshes",
          variants=("warped", "adaptive"), default_variant="warped")
def run_pitchfork_mesh(cfg: ExperimentConfig, variant):
    method = cfg.method or "stormer-verlet"
    if variant == "warped":
        cfg = with_defaults(cfg, steps=(225, 904))
        pairs = [(N, uniform_partner(N)) for N in cfg.steps]
        rows, summary = [], {"method": method, "warp": cfg.warp, "pairs": []}
        for Nw, Nu in pairs:
            (_, rw), = pitchfork_breaks(method, [Nw], "warped", cfg.warp)
            (_, ru), = pitchfork_breaks(method, [Nu], "uniform")
            rows.append(("warped", Nw, Nw + 1, rw.magnitude, rw.rho, rw.mu_cusp, rw.mu_fold))
            rows.append(("uniform", Nu, Nu + 1, ru.magnitude, ru.rho, ru.mu_cusp, ru.mu_fold))
            summary["pairs"].append({"warped_steps": Nw, "uniform_steps": Nu,
                                     "warped_break": rw.magnitude, "uniform_break": ru.magnitude,
                                     "warped_worse": rw.magnitude > ru.magnitude})
        cols = ("mesh", "steps", "points", "break", "rho", "mu_cusp", "mu_fold")
        return [Table("pitchfork_mesh_warped_breaks", cols, rows, plot=("points", "break", "mesh"))
                ], summary
    cfg = with_defaults(cfg, steps=(25,))
    lo, hi, step = _range(cfg, PITCHFORK_RANGE + (0.01,))
    step = step or 0.01
    lams = np.arange(lo, hi + 0.5 * step, step)
    rows, summary = [], {"method": method, "pairs": []}
    for N in cfg.steps:
        ad = adaptive_sweep(method, N, lams)
        fx = fixed_sweep(method, 2 * N, lams, ad[0])
        rows += [("adaptive", N, float(m), float(v)) for m, v in zip(lams, ad)]
        rows += [("fixed", 2 * N, float(m), float(v)) for m, v in zip(lams, fx)]
        ra, rf = roughness(ad), roughness(fx)
        summary["pairs"].append({"coarse_steps": N, "steps": 2 * N, "roughness_adaptive": ra,
                                 "roughness_fixed": rf,
                                 "ratio": ra / rf if rf > 0 else math.inf})
    return [Table("pitchfork_mesh_adaptive", ("mesh", "steps", "mu", "x0"), rows,
                  plot=("mu", "x0", "mesh"))], summary


# ---------------------------------------------------------------------------
# four-dimensional pitchforks

LI_TAU = 5.0
LI_BC = (0.0, 0.7)          # M (0.2, 0.1)
LI_GUESS = (0.0, 0.0, -0.05)
LI_RANGE = (-0.15, 0.05)
TORUS_TAU = 2.0 * math.pi / 3.0
TORUS_BC = (0.85, 1.5)
TORUS_GUESS = (math.pi / 2.0, 0.0, -3.0)
TORUS_RANGE = (-3.5, -2.5)


def linear_invariant_problem(method, N):
    return dirichlet_problem("linear-invariant-4d", method, make_mesh("uniform", N, LI_TAU),
                             LI_BC, LI_BC, name=f"linear-invariant-N{N}")


def torus_problem(method, N):
    return neumann_problem("torus-4d", method, make_mesh("uniform", N, TORUS_TAU),
                           TORUS_BC, TORUS_BC, name=f"torus-N{N}")


def chained_breaks(make, steps, guess, width):
    """Breaks for each step count, finest first, each cusp seeding the next solve."""
    guess = np.asarray(guess, dtype=float)
    out = {}
    for N in sorted(steps, reverse=True):
        res = pitchfork_break(make(N), guess, [float(guess[-1])], 0, width)
        out[N] = res
        guess = np.concatenate([res.x_cusp, [res.mu_cusp]])
    return [(N, out[N]) for N in steps]


def invariant_drift(prob, x, params):
    """Largest change of the linear invariant along the computed trajectory."""
    traj = np.asarray(_trajectory(prob, x, params), dtype=float)
    n = prob.system.n
    inv = linear_invariant(traj[:, :n].T, traj[:, n:].T)
    return float(np.max(np.abs(inv - inv[0])))


@register("pitchfork-4d", "pitchforks of transformed four-dimensional systems",
          variants=("linear-invariant", "torus"), default_variant="linear-invariant")
def run_pitchfork_4d(cfg: ExperimentConfig, variant):
    method = cfg.method or "stormer-verlet"
    if variant == "linear-invariant":
        cfg = with_defaults(cfg, steps=(14, 15))
        lo, hi, _ = _range(cfg, LI_RANGE + (None,))
        results = chained_breaks(lambda N: linear_invariant_problem(method, N), cfg.steps,
                                 LI_GUESS, hi - lo)
        drift = {N: invariant_drift(linear_invariant_problem(method, N), r.x_cusp, [r.mu_cusp])
                 for N, r in results}
        tau = LI_TAU
    else:
        cfg = with_defaults(cfg, steps=(10, 20, 40, 80))
        lo, hi, _ = _range(cfg, TORUS_RANGE + (None,))
        results = chained_breaks(lambda N: torus_problem(method, N), cfg.steps, TORUS_GUESS,
                                 hi - lo)
        drift = None
        tau = TORUS_TAU
    rows = [(variant, N, tau / N, r.magnitude, r.rho, r.mu_cusp, r.mu_fold) for N, r in results]
    cols = ("system",) + BREAK_COLUMNS[1:]
    summary = {"method": method, "breaks": {N: r.magnitude for N, r in results},
               "rho": {N: r.rho for N, r in results},
               "cusp": {N: list(r.x_cusp) + [r.mu_cusp] for N, r in results}}
    if drift is not None:
        summary["invariant_drift"] = drift
    pos = [(N, r) for N, r in results if r.magnitude > 0 and abs(r.rho) > 0]
    if len(pos) >= 2:
        h = np.log([tau / N for N, _ in pos])
        summary["break_exponent"] = float(np.polyfit(h, np.log([r.magnitude for _, r in pos]), 1)[0])
        summary["rho_exponent"] = float(np.polyfit(h, np.log([abs(r.rho) for _, r in pos]), 1)[0])
    return [Table(f"pitchfork_4d_{variant}_breaks", cols, rows, plot=("h", "break"))], summary


# ---------------------------------------------------------------------------
# scaling study

SCALING_STEPS = {"stormer-verlet": tuple(range(10, 31)), "rk2": (25, 50, 100, 200, 400)}


def _scaling_job(args):
    method, steps = args
    return method, pitchfork_breaks(method, steps)


@register("scaling-study", "break magnitudes over step counts for several integrators")
def run_scaling_study(cfg: ExperimentConfig, variant):
    if cfg.method:
        plan = [(cfg.method, tuple(cfg.steps) or PITCHFORK_STEPS.get(cfg.method, (10, 20, 40)))]
    else:
        plan = [(m, tuple(cfg.steps) or s) for m, s in SCALING_STEPS.items()]
    results = parallel_map(_scaling_job, plan, cfg.jobs)
    rows, summary = [], {}
    for method, res in results:
        rows += _break_rows(method, res)
        summary[method] = {"breaks": {N: r.magnitude for N, r in res}}
        summary[method].update(_fit_summary([N for N, _ in res], res))
    return [Table("scaling_breaks", BREAK_COLUMNS, rows, plot=("steps", "break", "method"))], summary


def registry_text() -> str:
    """Human-readable listing of systems, methods, experiments and warps."""
    lines = ["systems:"]
    lines += [f"  {k:22s} {s.description}" for k, s in SYSTEMS.items()]
    lines.append("methods:")
    lines += [f"  {k:22s} order {m.order}, {'symplectic' if m.symplectic else 'not symplectic'}; "
              f"{m.description}" for k, m in METHODS.items()]
    lines.append("experiments:")
    for k, e in EXPERIMENTS.items():
        v = f" [{'|'.join(e.variants)}]" if e.variants else ""
        lines.append(f"  {k + v:44s} {e.description}")
    lines.append("warps:")
    for k, w in WARPS.items():
        doc = (w.__doc__ or "").replace("``", "").strip().splitlines()
        lines.append(f"  {k:22s} {doc[0] if doc else ''}")
    return "\n".join(lines) + "\n"
