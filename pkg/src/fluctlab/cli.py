"""Config-driven experiment runner.

    fluctlab run --config cfg.json [--out DIR] [--threads N]
    fluctlab validate --config cfg.json

A config is one JSON document::

    {"experiment": "llt-positive", "step": "simple", "n_list": [100, 400, 1600]}

``step`` is a step-law object ({"shift", "span", "atoms"}), the name of a
shipped walk, or {"kind": "uniform", "half_width": w} for density-case.
Optional keys: epsilon, h, seed, output_dir, format (csv | json), depth and
tail (norming series), grid_step (density-case), x_list (meander-integral).

Reports are computed in full before anything is written; each file goes to
a temporary name first and is renamed into place. Exit codes: 0 ok, 2 config
error, 3 numeric-budget error, 4 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__, continuum, exact_dp, ladder, limits, mixture, norming
from .errors import ConfigInvalid, FluctlabError, StepLawError
from .simulate import RNG_ID
from .walk_core import SHIPPED_STEPS, StepLaw, norming_a, step_from_dict, step_to_dict

SCHEMA_VERSION = 1
EXPERIMENTS = (
    "llt-gnedenko",
    "llt-positive",
    "density-case",
    "renewal-ratio",
    "weak-convergence",
    "identity-suite",
    "survival-asymptotics",
    "meander-integral",
)
KNOWN_KEYS = {
    "experiment", "step", "n_list", "epsilon", "h", "seed", "output_dir", "format",
    "depth", "tail", "grid_step", "x_list",
}
DEFAULT_DEPTH = 200_000
ORACLE_PATHS = 10**7


@dataclass
class ExperimentConfig:
    experiment: str
    step: StepLaw | None
    n_list: list[int]
    epsilon: float = 0.5
    h: float | None = None
    seed: int = 0
    output_dir: str = "fluctlab-out"
    format: str = "csv"
    depth: int = DEFAULT_DEPTH
    tail: str = "bound"
    grid_step: float | None = None
    half_width: float = 1.0
    x_list: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    raw: dict = field(default_factory=dict)


def _parse_step(obj, experiment: str):
    if experiment == "density-case":
        if not isinstance(obj, dict) or obj.get("kind") != "uniform":
            raise ConfigInvalid('density-case needs step {"kind": "uniform", "half_width": w}')
        w = obj.get("half_width", 1.0)
        if not isinstance(w, (int, float)) or w <= 0:
            raise ConfigInvalid("half_width must be positive")
        return None, float(w)
    if isinstance(obj, str):
        if obj not in SHIPPED_STEPS:
            raise ConfigInvalid(f"unknown step {obj!r}; shipped: {sorted(SHIPPED_STEPS)}")
        return SHIPPED_STEPS[obj](), 1.0
    if isinstance(obj, dict):
        try:
            return step_from_dict(obj), 1.0
        except StepLawError as exc:
            raise ConfigInvalid(f"step law rejected: {exc.code}: {exc}") from exc
    raise ConfigInvalid("step must be an object or a shipped walk name")


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigInvalid("config must be a JSON object")
    unknown = set(doc) - KNOWN_KEYS
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigInvalid(f"unknown experiment {exp!r}")
    step, half_width = (None, 1.0) if exp == "meander-integral" else _parse_step(doc.get("step"), exp)
    n_list = doc.get("n_list", [1] if exp == "meander-integral" else None)
    if (
        not isinstance(n_list, list)
        or not n_list
        or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in n_list)
        or any(b <= a for a, b in zip(n_list, n_list[1:]))
    ):
        raise ConfigInvalid("n_list must be a nonempty strictly increasing list of positive integers")
    eps = doc.get("epsilon", 0.5)
    if not isinstance(eps, (int, float)) or not 0 < eps < 1:
        raise ConfigInvalid("epsilon must lie in (0, 1)")
    h = doc.get("h")
    if h is not None and (not isinstance(h, (int, float)) or h < 0):
        raise ConfigInvalid("h must be a nonnegative number")
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigInvalid("seed must be a 64-bit nonnegative integer")
    fmt = doc.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigInvalid("format must be csv or json")
    depth = doc.get("depth", DEFAULT_DEPTH)
    if not isinstance(depth, int) or depth < 1:
        raise ConfigInvalid("depth must be a positive integer")
    tail = doc.get("tail", "bound")
    if tail not in ("bound", "extrapolate"):
        raise ConfigInvalid("tail must be bound or extrapolate")
    grid_step = doc.get("grid_step")
    if grid_step is not None and (not isinstance(grid_step, (int, float)) or grid_step <= 0):
        raise ConfigInvalid("grid_step must be positive")
    x_list = doc.get("x_list", [0.5, 1.0, 2.0])
    if not isinstance(x_list, list) or not x_list or not all(isinstance(x, (int, float)) and x > 0 for x in x_list):
        raise ConfigInvalid("x_list must be a nonempty list of positive numbers")
    if exp == "weak-convergence" and n_list[0] < 2:
        raise ConfigInvalid("weak-convergence needs n >= 2")
    return ExperimentConfig(
        experiment=exp,
        step=step,
        n_list=n_list,
        epsilon=float(eps),
        h=None if h is None else float(h),
        seed=seed,
        output_dir=str(doc.get("output_dir", "fluctlab-out")),
        format=fmt,
        depth=depth,
        tail=tail,
        grid_step=None if grid_step is None else float(grid_step),
        half_width=half_width,
        x_list=[float(x) for x in x_list],
        raw=doc,
    )


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)


# -- reports -----------------------------------------------------------------

@dataclass
class Report:
    name: str
    columns: list[str]
    rows: list[list]
    notes: list[str] = field(default_factory=list)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else f"{float(v):.17g}"
    if v is None:
        return ""
    return str(v)


def render(report: Report, experiment: str, fmt: str) -> str:
    if fmt == "json":
        rows = [[None if isinstance(v, float) and math.isnan(v) else _jsonable(v) for v in r] for r in report.rows]
        doc = {
            "schema_version": SCHEMA_VERSION,
            "experiment": experiment,
            "report": report.name,
            "columns": report.columns,
            "rows": rows,
            "notes": report.notes,
        }
        return json.dumps(doc, indent=1) + "\n"
    lines = [f"# schema_version={SCHEMA_VERSION} experiment={experiment} report={report.name}"]
    lines += [f"# {note}" for note in report.notes]
    lines.append(",".join(report.columns))
    lines += [",".join(_fmt(v) for v in row) for row in report.rows]
    return "\n".join(lines) + "\n"


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _lattice_note(step: StepLaw) -> str:
    return (
        f"admissible points: x = {step.lattice_shift:g}*n + {step.lattice_span:g}*k; "
        "other points carry no mass and are left out of every sup"
    )


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _exp_llt(cfg: ExperimentConfig, threads: int, conditioned: bool) -> list[Report]:
    errs = _map(lambda n: exact_dp.llt_sup_error(cfg.step, n, conditioned), cfg.n_list, threads)
    target = "phi+ (law given C_n)" if conditioned else "phi"
    notes = [_lattice_note(cfg.step), f"sup_err = sup |a_n P(S_n = x) / span - {target}(x / a_n)|"]
    rows = [[n, e] for n, e in zip(cfg.n_list, errs)]
    name = "llt-positive" if conditioned else "llt-gnedenko"
    return [Report(name, ["n", "sup_err"], rows, notes)]


def _exp_density(cfg: ExperimentConfig, threads: int) -> list[Report]:
    sigma = cfg.half_width / math.sqrt(3)
    grid = cfg.grid_step or sigma / 64
    step_d = continuum.uniform_step(grid, cfg.half_width)
    gsig = math.sqrt(continuum.grid_variance(step_d))
    want = set(cfg.n_list)
    llt_rows, dens_rows = [], []
    last = None
    frees = continuum.iter_grid_densities(step_d, cfg.n_list[-1], kill=False)
    kills = continuum.iter_grid_densities(step_d, cfg.n_list[-1], kill=True)
    for t, (free, killed) in enumerate(zip(frees, kills), start=1):
        if t not in want:
            continue
        h = round((cfg.h if cfg.h is not None else 64 * grid) / grid) * grid
        llt = continuum._llt_errors(free, killed, t, h, gsig)
        llt_rows.append([t, h, llt["uncond"], llt["cond"]])
        d = continuum.density_sup_errors(free, killed, t, gsig)
        dens_rows.append([t, d["uncond"], d["cond"], d["survival"]])
        last = killed
    notes = [
        "nonlattice step: results hold at grid precision only",
        f"grid_step={grid:.17g}; h rounded to a multiple of grid_step",
    ]
    surv = last.integral()
    dens = last.scaled(1.0 / surv)
    return [
        Report("stone-llt", ["n", "h", "sup_err_uncond", "sup_err_cond"], llt_rows, notes),
        Report("density-sup", ["n", "sup_err_uncond", "sup_err_cond", "survival"], dens_rows, notes),
        Report(
            f"density-cond-n{last.n}",
            ["x", "value"],
            [[x, v] for x, v in zip(dens.x, dens.values)],
            notes + [f"normalized density of S_n given C_n at n={last.n}"],
        ),
    ]


def _exp_renewal_ratio(cfg: ExperimentConfig, threads: int) -> list[Report]:
    hi = norming_a(cfg.step, cfg.n_list[-1]) / cfg.epsilon
    heights = ladder.height_renewal(cfg.step, hi + cfg.step.lattice_span, horizon=max(cfg.n_list[-1], 2000))
    reps = _map(lambda n: ladder.renewal_ratio_report(cfg.step, n, cfg.epsilon, heights), cfg.n_list, threads)
    rows = [[r.n, r.epsilon, r.sup_error, len(r.points), r.height_defect] for r in reps]
    notes = [_lattice_note(cfg.step), "sup_err = sup |n u(n,x) / (P(S_n = x) U(x-1)) - 1| over x / a_n in [eps, 1/eps]"]
    return [Report("renewal-ratio", ["n", "epsilon", "sup_err", "points", "height_defect"], rows, notes)]


def _norming(cfg: ExperimentConfig) -> norming.NormingData:
    return norming.build_norming(cfg.step, cfg.depth, tail=cfg.tail)


def _exp_weak(cfg: ExperimentConfig, threads: int) -> list[Report]:
    nd = _norming(cfg)

    def one(n):
        return mixture.weak_convergence_rows(mixture.build_mu_n(cfg.step, n, nd))

    rows = [r for block in _map(one, cfg.n_list, threads) for r in block]
    cols = ["n", "a", "b", "F_n", "F", "abs_err"]
    return [Report("weak-convergence", cols, [[r[c] for c in cols] for r in rows], [f"norming depth M={cfg.depth}, tail={cfg.tail}"])]


def _dict_gap(a: dict, b: dict) -> float:
    return max((abs(a.get(x, 0.0) - b.get(x, 0.0)) for x in set(a) | set(b)), default=0.0)


def _exp_identity(cfg: ExperimentConfig, threads: int) -> list[Report]:
    step = cfg.step
    n_max = cfg.n_list[-1]
    table = ladder.build_ladder_table(step, n_max, check_duality=False)
    atoms = len(step.offsets)
    rows = []
    for n in cfg.n_list:
        u = table.u_row(n)
        dual_dp = _dict_gap(u, exact_dp.positive_part_pmf(step, n).pmf.as_dict())
        dual_or = ad = float("nan")
        if atoms**n <= ORACLE_PATHS:
            orc = exact_dp.oracle_law(step, n, exact_dp.stays_positive)
            orc = {float(step.lattice_shift * n + step.lattice_span * k): v for k, v in orc.items()}
            dual_or = _dict_gap(u, orc)
            ad = max(ladder.verify_alili_doney(step, n, k) for k in range(1, n + 1))
        rows.append([n, dual_dp, dual_or, ad])
    notes = [
        "duality_dp: ladder renewal table vs killed walk; duality_oracle: vs path enumeration",
        f"oracle columns empty when (atoms)^n > {ORACLE_PATHS}",
    ]
    finite = lambda col: max((r[col] for r in rows if not math.isnan(r[col])), default=float("nan"))
    summary = [["max_duality_dp", finite(1)], ["max_duality_oracle", finite(2)], ["max_alili_doney", finite(3)]]
    return [
        Report("identity-suite", ["n", "duality_dp", "duality_oracle", "alili_doney"], rows, notes),
        Report("identity-summary", ["quantity", "value"], summary),
    ]


def _exp_survival(cfg: ExperimentConfig, threads: int) -> list[Report]:
    nd = _norming(cfg)
    ns = [n for n in cfg.n_list if n >= 2]
    if not ns:
        raise ConfigInvalid("survival-asymptotics needs some n >= 2")
    rows = norming.norming_report_rows(cfg.step, nd, ns)
    cols = ["n", "b_n", "c_n", "b_inv_n", "P_Cn_exact", "P_Cn_limit", "ratio"]
    spitzer = []
    for n in ns:
        s = norming.survival_asymptotics(cfg.step, n, nd)
        spitzer.append([n, s.exact, s.spitzer, s.ratio_spitzer])
    note = [f"norming depth M={cfg.depth}, tail={cfg.tail}; b_n empty where the series tail is too large to certify it"]
    return [
        Report("norming", cols, [[r[c] for c in cols] for r in rows], note),
        Report("spitzer", ["n", "P_Cn_exact", "P_Cn_spitzer", "ratio_spitzer"], spitzer, note),
    ]


def _exp_meander(cfg: ExperimentConfig, threads: int) -> list[Report]:
    rows = []
    for x in cfg.x_list:
        val, err = limits.meander_integral(x)
        rows.append(["meander", x, abs(x * math.exp(-0.5 * x * x) - val), err])
        rows.append(["first_passage", x, limits.first_passage_convolution_check(x), float("nan")])
    return [Report("meander-integral", ["identity", "x", "residual", "quad_error"], rows)]


RUNNERS = {
    "llt-gnedenko": lambda c, t: _exp_llt(c, t, False),
    "llt-positive": lambda c, t: _exp_llt(c, t, True),
    "density-case": _exp_density,
    "renewal-ratio": _exp_renewal_ratio,
    "weak-convergence": _exp_weak,
    "identity-suite": _exp_identity,
    "survival-asymptotics": _exp_survival,
    "meander-integral": _exp_meander,
}


def compute(cfg: ExperimentConfig, threads: int = 1) -> list[Report]:
    return RUNNERS[cfg.experiment](cfg, threads)


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: ExperimentConfig, out_dir: str | None = None, threads: int = 1) -> list[str]:
    """Compute every report, then write them and the manifest. Returns paths."""
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    reports = compute(cfg, threads)
    wall = time.perf_counter() - t0
    out = out_dir or cfg.output_dir
    ext = "json" if cfg.format == "json" else "csv"
    paths = []
    for rep in reports:
        path = os.path.join(out, f"{rep.name}.{ext}")
        atomic_write(path, render(rep, cfg.experiment, cfg.format))
        paths.append(path)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "config": cfg.raw,
        "step": step_to_dict(cfg.step) if cfg.step is not None else None,
        "versions": {
            "fluctlab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "rng": RNG_ID,
        "seed": cfg.seed,
        "threads": threads,
        "reports": [os.path.basename(p) for p in paths],
        "started_at": started.isoformat(),
        "wall_time_s": wall,
    }
    mpath = os.path.join(out, "run-manifest.json")
    atomic_write(mpath, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return paths + [mpath]


def _error_object(exc: FluctlabError) -> str:
    return json.dumps({"error": exc.code, "message": str(exc), "exit_code": exc.exit_code})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fluctlab", description="Fluctuation-theory experiment runner")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    r.add_argument("--threads", type=int, default=1)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            print(json.dumps({"ok": True, "experiment": cfg.experiment}))
            return 0
        if args.threads < 1:
            raise ConfigInvalid("--threads must be >= 1")
        for path in run(cfg, args.out, args.threads):
            print(path)
        return 0
    except FluctlabError as exc:
        print(_error_object(exc), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
