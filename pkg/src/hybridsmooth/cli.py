"""Command line interface: CSV-grid pipeline around the library.

Subcommands: ``fit`` (run a chain on a grid file and write posterior
summaries and fields), ``simulate`` (rough/smooth/synthetic fields),
``study`` (the factorial harness) and ``threshold`` (shrinkage
curves). Every run echoes its fully resolved configuration to
``config.json`` in the output directory, all randomized outputs embed
the seed in a metadata header, and reruns with the same configuration
reproduce output files byte for byte (study timings are written to a
separate file outside that guarantee). Errors leave a machine-readable
JSON object on stderr and a nonzero exit status.
"""

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .grid import build_diff_matrix, build_grid
from .linalg import build_tps_kernel
from .model import default_anchor, default_design, orthogonalize
from .priors import make_prior, thresholding_curve
from .sampler import SamplerConfig, estimate_edf, run_chain
from .study import StudyDesign, lambda_histogram_export, run_factorial
from .synth import make_synthetic, simulate_ngp_field

CONFIG_SCHEMA_VERSION = 1


class IngestError(ValueError):
    """Grid CSV could not be parsed into a complete grid."""


# --- grid CSV I/O -----------------------------------------------------------


def write_grid_csv(path, values: np.ndarray, metadata: dict | None = None):
    """Write a 2-D grid as row,col,value CSV with '#' metadata lines.

    Floats are written with ``repr`` so re-ingesting reproduces the
    array bit for bit.
    """
    values = np.asarray(values)
    buf = io.StringIO()
    for key in sorted(metadata or {}):
        buf.write(f"# {key}: {metadata[key]}\n")
    buf.write("row,col,value\n")
    for r in range(values.shape[0]):
        for c in range(values.shape[1]):
            buf.write(f"{r},{c},{float(values[r, c])!r}\n")
    Path(path).write_text(buf.getvalue())


def write_ensemble_csv(path, members: np.ndarray, metadata: dict | None = None):
    """Write a (members, ny, nx) stack as row,col,member,value CSV."""
    members = np.asarray(members)
    buf = io.StringIO()
    for key in sorted(metadata or {}):
        buf.write(f"# {key}: {metadata[key]}\n")
    buf.write("row,col,member,value\n")
    for i in range(members.shape[0]):
        for r in range(members.shape[1]):
            for c in range(members.shape[2]):
                buf.write(f"{r},{c},{i},{float(members[i, r, c])!r}\n")
    Path(path).write_text(buf.getvalue())


def ingest_grid(path) -> np.ndarray:
    """Read a grid CSV; returns (ny, nx) or (members, ny, nx) for ensembles.

    The header must be ``row,col,value`` or ``row,col,member,value``;
    '#' lines are metadata. Missing cells and ragged ensembles raise
    IngestError naming the gaps.
    """
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise IngestError(f"{path}: no data rows")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    if header == ["row", "col", "value"]:
        ensemble = False
    elif header == ["row", "col", "member", "value"]:
        ensemble = True
    else:
        raise IngestError(
            f"{path}: header must be 'row,col,value' or 'row,col,member,value', "
            f"got {','.join(header)}"
        )

    cells = {}
    for rec in reader:
        if ensemble:
            r, c, mem, val = int(rec[0]), int(rec[1]), int(rec[2]), float(rec[3])
        else:
            r, c, mem, val = int(rec[0]), int(rec[1]), 0, float(rec[3 - 1])
        if r < 0 or c < 0:
            raise IngestError(f"{path}: negative cell index ({r}, {c})")
        key = (mem, r, c)
        if key in cells:
            raise IngestError(f"{path}: duplicate cell ({r}, {c}) for member {mem}")
        cells[key] = val

    members = sorted({k[0] for k in cells})
    ny = 1 + max(k[1] for k in cells)
    nx = 1 + max(k[2] for k in cells)
    missing = []
    for mem in members:
        for r in range(ny):
            for c in range(nx):
                if (mem, r, c) not in cells:
                    missing.append((mem, r, c))
    if missing:
        shown = ", ".join(
            f"({r}, {c})" + (f" member {mem}" if ensemble else "")
            for mem, r, c in missing[:10]
        )
        more = "" if len(missing) <= 10 else f" and {len(missing) - 10} more"
        raise IngestError(f"{path}: missing cells: {shown}{more}")

    out = np.empty((len(members), ny, nx))
    for k, mem in enumerate(members):
        for r in range(ny):
            for c in range(nx):
                out[k, r, c] = cells[(mem, r, c)]
    return out if ensemble else out[0]


# --- helpers ----------------------------------------------------------------


def _parse_grid_arg(text: str):
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise IngestError(f"--grid expects WxH like 20x20, got {text!r}") from None
    return nx, ny


def _echo_config(out_dir: Path, payload: dict):
    payload = dict(payload)
    payload["schema_version"] = CONFIG_SCHEMA_VERSION
    payload["package_version"] = __version__
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_config_file(path):
    if path is None:
        return {}
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise IngestError(f"{path}: config must be a JSON object")
    return data


def _setting(args, cfg_file: dict, name: str, default):
    """CLI flag wins, then the config file, then the default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in cfg_file:
        return cfg_file[name]
    return default


def _write_rows_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


# --- subcommands ------------------------------------------------------------


def _cmd_fit(args) -> int:
    cfg_file = _load_config_file(args.config)
    out_dir = Path(_setting(args, cfg_file, "out", "fit_out"))
    prior_name = _setting(args, cfg_file, "prior", "nj").lower()
    iters = int(_setting(args, cfg_file, "iters", 3000))
    burnin = int(_setting(args, cfg_file, "burnin", 1000))
    seed = int(_setting(args, cfg_file, "seed", 0))
    period = int(_setting(args, cfg_file, "period", 3))

    data = ingest_grid(args.input)
    if args.ensemble and data.ndim != 3:
        raise IngestError("--ensemble given but the file has no member column")
    if data.ndim == 3:
        members, ny, nx = data.shape
        flat = data.reshape(members, ny * nx)
    else:
        ny, nx = data.shape
        flat = data.reshape(-1)

    _echo_config(
        out_dir,
        {
            "subcommand": "fit",
            "input": str(args.input),
            "out": str(out_dir),
            "prior": prior_name,
            "iters": iters,
            "burnin": burnin,
            "seed": seed,
            "period": period,
            "grid": f"{nx}x{ny}",
            "ensemble": data.ndim == 3,
        },
    )

    grid = build_grid(nx, ny)
    kernel = build_tps_kernel(grid, variance=1.0)
    mats = orthogonalize(default_design(grid), kernel)
    D = build_diff_matrix(grid, 1)
    anchor = default_anchor(grid)
    prior = None if prior_name == "tps" else make_prior(prior_name)
    cfg = SamplerConfig(
        n_iter=iters, burn_in=burnin, seed=seed, partial_update_period=period
    )
    samples = run_chain(flat, mats, D, anchor, prior, cfg)

    meta = {"seed": seed, "prior": prior_name}
    write_grid_csv(out_dir / "mu_mean.csv", samples.mu_mean().reshape(ny, nx), meta)
    write_grid_csv(out_dir / "mu_sd.csv", samples.mu_sd().reshape(ny, nx), meta)
    if samples.gamma is not None:
        write_grid_csv(out_dir / "gamma_mean.csv", samples.gamma_mean().reshape(ny, nx), meta)
        write_grid_csv(
            out_dir / "gamma_sd.csv", samples.gamma.std(axis=0, ddof=1).reshape(ny, nx), meta
        )

    scalars = samples.scalar_params()
    names = list(scalars)
    chain_rows = [
        {"draw": t, **{name: repr(float(scalars[name][t])) for name in names}}
        for t in range(samples.n_draws)
    ]
    _write_rows_csv(out_dir / "chain.csv", ["draw", *names], chain_rows)
    _write_rows_csv(
        out_dir / "summary.csv",
        ["parameter", "mean", "sd", "q025", "q975", "ess"],
        [
            {k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()}
            for row in samples.summary()
        ],
    )

    hist = lambda_histogram_export(samples)
    with open(out_dir / "lambda_hist.csv", "w", newline="") as fh:
        fh.write(f"# n_modes: {hist['n_modes']}\n")
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        if hist["neg_log10_lambda2"].size:
            counts, edges = np.histogram(hist["neg_log10_lambda2"], bins=128)
            for k, cnt in enumerate(counts):
                writer.writerow([repr(float(edges[k])), repr(float(edges[k + 1])), int(cnt)])

    metrics = {
        "edf": estimate_edf(samples) if samples.n_draws >= 100 else None,
        "n_gamma_draws": samples.n_gamma_draws,
        "n_draws": samples.n_draws,
        "lambda_modes": hist["n_modes"],
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    return 0


def _cmd_simulate(args) -> int:
    cfg_file = _load_config_file(args.config)
    out_dir = Path(_setting(args, cfg_file, "out", "simulate_out"))
    kind = _setting(args, cfg_file, "kind", "synthetic")
    nx, ny = _parse_grid_arg(_setting(args, cfg_file, "grid", "20x20"))
    seed = int(_setting(args, cfg_file, "seed", 0))
    prior_name = _setting(args, cfg_file, "prior", "nj").lower()
    magnitude = float(_setting(args, cfg_file, "magnitude", 2.0))
    tau2 = float(_setting(args, cfg_file, "tau2", 0.1))
    members = _setting(args, cfg_file, "members", None)
    gp_variance = float(_setting(args, cfg_file, "gp_variance", 0.5))

    _echo_config(
        out_dir,
        {
            "subcommand": "simulate",
            "kind": kind,
            "grid": f"{nx}x{ny}",
            "seed": seed,
            "prior": prior_name,
            "magnitude": magnitude,
            "tau2": tau2,
            "members": members,
            "gp_variance": gp_variance,
            "out": str(out_dir),
        },
    )

    grid = build_grid(nx, ny)
    rng = np.random.default_rng(seed)
    meta = {"seed": seed, "kind": kind}

    if kind == "ngp":
        field = simulate_ngp_field(grid, make_prior(prior_name), rng)
        write_grid_csv(out_dir / "ngp_field.csv", field.reshape(ny, nx), {**meta, "prior": prior_name})
    elif kind == "gp":
        kernel = build_tps_kernel(grid, variance=gp_variance)
        field = kernel.M @ rng.standard_normal(grid.n)
        write_grid_csv(out_dir / "gp_field.csv", field.reshape(ny, nx), {**meta, "gp_variance": gp_variance})
    elif kind == "synthetic":
        data = make_synthetic(
            grid, magnitude, tau2, rng,
            members=int(members) if members else None,
            gp_variance=gp_variance,
        )
        if data.z.ndim == 2:
            write_ensemble_csv(out_dir / "z.csv", data.z.reshape(-1, ny, nx), meta)
        else:
            write_grid_csv(out_dir / "z.csv", data.z.reshape(ny, nx), meta)
        write_grid_csv(out_dir / "gamma_true.csv", data.gamma.reshape(ny, nx), meta)
        write_grid_csv(out_dir / "y_true.csv", data.y.reshape(ny, nx), meta)
    else:
        raise IngestError(f"unknown simulate kind {kind!r}")
    return 0


def _cmd_study(args) -> int:
    cfg_file = _load_config_file(args.config)
    out_dir = Path(_setting(args, cfg_file, "out", "study_out"))
    seed = int(_setting(args, cfg_file, "seed", 20250))
    replicates = _setting(args, cfg_file, "replicates", None)
    if args.paper_scale:
        replicates = replicates or 100
    replicates = int(replicates or 10)
    methods = _setting(args, cfg_file, "methods", None)
    if isinstance(methods, str):
        methods = tuple(m.strip() for m in methods.split(",") if m.strip())
    magnitudes = _setting(args, cfg_file, "magnitudes", None)
    if isinstance(magnitudes, str):
        magnitudes = tuple(float(v) for v in magnitudes.split(","))
    noise_levels = _setting(args, cfg_file, "noise_levels", None)
    if isinstance(noise_levels, str):
        noise_levels = tuple(float(v) for v in noise_levels.split(","))
    nx, ny = _parse_grid_arg(_setting(args, cfg_file, "grid", "20x20"))

    design = StudyDesign(
        noise_levels=tuple(noise_levels) if noise_levels else StudyDesign.noise_levels,
        magnitudes=tuple(magnitudes) if magnitudes else StudyDesign.magnitudes,
        methods=tuple(methods) if methods else StudyDesign.methods,
        replicates=replicates,
        base_seed=seed,
        nx=nx,
        ny=ny,
        n_iter=int(_setting(args, cfg_file, "iters", 3000)),
        burn_in=int(_setting(args, cfg_file, "burnin", 1000)),
    )
    _echo_config(
        out_dir,
        {
            "subcommand": "study",
            "out": str(out_dir),
            "seed": seed,
            "replicates": design.replicates,
            "methods": list(design.methods),
            "magnitudes": list(design.magnitudes),
            "noise_levels": list(design.noise_levels),
            "grid": f"{nx}x{ny}",
            "iters": design.n_iter,
            "burnin": design.burn_in,
            "jobs": args.jobs,
        },
    )

    result = run_factorial(design, cache_dir=out_dir / "cache", n_jobs=args.jobs)

    metric_fields = ["method", "magnitude", "tau2", "replicate", "rel_l1",
                     "tau2_covered", "sigma2_covered", "error"]
    _write_rows_csv(
        out_dir / "results.csv",
        metric_fields,
        [
            {
                "method": r["method"],
                "magnitude": repr(r["magnitude"]),
                "tau2": repr(r["tau2"]),
                "replicate": r["replicate"],
                "rel_l1": _fmt(r["rel_l1"]),
                "tau2_covered": r["tau2_covered"],
                "sigma2_covered": r["sigma2_covered"],
                "error": r.get("error", ""),
            }
            for r in result.rows
        ],
    )
    _write_rows_csv(
        out_dir / "timings.csv",
        ["method", "magnitude", "tau2", "replicate", "wall_time"],
        [
            {
                "method": r["method"],
                "magnitude": repr(r["magnitude"]),
                "tau2": repr(r["tau2"]),
                "replicate": r["replicate"],
                "wall_time": repr(r["wall_time"]),
            }
            for r in result.rows
        ],
    )
    _write_rows_csv(
        out_dir / "aggregate.csv",
        ["method", "magnitude", "tau2", "n_replicates", "median_rel_l1",
         "tau2_coverage", "sigma2_coverage"],
        [
            {k: _fmt(v) for k, v in row.items()}
            for row in result.aggregate()
        ],
    )
    return 0


def _cmd_threshold(args) -> int:
    cfg_file = _load_config_file(args.config)
    out_dir = Path(_setting(args, cfg_file, "out", "threshold_out"))
    prior_name = _setting(args, cfg_file, "prior", "nj").lower()
    theta_max = float(_setting(args, cfg_file, "theta_max", 10.0))
    steps = int(_setting(args, cfg_file, "steps", 81))
    if steps % 2 == 0:
        steps += 1  # keep theta* = 0 on the grid

    _echo_config(
        out_dir,
        {
            "subcommand": "threshold",
            "prior": prior_name,
            "theta_max": theta_max,
            "steps": steps,
            "out": str(out_dir),
        },
    )
    if prior_name == "tps":
        raise IngestError("thresholding curves are defined for the scale-mixture priors")
    prior = make_prior(prior_name)
    thetas = np.linspace(-theta_max, theta_max, steps)
    curve = thresholding_curve(prior, thetas)
    with open(out_dir / "threshold_curve.csv", "w", newline="") as fh:
        fh.write(f"# prior: {prior_name}\n")
        writer = csv.writer(fh)
        writer.writerow(["theta_star", "posterior_mean", "shift"])
        for t, c in zip(thetas, curve):
            writer.writerow([repr(float(t)), repr(float(c)), repr(float(c - t))])
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridsmooth",
        description="Bayesian hybrid smoothing of gridded surfaces",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its keys")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)

    p_fit = sub.add_parser("fit", help="fit the hybrid model to a grid CSV")
    common(p_fit)
    p_fit.add_argument("input", help="grid CSV (row,col,value[,member])")
    p_fit.add_argument("--prior", choices=[*sorted({"lasso", "horseshoe", "cauchy", "pareto", "nj"}), "tps"])
    p_fit.add_argument("--iters", type=int)
    p_fit.add_argument("--burnin", type=int)
    p_fit.add_argument("--period", type=int, help="partial-update period")
    p_fit.add_argument("--ensemble", action="store_true", help="require an ensemble input")
    p_fit.set_defaults(func=_cmd_fit)

    p_sim = sub.add_parser("simulate", help="simulate rough/smooth/synthetic fields")
    common(p_sim)
    p_sim.add_argument("--kind", choices=["ngp", "gp", "synthetic"])
    p_sim.add_argument("--grid", help="grid size WxH, e.g. 20x20")
    p_sim.add_argument("--prior")
    p_sim.add_argument("--magnitude", type=float)
    p_sim.add_argument("--tau2", type=float)
    p_sim.add_argument("--members", type=int)
    p_sim.add_argument("--gp-variance", dest="gp_variance", type=float)
    p_sim.set_defaults(func=_cmd_simulate)

    p_study = sub.add_parser("study", help="run the factorial simulation study")
    common(p_study)
    p_study.add_argument("--replicates", type=int)
    p_study.add_argument("--methods", help="comma-separated subset of methods")
    p_study.add_argument("--magnitudes", help="comma-separated magnitudes")
    p_study.add_argument("--noise-levels", dest="noise_levels", help="comma-separated tau2 levels")
    p_study.add_argument("--grid", help="grid size WxH")
    p_study.add_argument("--iters", type=int)
    p_study.add_argument("--burnin", type=int)
    p_study.add_argument("--jobs", type=int, default=1, help="parallel cell workers")
    p_study.add_argument("--desk-scale", action="store_true",
                         help="desk-scale defaults (10 replicates; the default)")
    p_study.add_argument("--paper-scale", action="store_true",
                         help="paper-scale replicates (100)")
    p_study.set_defaults(func=_cmd_study)

    p_thr = sub.add_parser("threshold", help="export thresholding-effect curves")
    common(p_thr)
    p_thr.add_argument("--prior")
    p_thr.add_argument("--theta-max", dest="theta_max", type=float)
    p_thr.add_argument("--steps", type=int)
    p_thr.set_defaults(func=_cmd_threshold)
    return parser


def dispatch(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())
