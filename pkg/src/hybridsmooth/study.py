"""Factorial simulation study: generate, fit, score, aggregate.

The design crosses noise level, rough-function magnitude and fitting
method (the five scale-mixture priors plus a smooth-only TPS baseline)
with independent replicates. Seeds derive deterministically from the
base seed and the cell coordinates, so any subset of cells reproduces
the same numbers as the full run; finished cells are cached as CSV
files keyed by cell, making long runs resumable. Replicate wall times
are kept out of the metric tables so reruns are byte-identical.
"""

import csv
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .grid import build_diff_matrix, build_grid
from .linalg import build_tps_kernel
from .model import default_anchor, default_design, orthogonalize
from .priors import make_prior
from .sampler import Samples, SamplerConfig, run_chain
from .synth import default_template, make_synthetic

METHODS = ("lasso", "horseshoe", "cauchy", "pareto", "nj", "tps")
# stable per-method seed keys (independent of design subsetting)
_METHOD_CODES = {name: k for k, name in enumerate(METHODS)}


class MetricError(ValueError):
    """A study metric is undefined for the given inputs."""


def relative_l1_success(gamma_hat: np.ndarray, gamma_true: np.ndarray) -> float:
    """1 - |gamma_hat - gamma_true|_1 / |gamma_true|_1."""
    gamma_hat = np.asarray(gamma_hat, dtype=np.float64)
    gamma_true = np.asarray(gamma_true, dtype=np.float64)
    denom = float(np.abs(gamma_true).sum())
    if denom == 0:
        raise MetricError("relative L1 success is undefined for a zero true field")
    return 1.0 - float(np.abs(gamma_hat - gamma_true).sum()) / denom


def coverage_check(draws: np.ndarray, truth: float, level: float = 0.95) -> bool:
    """True when truth lies inside the central credible interval."""
    draws = np.asarray(draws, dtype=np.float64)
    if draws.size < 100:
        raise MetricError("need at least 100 draws for a coverage check")
    half = 0.5 * (1.0 - level)
    lo, hi = np.quantile(draws, [half, 1.0 - half])
    return bool(lo <= truth <= hi)


def count_lambda_modes(neg_log10_lambda2: np.ndarray, separation: float = 1.0) -> int:
    """Count KDE modes of pooled -log10(lambda2), merging peaks closer than
    ``separation`` decades."""
    x = np.asarray(neg_log10_lambda2, dtype=np.float64)
    if x.size == 0:
        return 0
    if np.ptp(x) < 1e-9:
        return 1
    kde = stats.gaussian_kde(x, bw_method="silverman")
    grid_x = np.linspace(x.min() - 1.0, x.max() + 1.0, 512)
    dens = kde(grid_x)
    peaks = [
        k
        for k in range(1, len(grid_x) - 1)
        if dens[k] > dens[k - 1] and dens[k] >= dens[k + 1]
    ]
    floor = 0.02 * dens.max()
    peaks = [k for k in peaks if dens[k] > floor]
    modes = []
    for k in peaks:
        if not modes or grid_x[k] - modes[-1] >= separation:
            modes.append(grid_x[k])
    return len(modes)


def lambda_histogram_export(samples: Samples) -> dict:
    """Pooled post-burn-in scaling-parameter draws plus a bimodality count.

    Emits both -log10(lambda2) and 1/lambda2 columns. A smooth-only fit
    has no scaling parameters, so the table is empty.
    """
    if samples.lambda2 is None or samples.lambda2.size == 0:
        return {"neg_log10_lambda2": np.array([]), "inv_lambda2": np.array([]), "n_modes": 0}
    pooled = samples.lambda2.reshape(-1)
    neg_log10 = -np.log10(pooled)
    return {
        "neg_log10_lambda2": neg_log10,
        "inv_lambda2": 1.0 / pooled,
        "n_modes": count_lambda_modes(neg_log10),
    }


@dataclass(frozen=True)
class StudyDesign:
    noise_levels: tuple = (0.001, 0.01, 0.1)
    magnitudes: tuple = (0.5, 1.0, 2.0, 4.0)
    methods: tuple = METHODS
    replicates: int = 10
    base_seed: int = 20250
    nx: int = 20
    ny: int = 20
    n_iter: int = 3000
    burn_in: int = 1000
    partial_update_period: int = 3

    def __post_init__(self):
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    def cells(self):
        for method in self.methods:
            for magnitude in self.magnitudes:
                for tau2 in self.noise_levels:
                    yield method, float(magnitude), float(tau2)

    def seed_for(self, method: str, magnitude: float, tau2: float, replicate: int):
        """Deterministic seed sequence, invariant under design subsetting."""
        return np.random.SeedSequence(
            [
                self.base_seed,
                _METHOD_CODES[method],
                int(round(magnitude * 1000)),
                int(round(tau2 * 1_000_000)),
                replicate,
            ]
        )

    def data_seed_for(self, magnitude: float, tau2: float, replicate: int):
        """Synthetic data is shared across methods within a cell-replicate."""
        return np.random.SeedSequence(
            [
                self.base_seed,
                987654321,
                int(round(magnitude * 1000)),
                int(round(tau2 * 1_000_000)),
                replicate,
            ]
        )


@dataclass
class StudyResult:
    design: StudyDesign
    rows: list = field(default_factory=list)

    def cell_rows(self, method=None, magnitude=None, tau2=None):
        out = []
        for r in self.rows:
            if method is not None and r["method"] != method:
                continue
            if magnitude is not None and r["magnitude"] != magnitude:
                continue
            if tau2 is not None and r["tau2"] != tau2:
                continue
            out.append(r)
        return out

    def aggregate(self) -> list:
        """Per-cell medians and coverage rates (replicate-order invariant)."""
        agg = []
        for method, magnitude, tau2 in self.design.cells():
            rows = self.cell_rows(method, magnitude, tau2)
            if not rows:
                continue
            rel = [r["rel_l1"] for r in rows if r["rel_l1"] is not None]
            agg.append(
                {
                    "method": method,
                    "magnitude": magnitude,
                    "tau2": tau2,
                    "n_replicates": len(rows),
                    "median_rel_l1": float(np.median(rel)) if rel else None,
                    "tau2_coverage": float(np.mean([r["tau2_covered"] for r in rows])),
                    "sigma2_coverage": float(np.mean([r["sigma2_covered"] for r in rows])),
                }
            )
        return agg


_MATS_CACHE = {}


def _shared_matrices(nx: int, ny: int):
    key = (nx, ny)
    if key not in _MATS_CACHE:
        grid = build_grid(nx, ny)
        kernel = build_tps_kernel(grid, variance=1.0)
        mats = orthogonalize(default_design(grid), kernel)
        D = build_diff_matrix(grid, 1)
        anchor = default_anchor(grid)
        _MATS_CACHE[key] = (grid, mats, D, anchor)
    return _MATS_CACHE[key]


def fit_replicate(
    design: StudyDesign,
    method: str,
    magnitude: float,
    tau2: float,
    replicate: int,
    keep_samples: bool = False,
):
    """Generate one synthetic dataset, fit one method, score it."""
    grid, mats, D, anchor = _shared_matrices(design.nx, design.ny)
    data_rng = np.random.default_rng(design.data_seed_for(magnitude, tau2, replicate))
    data = make_synthetic(grid, magnitude, tau2, data_rng, template=default_template(grid.nx, grid.ny))

    fit_seed = design.seed_for(method, magnitude, tau2, replicate)
    cfg = SamplerConfig(
        n_iter=design.n_iter,
        burn_in=design.burn_in,
        partial_update_period=design.partial_update_period,
        seed=int(fit_seed.generate_state(1)[0]),
        store_fields=True,
    )
    prior = None if method == "tps" else make_prior(method)

    start = time.perf_counter()
    samples = run_chain(data.z, mats, D, anchor, prior, cfg)
    wall = time.perf_counter() - start

    rel = None
    if method != "tps":
        rel = relative_l1_success(samples.gamma_mean(), data.gamma)
    row = {
        "method": method,
        "magnitude": magnitude,
        "tau2": tau2,
        "replicate": replicate,
        "rel_l1": rel,
        "tau2_covered": coverage_check(samples.tau2, tau2),
        "sigma2_covered": coverage_check(samples.sigma2, 0.5),
        "wall_time": wall,
    }
    if keep_samples:
        return row, samples
    return row


def _run_cell(args):
    design, method, magnitude, tau2 = args
    rows = []
    for rep in range(design.replicates):
        try:
            rows.append(fit_replicate(design, method, magnitude, tau2, rep))
        except Exception as exc:  # failures recorded per cell, never fatal
            rows.append(
                {
                    "method": method,
                    "magnitude": magnitude,
                    "tau2": tau2,
                    "replicate": rep,
                    "rel_l1": None,
                    "tau2_covered": False,
                    "sigma2_covered": False,
                    "wall_time": 0.0,
                    "error": f"{type(exc).__name__}: {exc}",
                }
            )
    return rows


_CELL_FIELDS = [
    "method", "magnitude", "tau2", "replicate",
    "rel_l1", "tau2_covered", "sigma2_covered", "wall_time", "error",
]


def _cell_cache_path(cache_dir: Path, method, magnitude, tau2) -> Path:
    return cache_dir / f"cell_{method}_m{magnitude:g}_t{tau2:g}.csv"


def _write_cell(path: Path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CELL_FIELDS)
        writer.writeheader()
        for r in rows:
            out = dict(r)
            out.setdefault("error", "")
            if out["rel_l1"] is not None:
                out["rel_l1"] = repr(out["rel_l1"])
            else:
                out["rel_l1"] = ""
            out["wall_time"] = repr(out["wall_time"])
            writer.writerow(out)


def _read_cell(path: Path):
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "method": rec["method"],
                    "magnitude": float(rec["magnitude"]),
                    "tau2": float(rec["tau2"]),
                    "replicate": int(rec["replicate"]),
                    "rel_l1": float(rec["rel_l1"]) if rec["rel_l1"] else None,
                    "tau2_covered": rec["tau2_covered"] == "True",
                    "sigma2_covered": rec["sigma2_covered"] == "True",
                    "wall_time": float(rec["wall_time"]),
                    "error": rec.get("error", ""),
                }
            )
    return rows


def run_factorial(
    design: StudyDesign,
    cache_dir: str | Path | None = None,
    n_jobs: int = 1,
) -> StudyResult:
    """Run every cell x replicate of the design, reusing cached cells.

    Cells are independent jobs; with ``n_jobs > 1`` they run in a
    process pool. Results are merged in design order, so the output is
    identical however the work was scheduled.
    """
    cache = Path(cache_dir) if cache_dir is not None else None
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)

    pending = []
    done = {}
    for method, magnitude, tau2 in design.cells():
        key = (method, magnitude, tau2)
        if cache is not None:
            path = _cell_cache_path(cache, *key)
            if path.exists():
                rows = _read_cell(path)
                if len(rows) >= design.replicates:
                    done[key] = rows[: design.replicates]
                    continue
        pending.append(key)

    if pending:
        args = [(design, *key) for key in pending]
        if n_jobs > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                for key, rows in zip(pending, pool.map(_run_cell, args)):
                    done[key] = rows
        else:
            for key, arg in zip(pending, args):
                done[key] = _run_cell(arg)
        if cache is not None:
            for key in pending:
                _write_cell(_cell_cache_path(cache, *key), done[key])

    result = StudyResult(design=design)
    for key in design.cells():
        result.rows.extend(done[key])
    return result
