"""Experiment harness: seeded sweeps, aggregation, scaling-law fits.

A grid enumerates cells over (p, n, sigma, gamma) x estimator; each cell
runs ``trials_per_cell`` independent instances whose seeds derive from
(base_seed, cell coordinates, trial), so any cell can be recomputed in
isolation and reruns are byte-identical.  Cell results are cached as JSON
keyed by a config hash; completed cells are skipped on resume.  Aggregation
produces ``results.csv``, ``summary.json`` and an SVG error chart.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .constrained import ConstrainedConfig, EtaRule, solve_constrained
from .model import MixedDataset, RegressorPair, rho_metric
from .regularized import RegularizedConfig, solve_regularized
from .rng import derive_seed
from .spectral import recover_betas
from .synth import AdversarialNoise, NoNoise, StochasticNoise, gen_mixed, random_pair

__all__ = [
    "ExperimentGrid",
    "TrialRecord",
    "CellResult",
    "run_trial",
    "run_grid",
    "fit_scaling_slope",
    "SlopeFit",
    "write_svg_line_chart",
]

ESTIMATORS = ("constrained", "regularized", "em", "lad", "oracle")

RESULT_COLUMNS = (
    "p,n,sigma,gamma,estimator,noise_model,trial,rho,err1,err2,iters,wall_time,status"
)


@dataclass(frozen=True)
class ExperimentGrid:
    """Sweep specification.

    ``noise_model`` is 'gaussian' (stochastic, deviation sigma),
    'adversarial' (aligned-cancel with budget sigma * sqrt(n)), or 'none'
    (sigma ignored).  ``truth`` picks the per-trial ground truth family:
    'random' (alpha >= 0.5) or 'antipodal' (beta2 = -beta1, the hardest
    case).  ``options`` tunes estimators, e.g. {"c4": 1.0, "c5": 2.0,
    "log_exponent": 0.0}.
    """

    p_list: tuple
    n_list: tuple
    sigma_list: tuple
    gamma_list: tuple
    estimators: tuple
    noise_model: str = "gaussian"
    trials_per_cell: int = 1
    base_seed: int = 0
    output_dir: str = "experiment-out"
    truth: str = "random"
    labels: str = "bernoulli"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("p_list", "n_list", "sigma_list", "gamma_list", "estimators"):
            vals = tuple(getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise ValueError(f"{name} must be nonempty")
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be >= 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ValueError(f"unknown estimators {sorted(bad)}")
        if self.noise_model not in ("gaussian", "adversarial", "none"):
            raise ValueError(f"unknown noise model {self.noise_model!r}")
        if self.truth not in ("random", "antipodal"):
            raise ValueError(f"unknown truth family {self.truth!r}")

    def to_dict(self) -> dict:
        return {
            "p_list": list(self.p_list),
            "n_list": list(self.n_list),
            "sigma_list": [float(s) for s in self.sigma_list],
            "gamma_list": [float(g) for g in self.gamma_list],
            "estimators": list(self.estimators),
            "noise_model": self.noise_model,
            "trials_per_cell": self.trials_per_cell,
            "base_seed": self.base_seed,
            "truth": self.truth,
            "labels": self.labels,
            "options": self.options,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def cells(self):
        for p in self.p_list:
            for n in self.n_list:
                for sigma in self.sigma_list:
                    for gamma in self.gamma_list:
                        for est in self.estimators:
                            yield {
                                "p": int(p),
                                "n": int(n),
                                "sigma": float(sigma),
                                "gamma": float(gamma),
                                "estimator": est,
                                "noise_model": self.noise_model,
                            }


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    rho: float
    err1: float
    err2: float
    iters: int
    wall_time: float
    status: str


@dataclass(frozen=True)
class CellResult:
    cell: dict
    trials: tuple

    @property
    def rhos(self) -> np.ndarray:
        return np.array([t.rho for t in self.trials if t.status == "ok"])

    @property
    def median_rho(self) -> float:
        ok = self.rhos
        return float(np.median(ok)) if ok.size else math.nan

    @property
    def iqr_rho(self) -> float:
        ok = self.rhos
        if not ok.size:
            return math.nan
        q1, q3 = np.percentile(ok, [25, 75])
        return float(q3 - q1)

    @property
    def failures(self) -> int:
        return sum(1 for t in self.trials if t.status != "ok")


def _make_truth(grid: ExperimentGrid, cell: dict, seed: int) -> RegressorPair:
    if grid.truth == "antipodal":
        return random_pair(cell["p"], seed, gamma=cell["gamma"], antipodal=True)
    return random_pair(cell["p"], seed, gamma=cell["gamma"], min_alpha=0.5)


def _make_noise(grid: ExperimentGrid, cell: dict):
    if grid.noise_model == "none" or cell["sigma"] == 0.0:
        return NoNoise()
    if grid.noise_model == "adversarial":
        return AdversarialNoise(cell["sigma"] * math.sqrt(cell["n"]))
    return StochasticNoise(cell["sigma"])


def run_trial(grid: ExperimentGrid, cell: dict, trial: int) -> TrialRecord:
    """One seeded instance: generate, estimate, score against the truth."""
    seed = derive_seed(
        grid.base_seed,
        cell["p"], cell["n"], repr(cell["sigma"]), repr(cell["gamma"]),
        cell["estimator"], cell["noise_model"], grid.truth, trial,
    )
    pair = _make_truth(grid, cell, seed)
    labels = grid.labels if grid.labels == "bernoulli" else tuple(grid.labels)
    data = gen_mixed(pair, cell["n"], labels=labels, noise=_make_noise(grid, cell), seed=seed)
    opts = grid.options
    t0 = time.perf_counter()
    try:
        est_name = cell["estimator"]
        iters = 0
        if est_name == "oracle":
            fitted = baselines.fit_oracle(data)
        elif est_name == "lad":
            b = baselines.fit_blind_lad(data)
            fitted = RegressorPair(b, b)
        elif est_name == "em":
            cfg = baselines.EmConfig(
                init=opts.get("em_init", "random"),
                seed=seed,
                sigma2=max(cell["sigma"] ** 2, 1e-12),
                variance_mode=opts.get("em_variance_mode", "known"),
                max_rounds=int(opts.get("em_max_rounds", 200)),
            )
            out = baselines.fit_em(data, cfg)
            fitted, iters = out.pair, out.rounds
        elif est_name == "constrained":
            e_norm = float(np.linalg.norm(data.e)) if data.e is not None else 0.0
            eta = float(opts.get("c4", 1.0)) * math.sqrt(cell["n"]) * e_norm \
                * float(np.linalg.norm(pair.separation))
            cfg = ConstrainedConfig(
                eta=eta,
                max_iter=int(opts.get("constrained_max_iter", 2000)),
                tol_primal=float(opts.get("tol_primal", 1e-6)),
                tol_dual=float(opts.get("tol_dual", 1e-6)),
            )
            est, report = solve_constrained(data, cfg)
            fitted, iters = recover_betas(est), report.iterations
        elif est_name == "regularized":
            sigma = cell["sigma"]
            lam_scale = sigma if sigma > 0 else 1e-4 * max(cell["gamma"], 1.0)
            lam = float(opts.get("c5", 2.0)) * lam_scale * (pair.gamma + sigma) \
                * math.sqrt(cell["n"] * cell["p"]) \
                * math.log(cell["n"]) ** float(opts.get("log_exponent", 0.0))
            cfg = RegularizedConfig(
                lam=lam,
                sigma2=sigma**2,
                max_iter=int(opts.get("regularized_max_iter", 4000)),
                tol_rel_obj=float(opts.get("tol_rel_obj", 1e-9)),
            )
            est, report = solve_regularized(data, cfg)
            fitted, iters = recover_betas(est), report.iterations
        else:
            raise ValueError(f"unknown estimator {est_name!r}")
        wall = time.perf_counter() - t0
        bd = rho_metric(fitted, pair)
        return TrialRecord(trial, bd.rho, bd.per_beta[0], bd.per_beta[1],
                           iters, wall, "ok")
    except Exception as exc:  # recorded, not fatal
        wall = time.perf_counter() - t0
        return TrialRecord(trial, math.nan, math.nan, math.nan, 0, wall,
                           f"error:{type(exc).__name__}")


def _cell_key(cell: dict) -> str:
    blob = json.dumps(cell, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def run_grid(grid: ExperimentGrid, threads: int = 1, progress=None) -> list[CellResult]:
    """Execute (or resume) a grid and write results.csv / summary.json.

    Cells whose cached file carries the current config hash are reused
    verbatim, so an interrupted run resumes without recomputation and a
    completed rerun reproduces its outputs byte for byte.
    """
    out = Path(grid.output_dir)
    cell_dir = out / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    chash = grid.config_hash()
    results: list[CellResult] = []
    for cell in grid.cells():
        path = cell_dir / f"{_cell_key(cell)}.json"
        cached = None
        if path.exists():
            doc = json.loads(path.read_text())
            if doc.get("config_hash") == chash:
                cached = CellResult(
                    cell=doc["cell"],
                    trials=tuple(TrialRecord(**t) for t in doc["trials"]),
                )
        if cached is not None:
            results.append(cached)
            continue
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                trials = list(pool.map(lambda t: run_trial(grid, cell, t),
                                       range(grid.trials_per_cell)))
        else:
            trials = [run_trial(grid, cell, t) for t in range(grid.trials_per_cell)]
        res = CellResult(cell=cell, trials=tuple(trials))
        doc = {"config_hash": chash, "cell": cell,
               "trials": [t.__dict__ for t in trials]}
        _atomic_write(path, json.dumps(doc, indent=1, sort_keys=True) + "\n")
        results.append(res)
        if progress is not None:
            progress(res)
    _write_outputs(grid, results, out)
    return results


def _write_outputs(grid: ExperimentGrid, results: list[CellResult], out: Path) -> None:
    lines = [RESULT_COLUMNS]
    for res in results:
        c = res.cell
        for t in res.trials:
            lines.append(
                f"{c['p']},{c['n']},{c['sigma']:.17g},{c['gamma']:.17g},"
                f"{c['estimator']},{c['noise_model']},{t.trial},"
                f"{t.rho:.17g},{t.err1:.17g},{t.err2:.17g},"
                f"{t.iters},{t.wall_time:.17g},{t.status}"
            )
    _atomic_write(out / "results.csv", "\n".join(lines) + "\n")

    summary = {
        "config": grid.to_dict(),
        "config_hash": grid.config_hash(),
        "cells": [
            {
                **res.cell,
                "median_rho": res.median_rho,
                "iqr_rho": res.iqr_rho,
                "failures": res.failures,
                "trials": len(res.trials),
            }
            for res in results
        ],
        "slopes": _summary_slopes(grid, results),
    }
    _atomic_write(out / "summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    _write_chart(grid, results, out)


def _summary_slopes(grid: ExperimentGrid, results: list[CellResult]) -> dict:
    slopes: dict = {}
    sweep_sigma = len(grid.sigma_list) >= 3 and len(grid.gamma_list) == 1 \
        and len(grid.p_list) == 1 and len(grid.n_list) == 1
    sweep_n = len(grid.n_list) >= 3 and len(grid.sigma_list) == 1 \
        and len(grid.p_list) == 1 and len(grid.gamma_list) == 1
    for est in grid.estimators:
        cells = [r for r in results if r.cell["estimator"] == est]
        entry = {}
        if sweep_sigma:
            gamma = float(grid.gamma_list[0])
            p, n = int(grid.p_list[0]), int(grid.n_list[0])
            cut = gamma * (n / p) ** 0.25
            windows = {
                "sigma_high_snr": lambda c: c["sigma"] <= gamma,
                "sigma_medium_snr": lambda c: gamma < c["sigma"] <= cut,
                "sigma_low_snr": lambda c: c["sigma"] > cut,
            }
            for name, pred in windows.items():
                try:
                    fit = fit_scaling_slope(cells, "sigma", window=pred, min_cells=2)
                    entry[name] = {"slope": fit.slope, "stderr": fit.stderr,
                                   "cells": fit.cells}
                except ValueError:
                    pass
        if sweep_n:
            try:
                fit = fit_scaling_slope(cells, "n")
                entry["n"] = {"slope": fit.slope, "stderr": fit.stderr,
                              "cells": fit.cells}
            except ValueError:
                pass
        if entry:
            slopes[est] = entry
    return slopes


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    cells: int


def fit_scaling_slope(
    cells: list[CellResult],
    axis: str,
    window=None,
    min_cells: int = 3,
) -> SlopeFit:
    """OLS slope of log(median rho) against log(axis value).

    ``axis`` is 'n', 'sigma' or 'e_norm' (adversarial budget sigma*sqrt(n));
    ``window`` filters cells by their coordinate dict.  Needs ``min_cells``
    usable cells (default 3) at two or more distinct axis values; the
    standard error is NaN for two-point fits.
    """
    if axis not in ("n", "sigma", "e_norm"):
        raise ValueError(f"unknown axis {axis!r}")
    xs, ys = [], []
    for res in cells:
        if window is not None and not window(res.cell):
            continue
        if axis == "e_norm":
            val = res.cell["sigma"] * math.sqrt(res.cell["n"])
        else:
            val = res.cell[axis]
        med = res.median_rho
        if not (math.isfinite(med) and med > 0 and val > 0):
            continue
        xs.append(math.log(val))
        ys.append(math.log(med))
    if len(xs) < max(min_cells, 2) or len(set(xs)) < 2:
        raise ValueError(
            f"degenerate window: {len(xs)} usable cells, "
            f"{len(set(xs))} distinct axis values"
        )
    x = np.array(xs)
    y = np.array(ys)
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    if len(xs) > 2:
        resid = y - (y.mean() + slope * xc)
        s2 = float(resid @ resid) / (len(xs) - 2)
        stderr = math.sqrt(s2 / float(xc @ xc))
    else:
        stderr = math.nan
    return SlopeFit(slope, stderr, len(xs))


# ---------------------------------------------------------------------------
# minimal SVG output for the phase diagram
# ---------------------------------------------------------------------------

def write_svg_line_chart(
    path: str | Path,
    series: dict,
    xlabel: str = "x",
    ylabel: str = "y",
    title: str = "",
    log_x: bool = True,
    log_y: bool = True,
    width: int = 640,
    height: int = 420,
) -> None:
    """Write a log-log polyline chart; ``series`` maps label -> (xs, ys)."""
    pad = 56
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

    def tfm(vals, log):
        vals = np.asarray(vals, dtype=float)
        return np.log10(vals) if log else vals

    all_x = np.concatenate([tfm(xs, log_x) for xs, _ in series.values()])
    all_y = np.concatenate([tfm(ys, log_y) for _, ys in series.values()])
    all_y = all_y[np.isfinite(all_y)]
    if all_y.size == 0:
        all_y = np.array([0.0, 1.0])
    x0, x1 = float(all_x.min()), float(all_x.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="13">{xlabel}</text>',
        f'<text x="16" y="{height / 2:.0f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 16 {height / 2:.0f})">{ylabel}</text>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" font-size="15">{title}</text>'
        )
    for k, (label, (xs, ys)) in enumerate(series.items()):
        tx, ty = tfm(xs, log_x), tfm(ys, log_y)
        keep = np.isfinite(tx) & np.isfinite(ty)
        pts = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in zip(tx[keep], ty[keep]))
        color = colors[k % len(colors)]
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
        parts.append(
            f'<text x="{width - pad + 4}" y="{pad + 16 * k}" font-size="12" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _write_chart(grid: ExperimentGrid, results: list[CellResult], out: Path) -> None:
    if len(grid.sigma_list) < 2:
        return
    series = {}
    for est in grid.estimators:
        pts = sorted(
            (r.cell["sigma"], r.median_rho)
            for r in results
            if r.cell["estimator"] == est and math.isfinite(r.median_rho)
        )
        if len(pts) >= 2:
            series[est] = ([a for a, _ in pts], [b for _, b in pts])
    if series:
        write_svg_line_chart(
            out / "phase_diagram.svg", series,
            xlabel="sigma", ylabel="median rho", title="error vs noise level",
        )
