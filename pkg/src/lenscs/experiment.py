"""Raster-scan vs compressive-speckle comparison sweep.

One *cell* is a (mode, ratio, trial) triple: build the kernels, partition
and window, acquire at the configured BSNR, pick rho by residual
whiteness, and score the estimate. A *sweep* runs every cell and writes
result tables; every random draw in a cell derives from a single 63-bit
trial seed, itself derived from the base seed and the cell identity.
"""
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import asdict, dataclass, field, fields
import logging
import math
import os
import re
import time

import numpy as np

from .forward import AcquisitionModel, acquire
from .grid import ImageGrid, centered_window, derive_seed, embed, make_partition, make_stream
from .io import load_grayscale, save_grayscale
from .metrics import realized_bsnr, snr, window_snr
from .optics import PupilModel, focused_psf, speckle_psf
from .phantom import make_phantom
from .tv import SolverConfig, select_rho

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = tuple(round(0.1 * k, 1) for k in range(1, 11))
DEFAULT_MODES = ("focused", "speckle1", "speckle2", "speckle4")

_MODE_RE = re.compile(r"^(focused|speckle)[-:_]?(?:p)?(\d*)$", re.IGNORECASE)


def parse_mode(mode):
    """``'focused'`` -> ``('focused', 1)``; ``'speckle4'`` -> ``('speckle', 4)``."""
    m = _MODE_RE.match(str(mode).strip())
    if not m:
        raise ValueError(f"unrecognized mode {mode!r}; use 'focused' or 'speckle<P>'")
    kind, p = m.group(1).lower(), m.group(2)
    P = int(p) if p else 1
    if P < 1:
        raise ValueError(f"mode {mode!r}: P must be >= 1")
    if kind == "focused" and P != 1:
        raise ValueError("focused mode uses a single pattern")
    return kind, P


def mode_name(kind, P):
    return "focused" if kind == "focused" else f"speckle{P}"


@dataclass
class ExperimentConfig:
    image: str | None = None  # grayscale file; None means synthetic phantom
    size: int = 128
    ratios: tuple = DEFAULT_RATIOS
    modes: tuple = DEFAULT_MODES
    bsnr: float = 40.0
    trials: int = 20
    seed: int = 2019
    phantom_seed: int = 0
    pupil_radius: float = 0.15
    redraw_speckles: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: str | None = None
    figure_ratio: float | None = 0.5
    jobs: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        self.ratios = tuple(float(r) for r in self.ratios)
        if not self.ratios or any(not 0 < r <= 1 for r in self.ratios):
            raise ValueError("ratios must lie in (0, 1]")
        self.modes = tuple(mode_name(*parse_mode(m)) for m in self.modes)
        if isinstance(self.solver, dict):
            self.solver = SolverConfig(**self.solver)

    def ground_truth(self):
        if self.image:
            x = load_grayscale(self.image)
            if x.shape != (self.size, self.size):
                logger.info("image %s is %s; grid taken from the image", self.image, x.shape)
            return x
        return make_phantom(ImageGrid.square(self.size), make_stream(self.phantom_seed))


def smoke_config(**overrides):
    """Small 64x64 configuration: 3 ratios, focused and 4-pattern speckle, 2 trials."""
    base = dict(size=64, ratios=(0.3, 0.6, 1.0), modes=("focused", "speckle4"), trials=2)
    base.update(overrides)
    return ExperimentConfig(**base)


@dataclass
class ResultRow:
    mode: str
    P: int
    requested_ratio: float
    achieved_ratio: float
    trial: int
    seed: int
    rho: float
    snr_full_db: float
    snr_window_db: float
    bsnr_db: float
    wall_time_s: float
    iterations: int


RESULT_COLUMNS = [f.name for f in fields(ResultRow)]
# wall time varies run to run; it goes to a separate table so results.csv
# stays byte-reproducible
TABLE_COLUMNS = [c for c in RESULT_COLUMNS if c != "wall_time_s"]


@dataclass
class CellOutput:
    row: ResultRow
    record: object = None
    estimate: np.ndarray = None


def trial_seed(base, mode, ratio, trial):
    return derive_seed(base, mode, float(ratio), int(trial))


def build_model(grid, mode, ratio, seed, pupil_radius=0.15, speckle_seed=None):
    """Acquisition model for one cell.

    ``speckle_seed`` (default ``seed``) drives the speckle phases so the
    patterns can be held fixed across trials.
    """
    kind, P = parse_mode(mode)
    pupil = PupilModel(grid, pupil_radius)
    if kind == "focused":
        kernels = [focused_psf(pupil)]
    else:
        base = seed if speckle_seed is None else speckle_seed
        kernels = []
        for i in range(P):
            s = derive_seed(base, "speckle", i)
            kernels.append(speckle_psf(pupil, make_stream(s), seed=s))
    part_seed = derive_seed(seed, "partition")
    partition = make_partition(grid.N, P, make_stream(part_seed), seed=part_seed)
    return AcquisitionModel(kernels, partition, centered_window(grid, ratio))


def run_cell(x, mode, ratio, bsnr, seed, solver=None, trial=0, pupil_radius=0.15,
             speckle_seed=None, keep_arrays=False):
    """Simulate and reconstruct one cell; returns a :class:`CellOutput`."""
    solver = SolverConfig() if solver is None else solver
    kind, P = parse_mode(mode)
    grid = ImageGrid.of(x)
    t0 = time.perf_counter()
    model = build_model(grid, mode, ratio, seed, pupil_radius, speckle_seed)
    noise_seed = derive_seed(seed, "noise")
    record = acquire(x, model, bsnr, make_stream(noise_seed), seed=noise_seed)
    sel = select_rho(record, solver)
    elapsed = time.perf_counter() - t0
    row = ResultRow(
        mode=mode_name(kind, P),
        P=P,
        requested_ratio=float(ratio),
        achieved_ratio=model.window.achieved_ratio,
        trial=int(trial),
        seed=int(seed),
        rho=float(sel.rho),
        snr_full_db=snr(sel.x, x),
        snr_window_db=window_snr(sel.x, x, model.window),
        bsnr_db=realized_bsnr(record),
        wall_time_s=elapsed,
        iterations=int(sel.iterations),
    )
    return CellOutput(row, record if keep_arrays else None, sel.x if keep_arrays else None)


@dataclass
class Failure:
    mode: str
    requested_ratio: float
    trial: int
    seed: int
    error: str


@dataclass
class SweepResult:
    rows: list
    failures: list
    aggregate: list
    elapsed_s: float = 0.0


def _cells(config):
    for mode in config.modes:
        for ratio in config.ratios:
            for trial in range(config.trials):
                yield mode, ratio, trial


def _speckle_seed(config, mode):
    if config.redraw_speckles or mode == "focused":
        return None
    return derive_seed(config.seed, "fixed-speckles", mode)


def _run_one(args):
    x, mode, ratio, trial, config, keep = args
    seed = trial_seed(config.seed, mode, ratio, trial)
    try:
        return run_cell(x, mode, ratio, config.bsnr, seed, config.solver, trial,
                        config.pupil_radius, _speckle_seed(config, mode), keep_arrays=keep)
    except Exception as exc:  # a failed cell must not abort the sweep
        logger.exception("cell %s ratio=%s trial=%d failed", mode, ratio, trial)
        return Failure(mode, float(ratio), trial, seed, f"{type(exc).__name__}: {exc}")


def _sort_key(row):
    kind, P = parse_mode(row.mode)
    return (kind != "focused", P, row.requested_ratio, row.trial)


def run_sweep(config, x=None, progress=None):
    """Run every cell of ``config``; write tables when ``config.out`` is set."""
    x = config.ground_truth() if x is None else x
    fig_ratio = None
    if config.figure_ratio is not None and config.out:
        fig_ratio = min(config.ratios, key=lambda r: abs(r - config.figure_ratio))
    jobs = [(x, mode, ratio, trial, config, trial == 0 and ratio == fig_ratio)
            for mode, ratio, trial in _cells(config)]

    t0 = time.perf_counter()
    outputs = []
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for i, out in enumerate(pool.map(_run_one, jobs)):
                outputs.append(out)
                if progress:
                    progress(i + 1, len(jobs), out)
    else:
        for i, job in enumerate(jobs):
            out = _run_one(job)
            outputs.append(out)
            if progress:
                progress(i + 1, len(jobs), out)
    elapsed = time.perf_counter() - t0

    rows = sorted((o.row for o in outputs if isinstance(o, CellOutput)), key=_sort_key)
    failures = [o for o in outputs if isinstance(o, Failure)]
    result = SweepResult(rows, failures, aggregate(rows), elapsed)
    if config.out:
        write_outputs(result, config, x, [o for o in outputs if isinstance(o, CellOutput) and o.record is not None])
    return result


def aggregate(rows):
    """Mean and sample standard deviation of the SNRs per (mode, ratio)."""
    groups = {}
    for r in rows:
        groups.setdefault((r.mode, r.P, r.requested_ratio), []).append(r)
    out = []
    for (mode, P, ratio), rs in sorted(groups.items(), key=lambda kv: (kv[0][0] != "focused", kv[0][1], kv[0][2])):
        full = np.array([r.snr_full_db for r in rs])
        win = np.array([r.snr_window_db for r in rs])
        out.append({
            "mode": mode,
            "P": P,
            "requested_ratio": ratio,
            "achieved_ratio": rs[0].achieved_ratio,
            "n": len(rs),
            "mean_snr_db": float(np.mean(full)),
            "std_snr_db": float(np.std(full, ddof=1)) if len(rs) > 1 else 0.0,
            "mean_window_snr_db": float(np.mean(win)),
            "std_window_snr_db": float(np.std(win, ddof=1)) if len(rs) > 1 else 0.0,
            "mean_bsnr_db": float(np.mean([r.bsnr_db for r in rs])),
            "mean_rho": float(np.mean([r.rho for r in rs])),
        })
    return out


# --------------------------------------------------------------------- tables

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path, columns, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in records:
            d = rec if isinstance(rec, dict) else asdict(rec)
            w.writerow([_fmt(d[c]) for c in columns])


def write_results(path, rows):
    write_table(path, TABLE_COLUMNS, rows)


def read_results(path):
    """Rows from a results table (``wall_time_s`` is NaN if absent)."""
    conv = {"P": int, "trial": int, "seed": int, "iterations": int, "mode": str}
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            kw = {}
            for name in RESULT_COLUMNS:
                if name not in rec:
                    kw[name] = math.nan
                else:
                    kw[name] = conv.get(name, float)(rec[name])
            rows.append(ResultRow(**kw))
    return rows


def plot_table(agg):
    """Wide table: one line per ratio, mean/std columns per mode."""
    modes = []
    for a in agg:
        if a["mode"] not in modes:
            modes.append(a["mode"])
    by_ratio = {}
    for a in agg:
        by_ratio.setdefault(a["requested_ratio"], {"ratio": a["requested_ratio"],
                                                   "achieved_ratio": a["achieved_ratio"]})
        by_ratio[a["requested_ratio"]][f"{a['mode']}_mean"] = a["mean_snr_db"]
        by_ratio[a["requested_ratio"]][f"{a['mode']}_std"] = a["std_snr_db"]
    columns = ["ratio", "achieved_ratio"] + [f"{m}_{s}" for m in modes for s in ("mean", "std")]
    table = [by_ratio[r] for r in sorted(by_ratio)]
    for t in table:
        for c in columns:
            t.setdefault(c, math.nan)
    return columns, table


AGGREGATE_COLUMNS = ["mode", "P", "requested_ratio", "achieved_ratio", "n", "mean_snr_db",
                     "std_snr_db", "mean_window_snr_db", "std_window_snr_db",
                     "mean_bsnr_db", "mean_rho"]


def write_outputs(result, config, x, figure_cells):
    out = config.out
    os.makedirs(out, exist_ok=True)
    write_results(os.path.join(out, "results.csv"), result.rows)
    write_table(os.path.join(out, "timings.csv"),
                ["mode", "P", "requested_ratio", "trial", "wall_time_s"], result.rows)
    write_table(os.path.join(out, "aggregate.csv"), AGGREGATE_COLUMNS, result.aggregate)
    cols, table = plot_table(result.aggregate)
    write_table(os.path.join(out, "plot.csv"), cols, table)
    write_table(os.path.join(out, "failures.csv"),
                ["mode", "requested_ratio", "trial", "seed", "error"], result.failures)
    if figure_cells:
        write_figure(os.path.join(out, "images"), x, figure_cells)


def write_figure(directory, x, cells):
    """Ground truth, per-mode observations and estimates, and a montage
    with observations (embedded in the field of view) above estimates."""
    os.makedirs(directory, exist_ok=True)
    save_grayscale(x, os.path.join(directory, "truth.pgm"), vmin=0.0, vmax=1.0)
    cells = sorted(cells, key=lambda c: _sort_key(c.row))
    top, bottom = [], []
    for c in cells:
        tag = f"{c.row.mode}_r{c.row.requested_ratio:g}"
        obs = c.record.window_image()
        save_grayscale(obs, os.path.join(directory, f"y_{tag}.pgm"))
        save_grayscale(c.estimate, os.path.join(directory, f"xhat_{tag}.pgm"), vmin=0.0, vmax=1.0)
        full = embed(c.record.y, c.record.model.window)
        lo, hi = c.record.y.min(), c.record.y.max()
        top.append(np.where(c.record.model.window.mask(), (full - lo) / max(hi - lo, 1e-300), 0.0))
        bottom.append(np.clip(c.estimate, 0.0, 1.0))
    gap = np.ones((x.shape[0], 2))
    row1 = np.hstack([p for img in top for p in (img, gap)][:-1])
    row2 = np.hstack([p for img in bottom for p in (img, gap)][:-1])
    montage = np.vstack([row1, np.ones((2, row1.shape[1])), row2])
    save_grayscale(montage, os.path.join(directory, "montage.pgm"), vmin=0.0, vmax=1.0)
