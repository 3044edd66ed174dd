"""Command-line entry point: ``lenscs {phantom,acquire,reconstruct,sweep,report}``."""
import argparse
import dataclasses
import logging
import math
import os
import sys

import numpy as np
import yaml

from .experiment import (AGGREGATE_COLUMNS, ExperimentConfig, aggregate, build_model,
                         parse_mode, plot_table, read_results, run_sweep, smoke_config,
                         write_table)
from .forward import acquire, load_record, save_record
from .grid import ImageGrid, derive_seed, make_stream
from .io import load_grayscale, save_grayscale
from .metrics import realized_bsnr, snr, window_snr
from .phantom import make_phantom
from .tv import SolverConfig, admm_reconstruct, select_rho

log = logging.getLogger("lenscs")


def _floats(text):
    return tuple(float(t) for t in text.replace(",", " ").split())


def _modes(text):
    return tuple(t for t in text.replace(",", " ").split())


def load_config(path):
    """Read a YAML experiment config into an :class:`ExperimentConfig`."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    solver = data.pop("solver", None) or {}
    sknown = {f.name for f in dataclasses.fields(SolverConfig)}
    if set(solver) - sknown:
        raise ValueError(f"unknown solver keys: {sorted(set(solver) - sknown)}")
    return ExperimentConfig(solver=SolverConfig(**solver), **data)


def _ground_truth(args):
    if args.image and args.image != "phantom":
        return load_grayscale(args.image)
    return make_phantom(ImageGrid.square(args.size), make_stream(args.phantom_seed))


def cmd_phantom(args):
    x = make_phantom(ImageGrid.square(args.size), make_stream(args.seed))
    save_grayscale(x, args.out, vmin=0.0, vmax=1.0, bits=16)
    if args.npy:
        np.save(args.npy, x)
    print(f"wrote {args.out} ({args.size}x{args.size}, seed {args.seed})")


def cmd_acquire(args):
    x = _ground_truth(args)
    grid = ImageGrid.of(x)
    model = build_model(grid, args.mode, args.ratio, args.seed, args.pupil_radius)
    noise_seed = derive_seed(args.seed, "noise")
    bsnr = math.inf if args.bsnr in ("inf", "none") else float(args.bsnr)
    record = acquire(x, model, bsnr, make_stream(noise_seed), seed=noise_seed)
    save_record(record, args.out)
    if args.observations:
        save_grayscale(record.window_image(), args.observations)
    print(f"wrote {args.out}: M={model.M} (M/N={model.window.achieved_ratio:.4f}), "
          f"realized BSNR {realized_bsnr(record):.2f} dB")


def cmd_reconstruct(args):
    record = load_record(args.record)
    cfg = load_config(args.config).solver if args.config else SolverConfig()
    if args.diagnostics:
        cfg = dataclasses.replace(cfg, diagnostics_path=args.diagnostics)
    if args.rho is not None:
        x, state = admm_reconstruct(record, args.rho, cfg)
        rho = args.rho
    else:
        sel = select_rho(record, cfg)
        x, rho = sel.x, sel.rho
    save_grayscale(x, args.out, vmin=0.0, vmax=args.vmax, bits=16)
    if args.npy:
        np.save(args.npy, x)
    msg = f"rho={rho:.6g}"
    if args.truth:
        truth = load_grayscale(args.truth) if not args.truth.endswith(".npy") else np.load(args.truth)
        msg += (f"  SNR={snr(x, truth):.2f} dB  window SNR="
                f"{window_snr(x, truth, record.model.window):.2f} dB")
    print(msg)


def _sweep_config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = smoke_config() if args.smoke else ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    if args.ratios is not None:
        over["ratios"] = _floats(args.ratios)
    if args.bsnr is not None:
        over["bsnr"] = args.bsnr
    if args.modes is not None:
        over["modes"] = _modes(args.modes)
    if args.out is not None:
        over["out"] = args.out
    if args.size is not None:
        over["size"] = args.size
    if args.image is not None:
        over["image"] = args.image
    if args.jobs is not None:
        over["jobs"] = args.jobs
    return dataclasses.replace(cfg, **over)


def cmd_sweep(args):
    cfg = _sweep_config(args)
    if not cfg.out:
        cfg = dataclasses.replace(cfg, out="sweep-out")

    def progress(done, total, out):
        row = getattr(out, "row", None)
        if row is not None:
            log.info("[%d/%d] %s ratio=%.2f trial=%d SNR=%.2f dB (%.1fs)", done, total,
                     row.mode, row.requested_ratio, row.trial, row.snr_full_db, row.wall_time_s)
        else:
            log.warning("[%d/%d] failed: %s", done, total, out)

    result = run_sweep(cfg, progress=progress)
    _print_plot(result.aggregate)
    print(f"{len(result.rows)} rows, {len(result.failures)} failures, "
          f"{result.elapsed_s:.1f}s; tables in {cfg.out}")
    return 1 if result.failures else 0


def _print_plot(agg):
    cols, table = plot_table(agg)
    print("  ".join(f"{c:>14s}" for c in cols))
    for t in table:
        print("  ".join(f"{t[c]:14.4f}" for c in cols))


def cmd_report(args):
    path = args.results
    if os.path.isdir(path):
        path = os.path.join(path, "results.csv")
    rows = read_results(path)
    agg = aggregate(rows)
    _print_plot(agg)
    if args.out:
        write_table(args.out, AGGREGATE_COLUMNS, agg)
    if args.plot:
        cols, table = plot_table(agg)
        write_table(args.plot, cols, table)


def build_parser():
    p = argparse.ArgumentParser(prog="lenscs", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phantom", help="write the synthetic ground-truth image")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="phantom.pgm")
    s.add_argument("--npy", help="also save the float image as .npy")
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("acquire", help="simulate one acquisition and save the record")
    s.add_argument("--image", help="grayscale image file (default: phantom)")
    s.add_argument("--size", type=int, default=128)
    s.add_argument("--phantom-seed", type=int, default=0)
    s.add_argument("--mode", default="speckle1", type=lambda m: (parse_mode(m), m)[1])
    s.add_argument("--ratio", type=float, default=1.0)
    s.add_argument("--bsnr", default="40")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pupil-radius", type=float, default=0.15)
    s.add_argument("--out", default="record.npz")
    s.add_argument("--observations", help="also save y on the window as an image")
    s.set_defaults(func=cmd_acquire)

    s = sub.add_parser("reconstruct", help="reconstruct an image from a saved record")
    s.add_argument("record")
    s.add_argument("--rho", type=float, help="fixed weight (default: whiteness selection)")
    s.add_argument("--config", help="YAML config; only its solver section is used")
    s.add_argument("--truth", help="ground truth image or .npy for SNR")
    s.add_argument("--out", default="estimate.pgm")
    s.add_argument("--npy")
    s.add_argument("--vmax", type=float, default=1.0)
    s.add_argument("--diagnostics", help="append per-iteration ADMM diagnostics (CSV)")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("sweep", help="run the ratio x mode x trial experiment")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    s.add_argument("--ratios", help="e.g. '0.1,0.5,1.0'")
    s.add_argument("--bsnr", type=float)
    s.add_argument("--modes", help="e.g. 'focused,speckle1,speckle4'")
    s.add_argument("--out")
    s.add_argument("--size", type=int)
    s.add_argument("--image")
    s.add_argument("--jobs", type=int)
    s.add_argument("--smoke", action="store_true",
                   help="start from the small 64x64 configuration instead of the full one")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("report", help="aggregate a results table")
    s.add_argument("results", help="results.csv or a sweep output directory")
    s.add_argument("--out", help="write the aggregate table here")
    s.add_argument("--plot", help="write the wide plot-ready table here")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
