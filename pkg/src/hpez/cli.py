"""Command-line frontend.

Subcommands: compress, decompress, evaluate, sweep, transfer-est.
Exit status 0 on success, 1 on I/O or format errors, 2 on usage errors
(argparse's convention).  An optional key=value config file supplies
tuning-knob defaults; explicit flags override it.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import HpezError
from .grid import BoundMode, ElementKind, ErrorBoundSpec, load_raw
from .interp import TRAVERSAL_DIM_MAJOR
from .metrics import (estimate_transfer, evaluate, sweep, sweep_csv)
from .pipeline import compress, decompress
from .tuner import QualityTarget, TunerOptions

_KNOB_PARSERS = {
    "sample_rate": float,
    "block_size": int,
    "anchor_stride": int,
    "radius": int,
    "lorenzo_coef": float,
    "kernel_set": str,
    "alpha_set": lambda s: tuple(float(x) for x in s.split(",")),
    "beta_set": lambda s: tuple(float(x) for x in s.split(",")),
}
_KNOB_TOGGLES = ("no_fvfi", "no_natural_spline", "no_mdinterp",
                 "no_same_level", "no_freeze", "no_lorenzo",
                 "no_blockwise", "no_eb_tuning")


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0: {text}")
    return v


def _read_config_file(path: str) -> dict:
    """key=value lines; blank lines and #-comments ignored."""
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise HpezError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, _, val = line.partition("=")
        key, val = key.strip().replace("-", "_"), val.strip()
        if key in _KNOB_PARSERS:
            try:
                out[key] = _KNOB_PARSERS[key](val)
            except ValueError as exc:
                raise HpezError(f"{path}:{ln}: bad value for {key}: {exc}")
        elif key in _KNOB_TOGGLES:
            if val.lower() not in ("true", "false"):
                raise HpezError(f"{path}:{ln}: {key} wants true/false")
            out[key] = val.lower() == "true"
        else:
            raise HpezError(f"{path}:{ln}: unknown config key {key!r}")
    return out


def _add_grid_args(p: argparse.ArgumentParser, multi_input: bool) -> None:
    if multi_input:
        p.add_argument("-i", "--input", required=True, nargs="+",
                       help="raw little-endian input file(s)")
    else:
        p.add_argument("-i", "--input", required=True,
                       help="raw little-endian input file")
    p.add_argument("-d", "--dims", required=True, type=int, nargs="+",
                   metavar="N", help="grid extents, slowest axis first")
    p.add_argument("-t", "--type", required=True,
                   choices=[k.value for k in ElementKind],
                   help="element kind")


def _add_bound_args(p: argparse.ArgumentParser, multi: bool) -> None:
    p.add_argument("-M", "--mode", default="REL", choices=["ABS", "REL"],
                   help="bound mode (default REL)")
    if multi:
        p.add_argument("-e", "--epsilon", required=True, nargs="+",
                       type=_positive_float, help="error bound(s)")
    else:
        p.add_argument("-e", "--epsilon", required=True,
                       type=_positive_float, help="error bound")


def _add_tuning_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE",
                   help="key=value config file for tuning knobs")
    p.add_argument("--target", default="ratio", choices=["ratio", "psnr"],
                   help="tuning objective (default ratio)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="rate weight for the psnr objective")
    p.add_argument("--sample-rate", type=float, help="tuning sample rate")
    p.add_argument("--block-size", type=int, help="block-wise tuning extent")
    p.add_argument("--anchor-stride", type=int, help="anchor lattice stride")
    p.add_argument("--radius", type=int, help="quantizer radius")
    p.add_argument("--lorenzo-coef", type=float,
                   help="bit-rate factor biasing against the Lorenzo pass")
    p.add_argument("--alpha-set", type=float, nargs="+", metavar="A",
                   help="level error-bound growth candidates")
    p.add_argument("--beta-set", type=float, nargs="+", metavar="B",
                   help="level error-bound cap candidates")
    p.add_argument("--kernel-set", choices=["linear", "cubic", "all"],
                   help="interpolation kernel families to try")
    p.add_argument("--no-fvfi", action="store_true",
                   help="traverse dimension-major instead of fast-varying-first")
    p.add_argument("--no-natural-spline", action="store_true",
                   help="drop natural-boundary cubic kernels")
    p.add_argument("--no-mdinterp", action="store_true",
                   help="drop multi-dimensional blended interpolation")
    p.add_argument("--no-same-level", action="store_true",
                   help="drop same-level second-pass kernels")
    p.add_argument("--no-freeze", action="store_true",
                   help="disable dimension freezing")
    p.add_argument("--no-lorenzo", action="store_true",
                   help="never fall back to the Lorenzo predictor")
    p.add_argument("--no-blockwise", action="store_true",
                   help="disable per-block interpolation tuning")
    p.add_argument("--no-eb-tuning", action="store_true",
                   help="keep per-level error bounds equal to the global one")


def _tuner_options(args) -> TunerOptions:
    cfg = _read_config_file(args.config) if args.config else {}
    kw = {}
    for key in _KNOB_PARSERS:
        flag = getattr(args, key, None)
        if flag is not None:
            kw[key] = tuple(flag) if isinstance(flag, list) else flag
        elif key in cfg:
            kw[key] = cfg[key]
    toggles = {t: getattr(args, t) or cfg.get(t, False)
               for t in _KNOB_TOGGLES}
    if toggles["no_fvfi"]:
        kw["traversal"] = TRAVERSAL_DIM_MAJOR
    kw["use_natural"] = not toggles["no_natural_spline"]
    kw["use_md"] = not toggles["no_mdinterp"]
    kw["use_same_level"] = not toggles["no_same_level"]
    kw["use_freeze"] = not toggles["no_freeze"]
    kw["use_lorenzo"] = not toggles["no_lorenzo"]
    kw["use_blockwise"] = not toggles["no_blockwise"]
    kw["use_eb"] = not toggles["no_eb_tuning"]
    return TunerOptions(**kw)


def _load_grid(path: str, dims, kind_name: str):
    kind = ElementKind(kind_name)
    return load_raw(Path(path).read_bytes(), tuple(dims), kind)


def _compress_one(in_path: str, out_path: str, dims, kind_name: str,
                  mode_name: str, epsilon: float, target_kind: str,
                  lam: float, options: TunerOptions) -> str:
    grid = _load_grid(in_path, dims, kind_name)
    bound = ErrorBoundSpec(BoundMode[mode_name], epsilon)
    res = compress(grid, bound, target=QualityTarget(target_kind, lam),
                   options=options)
    Path(out_path).write_bytes(res.archive)
    return (f"{out_path}: {len(res.archive)} bytes, "
            f"ratio {res.ratio:.2f}, {res.seconds:.2f} s")


def _cmd_compress(args) -> int:
    options = _tuner_options(args)
    inputs = args.input
    if len(inputs) == 1:
        out = args.output or inputs[0] + ".hpez"
        print(_compress_one(inputs[0], out, args.dims, args.type, args.mode,
                            args.epsilon, args.target, args.lam, options))
        return 0
    # Batch mode: one worker per grid, outputs in a directory.
    out_dir = Path(args.output or ".")
    if not out_dir.is_dir():
        raise HpezError(f"batch output {out_dir} is not a directory")
    jobs = [(p, str(out_dir / (Path(p).name + ".hpez")), args.dims,
             args.type, args.mode, args.epsilon, args.target, args.lam,
             options) for p in inputs]
    with ProcessPoolExecutor(max_workers=min(len(jobs), args.jobs)) as pool:
        for line in pool.map(_compress_one_star, jobs):
            print(line)
    return 0


def _compress_one_star(job):
    return _compress_one(*job)


def _cmd_decompress(args) -> int:
    grid = decompress(Path(args.input).read_bytes())
    Path(args.output).write_bytes(grid.to_bytes())
    print(f"{args.output}: dims {'x'.join(map(str, grid.dims))} "
          f"{grid.kind.value}")
    return 0


def _report_csv(rep) -> str:
    cols = ("cr", "bit_rate", "psnr", "ssim", "max_abs_error",
            "max_rel_error")
    vals = (rep.compression_ratio, rep.bit_rate, rep.psnr, rep.ssim,
            rep.max_abs_error, rep.max_rel_error)
    row = ",".join("" if v is None else f"{v:.6g}" for v in vals)
    return ",".join(cols) + "\n" + row + "\n"


def _write_text(args, text: str) -> None:
    if getattr(args, "output", None):
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_evaluate(args) -> int:
    grid = _load_grid(args.input, args.dims, args.type)
    archive = Path(args.archive).read_bytes()
    rep = evaluate(grid, archive, decompress(archive))
    _write_text(args, _report_csv(rep))
    return 0


def _cmd_sweep(args) -> int:
    grid = _load_grid(args.input, args.dims, args.type)
    rows = sweep(grid, args.epsilon,
                 QualityTarget(args.target, args.lam),
                 mode=BoundMode[args.mode], options=_tuner_options(args))
    _write_text(args, sweep_csv(rows))
    return 0


def _cmd_transfer_est(args) -> int:
    est = estimate_transfer(args.original_bytes, args.archive_bytes,
                            args.comp_seconds, args.decomp_seconds,
                            args.io_seconds, args.link_speed)
    _write_text(args, "total_seconds,baseline_seconds\n"
                f"{est.total_seconds:.6g},{est.baseline_seconds:.6g}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hpez",
        description="Error-bounded lossy compression for scientific grids.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress raw grid file(s)")
    _add_grid_args(p, multi_input=True)
    _add_bound_args(p, multi=False)
    _add_tuning_args(p)
    p.add_argument("-o", "--output",
                   help="archive path (batch: output directory)")
    p.add_argument("--jobs", type=int, default=4,
                   help="batch-mode worker count (default 4)")
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("decompress", help="restore a raw grid from an archive")
    p.add_argument("-i", "--input", required=True, help="archive path")
    p.add_argument("-o", "--output", required=True, help="raw output path")
    p.set_defaults(func=_cmd_decompress)

    p = sub.add_parser("evaluate",
                       help="quality report for an original/archive pair")
    _add_grid_args(p, multi_input=False)
    p.add_argument("-a", "--archive", required=True, help="archive path")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="rate-distortion sweep over bounds")
    _add_grid_args(p, multi_input=False)
    _add_bound_args(p, multi=True)
    _add_tuning_args(p)
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("transfer-est",
                       help="estimate compressed vs raw transfer time")
    p.add_argument("--original-bytes", required=True, type=float)
    p.add_argument("--archive-bytes", required=True, type=float)
    p.add_argument("--comp-seconds", type=float, default=0.0)
    p.add_argument("--decomp-seconds", type=float, default=0.0)
    p.add_argument("--io-seconds", type=float, default=0.0)
    p.add_argument("--link-speed", required=True, type=_positive_float,
                   help="bytes per second")
    p.add_argument("-o", "--output", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_transfer_est)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (HpezError, OSError, ValueError) as exc:
        print(f"hpez: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
