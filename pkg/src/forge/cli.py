"""``forge`` command line.

Exit codes: 0 success, 1 validation failure or runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .container import read_msd, write_msd
from .errors import ForgeError
from .presets import PAPER_SCALE_WARNING, get_preset


def _phantom(args) -> int:
    from .phantom import WeightedImage, synthesize_templates, synthetic_head

    if args.builtin:
        pd, t2w = synthetic_head(
            args.size or 256, seed=args.seed, te_ms=args.te or 100.0, tr_ms=args.tr or 6000.0
        )
    else:
        if not (args.pd and args.t2w):
            raise UsageError("phantom needs --pd and --t2w, or --builtin")
        # acquisition timing of external images is never guessed
        if args.te is None or args.tr is None:
            raise UsageError("--te and --tr are required with --t2w")
        pd = WeightedImage(read_msd(args.pd)[0].real.astype(np.float64), te_ms=1e-3, tr_ms=1e6)
        t2w = WeightedImage(read_msd(args.t2w)[0].real.astype(np.float64), te_ms=args.te, tr_ms=args.tr)
    tset = synthesize_templates(
        pd, t2w, size=args.size, intensity_scale=args.intensity_scale, provenance=str(args.pd or "builtin")
    )
    out = Path(args.out)
    meta = {"t1_fixed_ms": tset.t1_fixed_ms, "provenance": tset.provenance}
    write_msd(out / "m0.msd", tset.m0.data, "float32", "map", meta)
    write_msd(out / "t2.msd", tset.t2.data, "float32", "map", meta)
    print(f"wrote {out / 'm0.msd'} and {out / 't2.msd'} ({tset.shape[0]}x{tset.shape[1]})")
    return 0


def _fields(args) -> int:
    from .fields import MotionSpec, gen_velocity_field, random_b1
    from .randomize import RandomizationBounds, sample_config

    if args.which == "b1":
        data, spec = random_b1(args.rows, args.cols, args.seed)
        meta = {"seed": args.seed, "field": "b1", "spec": spec.to_dict()}
    else:
        d = sample_config(RandomizationBounds(), args.seed, 0)
        m = MotionSpec(
            d.v_ro if args.v_ro is None else args.v_ro,
            d.v_pe if args.v_pe is None else args.v_pe,
            d.omega if args.omega is None else args.omega,
        )
        v = gen_velocity_field(m, args.rows, args.cols, args.fov)
        data = np.stack([v.v_ro_field, v.v_pe_field])
        meta = {"seed": args.seed, "field": "velocity", "v_ro": m.v_ro, "v_pe": m.v_pe, "omega": m.omega}
    write_msd(args.out, data, "float32", "map", meta)
    print(f"wrote {args.out} {list(data.shape)} range [{data.min():.4g}, {data.max():.4g}]")
    return 0


def _program_from(args):
    from .sequence import build_se, build_se_moled

    if args.action == "build-se":
        return build_se(args.te, args.tr, matrix=args.matrix, fov_cm=args.fov, esp_ms=args.esp)
    return build_se_moled(matrix=args.matrix, fov_cm=args.fov, esp_ms=args.esp)


def _seq(args) -> int:
    from .sequence import validate_program

    prog = _program_from(args)
    rep = validate_program(prog)
    if args.dump:
        text = prog.dump()
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    print(f"{prog.meta['kind']}: {len(prog.events)} events, {prog.total_duration_ms:.3f} ms, "
          f"validation {'ok' if rep.ok else 'FAILED'}", file=sys.stderr)
    for v in rep.violations:
        print(f"  {v.code}: {v.message}", file=sys.stderr)
    return 0 if rep.ok else 1


def _simulate(args) -> int:
    from .bloch import reconstruct, simulate
    from .checks import uniform_templates
    from .fields import MotionSpec, NonIdealSet
    from .phantom import ParametricMap, ParametricTemplateSet, builtin_template_pool

    p = get_preset("paper" if args.paper_scale else "desk")
    if args.paper_scale:
        print(PAPER_SCALE_WARNING, file=sys.stderr)
    args.matrix = args.matrix or p.matrix
    args.esp = args.esp or p.esp_ms
    args.fov = p.fov_cm
    prog = _program_from(args)
    if args.templates:
        m0, hdr = read_msd(Path(args.templates) / "m0.msd")
        t2, _ = read_msd(Path(args.templates) / "t2.msd")
        tset = ParametricTemplateSet(
            ParametricMap("M0", m0.astype(np.float64)),
            ParametricMap("T2", t2.astype(np.float64)),
            t1_fixed_ms=float(hdr["meta"].get("t1_fixed_ms", 2000.0)),
        )
    elif args.uniform:
        tset = uniform_templates(p.spin_size)
    else:
        tset = builtin_template_pool(1, p.source_size, p.spin_size, seed=args.seed)[0]
    motion = MotionSpec(args.v_ro, args.v_pe, args.omega)
    ksp = simulate(prog, tset, NonIdealSet(motion=motion))
    meta = {"program": prog.meta["kind"], "v_ro": args.v_ro, "v_pe": args.v_pe, "omega": args.omega}
    out = Path(args.out)
    write_msd(out / "kspace.msd", ksp.data, "complex64", "kspace", meta)
    write_msd(out / "image.msd", reconstruct(ksp), "complex64", "image", meta)
    print(f"wrote {out / 'kspace.msd'} and {out / 'image.msd'} ({ksp.data.shape[0]}x{ksp.data.shape[1]})")
    return 0


def _gen_dataset(args) -> int:
    from .dataset import gen_dataset
    from .randomize import load_config

    config = load_config(args.config) if args.config else {}
    if args.paper_scale:
        config["preset"] = "paper"
    if config.get("preset") == "paper":
        print(PAPER_SCALE_WARNING, file=sys.stderr)
    out = args.out or f"dataset_{args.kind}_{args.seed}"
    manifest = gen_dataset(
        args.kind, config, args.count, args.seed, out, workers=args.workers,
        progress=(lambda i: print(f"sample {i} done", file=sys.stderr)) if args.verbose else None,
    )
    print(f"{len(manifest['samples'])} {args.kind} samples in {out}")
    return 0


def _validate(args) -> int:
    from .checks import run_suite

    return 0 if run_suite(args.suite) else 1


def _load(path):
    arr, _ = read_msd(path)
    return arr


def _roi(text: str):
    try:
        rows, cols = text.split(",")
        r0, r1 = (int(v) for v in rows.split(":"))
        c0, c1 = (int(v) for v in cols.split(":"))
    except ValueError:
        raise UsageError(f"ROI must look like r0:r1,c0:c1, got {text!r}") from None
    return (slice(r0, r1), slice(c0, c1))


def _metrics(args) -> int:
    from .metrics import metric_gsr, metric_linreg, metric_nrmse, write_metrics_csv
    from .mriops import coil_combine_rss

    rows = []
    if args.metric == "nrmse":
        rows.append({"pred": args.a, "ref": args.b, "nrmse_percent": metric_nrmse(_load(args.a), _load(args.b))})
    elif args.metric == "gsr":
        img = _load(args.a)
        mag = coil_combine_rss(img) if img.ndim == 3 else np.abs(img)
        ghost = _roi(args.ghost_roi) if args.ghost_roi else None
        rows.append({"image": args.a, "gsr": metric_gsr(mag, _roi(args.roi), ghost)})
    else:
        x, y = _load(args.a).real.ravel(), _load(args.b).real.ravel()
        if args.roi:
            sl = _roi(args.roi)
            x, y = _load(args.a).real[sl].ravel(), _load(args.b).real[sl].ravel()
        slope, intercept, r2 = metric_linreg(x, y)
        rows.append({"x": args.a, "y": args.b, "slope": slope, "intercept": intercept, "r2": r2})
    for r in rows:
        print("  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()))
    if args.csv:
        write_metrics_csv(args.csv, rows)
    return 0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="forge", description="Bloch-simulation training-data generator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("phantom", help="weighted images -> M0/T2 templates")
    s.add_argument("--pd", help="proton-density image (MSD)")
    s.add_argument("--t2w", help="T2-weighted image (MSD)")
    s.add_argument("--builtin", action="store_true", help="use the built-in digital head")
    s.add_argument("--te", type=float, help="TE of the T2-weighted image (ms)")
    s.add_argument("--tr", type=float, help="TR of the T2-weighted image (ms)")
    s.add_argument("--intensity-scale", type=float, default=1.0, help="multiply the T2w signal before inversion")
    s.add_argument("--size", type=int, default=None, help="output grid edge")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_phantom)

    s = sub.add_parser("fields", help="B1 or velocity field maps")
    s.add_argument("which", choices=("b1", "velocity"))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rows", type=int, default=128)
    s.add_argument("--cols", type=int, default=128)
    s.add_argument("--fov", type=float, default=22.0)
    s.add_argument("--v-ro", type=float, default=None)
    s.add_argument("--v-pe", type=float, default=None)
    s.add_argument("--omega", type=float, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_fields)

    s = sub.add_parser("seq", help="build and inspect sequence programs")
    s.add_argument("action", choices=("build-moled", "build-se"))
    s.add_argument("--matrix", type=int, default=128)
    s.add_argument("--fov", type=float, default=22.0)
    s.add_argument("--esp", type=float, default=0.465)
    s.add_argument("--te", type=float, default=50.0)
    s.add_argument("--tr", type=float, default=3000.0)
    s.add_argument("--dump", action="store_true", help="print the event list")
    s.add_argument("--out", help="write the dump here instead of stdout")
    s.set_defaults(func=_seq)

    s = sub.add_parser("simulate", help="simulate one acquisition")
    s.add_argument("action", nargs="?", default="build-moled", choices=("build-moled", "build-se"))
    s.add_argument("--templates", help="directory with m0.msd and t2.msd")
    s.add_argument("--uniform", action="store_true", help="uniform M0=1, T2=100 ms phantom")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--matrix", type=int, default=None)
    s.add_argument("--esp", type=float, default=None)
    s.add_argument("--te", type=float, default=50.0)
    s.add_argument("--tr", type=float, default=3000.0)
    s.add_argument("--v-ro", type=float, default=0.0)
    s.add_argument("--v-pe", type=float, default=0.0)
    s.add_argument("--omega", type=float, default=0.0)
    s.add_argument("--paper-scale", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_simulate)

    s = sub.add_parser("gen-dataset", help="generate a paired dataset")
    s.add_argument("kind", choices=("Dp", "Dm"))
    s.add_argument("--count", type=int, default=16)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", help="key = value configuration file")
    s.add_argument("--out", help="output directory")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--paper-scale", action="store_true")
    s.add_argument("--verbose", action="store_true")
    s.set_defaults(func=_gen_dataset)

    s = sub.add_parser("validate", help="run the invariant/oracle suite")
    s.add_argument("--suite", choices=("analytic", "full"), default="analytic")
    s.set_defaults(func=_validate)

    s = sub.add_parser("metrics", help="nRMSE, GSR or linear regression on MSD files")
    s.add_argument("metric", choices=("nrmse", "gsr", "linreg"))
    s.add_argument("a", help="prediction / image / x values")
    s.add_argument("b", nargs="?", help="reference / y values")
    s.add_argument("--roi", help="signal ROI r0:r1,c0:c1")
    s.add_argument("--ghost-roi", help="ghost ROI r0:r1,c0:c1 (default: signal ROI shifted FOV/2)")
    s.add_argument("--csv", help="write results as CSV")
    s.set_defaults(func=_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "metrics":
            if args.metric in ("nrmse", "linreg") and not args.b:
                raise UsageError(f"{args.metric} needs two files")
            if args.metric == "gsr" and not args.roi:
                raise UsageError("gsr needs --roi")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"forge: error: {exc}", file=sys.stderr)
        return 2
    except (ForgeError, ValueError, OSError) as exc:
        print(f"forge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
