"""Command line interface: release, query, exact, bench, heatmap."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .baselines import BernsteinRelease, bernstein_estimate_many, bernstein_release, noisy_sample_release
from .container import ContainerError, load_release, save_release
from .core import DataError, KernelKind, KernelSpec, as_point, exact_kde_many, load_csv, scale_to_unit_bandwidth, write_csv
from .fgt import fgt_family_from_data
from .lsh import LshFamily
from .mechanism import MechanismConfig, PrivacyError, curator_release
from .rff import rff_family
from .rng import Purpose, stream
from .bench.adapters import MECHANISMS, estimate_raw, release_dim
from .bench.config import EXPERIMENTS, ConfigError, load_config, run_bench, write_bench
from .bench.heatmap import emit_heatmap, parse_bbox, parse_grid, write_heatmap

log = logging.getLogger("lsqdp")

_DEFAULT_KERNEL = {"lsh": KernelKind.LAPLACIAN}
_KERNEL_CHOICES = [k.value for k in KernelKind]


def _kernel(args, mechanism=None) -> KernelSpec:
    kind = KernelKind(args.kernel) if args.kernel else _DEFAULT_KERNEL.get(mechanism, KernelKind.GAUSSIAN)
    return KernelSpec(kind, args.bandwidth, args.normalized)


def _require(args, name, flag):
    value = getattr(args, name)
    if value is None:
        raise SystemExit(f"error: --mechanism {args.mechanism} needs {flag}")
    return value


def _fgt_center(text, d, bandwidth):
    if text in (None, "centroid"):
        return "centroid"
    if text == "origin":
        return None
    return as_point([float(v) for v in text.split(",")], d) / bandwidth


def cmd_release(args) -> None:
    kernel = _kernel(args, args.mechanism)
    raw = load_csv(args.input, args.has_header, bandwidth=args.bandwidth)
    mech = args.mechanism
    if mech in ("rff", "fgt", "lsh"):
        unit = scale_to_unit_bandwidth(raw, kernel)
        if mech == "rff":
            fam = rff_family(kernel, raw.dim)
            reps = _require(args, "features", "--features")
        elif mech == "fgt":
            if kernel.kind is not KernelKind.GAUSSIAN:
                raise SystemExit("error: fgt supports only the gaussian kernel")
            fam = fgt_family_from_data(unit.points, _require(args, "rho", "--rho"),
                                       _fgt_center(args.center, raw.dim, args.bandwidth))
            reps = 1
        else:
            if kernel.kind is not KernelKind.LAPLACIAN:
                raise SystemExit("error: lsh supports only the laplacian kernel")
            fam = LshFamily(raw.dim, _require(args, "buckets", "--buckets"))
            reps = args.repetitions
        cfg = MechanismConfig(args.epsilon, reps, args.groups, args.seed, args.clamp)
        rel = curator_release(unit, fam, cfg, bandwidth=args.bandwidth)
    elif mech == "bernstein":
        rel = bernstein_release(raw, kernel, args.epsilon, _require(args, "order", "--order"),
                                stream(args.seed, Purpose.NOISE), iterations=args.iterations)
    else:
        rel = noisy_sample_release(raw, args.epsilon, args.sample_size,
                                   stream(args.seed, Purpose.HOLDOUT), kernel=kernel)
    save_release(rel, args.output)
    log.info("wrote %s release to %s", mech, args.output)


def cmd_query(args) -> None:
    rel = load_release(args.function)
    Y = load_csv(args.queries, args.has_header).points
    vals = estimate_raw(rel, Y)
    outside = np.zeros(len(vals), dtype=bool)
    if isinstance(rel, BernsteinRelease):
        outside = bernstein_estimate_many(rel, Y)[1]
    rows = [[i, repr(float(v)), int(o)] for i, (v, o) in enumerate(zip(vals, outside))]
    write_csv(args.output, ["query", "estimate", "outside_domain"], rows)


def cmd_exact(args) -> None:
    kernel = _kernel(args)
    ds = load_csv(args.input, args.has_header, bandwidth=args.bandwidth)
    Y = load_csv(args.queries, args.has_header).points
    vals = exact_kde_many(ds, kernel, Y)
    write_csv(args.output, ["query", "kde"], [[i, repr(float(v))] for i, v in enumerate(vals)])


def cmd_bench(args) -> None:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    records, meta = run_bench(cfg, args.experiment)
    write_bench(records, meta, args.output)
    log.info("wrote %d records to %s", len(records), args.output)


def cmd_heatmap(args) -> None:
    rel = load_release(args.function)
    w, h = parse_grid(args.grid)
    grid = emit_heatmap(lambda P: estimate_raw(rel, P), release_dim(rel), w, h, parse_bbox(args.bbox))
    write_heatmap(grid, args.output_prefix)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lsqdp", description="Differentially private KDE function release.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def kernel_args(sp):
        sp.add_argument("--kernel", choices=_KERNEL_CHOICES)
        sp.add_argument("--bandwidth", type=float, default=1.0)
        sp.add_argument("--normalized", action="store_true",
                        help="use the normalized Cauchy kernel prod 1/(1+t^2)")

    r = sub.add_parser("release", help="release a private KDE function from a CSV dataset")
    r.add_argument("--mechanism", required=True, choices=MECHANISMS)
    r.add_argument("--epsilon", required=True, type=float)
    r.add_argument("--input", required=True)
    r.add_argument("--output", required=True)
    budget = r.add_mutually_exclusive_group()
    budget.add_argument("--features", type=int, help="rff: number of Fourier features")
    budget.add_argument("--rho", type=int, help="fgt: truncation order")
    budget.add_argument("--buckets", type=int, help="lsh: hash range B'")
    budget.add_argument("--order", type=int, help="bernstein: lattice order k")
    r.add_argument("--repetitions", type=int, default=1, help="lsh: independent hash repetitions")
    r.add_argument("--groups", type=int, default=1, help="median-of-means groups (must divide I)")
    r.add_argument("--sample-size", type=int, default=100, help="noisysample: held-out points")
    r.add_argument("--iterations", type=int, default=1, help="bernstein: iterated operator order")
    r.add_argument("--public-center", "--center", dest="center", help="fgt grid center: centroid (default), origin, or x,y,...")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--clamp", action="store_true", help="clip estimates to [0, 1]")
    r.add_argument("--has-header", action="store_true")
    kernel_args(r)
    r.set_defaults(func=cmd_release)

    q = sub.add_parser("query", help="answer queries with a released function")
    q.add_argument("--function", required=True)
    q.add_argument("--queries", required=True)
    q.add_argument("--output", required=True)
    q.add_argument("--has-header", action="store_true")
    q.set_defaults(func=cmd_query)

    e = sub.add_parser("exact", help="exact (non-private) KDE at query points")
    e.add_argument("--input", required=True)
    e.add_argument("--queries", required=True)
    e.add_argument("--output", required=True)
    e.add_argument("--has-header", action="store_true")
    kernel_args(e)
    e.set_defaults(func=cmd_exact)

    b = sub.add_parser("bench", help="run an experiment from a TOML config")
    b.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    b.add_argument("--config", required=True)
    b.add_argument("--output", required=True)
    b.add_argument("--seed", type=int, help="override the config seed")
    b.set_defaults(func=cmd_bench)

    h = sub.add_parser("heatmap", help="evaluate a 2-d release on a grid; writes CSV and PGM")
    h.add_argument("--function", required=True)
    h.add_argument("--grid", required=True, help="WxH")
    h.add_argument("--bbox", required=True, help="x0,y0,x1,y1 (write --bbox=-1,-1,1,1 when x0 is negative)")
    h.add_argument("--output-prefix", required=True)
    h.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (DataError, ContainerError, ConfigError, PrivacyError, MemoryError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
