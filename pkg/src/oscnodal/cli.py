"""Command-line front end: experiment orchestration and CSV/JSON emission.

Subcommands: projector, airy, pi0, density, scaling-sweep, montecarlo,
tube-mass.  Every run writes an RFC-4180 CSV (leading '#' comment block
describing each column, then a header row, full round-trip float precision)
plus a JSON manifest recording the parameters, library version and wall-clock
time.  Identical configuration and seed give byte-identical CSV output.

Configuration can come from flags or a plain key=value file (--config);
explicit flags win.  Ranges use start:stop:step, discrete sets use commas.
OSCNODAL_THREADS caps the worker threads of batch evaluations.

Exit codes: 0 success, 1 usage error, 2 validation failure (a requested
check landed outside its tolerance).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, airy, densities, montecarlo, projector, scaled_kernel
from .semiclassical import level_new

VALIDATION_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _parse_range(text):
    """start:stop:step (inclusive stop up to rounding) or comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ValueError("range step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    return [float(p) for p in text.split(",") if p]


def _parse_int_list(text):
    return [int(p) for p in text.split(",") if p]


def _load_config(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config lines must be key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _merge_config(args, argv):
    """Fill args from the config file; explicitly passed flags win."""
    if not getattr(args, "config", None):
        return args
    passed = {a.split("=", 1)[0].lstrip("-").replace("-", "_")
              for a in argv if a.startswith("--")}
    cfg = _load_config(args.config)
    for key, raw in cfg.items():
        if key == "config":
            continue
        if not hasattr(args, key):
            raise ValueError(f"unknown config key {key!r}")
        if key in passed:
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        else:
            value = raw
        setattr(args, key, value)
    return args


def _threads():
    raw = os.environ.get("OSCNODAL_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def _write_table(path, comments, header, rows):
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _write_manifest(path, command, params, elapsed):
    manifest = {
        "command": command,
        "parameters": params,
        "library_version": __version__,
        "wall_clock_seconds": elapsed,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_table(path):
    """Read back a CSV written by this CLI: (header, rows-of-floats-or-str)."""
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            row = []
            for cell in line.split(","):
                try:
                    row.append(float(cell))
                except ValueError:
                    row.append(cell)
            rows.append(row)
    return header, rows


def _cmd_projector(args):
    level = level_new(args.d, args.N)
    if args.pairs_csv:
        xs, ys, _ = projector.read_batch_csv(args.pairs_csv)
    else:
        x = np.array([float(v) for v in args.x.split(",")])
        y = np.array([float(v) for v in (args.y or args.x).split(",")])
        xs, ys = [x], [y]
    if args.method == "exact":
        values = projector.pi_exact_batch(level, xs, ys, max_workers=_threads())
    else:
        from .semiclassical import TrackedReal
        values = [TrackedReal.from_float(projector.pi_mehler(level, x, y)).normalized()
                  for x, y in zip(xs, ys)]
    d = level.d
    header = [f"x{j+1}" for j in range(d)] + [f"y{j+1}" for j in range(d)] \
        + ["pi_mantissa", "pi_exponent"]
    rows = [[float(c) for c in x] + [float(c) for c in y] + [v.mantissa, v.exponent]
            for x, y, v in zip(xs, ys, values)]
    comments = [
        f"eigenspace projection kernel, d={d} N={level.N} hbar={level.hbar!r}",
        "columns x1..xd,y1..yd: evaluation points",
        "columns pi_mantissa,pi_exponent: kernel value = mantissa * e**exponent",
        f"method: {args.method}",
    ]
    _write_table(args.output, comments, header, rows)
    return 0


def _cmd_airy(args):
    svals = _parse_range(args.s)
    rows = []
    for s in svals:
        value = airy.ai_k(args.k, s, method=args.method)
        rows.append([args.k, s, float(value), args.method])
    comments = [
        "weighted Airy function values",
        "columns: k (weight), s (argument), value = Ai_k(s), method",
    ]
    _write_table(args.output, comments, ["k", "s", "value", "method"], rows)
    return 0


def _cmd_pi0(args):
    frame = scaled_kernel.CausticFrame.from_point(
        np.array([1.0] + [0.0] * (args.d - 1)))
    u1s = _parse_range(args.u1_range)
    v1s = _parse_range(args.v1_range)
    tangent = np.zeros(args.d)
    if args.d >= 2:
        tangent[1] = args.tangential_sep
    rows = []
    for u1 in u1s:
        for v1 in v1s:
            u = u1 * frame.x0
            v = v1 * frame.x0 + tangent
            if args.method == "airy":
                val = scaled_kernel.pi0_airy(frame, u, v)
            else:
                val = scaled_kernel.pi0_contour(frame, u, v)
            rows.append([u1, v1, args.tangential_sep, float(val)])
    comments = [
        f"caustic scaling-limit kernel, d={args.d}, tangential separation fixed",
        "columns: u1, v1 (normal offsets), tangential_sep, value = Pi0(u, v)",
    ]
    _write_table(args.output, comments, ["u1", "v1", "tangential_sep", "value"], rows)
    return 0


_REGIMES = {
    "allowed-bulk": densities.Region.ALLOWED_BULK,
    "allowed-annulus": densities.Region.ALLOWED_ANNULUS,
    "caustic-tube": densities.Region.CAUSTIC_TUBE,
    "forbidden-annulus": densities.Region.FORBIDDEN_ANNULUS,
    "forbidden-bulk": densities.Region.FORBIDDEN_BULK,
}


def _cmd_density(args):
    level = level_new(args.d, args.N)
    region = _REGIMES[args.regime]
    frame = scaled_kernel.CausticFrame.from_point(
        np.array([1.0] + [0.0] * (args.d - 1)))
    alpha = {"allowed-bulk": 0.0, "forbidden-bulk": 0.0,
             "caustic-tube": 2.0 / 3.0}.get(args.regime, args.alpha)
    rows = []
    worst = 0.0
    for u1 in _parse_range(args.u1_range):
        u = u1 * frame.x0
        query = densities.RegimeQuery(frame=frame, u=u, alpha=alpha, region=region)
        predicted = densities.density_regime(query, level)
        s = 2.0 * u1
        row = [args.regime, args.d, args.N, level.hbar, alpha, s,
               predicted.log_abs() if predicted.mantissa else -math.inf]
        if args.with_exact:
            x = frame.x0 + level.hbar ** alpha * u
            exact = densities.kac_rice_density(densities.omega_exact(level, x), args.d)
            # compare in the physical (unscaled) normalization
            log_scale = alpha * math.log(level.hbar)
            log_pred_unscaled = predicted.log_abs() - log_scale
            rel = abs(math.exp(log_pred_unscaled - exact.log_abs()) - 1.0)
            row += [exact.log_abs(), rel]
            worst = max(worst, rel)
        rows.append(row)
    header = ["regime", "d", "N", "hbar", "alpha", "s", "predicted_density_log"]
    comments = [
        "Kac-Rice nodal density by regime; densities reported as natural logs",
        "s = 2<u, x0>: signed quadratic distance parameter to the caustic",
        "predicted_density_log: leading-order closed form (rescaled units for",
        "annuli/tube, physical units for bulk regimes)",
    ]
    if args.with_exact:
        header += ["exact_density_log", "relative_error"]
        comments.append("exact_density_log: physical-units density from the exact kernel jet")
        comments.append("relative_error compares prediction and exact in physical units")
    _write_table(args.output, comments, header, rows)
    if args.with_exact and args.tolerance is not None and worst > args.tolerance:
        print(f"validation failure: worst relative error {worst:.3g} > {args.tolerance}",
              file=sys.stderr)
        return VALIDATION_EXIT
    return 0


_SWEEP_POINTS = {
    # regime name -> (expected unscaled log-log slope, point builder)
    "allowed": (-1.0, lambda level, s: (0.5, 0.0)),
    "allowed-annulus": (-0.75, None),
    "caustic": (-2.0 / 3.0, None),
    "forbidden-annulus": (-0.625, None),
    "forbidden": (-0.5, lambda level, s: (1.3, 0.0)),
}


def _sweep_point(regime, level, alpha, s):
    hbar = level.hbar
    if regime == "allowed":
        return np.array([0.5, 0.0])
    if regime == "forbidden":
        return np.array([1.3, 0.0])
    if regime == "caustic":
        return np.array([1.0, 0.0])
    if regime == "allowed-annulus":
        return np.array([math.sqrt(1.0 - hbar ** alpha * s), 0.0])
    return np.array([math.sqrt(1.0 + hbar ** alpha * s), 0.0])


def _cmd_scaling_sweep(args):
    ns = _parse_int_list(args.N)
    if len(ns) < 2:
        raise SystemExit("scaling-sweep needs at least two N values")
    rows = []
    log_h, log_f = [], []
    for n in ns:
        level = level_new(args.d, n)
        x = _sweep_point(args.point, level, args.alpha, args.s)
        dens = densities.kac_rice_density(densities.omega_exact(level, x), args.d)
        rows.append([args.point, args.d, n, level.hbar, float(np.linalg.norm(x)),
                     dens.log_abs()])
        log_h.append(math.log(level.hbar))
        log_f.append(dens.log_abs())
    slope = float(np.polyfit(log_h, log_f, 1)[0])
    expected = _SWEEP_POINTS[args.point][0]
    comments = [
        "log-log scaling sweep of the exact Kac-Rice density across N",
        "columns: regime, d, N, hbar, |x|, log_density (natural log, physical units)",
        f"fitted slope d(log F)/d(log hbar) = {slope!r}; expected {expected!r}",
    ]
    _write_table(args.output, comments,
                 ["regime", "d", "N", "hbar", "radius", "log_density"], rows)
    print(f"fitted slope {slope:.4f} (expected {expected})")
    if args.tolerance is not None and abs(slope - expected) > args.tolerance:
        print(f"validation failure: |slope - expected| = {abs(slope-expected):.3g} "
              f"> {args.tolerance}", file=sys.stderr)
        return VALIDATION_EXIT
    return 0


def _cmd_montecarlo(args):
    level = level_new(args.d, args.N)
    seeds = list(range(args.seed, args.seed + args.seeds))
    rows = []
    if args.statistic == "caustic-crossings":
        counts, est = montecarlo.caustic_crossings_ensemble(level, seeds)
        for seed, count in zip(seeds, counts):
            rows.append([seed, args.N, args.statistic, float(count), 0.0,
                         est.resolution])
        rows.append(["mean", args.N, args.statistic, est.value, est.std_error,
                     est.resolution])
    elif args.statistic == "nodal-length":
        half = args.box_size / 2.0
        box = ((args.box_x - half, args.box_x + half),
               (args.box_y - half, args.box_y + half))
        lengths, est = montecarlo.nodal_length_ensemble(
            level, seeds, box, level.hbar / 8.0)
        for seed, length in zip(seeds, lengths):
            rows.append([seed, args.N, args.statistic, float(length), 0.0,
                         est.resolution])
        rows.append(["mean", args.N, args.statistic, est.value, est.std_error,
                     est.resolution])
    else:  # radial-profile
        spec = montecarlo.EnsembleSpec(level=level, seeds=tuple(seeds),
                                       n_rays=args.rays)
        radii = _parse_range(args.radii)
        for r, est in zip(radii, montecarlo.radial_zero_profile(spec, radii)):
            rows.append([f"r={r!r}", args.N, args.statistic, est.value,
                         est.std_error, est.resolution])
    comments = [
        f"Monte Carlo nodal statistics, d={args.d} N={args.N}, base seed {args.seed}",
        "columns: seed (or aggregate label), N, statistic, value, std_error, resolution",
    ]
    _write_table(args.output, comments,
                 ["seed", "N", "statistic", "value", "std_error", "resolution"], rows)
    return 0


def _cmd_tube_mass(args):
    level = level_new(args.d, args.N)
    exact, asym = densities.tube_mass(level, args.kappa)
    ratio = exact / asym
    comments = [
        "expected L2 mass of a normalized eigenfunction in the kappa*hbar^(2/3)",
        "tube around the caustic: exact kernel integral vs leading asymptotics",
    ]
    _write_table(args.output, comments,
                 ["d", "N", "kappa", "exact", "asymptotic", "ratio"],
                 [[args.d, args.N, args.kappa, exact, asym, ratio]])
    print(f"tube mass exact/asymptotic ratio {ratio:.4f}")
    if args.tolerance is not None and abs(ratio - 1.0) > args.tolerance:
        print(f"validation failure: |ratio-1| = {abs(ratio-1):.3g} > {args.tolerance}",
              file=sys.stderr)
        return VALIDATION_EXIT
    return 0


def build_parser():
    parser = _Parser(prog="oscnodal",
                     description="harmonic-oscillator projection kernels, caustic "
                                 "scaling limits and nodal densities")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("-o", "--output", default=None, help="output CSV path")

    p = sub.add_parser("projector", help="exact or residue-integral kernel values")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--N", type=int, default=40)
    p.add_argument("--x", default="0.5,0.0", help="comma-separated point")
    p.add_argument("--y", default=None, help="defaults to x")
    p.add_argument("--pairs-csv", default=None, help="batch input CSV (x1..xd,y1..yd)")
    p.add_argument("--method", choices=["exact", "mehler"], default="exact")
    common(p)

    p = sub.add_parser("airy", help="weighted Airy function table")
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--s", default=None, help="range start:stop:step or comma list")
    p.add_argument("--method", choices=["auto", "contour", "gamma_integral",
                                        "asymptotic"], default="auto")
    common(p)

    p = sub.add_parser("pi0", help="caustic scaling-limit kernel table")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--u1-range", default="-2:2:0.5")
    p.add_argument("--v1-range", default="-2:2:0.5")
    p.add_argument("--tangential-sep", type=float, default=0.0)
    p.add_argument("--method", choices=["airy", "contour"], default="airy")
    common(p)

    p = sub.add_parser("density", help="closed-form regime densities (optionally vs exact)")
    p.add_argument("--regime", choices=sorted(_REGIMES), default=None)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--u1-range", default="-3:3:0.1")
    p.add_argument("--with-exact", action="store_true")
    p.add_argument("--tolerance", type=float, default=None,
                   help="exit 2 if any relative error exceeds this")
    common(p)

    p = sub.add_parser("scaling-sweep", help="log-log density slope across N")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--N", default="100,200,400,800,1600", help="comma list")
    p.add_argument("--point", choices=sorted(_SWEEP_POINTS), default="caustic")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--tolerance", type=float, default=None,
                   help="exit 2 if |slope - expected| exceeds this")
    common(p)

    p = sub.add_parser("montecarlo", help="ensemble nodal statistics")
    p.add_argument("--statistic", choices=["caustic-crossings", "nodal-length",
                                           "radial-profile"], default=None)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--box-x", type=float, default=0.5)
    p.add_argument("--box-y", type=float, default=0.0)
    p.add_argument("--box-size", type=float, default=0.2)
    p.add_argument("--rays", type=int, default=32)
    p.add_argument("--radii", default="0.5:1.4:0.1")
    common(p)

    p = sub.add_parser("tube-mass", help="L2 mass in the critical caustic tube")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--N", type=int, default=400)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--tolerance", type=float, default=None)
    common(p)

    return parser


_COMMANDS = {
    "projector": _cmd_projector,
    "airy": _cmd_airy,
    "pi0": _cmd_pi0,
    "density": _cmd_density,
    "scaling-sweep": _cmd_scaling_sweep,
    "montecarlo": _cmd_montecarlo,
    "tube-mass": _cmd_tube_mass,
}


_REQUIRED = {
    "airy": ("k", "s"),
    "density": ("regime",),
    "montecarlo": ("statistic",),
}

#: flags whose values may begin with '-' (ranges like -3:3:0.1); merged into
#: --flag=value form so argparse does not mistake the value for an option
_VALUE_FLAGS = {"--u1-range", "--v1-range", "--s", "--radii", "--x", "--y",
                "--k", "--box-x", "--box-y", "--tangential-sep"}


def _normalize_argv(argv):
    out = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{arg}={argv[i + 1]}")
            i += 2
        else:
            out.append(arg)
            i += 1
    return out


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    argv = _normalize_argv(list(argv))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args, argv)
    except (ValueError, OSError) as exc:
        print(f"oscnodal: error: {exc}", file=sys.stderr)
        return 1
    for key in _REQUIRED.get(args.command, ()):
        if getattr(args, key) is None:
            print(f"oscnodal: error: --{key} is required (flag or config)",
                  file=sys.stderr)
            return 1
    if args.output is None:
        args.output = f"{args.command.replace('-', '_')}.csv"
    if args.command == "airy" and isinstance(args.k, str):
        args.k = float(args.k)
    start = time.time()
    try:
        status = _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"oscnodal: error: {exc}", file=sys.stderr)
        return 1
    _write_manifest(os.path.splitext(args.output)[0] + "_manifest.json",
                    args.command, _manifest_params(args), time.time() - start)
    return status


def _manifest_params(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "command"}


if __name__ == "__main__":
    sys.exit(main())
