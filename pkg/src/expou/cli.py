"""Command-line front end: ``expou <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .model import Horizon, ParameterError, load_params

THREADS_ENV = "EXPOU_THREADS"

# module/operation named in error records
_OPERATIONS = {
    "simulate": ("mc_engine", "simulate"),
    "stats": ("stats", "estimate_cumulants"),
    "cumulants": ("edgeworth", "cumulants_closed_form"),
    "edgeworth": ("edgeworth", "edgeworth_density"),
    "cf": ("linear_cf", "cf_linear"),
    "density": ("inversion", "invert_half_axis"),
    "calibrate": ("calibration", "calibrate"),
    "reproduce": ("reproduce", None),
}


class CliError(Exception):
    pass


def _range3(text: str) -> tuple[float, float, int]:
    try:
        a, b, n = text.split(":")
        return float(a), float(b), int(n)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}") from exc


def _range2(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(":")
        return float(a), float(b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from exc


def _pow2(text: str) -> int:
    try:
        n = int(text[2:]) if text.startswith("2^") else int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer or 2^k, got {text!r}") from exc
    return 1 << n if text.startswith("2^") else n


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


class Output:
    """CSV/JSON writer with a commented metadata header."""

    def __init__(self, args, command: str):
        self.path = getattr(args, "out", None)
        self.meta = {"tool": "expou", "version": __version__, "command": command,
                     "seed": getattr(args, "seed", None)}
        self.t0 = time.perf_counter()

    def add(self, **kw):
        self.meta.update(kw)

    def _open(self):
        if self.path in (None, "-"):
            return sys.stdout, False
        Path(self.path).parent.mkdir(parents=True, exist_ok=True)
        return open(self.path, "w", newline="", encoding="utf-8"), True

    def _final_meta(self):
        meta = dict(self.meta)
        meta["wall_time_s"] = round(time.perf_counter() - self.t0, 3)
        return meta

    def csv(self, header: list[str], rows) -> None:
        fh, close = self._open()
        try:
            for k, v in self._final_meta().items():
                fh.write(f"# {k}: {json.dumps(v, default=_jsonable)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_cell(v) for v in r])
        finally:
            if close:
                fh.close()

    def dict_rows(self, rows: list[dict]) -> None:
        header = list(rows[0].keys()) if rows else []
        self.csv(header, ([r.get(h) for h in header] for r in rows))

    def json(self, result) -> None:
        fh, close = self._open()
        try:
            json.dump({"metadata": self._final_meta(), "result": result}, fh, indent=2, default=_jsonable)
            fh.write("\n")
        finally:
            if close:
                fh.close()


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def _params(args):
    if not os.path.exists(args.params):
        raise CliError(f"parameter file not found: {args.params}")
    return load_params(args.params)


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    from .mc import Dynamics, SimConfig, simulate

    p = _params(args)
    n_steps = int(round(args.t / args.dt))
    if not math.isclose(n_steps * args.dt, args.t, rel_tol=1e-9):
        raise CliError(f"--t {args.t} is not a multiple of --dt {args.dt}")
    cfg = SimConfig(dt=args.dt, n_steps=n_steps, n_paths=args.paths, seed=args.seed,
                    dynamics=Dynamics(args.dynamics), record_hidden=args.record_hidden,
                    stationary_start=args.stationary)
    cks = args.checkpoints or [args.t]
    ens = simulate(p, cfg, cks)
    out = Output(args, "simulate")
    out.add(params=p.to_dict(), config=cfg.to_dict(), **ens.meta)
    if args.out and args.out.endswith(".npz"):
        ens.to_npz(args.out)
        return
    hidden = "z" if cfg.dynamics is Dynamics.LINEAR else "y"
    header = ["path_id", "checkpoint_time", "x"] + ([hidden] if cfg.record_hidden else [])

    def rows():
        for i in range(ens.n_paths):
            for j, t in enumerate(ens.checkpoint_times):
                r = [i, float(t), float(ens.x[i, j])]
                if cfg.record_hidden:
                    r.append(float(ens.hidden[i, j]))
                yield r

    out.csv(header, rows())


def _read_sample(path: str, t: float | None) -> np.ndarray:
    from .mc import load_ensemble_x

    if path.endswith(".npz"):
        return load_ensemble_x(path, t)
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(io.StringIO("".join(lines)))
    header = next(reader)
    rows = list(reader)
    if "x" in header:
        ix = header.index("x")
        if "checkpoint_time" in header and t is not None:
            it = header.index("checkpoint_time")
            rows = [r for r in rows if math.isclose(float(r[it]), t, rel_tol=1e-9, abs_tol=1e-12)]
            if not rows:
                raise CliError(f"no samples at checkpoint time {t}")
        return np.array([float(r[ix]) for r in rows])
    if len(header) != 1:
        raise CliError("sample CSV needs an 'x' column or a single column")
    return np.array([float(r[0]) for r in rows])


def cmd_stats(args):
    from .stats import build_histogram, estimate_cumulants

    x = _read_sample(args.input, args.t)
    c = estimate_cumulants(x, args.confidence, method=args.ci_method, n_boot=args.n_boot, seed=args.seed)
    out = Output(args, "stats")
    out.add(input=args.input, t=args.t)
    out.csv(c.csv_header(), [c.csv_row()])
    if args.histogram:
        h = build_histogram(x, rule=args.bins, min_count=args.min_count)
        hist_out = Output(argparse.Namespace(out=args.histogram, seed=args.seed), "stats-histogram")
        hist_out.add(input=args.input, n=h.n)
        se = h.binomial_se()
        hist_out.csv(["bin_lo", "bin_hi", "count", "density", "count_se"],
                     ([lo, hi, c_, d, float(s)] for (lo, hi, c_, d), s in zip(h.to_rows(), se)))


def cmd_cumulants(args):
    from .edgeworth import cumulants_closed_form

    p = _params(args)
    c = cumulants_closed_form(p, Horizon(args.t))
    out = Output(args, "cumulants")
    out.add(params=p.to_dict(), t=args.t, degenerate=c.degenerate)
    row = c.as_row()
    out.csv(["t"] + list(row), [[args.t] + list(row.values())])


def cmd_edgeworth(args):
    from .edgeworth import cumulants_closed_form, edgeworth_density, negative_density_flag

    p = _params(args)
    c = cumulants_closed_form(p, Horizon(args.t))
    a, b, n = args.grid
    x = np.linspace(a, b, n)
    d = edgeworth_density(x, c)
    flag = negative_density_flag(d, args.rel_floor)
    out = Output(args, "edgeworth")
    out.add(params=p.to_dict(), t=args.t, negative=flag, rel_floor=args.rel_floor)
    out.csv(["x", "density", "negative_flag"], ([float(xi), float(di), bool(di < 0)] for xi, di in zip(x, d)))


def cmd_cf(args):
    from .linear_cf import branch_smoothness_scan, cf_linear

    p = _params(args)
    h = Horizon(args.t)
    a, b, n = args.phi_grid
    phi = np.linspace(a, b, n)
    cf = cf_linear(phi, p, h, args.x0, args.z0)
    report = branch_smoothness_scan(p, h, max(abs(a), abs(b)), max(n, 2), args.x0, args.z0)
    out = Output(args, "cf")
    out.add(params=p.to_dict(), t=args.t, x0=args.x0, z0=cf.z0, smoothness=report.to_dict())
    f = cf.f
    out.csv(["phi", "re_f", "im_f"], ([float(u), float(v.real), float(v.imag)] for u, v in zip(phi, f)))


def cmd_density(args):
    from .inversion import FrequencyGrid, invert_half_axis
    from .linear_cf import cf_handle

    p = _params(args)
    h = Horizon(args.t)
    a, b, m = args.xrange
    x = np.linspace(a, b, m)
    grid = FrequencyGrid(args.phi_max, args.n)
    d = invert_half_axis(cf_handle(p, h), grid, x, args.method)
    out = Output(args, "density")
    out.add(params=p.to_dict(), t=args.t, **d.meta, method=args.method)
    out.csv(["x", "p"], ([float(u), float(v)] for u, v in zip(d.x, d.p)))


def cmd_calibrate(args):
    from .calibration import PriceSeries, calibrate

    if not os.path.exists(args.input):
        raise CliError(f"input file not found: {args.input}")
    s = PriceSeries.from_csv(args.input)
    r = calibrate(s, window=args.window, fit_range=args.fit_range, horizons=args.horizons, seed=args.seed,
                  n_paths=args.paths, substeps=args.substeps, design=args.design)
    out = Output(args, "calibrate")
    out.add(input=args.input)
    out.json(r.to_dict())


def cmd_reproduce(args):
    from . import reproduce as rp

    out = Output(args, f"reproduce {args.target}")
    if args.target == "table1":
        rows = rp.table1(n_paths=args.paths, dt=args.dt, seed=args.seed)
    elif args.target == "table2":
        rows = rp.table2(beta=args.beta, n_paths=args.paths, dt=args.dt, seed=args.seed)
    elif args.target == "fig-density":
        rows = rp.fig_density(beta=args.beta, n_paths=args.paths, dt=args.dt, seed=args.seed,
                              phi_max=args.phi_max, n_points=args.n)
    else:
        from .calibration import PriceSeries

        if not args.input:
            raise CliError("table3 needs one or more --input price files (date,close CSV)")
        for f in args.input:
            if not os.path.exists(f):
                raise CliError(f"input file not found: {f}")
        rows = rp.table3([PriceSeries.from_csv(f) for f in args.input], names=args.input, seed=args.seed)
    out.add(options={k: v for k, v in vars(args).items() if k not in ("func", "out", "threads")})
    out.dict_rows(rows)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or all cores)")
    common.add_argument("--seed", type=int, default=0)

    par = argparse.ArgumentParser(prog="expou", description=__doc__)
    par.add_argument("--version", action="version", version=f"expou {__version__}")
    sub = par.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo path ensemble")
    s.add_argument("--params", required=True)
    s.add_argument("--t", type=float, required=True, help="horizon t - t0 (years)")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--paths", type=int, default=100_000)
    s.add_argument("--dynamics", choices=["exponential", "linear"], default="exponential")
    s.add_argument("--checkpoints", type=_floats, help="comma-separated elapsed times")
    s.add_argument("--record-hidden", action="store_true")
    s.add_argument("--stationary", action="store_true", help="start Y from its stationary law")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("stats", parents=[common], help="sample cumulants with confidence intervals")
    s.add_argument("--input", required=True, help="ensemble CSV/NPZ or single-column CSV")
    s.add_argument("--t", type=float, help="checkpoint time to select")
    s.add_argument("--confidence", type=float, default=0.95)
    s.add_argument("--ci-method", choices=["auto", "delta", "bootstrap"], default="auto")
    s.add_argument("--n-boot", type=int, default=1000)
    s.add_argument("--histogram", help="also write a density histogram CSV here")
    s.add_argument("--bins", default="fd")
    s.add_argument("--min-count", type=int, default=10)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("cumulants", parents=[common], help="closed-form cumulants")
    s.add_argument("--params", required=True)
    s.add_argument("--t", type=float, required=True)
    s.set_defaults(func=cmd_cumulants)

    s = sub.add_parser("edgeworth", parents=[common], help="Edgeworth density on a grid")
    s.add_argument("--params", required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--grid", type=_range3, required=True, metavar="XMIN:XMAX:N")
    s.add_argument("--rel-floor", type=float, default=1e-3)
    s.set_defaults(func=cmd_edgeworth)

    s = sub.add_parser("cf", parents=[common], help="linear-model characteristic function")
    s.add_argument("--params", required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--phi-grid", type=_range3, default=(0.0, 1000.0, 1001), metavar="A:B:N")
    s.add_argument("--x0", type=float, default=0.0)
    s.add_argument("--z0", type=float, default=None, help="default y0 - gamma + 1")
    s.set_defaults(func=cmd_cf)

    s = sub.add_parser("density", parents=[common], help="density by Fourier inversion")
    s.add_argument("--params", required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--method", choices=["fft", "trapezoid"], default="fft")
    s.add_argument("--phi-max", type=float, default=1e3)
    s.add_argument("--n", type=_pow2, default=1 << 22, help="frequency points, integer or 2^k")
    s.add_argument("--xrange", type=_range3, required=True, metavar="A:B:M")
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("calibrate", parents=[common], help="calibrate to a close-price series")
    s.add_argument("--input", required=True, help="CSV with header date,close")
    s.add_argument("--window", type=int, default=21)
    s.add_argument("--fit-range", type=_range2, default=None, metavar="LO:HI")
    s.add_argument("--horizons", type=int, default=100)
    s.add_argument("--paths", type=int, default=10_000)
    s.add_argument("--substeps", type=int, default=4)
    s.add_argument("--design", choices=["series", "paths"], default="series")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("reproduce", parents=[common], help="regenerate table/figure data")
    s.add_argument("target", choices=["table1", "table2", "table3", "fig-density"])
    s.add_argument("--paths", type=int, default=None)
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--beta", type=float, default=0.01)
    s.add_argument("--phi-max", type=float, default=1e3)
    s.add_argument("--n", type=_pow2, default=1 << 22)
    s.add_argument("--input", action="append", help="price CSV for table3 (repeatable)")
    s.set_defaults(func=cmd_reproduce)
    return par


_DEFAULT_PATHS = {"table1": 500_000, "table2": 500_000, "fig-density": 5_000_000, "table3": None}


def _set_threads(n: int | None) -> None:
    import numba

    if n is None:
        env = os.environ.get(THREADS_ENV)
        if not env:
            return
        try:
            n = int(env)
        except ValueError as exc:
            raise CliError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    if n < 1:
        raise CliError("thread count must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _error_record(command: str, exc: Exception) -> dict:
    module, op = _OPERATIONS.get(command, (command, None))
    rec = {"module": module, "operation": op, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ParameterError):
        rec.update(module="model_core", operation="validate", field=exc.field)
    return {"error": rec}


def main(argv=None) -> int:
    par = build_parser()
    args = par.parse_args(argv)
    if args.command == "reproduce" and args.paths is None:
        args.paths = _DEFAULT_PATHS[args.target]
    try:
        _set_threads(args.threads)
        args.func(args)
    except (CliError, ValueError, FloatingPointError, RuntimeError, OSError, KeyError) as exc:
        json.dump(_error_record(args.command, exc), sys.stderr)
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
