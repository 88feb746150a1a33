"""Command-line front end: ``dgsiac {solve,study,filter,kernel-info}``.

Runs are described by a ``[run]`` section in an INI-style file; any flag
given on the command line overrides the file.  Exit codes: 0 success,
1 configuration error, 2 solver non-convergence.  Set ``DGSIAC_THREADS``
to cap the number of BLAS/OpenMP threads.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .angular import parse_ordinates
from .dg_transport import PiecewisePolynomial
from .harness import (
    error_l2,
    gaussian_source_case,
    margin_cells,
    mms_slab_1d,
    mms_steady_2d,
    mms_transient_2d,
    run_convergence_study,
)
from .mesh import uniform_mesh
from .numerics_core import BasisSet, tensor_gauss
from .siac import SiacFilter, build_kernel, kernel_fourier
from .solvers import NonConvergenceError, default_tolerance, solve_steady, solve_transient, time_step

log = logging.getLogger("dgsiac")

PROBLEMS = ("steady-1d", "steady-2d", "transient-2d", "gaussian-2d")
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    problem: str = "steady-2d"
    cells: tuple = (20,)
    degree: int = 1
    ordinates: str = ""
    variant: str = "constant"
    source: str = "default"
    sigma: float | None = None
    tol: float | None = None
    dsa: bool = True
    max_iter: int = 10000
    bdf_order: int | None = None
    dt: str = ""
    t_end: float = 0.5
    filter: bool = True
    margin: float | None = None
    samples: int | None = None
    timings: bool = True
    output: str = "."

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: expected one of {PROBLEMS}, got {self.problem!r}")
        if not 1 <= self.degree <= 3:
            raise ConfigError(f"degree: must be 1, 2 or 3, got {self.degree}")
        if not self.cells or any(c < 1 for c in self.cells):
            raise ConfigError(f"cells: need positive element counts, got {self.cells}")
        if not self.ordinates:
            self.ordinates = "gl:8" if self.problem == "steady-1d" else "cl:8,4"
        try:
            ords = parse_ordinates(self.ordinates)
        except ValueError as err:
            raise ConfigError(f"ordinates: {err}") from None
        want_dim = 1 if self.problem == "steady-1d" else 3
        if ords.dim != want_dim:
            raise ConfigError(
                f"ordinates: {self.ordinates!r} does not suit problem {self.problem!r}"
            )
        transient = self.problem == "transient-2d"
        if not transient and self.bdf_order is not None:
            raise ConfigError(f"bdf_order: not allowed for steady problem {self.problem!r}")
        if not transient and self.dt:
            raise ConfigError(f"dt: not allowed for steady problem {self.problem!r}")
        if transient:
            self.bdf_order = 3 if self.bdf_order is None else self.bdf_order
            if self.bdf_order not in (1, 2, 3):
                raise ConfigError(f"bdf_order: must be 1, 2 or 3, got {self.bdf_order}")
            self.dt = self.dt or "0.5h"
            try:
                time_step(self.dt, 1.0)
            except ValueError as err:
                raise ConfigError(f"dt: {err}") from None
            if not self.t_end > 0:
                raise ConfigError(f"t_end: must be positive, got {self.t_end}")
        if self.variant not in ("constant", "variable"):
            raise ConfigError(f"variant: expected 'constant' or 'variable', got {self.variant!r}")
        if self.source not in ("default", "zero"):
            raise ConfigError(f"source: expected 'default' or 'zero', got {self.source!r}")
        if self.sigma is not None and self.problem != "gaussian-2d":
            raise ConfigError("sigma: a uniform scattering override only applies to gaussian-2d")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError(f"tol: must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter: must be >= 1, got {self.max_iter}")
        if self.samples is not None and self.samples < 1:
            raise ConfigError(f"samples: must be >= 1, got {self.samples}")
        if self.margin is not None and self.margin < 0:
            raise ConfigError(f"margin: must be non-negative, got {self.margin}")
        return self

    def header(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(c) for c in v)
            out.append(f"{f.name} = {v}")
        return out


def _to_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(name, raw):
    """Parse a string value for RunConfig field ``name``."""
    try:
        if name == "cells":
            return tuple(int(c) for c in str(raw).replace(" ", "").split(",") if c)
        if name in ("degree", "max_iter"):
            return int(raw)
        if name in ("bdf_order", "samples"):
            return None if str(raw).lower() in ("", "none") else int(raw)
        if name in ("sigma", "tol", "margin"):
            return None if str(raw).lower() in ("", "none") else float(raw)
        if name == "t_end":
            return float(raw)
        if name in ("dsa", "filter", "timings"):
            return _to_bool(raw)
        return str(raw).strip()
    except ValueError as err:
        raise ConfigError(f"{name}: {err}") from None


def load_config(path=None, overrides=None):
    """Build a validated :class:`RunConfig` from a file and overrides."""
    values = {}
    known = {f.name for f in fields(RunConfig)}
    if path:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as err:
            raise ConfigError(f"config file: {err}") from None
        if not parser.has_section("run"):
            raise ConfigError("config file: missing [run] section")
        for key, raw in parser.items("run"):
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"{key}: unknown configuration key")
            values[key] = _convert(key, raw)
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        values[key] = _convert(key, raw) if isinstance(raw, str) else raw
    return RunConfig(**values).validate()


# ---------------------------------------------------------------------------
# problem construction
# ---------------------------------------------------------------------------


def _case(cfg):
    ords = parse_ordinates(cfg.ordinates)
    if cfg.problem == "steady-1d":
        return mms_slab_1d(ords)
    if cfg.problem == "steady-2d":
        return mms_steady_2d(cfg.variant, ords)
    if cfg.problem == "transient-2d":
        return mms_transient_2d(ords, t_end=cfg.t_end)
    return None


def _problem(cfg, n):
    case = _case(cfg)
    if case is None:
        problem = gaussian_source_case(n, cfg.degree, parse_ordinates(cfg.ordinates), cfg.sigma)
    else:
        problem = case.problem(n, cfg.degree)
    if cfg.source == "zero":
        problem.source = None
    return case, problem


def _write_samples(path, header, points, values):
    """Plain-text ``x [y] value`` rows, one per sample point."""
    with open(path, "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        for p, v in zip(points, values):
            fh.write(" ".join(f"{c:.17g}" for c in p) + f" {v:.17g}\n")


def _mesh_header(mesh, degree, samples):
    return [
        f"mesh.lower = {','.join(repr(v) for v in mesh.lower)}",
        f"mesh.upper = {','.join(repr(v) for v in mesh.upper)}",
        f"mesh.cells = {','.join(str(c) for c in mesh.counts)}",
        f"mesh.bc = {','.join(mesh.bc)}",
        f"field.degree = {degree}",
        f"field.samples = {samples}",
    ]


def _filter_header(filt):
    if filt.theta is None:
        return [f"filter.scaling = {filt.h_line!r}"]
    return [f"filter.theta = {filt.theta!r}", f"filter.scaling = {filt.h_line!r}"]


def _dump_density(path, header, rho, samples):
    mesh = rho.mesh
    ref, _ = tensor_gauss(samples, mesh.dim)
    vals = rho.at_reference(ref)
    pts = mesh.centers()[:, None, :] + 0.5 * mesh.spacing * ref[None]
    _write_samples(path, header + _mesh_header(mesh, rho.degree, samples),
                   pts.reshape(-1, mesh.dim), vals.ravel())


def _dump_filtered(path, header, filt, vals):
    pts = filt.sample_points().reshape(-1, filt.mesh.dim)
    flat = vals.ravel()
    keep = np.isfinite(flat)
    _write_samples(path, header + _filter_header(filt), pts[keep], flat[keep])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_solve(cfg):
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    n = cfg.cells[0]
    case, problem = _problem(cfg, n)
    tol = cfg.tol or default_tolerance(cfg.degree)
    if cfg.problem == "transient-2d":
        exact = case.psi if cfg.source == "default" else (lambda x, om, t: np.zeros(len(x)))
        dt = time_step(cfg.dt, problem.mesh.h)
        psi, reports = solve_transient(
            problem, cfg.t_end, dt, cfg.bdf_order, exact=exact, tol=tol,
            use_dsa=cfg.dsa, max_iter=cfg.max_iter,
        )
        iters = sum(r.iterations for r in reports)
        wall = sum(r.wall_time for r in reports)
        t_final = cfg.t_end
    else:
        psi, report = solve_steady(problem, tol=tol, use_dsa=cfg.dsa, max_iter=cfg.max_iter)
        iters, wall, t_final = report.iterations, report.wall_time, 0.0
    rho = psi.density()
    header = cfg.header()
    samples = cfg.samples or cfg.degree + 1
    _dump_density(out / "density.txt", header, rho, samples)
    print(f"solved {cfg.problem} on {n} cells: {iters} iterations, {wall:.3f} s")
    filt = vals = None
    if cfg.filter:
        filt = SiacFilter(problem.mesh, cfg.degree,
                          sample_ref=tensor_gauss(samples, problem.mesh.dim)[0])
        vals = filt.apply(rho)
        _dump_filtered(out / "density_filtered.txt", header, filt, vals)
    if case is not None and cfg.source == "default":
        exact = lambda x: case.density(x, t_final)
        margin = cfg.margin if cfg.margin is not None else margin_cells(cfg.degree) * problem.mesh.h
        print(f"L2 error {error_l2(rho, exact):.6e}")
        if cfg.filter:
            ef = SiacFilter(problem.mesh, cfg.degree)
            try:
                err = error_l2(ef.apply(rho), exact, problem.mesh, cfg.degree, margin=margin)
                print(f"filtered interior L2 error {err:.6e} (margin {margin:.4g})")
            except ValueError as err:
                print(f"filtered error not available: {err}")
    return EXIT_OK


def cmd_study(cfg):
    case = _case(cfg)
    if case is None:
        raise ConfigError("problem: convergence studies need a manufactured solution")
    if cfg.source != "default":
        raise ConfigError("source: studies need the manufactured source")
    cells = list(cfg.cells)
    if len(cells) < 2:
        raise ConfigError("cells: a study needs at least two meshes")
    scheme = None
    if cfg.problem == "transient-2d":
        scheme = dict(order=cfg.bdf_order, dt=cfg.dt, t_end=cfg.t_end)
    try:
        table = run_convergence_study(
            case, cfg.degree, cells, filter=cfg.filter, time_scheme=scheme, tol=cfg.tol,
            margin=cfg.margin, use_dsa=cfg.dsa, max_iter=cfg.max_iter,
        )
    except ValueError as err:
        raise ConfigError(f"cells: {err}") from None
    if not cfg.timings:
        for r in table.rows:
            r["solve_seconds"] = r["filter_seconds"] = float("nan")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    k = cfg.degree
    table.notes.append(
        f"target orders: unfiltered {k + 1}, filtered 2k+2 = {2 * k + 2} "
        f"(a 2(k+2) = {2 * (k + 2)} rate is also quoted for k = 2, 3)"
    )
    table.to_csv(out / "study.csv", header=cfg.header())
    print(table.format())
    for note in table.notes:
        print(f"note: {note}")
    failed = [n for n in table.notes if "did not reach" in n]
    return EXIT_NONCONVERGED if failed else EXIT_OK


def _read_dump(path):
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, sep, val = line[1:].partition("=")
                if sep:
                    meta[key.strip()] = val.strip()
            elif line.strip():
                rows.append([float(v) for v in line.split()])
    return meta, np.array(rows)


def cmd_filter(path, output, samples=None):
    """Filter a density dumped by ``solve`` (Gauss lattice of k+1 points)."""
    try:
        meta, data = _read_dump(path)
    except OSError as err:
        raise ConfigError(f"field file: {err}") from None
    try:
        lower = [float(v) for v in meta["mesh.lower"].split(",")]
        upper = [float(v) for v in meta["mesh.upper"].split(",")]
        cells = [int(v) for v in meta["mesh.cells"].split(",")]
        bc = meta["mesh.bc"].split(",")
        degree = int(meta["field.degree"])
        nsamp = int(meta["field.samples"])
    except (KeyError, ValueError) as err:
        raise ConfigError(f"field file: missing or bad mesh metadata ({err})") from None
    if nsamp != degree + 1:
        raise ConfigError("field file: needs the (k+1)-point Gauss lattice to recover the field")
    mesh = uniform_mesh(list(zip(lower, upper)), cells, tuple(bc))
    ref, w = tensor_gauss(nsamp, mesh.dim)
    npts = len(w)
    if data.shape != (mesh.n_elem * npts, mesh.dim + 1):
        raise ConfigError(f"field file: expected {mesh.n_elem * npts} rows of {mesh.dim + 1} values")
    basis = BasisSet(degree, mesh.dim)
    V, _ = basis.eval(ref)
    vals = data[:, -1].reshape(mesh.n_elem, npts)
    coeffs = (vals * w) @ V.T / basis.mass_diagonal()
    rho = PiecewisePolynomial(mesh, degree, coeffs)
    s = samples or degree + 1
    filt = SiacFilter(mesh, degree, sample_ref=tensor_gauss(s, mesh.dim)[0])
    header = [f"source = {path}"] + _mesh_header(mesh, degree, s)
    _dump_filtered(output, header, filt, filt.apply(rho))
    print(f"filtered {path} -> {output}")
    return EXIT_OK


def cmd_kernel_info(k, xi):
    kernel = build_kernel(k)
    print(f"SIAC kernel k={k}: {kernel.r + 1} translates of order-{kernel.order} B-splines")
    print("coefficients: (" + ", ".join(str(c) for c in kernel.exact_coeffs) + ")")
    print("coefficients (float): (" + ", ".join(f"{c:.15g}" for c in kernel.coeffs) + ")")
    lo, hi = kernel.support
    print(f"support: [{lo:g}, {hi:g}] x H (width {hi - lo:g} H), smoothness C^{kernel.smoothness}")
    for x in xi:
        print(f"fourier({x:g}) = {kernel_fourier(kernel, x):.15g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _run_options(p):
    p.add_argument("--config", help="INI file with a [run] section")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--cells", help="element count per axis, comma list for studies")
    p.add_argument("--degree", "-k", type=int)
    p.add_argument("--ordinates", help="gl:N or cl:P,Q")
    p.add_argument("--variant", choices=("constant", "variable"))
    p.add_argument("--source", choices=("default", "zero"))
    p.add_argument("--sigma", type=float, help="uniform scattering for gaussian-2d")
    p.add_argument("--tol", type=float)
    p.add_argument("--dsa", dest="dsa", action="store_const", const=True)
    p.add_argument("--no-dsa", dest="dsa", action="store_const", const=False)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--bdf-order", type=int)
    p.add_argument("--dt", help="time step rule, e.g. 0.5h or 4h^5/3")
    p.add_argument("--t-end", type=float)
    p.add_argument("--filter", dest="filter", action="store_const", const=True)
    p.add_argument("--no-filter", dest="filter", action="store_const", const=False)
    p.add_argument("--margin", type=float, help="interior margin for filtered norms")
    p.add_argument("--samples", type=int, help="output sample points per axis per element")
    p.add_argument("--no-timings", dest="timings", action="store_const", const=False)
    p.add_argument("--output", "-o")


def build_parser():
    parser = _Parser(prog="dgsiac", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    _run_options(sub.add_parser("solve", help="solve one problem and dump the density"))
    _run_options(sub.add_parser("study", help="mesh-refinement convergence study"))
    f = sub.add_parser("filter", help="filter a dumped density field")
    f.add_argument("field")
    f.add_argument("--output", "-o", default="filtered.txt")
    f.add_argument("--samples", type=int)
    ki = sub.add_parser("kernel-info", help="print SIAC kernel data")
    ki.add_argument("--k", "-k", type=int, default=1)
    ki.add_argument("--xi", default="0,1,2,5", help="comma list of Fourier sample points")
    return parser


def _dispatch(args):
    if args.command in ("solve", "study"):
        keys = [f.name for f in fields(RunConfig)]
        overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
        cfg = load_config(args.config, overrides)
        return cmd_solve(cfg) if args.command == "solve" else cmd_study(cfg)
    if args.command == "filter":
        return cmd_filter(args.field, args.output, args.samples)
    if args.command == "kernel-info":
        if args.k < 1:
            raise ConfigError("k: must be >= 1")
        try:
            xi = [float(v) for v in args.xi.split(",") if v]
        except ValueError:
            raise ConfigError(f"xi: bad list {args.xi!r}") from None
        return cmd_kernel_info(args.k, xi)
    raise ConfigError("a subcommand is required: solve, study, filter or kernel-info")


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    threads = os.environ.get("DGSIAC_THREADS")
    try:
        limit = int(threads) if threads else None
    except ValueError:
        print(f"error: DGSIAC_THREADS must be an integer, got {threads!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with threadpool_limits(limits=limit):
            return _dispatch(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
