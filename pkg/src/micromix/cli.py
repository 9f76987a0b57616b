"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 solver or stage failure,
4 validation failure.  ``MICROMIX_THREADS`` caps the BLAS/OpenMP thread pools.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import ConfigError, load_config, preset_path
from .flow import FlowError
from .geometry import GeometryError
from .transport import TransportError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VALIDATION = 4
THREADS_ENV = "MICROMIX_THREADS"


def _load(arg: str, overrides):
    path = Path(arg)
    if not path.exists() and not arg.endswith(".toml"):
        path = preset_path(arg)
    cfg = load_config(path)
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}", item)
        cfg = cfg.with_value(key.strip(), _parse_scalar(raw.strip()))
    return cfg


def _parse_scalar(raw: str):
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(raw)
        except ValueError:
            pass
    return raw.strip('"')


def _parse_values(text: str):
    vals = []
    for part in text.split(","):
        part = part.strip()
        if part:
            try:
                vals.append(float(part))
            except ValueError:
                raise ConfigError(f"--values entry {part!r} is not a number", "values") from None
    if not vals:
        raise ConfigError("--values is empty", "values")
    return vals


def _fmt(v, unit=""):
    if v is None:
        return "null"
    return f"{v:.6g}{unit}"


def cmd_run(args) -> int:
    from .pipeline import run_pipeline
    cfg = _load(args.config, args.set)
    rep = run_pipeline(cfg, args.output)
    print(f"device {rep.device}  Re {_fmt(rep.re)}  Pe {_fmt(rep.pe)}")
    print(f"pressure drop       {_fmt(rep.pressure_drop_pa, ' Pa')}")
    print(f"mixing length       {_fmt(rep.mixing_length_mm, ' mm')}"
          + (f"  ({rep.reasons['mixing_length_mm']})" if "mixing_length_mm" in rep.reasons else ""))
    print(f"reaction length     {_fmt(rep.reaction_length_mm, ' mm')}")
    print(f"residence period    {_fmt(rep.residence_period_s, ' s')}")
    print(f"{len(rep.manifest)} files written")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import validate
    ok = True
    for check in validate(args.suite):
        print(check.line())
        ok &= check.passed
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_sweep(args) -> int:
    from .pipeline import sweep
    cfg = _load(args.config, args.set)
    results = sweep(cfg, args.axis, _parse_values(args.values), args.output, args.jobs)
    failed = 0
    for v, rep, err in results:
        if err:
            failed += 1
            print(f"{v:g}: FAILED {err}")
        else:
            print(f"{v:g}: mixing {_fmt(rep.mixing_length_mm, ' mm')}  "
                  f"reaction {_fmt(rep.reaction_length_mm, ' mm')}  dp {_fmt(rep.pressure_drop_pa, ' Pa')}")
    return EXIT_SOLVER if failed == len(results) else EXIT_OK


def cmd_voxelize(args) -> int:
    from . import io
    from .geometry import voxelize
    cfg = _load(args.config, args.set)
    net = cfg.network()
    grid = voxelize(net, cfg["geometry"]["spacing_um"])
    out = Path(args.output or cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    io.write_vtk(out / "geometry.vtk", grid, {"tags": grid.cell_tags.astype("int32")})
    vol = grid.fluid_volume()
    exact = net.analytic_volume()
    print(f"dims {grid.dims}  fluid cells {int(grid.fluid.sum())}")
    print(f"fluid volume {vol:.6g} um^3  analytic {exact:.6g} um^3  "
          f"error {(vol - exact) / exact:+.3%}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="micromix", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("config", help="TOML config path or preset name")
        sp.add_argument("-o", "--output", help="output directory (overrides [output] directory)")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value")

    r = sub.add_parser("run", help="run the configured pipeline")
    with_config(r)
    r.set_defaults(func=cmd_run)
    v = sub.add_parser("validate", help="analytic-oracle checks")
    v.add_argument("suite", choices=["duct", "interdiffusion", "lamination"])
    v.set_defaults(func=cmd_validate)
    s = sub.add_parser("sweep", help="one run per parameter value")
    with_config(s)
    s.add_argument("--axis", required=True, help="parameter (e.g. reynolds or flow.reynolds)")
    s.add_argument("--values", required=True, help="comma-separated numbers")
    s.add_argument("--jobs", type=int, default=1, help="parallel processes")
    s.set_defaults(func=cmd_sweep)
    x = sub.add_parser("voxelize", help="write the voxel geometry for inspection")
    with_config(x)
    x.set_defaults(func=cmd_voxelize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = os.environ.get(THREADS_ENV)
    limit = None
    if threads:
        try:
            limit = max(1, int(threads))
        except ValueError:
            print(f"error: {THREADS_ENV} must be an integer", file=sys.stderr)
            return EXIT_CONFIG
    from .pipeline import PipelineError
    try:
        with threadpool_limits(limits=limit):
            return args.func(args)
    except (ConfigError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        if isinstance(exc.__cause__, GeometryError):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
        if exc.payload:
            print(f"diagnostics: {exc.payload}", file=sys.stderr)
        return EXIT_SOLVER
    except (FlowError, TransportError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
