"""Command line: run, converge, identities, info.

Exit codes: 0 success, 1 domain error (bad config, failed run, failed
check), 2 usage error.  Failures also emit one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from . import __version__
from .config import ConfigError, config_to_ini, load_run_config
from .diagnostics import energy_monitor, report_to_dict, write_convergence_csv
from .mesh import MeshError, generate_icosphere, mesh_size, read_off
from .physics import ParameterError

log = logging.getLogger("fluidsurf")


class DomainError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message, 2)
        sys.exit(2)


def _emit_error(kind, message, code):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message), "exit_code": code}) + "\n")


def parse_levels(text: str) -> list[int]:
    """``"1..3"`` -> [1, 2, 3]; ``"2,4"`` -> [2, 4]."""
    try:
        if ".." in text:
            a, b = text.split("..")
            levels = list(range(int(a), int(b) + 1))
        else:
            levels = [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level range {text!r}") from None
    if len(levels) < 2 or min(levels) < 0:
        raise argparse.ArgumentTypeError("need at least two non-negative levels")
    return levels


# ----------------------------------------------------------------------


def cmd_run(args) -> int:
    from .output import (
        output_dir, write_energies_csv, write_metadata, write_monitor_csv, write_pvd, write_vtu,
    )
    from .timeloop import build_mesh, run

    cfg, out = load_run_config(args.config)
    if args.max_steps is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, max_steps=args.max_steps)
    d = output_dir(args.output or out.directory)
    (d / "config.ini").write_text(config_to_ini(cfg, out))
    mesh = build_mesh(cfg)
    series = []

    def snapshot(state, geom, row):
        if not out.vtu:
            return
        if state.step == 0 or (cfg.snapshot_every and state.step % cfg.snapshot_every == 0):
            name = f"snapshot_{state.step:06d}.vtu"
            write_vtu(state, mesh, d / name)
            series.append((state.t, name))

    res = run(cfg, callback=snapshot)
    if out.vtu and (not series or series[-1][1] != f"snapshot_{res.state.step:06d}.vtu"):
        name = f"snapshot_{res.state.step:06d}.vtu"
        write_vtu(res.state, mesh, d / name)
        series.append((res.state.t, name))
    if series:
        write_pvd(series, d / "snapshots.pvd")
    write_energies_csv(res.energies, d / "energies.csv")
    mon = energy_monitor(res.energies, res.tau)
    write_monitor_csv(res.monitor, res.energies, mon["residuals"], d / "monitor.csv")
    if out.plots:
        from .plotting import plot_curvature, plot_energies

        plot_energies(res.energies, d / "energies.png")
        plot_curvature(res.energies, d / "curvature.png")
    meta = dict(res.metadata)
    meta.update(
        version=__version__,
        termination=res.termination,
        critical_time=res.critical_time,
        error=res.error,
        snapshots=[n for _, n in series],
        energy_monitor={k: v for k, v in mon.items() if k != "residuals"},
        config_ini=config_to_ini(cfg, out),
    )
    write_metadata(meta, d / "metadata.json")
    T = "" if res.critical_time is None else f" T={res.critical_time:.6g}"
    print(f"termination={res.termination}{T} steps={res.steps} tau={res.tau:.6g} h={res.h:.6g} output={d}")
    if res.termination == "failed":
        raise DomainError(f"run failed: {res.error}")
    return 0


def cmd_converge(args) -> int:
    from .output import output_dir, write_metadata
    from .study import convergence_study

    cfg, out = load_run_config(args.config)
    levels = args.levels
    ref = args.ref_level if args.ref_level is not None else levels[-1] + 1
    if ref <= levels[-1]:
        raise DomainError("--ref-level must exceed every studied level")
    d = output_dir(args.output or out.directory)
    t0 = time.perf_counter()
    reports, table, _ = convergence_study(cfg, levels, ref, args.t_end)
    write_convergence_csv(reports, d / "convergence.csv")
    if out.plots:
        from .plotting import plot_convergence

        plot_convergence(reports, d / "convergence.png")
    write_metadata(
        {
            "levels": levels,
            "ref_level": ref,
            "t_end": args.t_end,
            "reports": [report_to_dict(r) for r in reports],
            "eoc": table,
            "config_ini": config_to_ini(cfg, out),
            "wall_time_s": time.perf_counter() - t0,
        },
        d / "convergence.json",
    )
    print("level  h          " + "  ".join(f"{m:>10s}" for m in table))
    for i, r in enumerate(reports):
        print(f"{r.level:5d}  {r.h:.4e} " + "  ".join(f"{v:10.3e}" for v in r.metrics().values()))
        if i > 0:
            slopes = [table[m][i - 1] for m in table]
            print("  eoc" + " " * 13 + "  ".join("   saturated" if s is None else f"{s:10.3f}" for s in slopes))
    return 0


def cmd_identities(args) -> int:
    from .identities import run_identities

    rep = run_identities(args.level, args.order, args.fields, args.seed)
    for line in rep.lines():
        print(line)
    print(f"runtime {rep.runtime_s:.2f} s")
    if not rep.operators_ok():
        raise DomainError("operator identity residuals above threshold")
    return 0


def cmd_info(args) -> int:
    if args.mesh.startswith("icosphere:"):
        try:
            level = int(args.mesh.split(":", 1)[1])
        except ValueError:
            raise DomainError(f"bad icosphere level in {args.mesh!r}") from None
        mesh = generate_icosphere(level)
    else:
        mesh = read_off(args.mesh)
    info = {
        "vertices": mesh.n_vertices,
        "edges": mesh.n_edges,
        "faces": mesh.n_triangles,
        "euler_characteristic": mesh.euler_characteristic(),
        "h": mesh_size(mesh),
        "area": mesh.area(),
    }
    if args.json:
        print(json.dumps(info))
    else:
        for k, v in info.items():
            print(f"{k:22s} {v:.10g}" if isinstance(v, float) else f"{k:22s} {v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fluidsurf", description="Two-phase fluid deformable surface simulator")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one simulation from a config file")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (default: [output] directory)")
    r.add_argument("--max-steps", type=int)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("converge", help="refinement study against a finer reference run")
    c.add_argument("config")
    c.add_argument("--levels", type=parse_levels, required=True, help="e.g. 1..3")
    c.add_argument("--ref-level", type=int)
    c.add_argument("--t-end", type=float, default=0.05)
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_converge)

    i = sub.add_parser("identities", help="check the surface operator identities")
    i.add_argument("--level", type=int, default=3)
    i.add_argument("--order", type=int, default=2, choices=(1, 2))
    i.add_argument("--fields", type=int, default=10)
    i.add_argument("--seed", type=int, default=0)
    i.set_defaults(func=cmd_identities)

    n = sub.add_parser("info", help="mesh statistics for an OFF file or icosphere:LEVEL")
    n.add_argument("mesh")
    n.add_argument("--json", action="store_true")
    n.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(e, file=sys.stderr)
        _emit_error("config", exc, 1)
    except (ParameterError, MeshError, DomainError, ValueError) as exc:
        _emit_error(type(exc).__name__, exc, 1)
    except OSError as exc:
        _emit_error("io", exc, 1)
    return 1


if __name__ == "__main__":
    sys.exit(main())
