"""Command-line interface.

Subcommands: ``run <config>``, ``validate <config>``, ``list-presets``,
``emit-preset <name>``.  Exit codes: 0 ok, 1 configuration error, 2 runtime
solver error.  ``SPHFSI_OUTPUT_DIR`` overrides the configured output
directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import __version__
from .backend import BACKEND_NAME
from .config import PRESETS, parse_file
from .errors import ConfigError, SphFsiError
from .scenarios import build

log = logging.getLogger("sphfsi")

_TEMPLATES = {
    "hydrostatic": """\
[scenario]
preset = hydrostatic
; 40 fluid layers between plates 0.2 apart, body force 0.1 across the gap

[fluid]
dx = 5e-3
sound_speed = 1.0
viscosity = 1e-2
background_pressure = 1.0

[run]
t_end = 10.0
dt = 3.125e-4
output_interval = 0.5
output_dir = out/hydrostatic
""",
    "taylor_couette": """\
[scenario]
preset = taylor_couette
; concentric cylinders r = 1 and 2, outer rotating at omega = 2 (Re = 4)

[fluid]
dx = 0.1
sound_speed = 40.0
viscosity = 1.0
background_pressure = 1600.0

[run]
t_end = 2.0
output_interval = 0.1
output_dir = out/taylor_couette
""",
    "flow_around_cylinder": """\
[scenario]
preset = flow_around_cylinder
; 2.2 x 0.41 channel, cylinder D = 0.1 at (0.2, 0.2), Re = 100
u_max = 1.5

[fluid]
dx = 5e-3              ; published resolution: 2e-3
sound_speed = 12.5
viscosity = 1e-3
background_pressure = 312.5

[run]
t_end = 8.0
output_interval = 0.05
output_dir = out/flow_around_cylinder
""",
    "isochoric_box": """\
[scenario]
preset = isochoric_box
; 0.1 x 0.1 fluid box stretched isochorically to 0.2 x 0.05 by t = 2.5

[fluid]
dx = 5e-3
sound_speed = 1.0
viscosity = 1e-2
background_pressure = 1.0

[run]
t_end = 10.0
dt = 3.125e-4
output_interval = 0.25
output_dir = out/isochoric_box
""",
    "cylinder_shear_flow": """\
[scenario]
preset = cylinder_shear_flow
; rigid disc D = 0.0025 in a 0.1 x 0.01 periodic shear channel, Re = 0.625

[fluid]
dx = 1e-4
sound_speed = 0.25
viscosity = 5e-6
background_pressure = 0.0625

[solid]
rigid = true
density = 1.0

[run]
t_end = 60.0
dt = 1e-4
output_interval = 0.5
output_dir = out/cylinder_shear_flow
""",
    "fsi2_beam": """\
[scenario]
preset = fsi2_beam
; elastic beam 0.35 x 0.02 behind a rigid cylinder, density ratio 10
u_max = 1.5

[fluid]
dx = 5e-3              ; published resolution: 2e-3
sound_speed = 12.5
viscosity = 1e-3
background_pressure = 1250.0

[solid]
youngs = 1.4e3
poisson = 0.4
density = 10.0

[coupling]
tolerance = 1e-8

[run]
t_end = 12.0
output_interval = 0.02
output_dir = out/fsi2_beam
""",
}


def make_parser():
    ap = argparse.ArgumentParser(
        prog="sphfsi",
        description="Weakly compressible SPH / finite-element FSI solver")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario configuration")
    run.add_argument("config")
    run.add_argument("--output-dir", help="override [run] output_dir")
    run.add_argument("-v", "--verbose", action="store_true")

    val = sub.add_parser("validate", help="check a configuration file")
    val.add_argument("config")

    sub.add_parser("list-presets", help="list built-in scenarios")

    emit = sub.add_parser("emit-preset", help="write a preset configuration")
    emit.add_argument("name", choices=sorted(PRESETS))
    emit.add_argument("-o", "--output", help="file path (default: stdout)")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False)
        else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "list-presets":
        for name in PRESETS:
            print(name)
        return 0

    if args.command == "emit-preset":
        text = _TEMPLATES[args.name]
        if args.output:
            with open(args.output, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        return 0

    try:
        cfg = parse_file(args.config)
    except FileNotFoundError:
        print(f"error: no such config file: {args.config}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1

    if args.command == "validate":
        print(f"ok: {cfg.preset}")
        return 0

    out = (args.output_dir or os.environ.get("SPHFSI_OUTPUT_DIR")
           or cfg.get("run", "output_dir", "out"))
    try:
        sim = build(cfg)
        log.info("running %s with backend %s", sim.name, BACKEND_NAME)
        sim.run(output_dir=out, progress=args.verbose)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    except SphFsiError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    print(f"done: outputs in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
