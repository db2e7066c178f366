"""Command line interface.

    pipeline run --config scene.ini [--plane-estimation on|off]
                 [--method d2co|d2co-e|d2co-it] [--step 0.25] [--seed N]
                 [--out DIR]
    pipeline bench --config scene.ini --out DIR
    pipeline gen-scene --config scene.ini --out DIR

Exit status: 0 success, 2 config error, 3 runtime error. PIPELINE_THREADS
overrides the frame worker count.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, LampscanError
from .mesh import save_mesh
from .pipeline import run_benchmark, run_pipeline
from .refine import RefineMethod
from .scene import LAMP_MODELS, gen_scene, lamp_mesh, load_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pipeline",
        description="Lamp detection pipeline: chamfer refinement, plane "
                    "estimation and clustering on synthetic scenes.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scene config (INI)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override scene seed")

    run = sub.add_parser("run", help="full pipeline, reports to --out")
    common(run)
    run.add_argument("--plane-estimation", choices=("on", "off"), default="on")
    run.add_argument("--method", choices=[m.value for m in RefineMethod],
                     default=RefineMethod.D2CO_IT.value)
    run.add_argument("--step", type=float, default=0.25,
                     help="subdivision fraction of the largest model edge")

    bench = sub.add_parser("bench", help="method x step x plane benchmark grid")
    common(bench)

    gen = sub.add_parser("gen-scene", help="write scene fixtures (meshes, "
                                           "building XML, references, trajectory)")
    common(gen)
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    result = run_pipeline(config, args.out,
                          plane_estimation=args.plane_estimation == "on",
                          method=RefineMethod(args.method),
                          step=args.step)
    kept = int(result.kept.sum())
    print(f"{len(result.detections)} detections ({kept} kept), "
          f"{len(result.clusters)} clusters -> {args.out}")
    return 0


def _cmd_bench(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    rows = run_benchmark(config, args.out)
    print(f"{len(rows)} benchmark rows -> {Path(args.out) / 'benchmark.csv'}")
    return 0


def _cmd_gen_scene(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    scene = gen_scene(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for model_id in sorted(set(config.models)):
        save_mesh(lamp_mesh(model_id), out / f"model_{model_id}.mesh")
    _write_gbxml(scene, out / "building.xml")
    with open(out / "references.csv", "w") as f:
        f.write("x,y,z,model,state\n")
        for pos, model, state in scene.references():
            f.write(f"{pos[0]:.6f},{pos[1]:.6f},{pos[2]:.6f},{model},{int(state)}\n")
    with open(out / "trajectory.csv", "w") as f:
        f.write("frame,x,y,z\n")
        for i, pose in enumerate(scene.camera_poses):
            t = pose.translation
            f.write(f"{i},{t[0]:.6f},{t[1]:.6f},{t[2]:.6f}\n")
    print(f"scene fixtures ({len(scene.lamps)} lamps, "
          f"{len(scene.camera_poses)} frames) -> {out}")
    return 0


def _write_gbxml(scene, path) -> None:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             '<gbXML xmlns="http://www.gbxml.org/schema">', "  <Campus>"]
    for s in scene.surfaces:
        lines.append(f'    <Surface id="{s.id}" surfaceType="{s.surface_type.value}">')
        lines.append("      <PlanarGeometry><PolyLoop>")
        for p in s.polygon:
            lines.append("        <CartesianPoint>"
                         + "".join(f"<Coordinate>{c:.6f}</Coordinate>" for c in p)
                         + "</CartesianPoint>")
        lines.append("      </PolyLoop></PlanarGeometry>")
        lines.append("    </Surface>")
    lines += ["  </Campus>", "</gbXML>"]
    Path(path).write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    np.seterr(all="ignore")
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "bench":
            return _cmd_bench(args)
        return _cmd_gen_scene(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (LampscanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
