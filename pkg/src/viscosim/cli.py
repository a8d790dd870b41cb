"""Command-line entry point: datagen, train, eval, render, serve.

Every command writes a ``manifest.json`` next to its outputs (atomically)
capturing the full config, seed, code version and wall time, so any output
can be regenerated from its manifest alone.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time

import numpy as np

from . import __version__
from .errors import (DegenerateElementError, InvertedElementError,
                     RolloutDivergenceError, SchemaError, TrainingDivergenceError)
from .fem import Dataset, generate_dataset, load_dataset, save_dataset
from .gnn import load_checkpoint, save_checkpoint
from .graph import SIG
from .materials import MaterialParams
from .mesh import LoadCase, save_mesh
from .presets import DATA_PRESETS, build_preset_mesh, single_beam_scene, two_beam_scene
from .session import Scene, SessionServer, load_scene, replay, tick
from .softrender import render_scene, write_ppm
from .training import (TrainConfig, rollout_errors, train, write_error_csv,
                       write_loss_csv)


def code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=os.path.dirname(os.path.abspath(__file__)))
        git = rev.stdout.strip() if rev.returncode == 0 else "unknown"
    except (OSError, subprocess.SubprocessError):
        git = "unknown"
    return f"{__version__}+{git}"


def write_manifest(out_dir: str, command: str, config: dict, seed: int,
                   inputs: list, outputs: list, wall_time: float) -> None:
    doc = {
        "command": command,
        "config": config,
        "seed": seed,
        "code_version": code_version(),
        "inputs": inputs,
        "outputs": outputs,
        "wall_time_s": wall_time,
    }
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".manifest")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    os.replace(tmp, os.path.join(out_dir, "manifest.json"))


def _load_json_arg(path_or_none):
    if not path_or_none:
        return {}
    with open(path_or_none, "r", encoding="utf-8") as fh:
        return json.load(fh)


def cmd_datagen(args) -> int:
    t0 = time.perf_counter()
    preset = dict(DATA_PRESETS[args.preset])
    preset.update(_load_json_arg(args.config))
    os.makedirs(args.out, exist_ok=True)

    mesh = build_preset_mesh(preset)
    mat = MaterialParams.from_dict(preset["material"])
    if preset["load_positions"] < 1:
        raise ValueError("need at least one load position")
    train_cases, test_cases = generate_dataset(
        mesh, mat, preset["load_positions"], preset["force"],
        preset["nt"], preset["dt"], preset["split"], seed=args.seed)
    ds = Dataset(mesh=mesh, material=mat, dt=preset["dt"], trajectories=train_cases)
    out_path = os.path.join(args.out, "dataset.json")
    save_dataset(ds, out_path, test=test_cases)
    write_manifest(args.out, "datagen", {"preset": args.preset, **preset}, args.seed,
                   [], [out_path], time.perf_counter() - t0)
    print(f"wrote {len(train_cases)} train / {len(test_cases)} test cases to {out_path}")
    return 0


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    ds, _ = load_dataset(args.dataset)
    overrides = _load_json_arg(args.config)
    overrides.setdefault("seed", args.seed)
    overrides.setdefault("dt", ds.dt)
    cfg = TrainConfig(**overrides)
    os.makedirs(args.out, exist_ok=True)

    sim, history = train(ds, cfg, log_every=args.log_every)
    ckpt_path = os.path.join(args.out, "checkpoint.json")
    loss_path = os.path.join(args.out, "loss.csv")
    save_checkpoint(sim, ckpt_path)
    write_loss_csv(loss_path, history)
    write_manifest(args.out, "train", cfg.to_dict(), cfg.seed,
                   [args.dataset], [ckpt_path, loss_path], time.perf_counter() - t0)
    print(f"final data term {history[-1]['data_term']:.3e}; checkpoint at {ckpt_path}")
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    sim = load_checkpoint(args.checkpoint)
    ds, test_cases = load_dataset(args.dataset)
    os.makedirs(args.out, exist_ok=True)

    reports = {"train": rollout_errors(sim, ds.mesh, ds.trajectories)}
    if test_cases:
        reports["test"] = rollout_errors(sim, ds.mesh, test_cases)
    csv_path = os.path.join(args.out, "errors.csv")
    write_error_csv(csv_path, reports)
    for split, rep in reports.items():
        for var in ("q", "v", "sigma"):
            med = rep.summary(var)["med"] if rep.errors[var] else float("nan")
            print(f"{split:5s} {var:5s} median rel L2 = {med:.4f}")
    write_manifest(args.out, "eval", {}, args.seed,
                   [args.checkpoint, args.dataset], [csv_path], time.perf_counter() - t0)
    return 0


def cmd_render(args) -> int:
    t0 = time.perf_counter()
    scene = load_scene(args.scene)
    if args.checkpoint:
        sim = load_checkpoint(args.checkpoint)
        for body in scene.bodies:
            body.sim = sim
    os.makedirs(args.out, exist_ok=True)

    if args.load_node is not None:
        # constant load case expressed as a long-lived poke on body 0
        force = np.asarray(json.loads(args.load_force), dtype=np.float64)
        load = LoadCase((args.load_node,), force, (0, args.frames))
        from .interaction import Poke
        scene.bodies[0].pokes.append(Poke(
            model_point=scene.bodies[0].state.q[args.load_node].copy(),
            node_ids=load.loaded_nodes,
            force=force * len(load.loaded_nodes),
            remaining_steps=args.frames))

    outputs = []
    for i in range(args.frames):
        img = render_scene(scene, args.size, args.size)
        path = os.path.join(args.out, f"frame_{i:04d}.ppm")
        write_ppm(path, img)
        outputs.append(path)
        tick(scene)
    write_manifest(args.out, "render",
                   {"scene": args.scene, "frames": args.frames, "size": args.size},
                   args.seed, [args.scene], outputs, time.perf_counter() - t0)
    print(f"wrote {args.frames} frames to {args.out}")
    return 0


def cmd_serve(args) -> int:
    t0 = time.perf_counter()
    scene = load_scene(args.scene)
    if args.replay:
        with open(args.replay, "r", encoding="utf-8") as fh:
            script = json.load(fh)
        lines = replay(scene, script.get("events", []), args.ticks)
        out_dir = args.out or "."
        os.makedirs(out_dir, exist_ok=True)
        stream_path = os.path.join(out_dir, "frames.jsonl")
        with open(stream_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        write_manifest(out_dir, "serve-replay",
                       {"scene": args.scene, "replay": args.replay, "ticks": args.ticks},
                       args.seed, [args.scene, args.replay], [stream_path],
                       time.perf_counter() - t0)
        print(f"replayed {args.ticks} ticks to {stream_path}")
        return 0

    server = SessionServer(scene, host=args.host, port=args.port)
    print(f"serving on ws://{args.host}:{args.port} (Ctrl-C to stop)")
    try:
        server.run()
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        server.stop()
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            write_manifest(args.out, "serve", {"scene": args.scene, "port": args.port},
                           args.seed, [args.scene], [], time.perf_counter() - t0)
    return 0


def cmd_scene(args) -> int:
    """Helper: write a scene config (plus mesh) for a trained checkpoint."""
    t0 = time.perf_counter()
    preset = dict(DATA_PRESETS[args.preset])
    os.makedirs(args.out, exist_ok=True)
    mesh = build_preset_mesh(preset)
    mesh_path = os.path.join(args.out, "scene_mesh.json")
    save_mesh(mesh, mesh_path)

    sim = load_checkpoint(args.checkpoint)
    s_mean = sim.stats.node_mean[SIG][0]
    s_std = sim.stats.node_std[SIG][0]
    lo, hi = float(s_mean - 2 * s_std), float(s_mean + 2 * s_std)
    if not lo < hi:
        lo, hi = -1.0, 1.0
    maker = two_beam_scene if args.two_beams else single_beam_scene
    scene = maker("scene_mesh.json", os.path.relpath(args.checkpoint, args.out),
                  lo, hi, preset["dt"], poke_magnitude=args.poke_magnitude)
    scene_path = os.path.join(args.out, "scene.json")
    with open(scene_path, "w", encoding="utf-8") as fh:
        json.dump(scene, fh, indent=2)
    write_manifest(args.out, "scene", {"preset": args.preset, "two_beams": args.two_beams},
                   args.seed, [args.checkpoint], [scene_path, mesh_path],
                   time.perf_counter() - t0)
    print(f"wrote {scene_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="viscosim",
                                description="learned viscoelastic solids: data, training, serving")
    p.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("datagen", help="generate oracle trajectories")
    d.add_argument("--preset", choices=sorted(DATA_PRESETS), default="beam-desk")
    d.add_argument("--config", help="JSON file overriding preset fields")
    d.add_argument("--out", required=True)
    d.set_defaults(fn=cmd_datagen)

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--dataset", required=True)
    t.add_argument("--config", help="JSON file with TrainConfig overrides")
    t.add_argument("--out", required=True)
    t.add_argument("--log-every", type=int, default=0)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="rollout errors against a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("render", help="offline PPM frames of a scene")
    r.add_argument("--scene", required=True)
    r.add_argument("--checkpoint", help="override every body's checkpoint")
    r.add_argument("--out", required=True)
    r.add_argument("--frames", type=int, default=1)
    r.add_argument("--size", type=int, default=320)
    r.add_argument("--load-node", type=int, default=None)
    r.add_argument("--load-force", default="[0,0,0]")
    r.set_defaults(fn=cmd_render)

    s = sub.add_parser("serve", help="run the interactive session service")
    s.add_argument("--scene", required=True)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8765)
    s.add_argument("--replay", help="JSON event script for a headless replay")
    s.add_argument("--ticks", type=int, default=300)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_serve)

    c = sub.add_parser("scene", help="write a scene config for a checkpoint")
    c.add_argument("--preset", choices=sorted(DATA_PRESETS), default="beam-desk")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--two-beams", action="store_true")
    c.add_argument("--poke-magnitude", type=float, default=1e5)
    c.set_defaults(fn=cmd_scene)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SchemaError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InvertedElementError, DegenerateElementError, RolloutDivergenceError,
            TrainingDivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
