"""Command-line front end: ``mdvitals simulate | process | evaluate | bench``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, DataError, RadarConfig, load_config
from .detection import CfarConfig
from .pipeline import METHOD_CHOICES, PipelineConfig, process_source
from .rawio import RawFileSource, write_raw
from .rdproc import dump_range_profile_csv
from .sim import SimulatedSource, ground_truth, load_scene
from .tracking import write_trajectories_csv

log = logging.getLogger("mdvitals")

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NO_TARGETS = 5


@dataclass(frozen=True)
class RunManifest:
    config_path: str | None
    raw_path: str | None
    scene_path: str | None
    stages: tuple[str, ...]
    output_dir: str
    seed: int | None
    config_digest: str

    def __post_init__(self):
        if (self.raw_path is None) == (self.scene_path is None):
            raise ConfigError("exactly one of a raw file or a scene file must be given")

    def write(self, path: Path) -> None:
        data = asdict(self)
        data["stages"] = list(self.stages)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _config(path: str | None) -> RadarConfig:
    return load_config(path) if path else RadarConfig()


def cmd_simulate(args) -> int:
    config = _config(args.config)
    scene = load_scene(args.scene)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    truth_path = Path(args.truth) if args.truth else out.with_name(out.name + ".truth.json")
    source = SimulatedSource(scene, config)
    write_raw(source, out)
    _write_json(truth_path, ground_truth(scene, config))
    print(f"wrote {out} ({config.num_frames} frames) and {truth_path}")
    return EXIT_OK


def _pipeline_config(args) -> PipelineConfig:
    cfar = CfarConfig(probability_false_alarm=args.pfa)
    return PipelineConfig(
        cfar=cfar,
        variance_fallback=args.variance_fallback,
        gate_distance=args.gate,
        min_length=args.min_length,
        method=args.method,
    )


def cmd_process(args) -> int:
    config = _config(args.config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stages = ["range_doppler", "detection", "tracking", args.method, "vitals"]
    if args.dump_intermediate:
        stages.append("dump_intermediate")
    if args.figures:
        stages.append("figures")
    seed = None
    if args.raw:
        source = RawFileSource(args.raw, config)
    else:
        scene = load_scene(args.scene)
        seed = scene.seed
        source = SimulatedSource(scene, config)
    manifest = RunManifest(args.config, args.raw, args.scene, tuple(stages), str(out), seed, config.digest())
    cfg = _pipeline_config(args)

    result = process_source(source, config, cfg)
    manifest.write(out / "manifest.json")
    write_trajectories_csv(result.trajectories, out / "trajectories.csv")
    for src, reports in result.reports.items():
        for rep in reports:
            rep.write_json(out / f"vitals_{src}_{rep.trajectory_id}.json")
    log.info("stage timings (s): %s", {k: round(v, 3) for k, v in result.timings_s.items()})

    if args.dump_intermediate:
        dump_range_profile_csv(source.frames(0, 1), config, out / "range_profile.csv")
        if result.first_map is not None:
            np.savetxt(out / "rd_map_frame0.csv", np.sqrt(result.first_map), delimiter=",", fmt="%.6e")
        for src, reports in result.reports.items():
            for rep in reports:
                rep.write_intermediate_csv(out / f"{src}_{rep.trajectory_id}.csv")

    if args.figures:
        from . import plotting

        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        if result.first_map is not None:
            plotting.plot_range_doppler(result.first_map, config, fig_dir / "range_doppler_frame0.png")
        plotting.plot_trajectories(result.trajectories, config.frame_time_s, fig_dir / "trajectories.png")
        for src, reports in result.reports.items():
            for rep in reports:
                plotting.plot_vitals(rep, fig_dir / f"vitals_{src}_{rep.trajectory_id}.png")

    if not result.trajectories:
        print("no targets detected", file=sys.stderr)
        return EXIT_NO_TARGETS
    for src, reports in result.reports.items():
        for rep in reports:
            rr = "invalid" if not rep.respiration.valid else f"{rep.respiration_bpm:.2f}"
            hr = "invalid" if not rep.heart.valid else f"{rep.heart_bpm:.2f}"
            print(f"{src} trajectory {rep.trajectory_id}: range {rep.range_m:.3f} m, angle {rep.angle_deg:.1f} deg, RR {rr}, HR {hr}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluation import evaluate

    metrics = evaluate(args.reports, args.truth)
    text = json.dumps(metrics, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    report = run_bench(_config(args.config), num_frames=args.frames, seed=args.seed)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdvitals", description=__doc__)
    p.add_argument("--verbose", action="store_true", help="log progress and stage timings")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="synthesize a raw capture and its ground truth")
    s.add_argument("--scene", required=True, help="YAML scene file")
    s.add_argument("--config", help="YAML radar configuration (built-in defaults if omitted)")
    s.add_argument("--out", required=True, help="raw output file")
    s.add_argument("--truth", help="ground-truth JSON path (default: <out>.truth.json)")
    s.set_defaults(func=cmd_simulate)

    pr = sub.add_parser("process", help="run the full pipeline on a capture")
    src = pr.add_mutually_exclusive_group(required=True)
    src.add_argument("--raw", help="raw int16 capture")
    src.add_argument("--scene", help="scene file, synthesized on the fly")
    pr.add_argument("--config", help="YAML radar configuration")
    pr.add_argument("--out-dir", required=True)
    pr.add_argument("--method", choices=METHOD_CHOICES, default="energy")
    pr.add_argument("--dump-intermediate", action="store_true", help="write range profile, RD map and signal CSVs")
    pr.add_argument("--figures", action="store_true", help="render PNG figures into <out-dir>/figures")
    pr.add_argument("--pfa", type=float, default=1e-4, help="CFAR false-alarm probability")
    pr.add_argument("--variance-fallback", action=argparse.BooleanOptionalAction, default=True)
    pr.add_argument("--gate", type=float, default=5.0, help="association gate (normalised units)")
    pr.add_argument("--min-length", type=int, default=10, help="shortest trajectory kept (frames)")
    pr.set_defaults(func=cmd_process)

    e = sub.add_parser("evaluate", help="score reports against ground truth")
    e.add_argument("--reports", required=True, help="directory written by 'process'")
    e.add_argument("--truth", required=True, help="ground-truth JSON from 'simulate'")
    e.add_argument("--out", help="metrics JSON path (stdout if omitted)")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="per-stage timing on a synthetic two-subject workload")
    b.add_argument("--config", help="YAML radar configuration")
    b.add_argument("--frames", type=int, default=3000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="timing JSON path (stdout if omitted)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
