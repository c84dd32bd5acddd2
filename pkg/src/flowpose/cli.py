"""Command-line driver: ``flowpose {flow,label,eval,mine,synth}``.

Exit status is 0 on success (rejected frame pairs are data, not failures)
and 2 for any usage or input error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

from . import ingest
from .config import PipelineConfig, parse_kv_file
from .data import Detection
from .errors import FlowposeError
from .evaluate import PartJointMapping, aggregate_report, evaluate_map, write_report
from .flow import FlowParams, farneback_flow
from .grouping import MeanShiftParams
from .mine import MiningPool, score_samples, select_hard, write_mining_report
from .supervise import OK, SampleRecord, generate_sample, manifest_row, read_manifest, write_manifest

log = logging.getLogger("flowpose")

EXIT_OK = 0
EXIT_USAGE = 2

_HELP = {
    "pyramid_levels": "pyramid levels",
    "pyramid_scale": "size ratio between pyramid levels",
    "window_size": "odd side of the box window pooling the flow solve",
    "iterations": "refinement passes per pyramid level",
    "poly_n": "odd side of the polynomial expansion window",
    "poly_sigma": "std-dev of the expansion's Gaussian weights",
    "spatial_bandwidth": "mean-shift spatial bandwidth (px)",
    "range_bandwidth": "mean-shift flow bandwidth (px/frame)",
    "max_iterations": "mean-shift iteration cap",
    "convergence_tol": "mean-shift step norm that counts as converged",
    "merge_radius": "normalised distance under which modes merge",
    "min_blob_size": "smallest blob kept (px)",
    "eps": "flow magnitude above which a pixel counts as moving (px)",
    "gate_low": "moving fraction must be strictly above this",
    "gate_high": "moving fraction must be strictly below this",
    "k": "number of horizontal part bands",
    "min_overlap": "fraction of a blob that must fall inside the person box",
}


class UsageError(FlowposeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_pipeline_flags(p: argparse.ArgumentParser, include_grouping: bool = True) -> None:
    defaults = PipelineConfig().flat()
    names = [f.name for f in fields(FlowParams)]
    if include_grouping:
        names += [f.name for f in fields(MeanShiftParams)]
        names += ["eps", "gate_low", "gate_high", "k", "min_overlap"]
    for name in names:
        kind = type(defaults[name])
        flag = "--parts" if name == "k" else "--" + name.replace("_", "-")
        extra = ["-k"] if name == "k" else []
        p.add_argument(*extra, flag, dest=name, type=kind, default=None,
                       help=f"{_HELP[name]} (default: {defaults[name]})")
    p.add_argument("--config", type=Path, help="key = value file; flags override it")
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for frame pairs (default: 1)")


def effective_config(args) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None) is not None:
        values.update(parse_kv_file(args.config))
    defaults = PipelineConfig().flat()
    for name in defaults:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
    return PipelineConfig.from_flat(values, str(args.config) if getattr(args, "config", None) else "flags")


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"missing argument(s): {', '.join(missing)}")


def _map_pairs(fn, jobs, tasks):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


# --------------------------------------------------------------------------
# flow


def _flow_task(task):
    prev, nxt, params, out_path = task
    ingest.write_flow(farneback_flow(prev, nxt, params), out_path)
    return out_path


def cmd_flow(args) -> int:
    cfg = effective_config(args)
    if args.print_config:
        sys.stdout.write(cfg.dump())
        return EXIT_OK
    _require(args, "frames_dir", "out_dir")
    frames = ingest.load_frame_sequence(args.frames_dir)
    if len(frames) < 2:
        raise UsageError(f"need at least 2 frames in {args.frames_dir}, found {len(frames)}")
    out = Path(args.out_dir)
    tasks = [(a, b, cfg.flow, out / f"flow_{a.index:06d}.flo") for a, b in zip(frames, frames[1:])]
    _map_pairs(_flow_task, args.jobs, tasks)
    log.info("wrote %d flow files to %s", len(tasks), out)
    return EXIT_OK


# --------------------------------------------------------------------------
# label


def _label_task(task):
    prev, nxt, dets, cfg, out_dir, image_path = task
    return generate_sample(prev, nxt, dets, cfg, out_dir=out_dir, image_path=image_path)


def cmd_label(args) -> int:
    cfg = effective_config(args)
    if args.print_config:
        sys.stdout.write(cfg.dump())
        return EXIT_OK
    _require(args, "frames_dir", "detections", "out_dir")
    frames = ingest.load_frame_sequence(args.frames_dir)
    if not frames:
        raise UsageError(f"no frame_%06d.pgm files in {args.frames_dir}")
    size = (frames[0].width, frames[0].height)
    by_frame = ingest.group_by_frame(ingest.load_detections(args.detections, frame_size=size))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [
        (a, b, by_frame.get(a.index, []), cfg, out, Path(args.frames_dir) / f"frame_{a.index:06d}.pgm")
        for a, b in zip(frames, frames[1:])
    ]
    outcomes = _map_pairs(_label_task, args.jobs, tasks)
    write_manifest([manifest_row(o) for o in outcomes], out / "manifest.txt")
    if args.figures:
        from .report import plot_label_map

        lookup = {f.index: f for f in frames}
        for o in outcomes:
            if o.label_map is not None:
                plot_label_map(o.label_map, out / "figures" / f"label_{o.frame_index:06d}.png",
                               lookup[o.frame_index])
    accepted = sum(o.status == OK for o in outcomes)
    log.info("%d of %d frame pairs accepted", accepted, len(outcomes))
    return EXIT_OK


# --------------------------------------------------------------------------
# eval


def _indexed_pgms(directory) -> dict[int, Path]:
    found = {}
    for path in sorted(Path(directory).iterdir()):
        m = ingest.INDEXED_PGM_PATTERN.match(path.name)
        if m:
            index = int(m.group(1))
            if index in found:
                raise UsageError(f"two label maps for frame {index} in {directory}")
            found[index] = path
    return found


def cmd_eval(args) -> int:
    mapping = PartJointMapping.parse(args.mapping) if args.mapping else PartJointMapping()
    maps = _indexed_pgms(args.labels_dir)
    keypoints = {kp.frame_index: kp for kp in ingest.load_keypoints(args.keypoints)}
    common = sorted(set(maps) & set(keypoints))
    if not common:
        log.warning("no frame index appears in both %s and %s; report is all missing",
                    args.labels_dir, args.keypoints)
    records = [evaluate_map(ingest.read_label_map(maps[i], k=args.parts), keypoints[i], mapping) for i in common]
    rows = aggregate_report(records, mapping)
    write_report(rows, args.out_csv)
    if not args.no_figure:
        from .report import plot_eval_report

        plot_eval_report(rows, Path(args.out_csv).with_suffix(".png"))
    return EXIT_OK


# --------------------------------------------------------------------------
# mine


def cmd_mine(args) -> int:
    manifest = Path(args.manifest)
    rows = [r for r in read_manifest(manifest) if r.status == OK]
    scored, errors = [], {}
    for row in rows:
        weak_path = manifest.parent / row.label_path
        pred_path = Path(args.predictions_dir) / Path(row.label_path).name
        try:
            weak = ingest.read_label_map(weak_path, k=args.parts)
            pred = ingest.read_label_map(pred_path, k=args.parts)
            score = score_samples(pred, weak)
        except FileNotFoundError:
            errors[row.frame_index] = "missing"
            continue
        except FlowposeError as exc:
            log.warning("frame %d excluded: %s", row.frame_index, exc)
            errors[row.frame_index] = "mismatch"
            continue
        det = Detection(row.frame_index, row.bbox, 0.0) if row.bbox is not None else None
        scored.append(SampleRecord(row.frame_index, Path(row.image_path), Path(row.label_path), det,
                                   row.moving_fraction, row.blob_count, score))
    selected = select_hard(MiningPool(scored), args.k)
    write_mining_report(scored, selected, args.out_csv, errors)
    if not args.no_figure and scored:
        from .report import plot_mining

        chosen = {id(r) for r in selected}
        plot_mining([r.error_score for r in scored], [id(r) in chosen for r in scored],
                    Path(args.out_csv).with_suffix(".png"))
    log.info("selected %d of %d scored samples", len(selected), len(scored))
    return EXIT_OK


# --------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    from .synth import SynthConfig, load_synth_config, render_sequence, write_scene

    cfg = load_synth_config(args.config) if args.config else SynthConfig()
    write_scene(render_sequence(cfg), args.out_dir)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowpose", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("flow", help="dense flow for every consecutive frame pair")
    p.add_argument("frames_dir", nargs="?")
    p.add_argument("out_dir", nargs="?")
    _add_pipeline_flags(p, include_grouping=False)
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("label", help="generate part label maps and a manifest")
    p.add_argument("frames_dir", nargs="?")
    p.add_argument("detections", nargs="?")
    p.add_argument("out_dir", nargs="?")
    p.add_argument("--figures", action="store_true", help="also render label overlays under OUT_DIR/figures")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("eval", help="centroid distances of label maps to keypoints")
    p.add_argument("labels_dir")
    p.add_argument("keypoints")
    p.add_argument("out_csv")
    p.add_argument("-k", "--parts", type=int, default=5, help="part count of the label maps (default: 5)")
    p.add_argument("--mapping", help="part-to-joint map, e.g. '1:face,5:knee_mid+ankle_mid'")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG written next to the CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mine", help="score predictions against weak labels and pick the hardest")
    p.add_argument("manifest")
    p.add_argument("predictions_dir")
    p.add_argument("k", type=int)
    p.add_argument("out_csv")
    p.add_argument("--parts", type=int, default=5, help="part count of the label maps (default: 5)")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG written next to the CSV")
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("synth", help="write a synthetic scene with ground truth")
    p.add_argument("out_dir")
    p.add_argument("--config", type=Path, help="key = value scene description")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        log.error("--jobs must be >= 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except (FlowposeError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except Exception as exc:  # the exit-code contract allows only 0 and 2
        log.exception("unexpected failure: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
