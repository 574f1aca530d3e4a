"""Command-line surface.

Subcommands: track, filter-depth, relight, evaluate, synth, labels, and
rerun. Every run writes its artifacts plus a JSON manifest holding the
fully resolved config, input digests, output digests, and parameters, so
`motkit rerun --manifest <file>` can reproduce and verify the run
byte-for-byte.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal
error.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

from . import __version__
from .config import PipelineConfig, config_from_flat, config_to_flat
from .depth_filter import filter_detections
from .errors import DataError, InternalError, MotkitError, UsageError
from .geometry import Detection
from .io_formats import (
    MotRecord,
    atomic_write,
    detection_to_record,
    format_labels,
    format_mot,
    group_records_by_frame,
    parse_config_text,
    parse_mot,
    parse_motion,
    parse_override,
    read_depth_pgm,
    read_embeddings,
    read_json,
    read_luma_pgm,
    record_to_detection,
    records_to_sequence,
    sha256_bytes,
    sha256_file,
    write_depth_pgm,
    write_embeddings,
    write_json,
    write_luma_pgm,
)
from .metrics import MetricReport, average_reports, evaluate_sequence
from .relight import relight
from .synth import ScenarioConfig, generate
from .tracker import Tracker
from .weak_labels import (
    LabelCandidate,
    SubsampleSpec,
    confidence_filter,
    export_labels,
    merge_overrides,
    sigmoid,
    subsample_indices,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@contextlib.contextmanager
def _stage(name: str, detail: str):
    """Prefix errors with the failing stage and file(s)."""
    try:
        yield
    except MotkitError as exc:
        raise type(exc)(f"{name}: {exc} [{detail}]") from None


def _read_text(path: str, stage: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise DataError(f"{stage}: cannot read {path}: {exc.strerror}") from None


def _read_bytes(path: str, stage: str) -> bytes:
    try:
        with open(path, "rb") as handle:
            return handle.read()
    except OSError as exc:
        raise DataError(f"{stage}: cannot read {path}: {exc.strerror}") from None


def _depth_path(depth_dir: str, frame_index: int) -> str:
    return os.path.join(depth_dir, f"{frame_index + 1:06d}.pgm")


def _luma_name(frame_index: int) -> str:
    return f"{frame_index + 1:06d}.pgm"


# ---------------------------------------------------------------------------
# Handlers. Each takes (params, cfg) with JSON-serializable params and
# returns (inputs, outputs) digest maps, so `rerun` can replay a manifest
# through the identical code path.


def _run_track(params: dict, cfg: PipelineConfig) -> tuple[dict, dict]:
    det_path = params["det"]
    out_path = params["out"]
    inputs = {}
    det_text = _read_text(det_path, "track")
    inputs[det_path] = sha256_bytes(det_text.encode("utf-8"))
    with _stage("track: parse detections", det_path):
        records = parse_mot(det_text)
        frames = group_records_by_frame(records)

    embeddings = None
    if params.get("embeddings"):
        emb_path = params["embeddings"]
        blob = _read_bytes(emb_path, "track")
        inputs[emb_path] = sha256_bytes(blob)
        with _stage("track: parse embeddings", emb_path):
            embeddings = read_embeddings(blob, [len(f) for f in frames])

    motions = {}
    if params.get("motion"):
        motion_path = params["motion"]
        text = _read_text(motion_path, "track")
        inputs[motion_path] = sha256_bytes(text.encode("utf-8"))
        with _stage("track: parse motion", motion_path):
            motions = parse_motion(text)

    tracker = Tracker(cfg.tracker_config())
    out_records: list[MotRecord] = []
    with _stage("track: associate", det_path):
        for f, frame_records in enumerate(frames):
            dets = []
            for k, record in enumerate(frame_records):
                det = record_to_detection(record)
                if embeddings is not None:
                    det = Detection(
                        frame_index=det.frame_index,
                        box=det.box,
                        confidence=det.confidence,
                        embedding=embeddings[f][k],
                        class_id=det.class_id,
                    )
                dets.append(det)
            pairs = tracker.step(dets, motions.get(f), frame_index=f)
            for track_id, det in pairs:
                out_records.append(detection_to_record(det, track_id=track_id))

    payload = format_mot(out_records)
    atomic_write(out_path, payload)
    return inputs, {out_path: sha256_bytes(payload.encode("utf-8"))}


def _run_filter_depth(params: dict, cfg: PipelineConfig) -> tuple[dict, dict]:
    det_path = params["det"]
    depth_dir = params["depth_dir"]
    out_path = params["out"]
    inputs = {}
    det_text = _read_text(det_path, "filter-depth")
    inputs[det_path] = sha256_bytes(det_text.encode("utf-8"))
    with _stage("filter-depth: parse detections", det_path):
        records = parse_mot(det_text)
        frames = group_records_by_frame(records)

    depth_cfg = cfg.depth_config()
    kept_records: list[MotRecord] = []
    flagged = 0
    for f, frame_records in enumerate(frames):
        if not frame_records:
            continue
        depth_path = _depth_path(depth_dir, f)
        blob = _read_bytes(depth_path, "filter-depth")
        inputs[depth_path] = sha256_bytes(blob)
        with _stage("filter-depth: read depth", depth_path):
            depth = read_depth_pgm(blob)
        dets = [record_to_detection(r) for r in frame_records]
        with _stage("filter-depth: classify", depth_path):
            result = filter_detections(dets, depth, depth_cfg)
        kept_ids = {id(d) for d in result.kept}
        flagged += len(result.flagged)
        kept_records.extend(
            r for r, d in zip(frame_records, dets) if id(d) in kept_ids
        )

    payload = format_mot(kept_records)
    atomic_write(out_path, payload)
    if flagged:
        print(
            f"filter-depth: kept {flagged} detection(s) without depth support",
            file=sys.stderr,
        )
    return inputs, {out_path: sha256_bytes(payload.encode("utf-8"))}


def _run_relight(params: dict, cfg: PipelineConfig) -> tuple[dict, dict]:
    in_dir = params["in_dir"]
    out_dir = params["out_dir"]
    curves = cfg.relight_curves()
    if not os.path.isdir(in_dir):
        raise DataError(f"relight: {in_dir} is not a directory")
    names = sorted(n for n in os.listdir(in_dir) if n.endswith(".pgm"))
    if not names:
        raise DataError(f"relight: no .pgm images under {in_dir}")
    inputs = {}
    outputs = {}
    for name in names:
        src = os.path.join(in_dir, name)
        blob = _read_bytes(src, "relight")
        inputs[src] = sha256_bytes(blob)
        with _stage("relight: read image", src):
            image = read_luma_pgm(blob)
        adjusted = relight(image, curves)
        out_bytes = write_luma_pgm(adjusted)
        dst = os.path.join(out_dir, name)
        atomic_write(dst, out_bytes)
        outputs[dst] = sha256_bytes(out_bytes)
    return inputs, outputs


def _format_report(rows: list[tuple[str, MetricReport]]) -> str:
    def pct(v: float) -> str:
        return f"{100.0 * v:.1f}"

    lines = ["seq IDF1 IDP IDR HOTA MOTA Rcll Prec"]
    for name, r in rows:
        lines.append(
            f"{name} {pct(r.idf1)} {pct(r.idp)} {pct(r.idr)} {pct(r.hota)} "
            f"{pct(r.mota)} {pct(r.recall)} {pct(r.precision)}"
        )
    return "".join(line + "\n" for line in lines)


def _run_evaluate(params: dict, cfg: PipelineConfig) -> tuple[dict, dict]:
    gt_path = params["gt"]
    pred_path = params["pred"]
    out_path = params["out"]
    seq_id = params.get("seq_id") or "seq"
    inputs = {}
    gt_text = _read_text(gt_path, "evaluate")
    pred_text = _read_text(pred_path, "evaluate")
    inputs[gt_path] = sha256_bytes(gt_text.encode("utf-8"))
    inputs[pred_path] = sha256_bytes(pred_text.encode("utf-8"))
    with _stage("evaluate: parse ground truth", gt_path):
        gt_records = parse_mot(gt_text)
        gt_seq = records_to_sequence(gt_records, seq_id)
    with _stage("evaluate: parse predictions", f"{pred_path} vs {gt_path}"):
        pred_records = parse_mot(pred_text)
        pred_seq = records_to_sequence(
            pred_records, seq_id, n_frames=len(gt_seq.frames)
        )
    with _stage("evaluate: score", f"{gt_path} vs {pred_path}"):
        report = evaluate_sequence(gt_seq, pred_seq, cfg.iou_threshold)
        combined = average_reports([report])
    payload = _format_report([(seq_id, report), ("avg", combined)])
    atomic_write(out_path, payload)
    sys.stdout.write(payload)
    return inputs, {out_path: sha256_bytes(payload.encode("utf-8"))}


def _scenario_from_params(params: dict, cfg: PipelineConfig) -> ScenarioConfig:
    return ScenarioConfig(
        num_foreground=params["fg"],
        num_background=params["bg"],
        frame_count=params["frames"],
        image_width=params["width"],
        image_height=params["height"],
        motion_model=params["motion_model"],
        detection_noise_sigma=params["noise_sigma"],
        confidence_noise=params["conf_noise"],
        false_positive_rate=params["fp_rate"],
        miss_rate=params["miss_rate"],
        foreground_depth_range=tuple(params["fg_depth"]),
        background_depth_range=tuple(params["bg_depth"]),
        far_plane_depth=params["far_plane"],
        embedding_dim=params["embedding_dim"],
        embedding_noise=params["embedding_noise"],
        ablation_tau_d=cfg.tau_d if params["ablation"] else None,
        seed=params["seed"],
    )


def _run_synth(params: dict, cfg: PipelineConfig) -> tuple[dict, dict]:
    out_dir = params["out_dir"]
    with _stage("synth: configure", out_dir):
        scenario_cfg = _scenario_from_params(params, cfg)
        scenario = generate(scenario_cfg)

    outputs = {}

    gt_records = []
    for f, entries in scenario.gt.frames:
        for identity, box in entries:
            gt_records.append(
                MotRecord(
                    frame=f + 1,
                    track_id=identity,
                    x=box.x_min,
                    y=box.y_min,
                    w=box.width,
                    h=box.height,
                    conf=1.0,
                    class_id=0,
                    visibility=1.0,
                )
            )
    gt_path = os.path.join(out_dir, "gt.txt")
    payload = format_mot(gt_records)
    atomic_write(gt_path, payload)
    outputs[gt_path] = sha256_bytes(payload.encode("utf-8"))

    det_records = []
    per_frame_embeddings = []
    for frame_dets in scenario.detections:
        block = []
        for det in frame_dets:
            det_records.append(detection_to_record(det, track_id=-1))
            block.append(det.embedding)
        per_frame_embeddings.append(block)
    det_path = os.path.join(out_dir, "det.txt")
    payload = format_mot(det_records)
    atomic_write(det_path, payload)
    outputs[det_path] = sha256_bytes(payload.encode("utf-8"))

    emb_path = os.path.join(out_dir, "embeddings.bin")
    blob = write_embeddings(scenario_cfg.embedding_dim, per_frame_embeddings)
    atomic_write(emb_path, blob)
    outputs[emb_path] = sha256_bytes(blob)

    for f, depth in enumerate(scenario.depth_maps):
        path = _depth_path(os.path.join(out_dir, "depth"), f)
        blob = write_depth_pgm(depth)
        atomic_write(path, blob)
        outputs[path] = sha256_bytes(blob)
    for f, image in enumerate(scenario.luma_frames):
        path = os.path.join(out_dir, "luma", _luma_name(f))
        blob = write_luma_pgm(image)
        atomic_write(path, blob)
        outputs[path] = sha256_bytes(blob)
    return {}, outputs


def _run_labels(params: dict, cfg: PipelineConfig) -> tuple[dict, dict]:
    det_path = params["det"]
    out_dir = params["out_dir"]
    width = params["image_width"]
    height = params["image_height"]
    inputs = {}
    det_text = _read_text(det_path, "labels")
    inputs[det_path] = sha256_bytes(det_text.encode("utf-8"))
    with _stage("labels: parse detections", det_path):
        records = parse_mot(det_text)
    n_frames = params.get("total_frames") or max(
        (r.frame for r in records), default=0
    )

    with _stage("labels: select frames", det_path):
        selected = subsample_indices(SubsampleSpec(n_frames, cfg.interval))
    by_frame: dict[int, list[MotRecord]] = {}
    for r in records:
        by_frame.setdefault(r.frame - 1, []).append(r)

    threshold = cfg.label_threshold()
    labels_by_image: dict[str, list] = {}
    with _stage("labels: export", det_path):
        for f in selected:
            image_id = f"{f + 1:06d}"
            rows = by_frame.get(f, [])
            candidates = [
                LabelCandidate(box=r.box, logit=r.conf, image_id=image_id)
                for r in rows
            ]
            # confidence_filter returns the same candidate objects, so an
            # identity map recovers each survivor's source record.
            source = {id(c): r for c, r in zip(candidates, rows)}
            kept = confidence_filter(candidates, threshold)
            dets = [
                Detection(
                    frame_index=f,
                    box=c.box,
                    confidence=sigmoid(c.logit),
                    class_id=source[id(c)].class_id,
                )
                for c in kept
            ]
            labels_by_image[image_id] = export_labels(dets, width, height)

    if params.get("override"):
        override_path = params["override"]
        text = _read_text(override_path, "labels")
        inputs[override_path] = sha256_bytes(text.encode("utf-8"))
        with _stage("labels: merge overrides", override_path):
            overrides = parse_override(text)
            labels_by_image = merge_overrides(labels_by_image, overrides)

    outputs = {}
    for image_id in sorted(labels_by_image):
        path = os.path.join(out_dir, f"{image_id}.txt")
        payload = format_labels(labels_by_image[image_id])
        atomic_write(path, payload)
        outputs[path] = sha256_bytes(payload.encode("utf-8"))
    return inputs, outputs


_HANDLERS = {
    "track": _run_track,
    "filter-depth": _run_filter_depth,
    "relight": _run_relight,
    "evaluate": _run_evaluate,
    "synth": _run_synth,
    "labels": _run_labels,
}


# ---------------------------------------------------------------------------
# Argument parsing and manifest plumbing.

_CONFIG_FLAGS = (
    ("--tau-d", "tau_d", int),
    ("--interval", "interval", int),
    ("--label-tau", "label_tau", float),
    ("--relight-alpha", "relight_alpha", str),
    ("--relight-beta", "relight_beta", str),
    ("--high-conf", "high_conf", float),
    ("--low-conf", "low_conf", float),
    ("--iou-gate", "iou_gate", float),
    ("--appearance-gate", "appearance_gate", float),
    ("--lambda", "lambda", float),
    ("--max-age", "max_age", int),
    ("--min-hits", "min_hits", int),
    ("--process-noise", "process_noise", float),
    ("--measurement-noise", "measurement_noise", float),
    ("--iou-threshold", "iou_threshold", float),
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="flat key = value config file")
    for flag, key, kind in _CONFIG_FLAGS:
        parser.add_argument(flag, dest=f"cfg_{key}", type=kind, default=None,
                            metavar=key.upper())


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        text = _read_text(args.config, "config")
        with _stage("config: parse", args.config):
            try:
                cfg = config_from_flat(parse_config_text(text))
            except UsageError:
                raise
            except DataError as exc:
                raise UsageError(str(exc)) from None
    overrides = {}
    for _, key, _ in _CONFIG_FLAGS:
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            overrides[key] = str(value)
    if overrides:
        cfg = config_from_flat(overrides, base=cfg)
    return cfg


def _build_parser() -> _Parser:
    parser = _Parser(prog="motkit", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version",
                        version=f"motkit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("track", help="associate detections into tracks")
    p.add_argument("--det", required=True, help="detection file (MOT CSV)")
    p.add_argument("--out", required=True, help="track result file")
    p.add_argument("--embeddings", help="binary embedding file")
    p.add_argument("--motion", help="per-frame camera motion file")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    _add_config_flags(p)

    p = sub.add_parser("filter-depth", help="drop background detections by depth")
    p.add_argument("--det", required=True)
    p.add_argument("--depth-dir", required=True,
                   help="directory of %%06d.pgm 16-bit depth maps")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    _add_config_flags(p)

    p = sub.add_parser("relight", help="apply luminance-adaptive relighting")
    p.add_argument("--in", dest="in_dir", required=True,
                   help="directory of 8-bit .pgm images")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--manifest")
    _add_config_flags(p)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True, help="report file")
    p.add_argument("--seq-id", default="seq")
    p.add_argument("--manifest")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--fg", type=int, default=4)
    p.add_argument("--bg", type=int, default=0)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--motion-model", default="linear",
                   choices=("linear", "sinusoidal"))
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--conf-noise", type=float, default=0.0)
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.add_argument("--miss-rate", type=float, default=0.0)
    p.add_argument("--fg-depth", default="600:1100", metavar="LO:HI")
    p.add_argument("--bg-depth", default="1300:2500", metavar="LO:HI")
    p.add_argument("--far-plane", type=int, default=5000)
    p.add_argument("--embedding-dim", type=int, default=16)
    p.add_argument("--embedding-noise", type=float, default=0.0)
    p.add_argument("--ablation", action="store_true",
                   help="lane-separated depths straddling tau_d")
    p.add_argument("--manifest")
    _add_config_flags(p)

    p = sub.add_parser("labels", help="export pseudo-labels from detections")
    p.add_argument("--det", required=True,
                   help="detection file; conf column holds raw logits")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--image-width", type=int, required=True)
    p.add_argument("--image-height", type=int, required=True)
    p.add_argument("--total-frames", type=int)
    p.add_argument("--override", help="corrected labels merged by image id")
    p.add_argument("--manifest")
    _add_config_flags(p)

    p = sub.add_parser("rerun", help="replay a manifest and verify outputs")
    p.add_argument("--manifest", required=True)

    return parser


def _parse_depth_range(text: str) -> list[int]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise UsageError(f"depth range {text!r} must look like LO:HI")
    try:
        return [int(lo), int(hi)]
    except ValueError:
        raise UsageError(f"depth range {text!r} has non-numeric bounds") from None


def _collect_params(args: argparse.Namespace) -> tuple[dict, str]:
    """Extract the handler parameters and the default manifest path."""
    sc = args.subcommand
    if sc == "track":
        params = {
            "det": args.det,
            "out": args.out,
            "embeddings": args.embeddings,
            "motion": args.motion,
        }
        return params, args.out + ".manifest.json"
    if sc == "filter-depth":
        params = {"det": args.det, "depth_dir": args.depth_dir, "out": args.out}
        return params, args.out + ".manifest.json"
    if sc == "relight":
        params = {"in_dir": args.in_dir, "out_dir": args.out_dir}
        return params, os.path.join(args.out_dir, "manifest.json")
    if sc == "evaluate":
        params = {
            "gt": args.gt,
            "pred": args.pred,
            "out": args.out,
            "seq_id": args.seq_id,
        }
        return params, args.out + ".manifest.json"
    if sc == "synth":
        params = {
            "out_dir": args.out_dir,
            "seed": args.seed,
            "frames": args.frames,
            "fg": args.fg,
            "bg": args.bg,
            "width": args.width,
            "height": args.height,
            "motion_model": args.motion_model,
            "noise_sigma": args.noise_sigma,
            "conf_noise": args.conf_noise,
            "fp_rate": args.fp_rate,
            "miss_rate": args.miss_rate,
            "fg_depth": _parse_depth_range(args.fg_depth),
            "bg_depth": _parse_depth_range(args.bg_depth),
            "far_plane": args.far_plane,
            "embedding_dim": args.embedding_dim,
            "embedding_noise": args.embedding_noise,
            "ablation": bool(args.ablation),
        }
        return params, os.path.join(args.out_dir, "manifest.json")
    if sc == "labels":
        params = {
            "det": args.det,
            "out_dir": args.out_dir,
            "image_width": args.image_width,
            "image_height": args.image_height,
            "total_frames": args.total_frames,
            "override": args.override,
        }
        return params, os.path.join(args.out_dir, "manifest.json")
    raise InternalError(f"unhandled subcommand {sc!r}")


def _write_manifest(path: str, subcommand: str, params: dict,
                    cfg: PipelineConfig, inputs: dict, outputs: dict) -> None:
    payload = {
        "tool": "motkit",
        "version": __version__,
        "subcommand": subcommand,
        "parameters": params,
        "config": config_to_flat(cfg),
        "inputs": inputs,
        "outputs": outputs,
    }
    write_json(path, payload)


def _run_rerun(manifest_path: str) -> None:
    with _stage("rerun: read manifest", manifest_path):
        payload = read_json(manifest_path)
    for key in ("subcommand", "parameters", "config", "outputs"):
        if key not in payload:
            raise DataError(f"rerun: manifest {manifest_path} lacks {key!r}")
    subcommand = payload["subcommand"]
    if subcommand not in _HANDLERS:
        raise DataError(f"rerun: manifest names unknown subcommand {subcommand!r}")
    with _stage("rerun: resolve config", manifest_path):
        try:
            cfg = config_from_flat(payload["config"])
        except UsageError as exc:
            raise DataError(str(exc)) from None
    _, outputs = _HANDLERS[subcommand](payload["parameters"], cfg)
    recorded = payload["outputs"]
    changed = {
        p for p in set(recorded) & set(outputs) if recorded[p] != outputs[p]
    }
    mismatched = sorted((set(recorded) ^ set(outputs)) | changed)
    if mismatched:
        raise DataError(
            "rerun: outputs differ from manifest for: " + ", ".join(mismatched)
        )
    print(f"rerun: {len(outputs)} output file(s) match {manifest_path}")


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand == "rerun":
            _run_rerun(args.manifest)
            return 0
        cfg = _resolve_config(args)
        params, default_manifest = _collect_params(args)
        manifest_path = args.manifest or default_manifest
        inputs, outputs = _HANDLERS[args.subcommand](params, cfg)
        _write_manifest(manifest_path, args.subcommand, params, cfg,
                        inputs, outputs)
        print(
            f"{args.subcommand}: wrote {len(outputs)} file(s); "
            f"manifest {manifest_path}"
        )
        return 0
    except UsageError as exc:
        print(f"motkit: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"motkit: {exc}", file=sys.stderr)
        return 2
    except MotkitError as exc:
        print(f"motkit: internal error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"motkit: internal error: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
