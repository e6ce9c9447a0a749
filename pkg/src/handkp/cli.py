"""Command-line entry point: infer, evaluate, bench, inspect, make-targets.

Exit codes: 0 success, 1 usage error, 2 data error. Predictions and
annotations share the line-delimited JSON idiom so `evaluate` consumes
`infer` output directly.
"""

from __future__ import annotations

import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import dataset as ds
from . import metrics as M
from . import netgraph as ng
from .errors import FormatError, HandkpError
from .heatmap import DecodeParams, decode_keypoints
from .weights_io import bind_weights, load_archive, save_archive

CROP_KINDS = {
    "head": ds.HEAD_SCALED,
    "hand": ds.HAND_SCALED,
    "ext": ds.EXTERNAL_ENLARGED,
    "fixed": ds.FIXED_WINDOW,
}

# Skeleton edges over the keypoint ordering (wrist, then 4-joint chains).
SKELETON_EDGES = [(0, 1 + 4 * f) for f in range(5)] + [
    (1 + 4 * f + j, 2 + 4 * f + j) for f in range(5) for j in range(3)
]


def _default_threads() -> int:
    return int(os.environ.get("HKP_THREADS", "1"))


def _model_options(fn):
    for opt in reversed([
        click.option("--size", type=click.Choice(["112", "224"]), default="224",
                     help="Network input size."),
        click.option("--tau", type=float, default=None,
                     help="Decode confidence threshold (default: 10x uniform)."),
        click.option("--sigma", type=float, default=1.75,
                     help="Target Gaussian sigma, in grid pixels."),
        click.option("--peaks", type=int, default=5,
                     help="Fallback peak candidates per plane."),
    ]):
        fn = opt(fn)
    return fn


@click.group()
def cli():
    """Hand keypoint localization: inference, evaluation, and auditing."""


def _load_model(model_path: str, size: int) -> ng.Network:
    net = ng.build_network(ng.NetworkConfig(input_size=size))
    if model_path:
        bind_weights(net, load_archive(model_path))
    return net


def _prepare_sample(ann, image_dir: Path, strategy: ds.CropStrategy) -> ds.Sample:
    image = ds.load_image(image_dir / ann.image_ref)
    sample = ds.crop_hand(image, ann, strategy)
    if ann.handedness == "left":
        sample = ds.mirror_left(sample)
    return sample


def _render_overlay(image_path: Path, kp_source: np.ndarray, out_path: Path):
    from PIL import Image, ImageDraw
    with Image.open(image_path) as im:
        im = im.convert("RGB")
        draw = ImageDraw.Draw(im)
        for a, b in SKELETON_EDGES:
            draw.line([tuple(kp_source[a]), tuple(kp_source[b])],
                      fill=(0, 255, 0), width=2)
        for x, y in kp_source:
            draw.ellipse([x - 2, y - 2, x + 2, y + 2], fill=(255, 0, 0))
        im.save(out_path)


@cli.command()
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="Line-delimited JSON annotations; images resolved relative to it.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--crop", type=click.Choice(sorted(CROP_KINDS)), default="fixed")
@click.option("--threads", type=int, default=None)
@click.option("--strict", is_flag=True, help="Force single-threaded execution.")
@click.option("--seed", type=int, default=0)
@click.option("--overlay", type=click.Path(), default=None,
              help="Directory for skeleton overlay PNGs.")
@click.option("--dump-heatmaps", type=click.Path(), default=None,
              help="Write raw per-image heatmaps to an HKWF archive.")
@_model_options
def infer(model, input_path, out_path, crop, threads, strict, seed, overlay,
          dump_heatmaps, size, tau, sigma, peaks):
    """Localize keypoints for every annotated image; one JSON line each."""
    size = int(size)
    net = _load_model(model, size)
    decode_params = DecodeParams(confidence_threshold=tau,
                                 max_fallback_peaks=peaks, sigma=sigma)
    strategy = ds.CropStrategy(CROP_KINDS[crop], target_size=size)
    annotations = ds.load_annotations(input_path)
    image_dir = Path(input_path).parent
    grid_scale = size / net.output_grid[0]
    n_threads = 1 if strict else (threads or _default_threads())

    def process(ann):
        try:
            sample = _prepare_sample(ann, image_dir, strategy)
        except (OSError, FormatError) as e:
            return ann.image_ref, None, None, str(e)
        raw = ng.forward(net, sample.image[None])
        kps = decode_keypoints(raw, decode_params)
        crop_xy = kps.xy() * grid_scale
        source_xy = sample.to_source(crop_xy)
        record = {"image": ann.image_ref, "kp": [
            [float(x), float(y), round(p.confidence, 6), p.source]
            for (x, y), p in zip(source_xy, kps.points)]}
        return ann.image_ref, record, (source_xy, raw[0]), None

    if n_threads > 1:
        with ThreadPoolExecutor(n_threads) as pool:
            results = list(pool.map(process, annotations))
    else:
        results = [process(a) for a in annotations]

    skipped = 0
    heatmap_entries = []
    if overlay:
        Path(overlay).mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for image_ref, record, extra, err in results:
            if record is None:
                skipped += 1
                click.echo(f"warning: skipping {image_ref}: {err}", err=True)
                continue
            fh.write(json.dumps(record) + "\n")
            if dump_heatmaps:
                heatmap_entries.append((f"{image_ref}.heatmaps", extra[1]))
            if overlay:
                _render_overlay(image_dir / image_ref, extra[0],
                                Path(overlay) / (Path(image_ref).stem + "_overlay.png"))
    if dump_heatmaps:
        save_archive(heatmap_entries, dump_heatmaps)
    if skipped:
        click.echo(f"skipped {skipped} of {len(annotations)} images", err=True)
        sys.exit(2)


def load_predictions(path) -> dict:
    preds = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                preds[record["image"]] = np.array(
                    [[k[0], k[1]] for k in record["kp"]], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, IndexError):
                raise FormatError(f"{path}:{lineno}: malformed prediction record")
    return preds


@cli.command()
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="Ground-truth annotations (line-delimited JSON).")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--curve", "curve_path", type=click.Path(), default=None,
              help="Write the PCK curve CSV here (default: <out>.csv).")
@click.option("--align-root", is_flag=True,
              help="Translate predictions so wrists match before scoring.")
@click.option("--normalize-head", is_flag=True,
              help="Report PCKh: errors divided by per-image head size.")
@click.option("--threshold-max", type=float, default=None)
@click.option("--threshold-step", type=float, default=None)
def evaluate(pred_path, input_path, out_path, curve_path, align_root,
             normalize_head, threshold_max, threshold_step):
    """Score predictions against ground truth: EPE, PCK curve, AUC."""
    preds = load_predictions(pred_path)
    annotations = ds.load_annotations(input_path)
    if threshold_max is None:
        threshold_max = 1.0 if normalize_head else 30.0
    if threshold_step is None:
        threshold_step = 0.05 if normalize_head else 0.5
    thresholds = np.arange(0.0, threshold_max + threshold_step / 2, threshold_step)

    samples = []
    for ann in annotations:
        if ann.image_ref not in preds:
            raise FormatError(f"no prediction for image {ann.image_ref!r}")
        pred = preds[ann.image_ref]
        if pred.shape != ann.keypoints.shape:
            raise FormatError(f"keypoint count mismatch for image {ann.image_ref!r}")
        if align_root:
            pred = M.align_root(pred, ann.keypoints)
        norm = 1.0
        if normalize_head:
            if ann.head_size is None:
                raise FormatError(f"no head size for image {ann.image_ref!r}")
            norm = ann.head_size
        result = M.epe(pred, ann.keypoints, valid=ann.visible)
        for k in range(len(result["errors"])):
            if ann.visible[k]:
                samples.append(M.ErrorSample(k, float(result["errors"][k]), norm))

    report = M.summary(samples, thresholds)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(M.summary_json(report) + "\n")
    curve_path = curve_path or out_path + ".csv"
    with open(curve_path, "w", encoding="utf-8") as fh:
        fh.write(report["curve"].to_csv())
    click.echo(M.format_table_row(Path(pred_path).stem, report))


def _time_forward(net: ng.Network, runs: int, warmup: int, threads: int,
                  rng: np.random.Generator) -> dict:
    size = net.config.input_size
    image = rng.uniform(-1, 1, (1, size, size, 3)).astype(np.float32)
    for _ in range(warmup):
        ng.forward(net, image)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        ng.forward(net, image)
        times.append((time.perf_counter() - t0) * 1000.0)
    row = {"ms_mean": float(np.mean(times)), "ms_std": float(np.std(times)),
           "fps": 1000.0 / float(np.mean(times))}
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            t0 = time.perf_counter()
            list(pool.map(lambda _: ng.forward(net, image), range(runs)))
            wall = (time.perf_counter() - t0) * 1000.0
        row["ms_per_frame_mt"] = wall / runs
        row["fps_mt"] = 1000.0 * runs / wall
    return row


@cli.command()
@click.option("--model", type=click.Path(exists=True), default=None)
@click.option("--runs", type=int, default=10)
@click.option("--warmup", type=int, default=2)
@click.option("--threads", type=int, default=None)
@click.option("--strict", is_flag=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_path", type=click.Path(), default=None)
def bench(model, runs, warmup, threads, strict, seed, out_path):
    """Time the forward pass at 112 and 224 input; report the budget audit."""
    n_threads = 1 if strict else (threads or _default_threads())
    rng = np.random.default_rng(seed)
    report = {"threads": n_threads, "sizes": {}}
    for size in (112, 224):
        net = _load_model(model, size) if model else ng.build_network(
            ng.NetworkConfig(input_size=size))
        row = _time_forward(net, runs, warmup, n_threads, rng)
        row["params"] = ng.count_parameters(net)["total"]
        row["flops"] = ng.count_flops(net)["total"]
        report["sizes"][str(size)] = row
        click.echo(f"{size:>4}px  {row['ms_mean']:8.2f} ms/frame "
                   f"(± {row['ms_std']:.2f})  {row['fps']:6.1f} fps  "
                   f"params {row['params']:,}  flops {row['flops']:,}")
    report["audit"] = ng.audit_report(
        ng.build_network(ng.NetworkConfig(input_size=224)))
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")


@cli.command()
@click.option("--size", type=click.Choice(["112", "224"]), default="224")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the JSON architecture description here.")
def inspect(size, out_path):
    """Print the architecture table with parameter and FLOP counts."""
    net = ng.build_network(ng.NetworkConfig(input_size=int(size)))
    for row in ng.describe(net):
        note = f"  [{row['note']}]" if row["note"] else ""
        click.echo(f"{row['name']:<16} {row['op']:<10} s{row['stride']} "
                   f"{str(row['in']):>15} -> {str(row['out']):<15} "
                   f"params {row['params']:>9,}  flops {row['flops']:>13,}{note}")
    audit = ng.audit_report(net)
    click.echo(f"total params {audit['params']:,} "
               f"(published {audit['published_params']:,}, "
               f"delta {audit['params_delta']:+,})")
    click.echo(f"total flops  {audit['flops']:,} "
               f"(published figure {audit['published_flops']:,} "
               f"not reconstructible under the MAC=2 convention)")
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(ng.describe_json(net) + "\n")


@cli.command(name="make-targets")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--crop", type=click.Choice(sorted(CROP_KINDS)), default="fixed")
@click.option("--seed", type=int, default=0)
@_model_options
def make_targets(input_path, out_path, crop, seed, size, tau, sigma, peaks):
    """Synthesize 22-plane target heatmaps for a dataset split (HKWF)."""
    size = int(size)
    grid = size // 8
    strategy = ds.CropStrategy(CROP_KINDS[crop], target_size=size)
    annotations = ds.load_annotations(input_path)
    image_dir = Path(input_path).parent
    entries = []
    for ann in annotations:
        sample = _prepare_sample(ann, image_dir, strategy)
        _, target = ds.make_training_pair(sample, sigma, (grid, grid))
        entries.append((f"{ann.image_ref}.target", target))
    save_archive(entries, out_path)
    click.echo(f"wrote {len(entries)} target stacks to {out_path}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except (FormatError,) as e:
        click.echo(f"error: {e}", err=True)
        return 2
    except HandkpError as e:
        click.echo(f"error: {e}", err=True)
        return 2
    except SystemExit as e:
        return e.code or 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
