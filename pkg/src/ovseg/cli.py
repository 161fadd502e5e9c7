"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 undefined
metric (evaluation saw no scorable class), 4 requested port already bound.

Option resolution is flags first, then a JSON config file (via --config or
the OVSEG_CONFIG environment variable), then built-in defaults.
"""

from __future__ import annotations

import json
import socket
from pathlib import Path

import click
import numpy as np

from .coretypes import load_image, tensor_write
from .encoders import NeuralRuntimeEncoder, PrecomputedEncoder, StubEncoder
from .evalharness import DatasetManifest, UndefinedMetricError, evaluate_dataset
from .fusion import ABLATIONS, export_result, segment
from .partitioner import ScaleConfig
from .pipeline import DenseInferenceConfig, prepare_image
from .saliency import (
    DEFAULT_SCORE_THRESHOLD,
    aggregate_instance_masks,
    load_mask_directory,
    make_saliency_provider,
)
from .vocabulary import build_vocabulary, encode_vocabulary, load_vocabulary_file

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


class MetricUndefined(click.ClickException):
    exit_code = 3


class PortInUse(click.ClickException):
    exit_code = 4


def _load_config_file(path):
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise click.UsageError(f"config file {path} must hold a JSON object")
    return data


def _resolve(flag_value, file_config, key, default):
    """flags > config file > default."""
    if flag_value is not None:
        return flag_value
    if key in file_config:
        return file_config[key]
    return default


def _parse_scales(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    try:
        return tuple(int(part) for part in str(value).split(",") if part.strip())
    except ValueError:
        raise click.UsageError(f"cannot parse scales {value!r}; expected e.g. 256,128,64")


def _make_encoder(spec, dim, seed):
    kind, _, rest = spec.partition(":")
    try:
        if kind == "stub":
            return StubEncoder(dim=dim, seed=seed)
        if kind == "precomputed":
            if not rest:
                raise click.UsageError("precomputed encoder needs a path: precomputed:PATH")
            return PrecomputedEncoder(rest)
        if kind == "model":
            if not rest:
                raise click.UsageError("model encoder needs a path: model:PATH")
            return NeuralRuntimeEncoder(rest)
    except click.UsageError:
        raise
    except Exception as exc:
        raise click.ClickException(f"cannot initialize encoder {spec!r}: {exc}")
    raise click.UsageError(
        f"unknown encoder {spec!r}; expected stub, precomputed:PATH or model:PATH"
    )


def _make_saliency(spec):
    if spec is None:
        return None
    try:
        return make_saliency_provider(str(spec))
    except (ValueError, OSError, KeyError) as exc:
        raise click.ClickException(f"cannot initialize saliency source {spec!r}: {exc}")


def _build_config(file_config, scales, global_scale0, encoder_input, short_side, logit_scale):
    defaults = DenseInferenceConfig()
    sizes = _parse_scales(_resolve(scales, file_config, "scales", None))
    try:
        return DenseInferenceConfig(
            scales=ScaleConfig(
                sizes if sizes else defaults.patch_sizes,
                bool(_resolve(global_scale0, file_config, "global_scale0", False)),
            ),
            encoder_input=int(
                _resolve(encoder_input, file_config, "encoder_input", defaults.encoder_input)
            ),
            short_side=int(
                _resolve(short_side, file_config, "short_side", defaults.short_side)
            ),
            logit_scale=float(
                _resolve(logit_scale, file_config, "logit_scale", defaults.logit_scale)
            ),
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))


def _load_vocab(class_names, class_file):
    if class_file is not None and class_names:
        raise click.UsageError("give either --class-name flags or --class-file, not both")
    try:
        if class_file is not None:
            return load_vocabulary_file(class_file)
        if class_names:
            return build_vocabulary(list(class_names))
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    raise click.UsageError("a vocabulary is required: --class-name ... or --class-file PATH")


_shared_options = [
    click.option("--encoder", default=None, help="stub, precomputed:PATH or model:PATH."),
    click.option("--saliency", default=None, help="constant:V, stub, file:PATH, dir:PATH, precomputed:PATH, manifest:PATH or model:PATH."),
    click.option("--scales", default=None, help="Comma-separated window sizes, e.g. 256,128,64."),
    click.option("--global-scale0", "global_scale0", is_flag=True, default=None,
                 help="Use one full-image window for the first scale."),
    click.option("--encoder-input", type=int, default=None, help="Square side fed to the image tower."),
    click.option("--short-side", type=int, default=None, help="Working resolution of the shorter image side."),
    click.option("--logit-scale", type=float, default=None, help="Similarity multiplier (softmax temperature)."),
    click.option("--ablation", type=click.Choice(ABLATIONS), default=None, help="Inference variant."),
    click.option("--stub-dim", type=int, default=None, help="Embedding width of the stub encoder."),
    click.option("--stub-seed", type=int, default=None, help="Seed of the stub encoder."),
]


def _with_shared_options(cmd):
    for opt in reversed(_shared_options):
        cmd = opt(cmd)
    return cmd


@click.group()
@click.option(
    "--config",
    "config_path",
    envvar="OVSEG_CONFIG",
    type=click.Path(),
    default=None,
    help="JSON file with default option values.",
)
@click.pass_context
def main(ctx, config_path):
    """Open-vocabulary semantic segmentation without training."""
    ctx.obj = _load_config_file(config_path)


def _common_setup(file_config, encoder, saliency, scales, global_scale0, encoder_input,
                  short_side, logit_scale, ablation, stub_dim, stub_seed):
    cfg = _build_config(file_config, scales, global_scale0, encoder_input, short_side, logit_scale)
    provider = _make_encoder(
        str(_resolve(encoder, file_config, "encoder", "stub")),
        dim=int(_resolve(stub_dim, file_config, "stub_dim", 32)),
        seed=int(_resolve(stub_seed, file_config, "stub_seed", 0)),
    )
    sal = _make_saliency(_resolve(saliency, file_config, "saliency", None))
    abl = str(_resolve(ablation, file_config, "ablation", "full"))
    if abl not in ABLATIONS:
        raise click.UsageError(f"unknown ablation {abl!r}, expected one of {ABLATIONS}")
    return cfg, provider, sal, abl


@main.command("segment")
@click.argument("image_path", type=click.Path(exists=True))
@click.option("--class-name", "-c", "class_names", multiple=True, help="Class name; repeatable.")
@click.option("--class-file", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Text file with one class name per line.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: alongside the input).")
@_with_shared_options
@click.pass_obj
def segment_cmd(file_config, image_path, class_names, class_file, out_dir, encoder,
                saliency, scales, global_scale0, encoder_input, short_side, logit_scale,
                ablation, stub_dim, stub_seed):
    """Segment an image, or every image in a directory.

    Writes labels, probabilities and an overlay per image and prints the
    per-class pixel coverage.  Per-image failures are reported and the run
    exits nonzero, but remaining images are still processed.
    """
    cfg, provider, sal, abl = _common_setup(
        file_config, encoder, saliency, scales, global_scale0, encoder_input,
        short_side, logit_scale, ablation, stub_dim, stub_seed,
    )
    vocab = _load_vocab(class_names, class_file)
    image_path = Path(image_path)
    if image_path.is_dir():
        targets = sorted(
            p for p in image_path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not targets:
            raise click.UsageError(f"{image_path} contains no images")
        default_out = image_path
    else:
        targets = [image_path]
        default_out = image_path.parent
    out = Path(out_dir) if out_dir else default_out

    try:
        text = encode_vocabulary(vocab, provider)
    except Exception as exc:
        raise click.ClickException(str(exc))

    failures = []
    for target in targets:
        try:
            image = load_image(target)
            result = segment(
                image, vocab, provider, saliency_provider=sal, config=cfg,
                ablation=abl, image_id=target.stem, text=text,
            )
            prepared = prepare_image(image, cfg.short_side)
            paths = export_result(result, prepared, out, target.stem)
        except Exception as exc:
            failures.append(target.stem)
            click.echo(f"failed {target.stem}: {exc}", err=True)
            continue
        for p in paths:
            click.echo(str(p))
        labels = result.labels.data
        total = labels.size
        for idx, name in enumerate(result.classes):
            frac = int((labels == idx).sum()) / total
            click.echo(f"coverage {target.stem} {name} {frac:.4f}")
    if failures:
        raise click.ClickException(
            f"{len(failures)} of {len(targets)} images failed: {', '.join(failures)}"
        )


@main.command("eval")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--class-file", type=click.Path(exists=True, dir_okay=False), required=True,
              help="Text file with one class name per line.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write the text report (with summary block) here.")
@click.option("--report-json", "report_json_path", type=click.Path(dir_okay=False), default=None,
              help="Write the full report as JSON here.")
@click.option("--jobs", type=int, default=None, help="Images evaluated in parallel.")
@_with_shared_options
@click.pass_context
def eval_cmd(ctx, manifest_path, class_file, report_path, report_json_path, jobs, encoder,
             saliency, scales, global_scale0, encoder_input, short_side, logit_scale,
             ablation, stub_dim, stub_seed):
    """Evaluate mean IoU over a dataset manifest.

    The last stdout line is always `mIoU <value>`.  Per-image failures are
    listed and make the command exit nonzero.
    """
    file_config = ctx.obj
    cfg, provider, sal, abl = _common_setup(
        file_config, encoder, saliency, scales, global_scale0, encoder_input,
        short_side, logit_scale, ablation, stub_dim, stub_seed,
    )
    jobs = int(_resolve(jobs, file_config, "jobs", 1))
    try:
        manifest = DatasetManifest.load(manifest_path)
        vocab = load_vocabulary_file(class_file)
        report = evaluate_dataset(
            manifest, vocab, provider, saliency_provider=sal, config=cfg,
            ablation=abl, jobs=jobs,
        )
    except UndefinedMetricError as exc:
        raise MetricUndefined(str(exc))
    except click.ClickException:
        raise
    except Exception as exc:
        raise click.ClickException(str(exc))
    if report_path is not None:
        report.write_text(report_path)
    if report_json_path is not None:
        report.write_json(report_json_path)
    click.echo(report.render_text(), nl=False)
    if report.failures:
        ctx.exit(1)


@main.command("serve")
@click.option("--host", default=None, help="Bind address (default 127.0.0.1).")
@click.option("--port", type=int, default=None, help="Bind port (default 8080).")
@click.option("--static", "static_dir", type=click.Path(file_okay=False), default=None,
              help="Directory with a built UI bundle to host at /.")
@_with_shared_options
@click.pass_obj
def serve_cmd(file_config, host, port, static_dir, encoder, saliency, scales,
              global_scale0, encoder_input, short_side, logit_scale, ablation,
              stub_dim, stub_seed):
    """Serve the HTTP API (and UI bundle when given) over uvicorn."""
    import uvicorn

    from .server import create_app

    cfg, provider, sal, _ = _common_setup(
        file_config, encoder, saliency, scales, global_scale0, encoder_input,
        short_side, logit_scale, ablation, stub_dim, stub_seed,
    )
    host = str(_resolve(host, file_config, "host", "127.0.0.1"))
    port = int(_resolve(port, file_config, "port", 8080))
    static_dir = _resolve(static_dir, file_config, "static", None)

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        raise PortInUse(f"cannot bind {host}:{port}: {exc}")
    finally:
        probe.close()

    app = create_app(provider, saliency_provider=sal, config=cfg, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def _write_saliency_map(sal, out_path):
    out_path = Path(out_path)
    if out_path.suffix.lower() == ".png":
        from PIL import Image

        arr = np.clip(np.round(sal.data * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(out_path, format="PNG")
    else:
        tensor_write(sal, out_path)
    return out_path


@main.command("aggregate-masks")
@click.argument("mask_root", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="Output file for one image, or directory for a root of images.")
@click.option("--threshold", type=float, default=DEFAULT_SCORE_THRESHOLD, show_default=True,
              help="Minimum mask score to keep.")
@click.option("--format", "fmt", type=click.Choice(["png", "cdiy"]), default="png",
              show_default=True, help="Output format in directory mode.")
def aggregate_masks_cmd(mask_root, out_path, threshold, fmt):
    """Collapse scored instance masks into saliency maps.

    MASK_ROOT either holds one image's masks directly (binary PNGs plus a
    scores.txt, one score per line, paired by sorted filename) or one such
    subdirectory per image.  Images where every mask falls below the
    threshold get an all-zero map and a warning.
    """
    root = Path(mask_root)
    if (root / "scores.txt").is_file():
        jobs = [(root.name, root, Path(out_path))]
        single = True
    else:
        subdirs = sorted(p for p in root.iterdir() if p.is_dir())
        if not subdirs:
            raise click.UsageError(
                f"{root} holds neither a scores.txt nor per-image subdirectories"
            )
        out_dir = Path(out_path)
        out_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(sub.name, sub, out_dir / f"{sub.name}.{fmt}") for sub in subdirs]
        single = False

    failures = []
    for name, sub, target in jobs:
        try:
            mask_set = load_mask_directory(sub)
            sal = aggregate_instance_masks(mask_set, score_threshold=threshold)
        except Exception as exc:
            failures.append(name)
            click.echo(f"failed {name}: {exc}", err=True)
            continue
        if not sal.data.any():
            click.echo(
                f"warning: {name}: every mask scored below {threshold}; map is zero",
                err=True,
            )
        click.echo(str(_write_saliency_map(sal, target)))
    if failures:
        noun = "image" if single else "images"
        raise click.ClickException(f"{len(failures)} {noun} failed: {', '.join(failures)}")


if __name__ == "__main__":
    main()
