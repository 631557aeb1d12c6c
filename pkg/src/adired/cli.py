"""Command-line surface for the region-discovery pipeline."""

from __future__ import annotations

import os

import click

from adired import backends as be
from adired import pipeline as pl
from adired import plots
from adired.dismap import dump_dismap_csv, make_dismap
from adired.regions import COARSE, FINE
from adired.svm import load_model as load_svm_model
from adired.svm import predict, save_model
from adired.svm import accuracy as accuracy_score


def _fail(exc):
    raise click.ClickException(str(exc))


def _load_config(path):
    try:
        return pl.load_config(path)
    except (pl.ConfigError, OSError, ValueError) as exc:
        _fail(exc)


def _ingest(manifest, root):
    try:
        return pl.ingest_dataset(manifest, root)
    except pl.ManifestError as exc:
        _fail(exc)


config_option = click.option(
    "--config", "config_path", required=True,
    type=click.Path(exists=True, dir_okay=False), help="YAML pipeline config.")
manifest_option = click.option(
    "--manifest", "manifest_path", required=True,
    type=click.Path(exists=True, dir_okay=False), help="Dataset manifest CSV.")
root_option = click.option(
    "--root", default=None, type=click.Path(file_okay=False),
    help="Dataset root (defaults to the manifest's directory).")


@click.group()
def main():
    """Adaptive discriminative-region pipeline for scene recognition."""


@main.command()
@manifest_option
@root_option
def ingest(manifest_path, root):
    """Validate a dataset manifest."""
    manifest = _ingest(manifest_path, root)
    labels = manifest.labels
    click.echo(f"{len(manifest.entries)} entries, {len(labels)} classes")
    for label in labels:
        n = sum(1 for e in manifest.entries if e.label == label)
        click.echo(f"  {label}: {n}")


@main.command("dismap-dump")
@config_option
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--label", default=None, help="Ground-truth label, if known.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--raw", is_flag=True, help="Dump the raw grid instead of the "
              "[0,255]-normalized one.")
def dismap_dump(config_path, image, label, out, raw):
    """Write an image's discriminative map as a CSV grid."""
    config = _load_config(config_path)
    try:
        disnet = be.load_model(config.model_paths["disnet"], "disnet")
        raster = be.load_image(image)
        acts, predicted, _ = be.disnet_forward(raster, disnet)
        dismap = make_dismap(acts, disnet.backend.classifier, label, predicted)
    except (KeyError, be.BackendError, OSError) as exc:
        _fail(exc)
    dump_dismap_csv(dismap, out, which="raw" if raw else "normalized")
    click.echo(f"class {dismap.class_used} ({dismap.class_source}) -> {out}")


@main.command("select-regions")
@config_option
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--label", default=None)
def select_regions_cmd(config_path, image, label):
    """Print the selected patches for one image."""
    config = _load_config(config_path)
    try:
        loaded = pl.load_backends(config)
        raster = be.load_image(image)
        regions = pl.regions_for_image(raster, os.path.basename(image), label,
                                       config, loaded)
    except (pl.ConfigError, be.BackendError, OSError) as exc:
        _fail(exc)
    click.echo("scale,left,top,side,score")
    for patch in regions.patches:
        click.echo(f"{patch.scale},{patch.left},{patch.top},"
                   f"{patch.side},{patch.score:.4f}")


@main.command("dump-patches")
@config_option
@manifest_option
@root_option
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--max-images", default=None, type=int)
def dump_patches(config_path, manifest_path, root, out_dir, max_images):
    """Write selected patch crops as PNGs plus an index CSV."""
    config = _load_config(config_path)
    manifest = _ingest(manifest_path, root)
    try:
        rows = pl.dump_patches(config, manifest, out_dir, max_images)
    except (pl.ConfigError, be.BackendError) as exc:
        _fail(exc)
    click.echo(f"wrote {len(rows)} patches to {out_dir}")


@main.command()
@config_option
@manifest_option
@root_option
def features(config_path, manifest_path, root):
    """Build (or resume) the feature cache for a manifest."""
    config = _load_config(config_path)
    if not config.cache_dir:
        _fail("config has no cache_dir (or set " + pl.CACHE_ENV_VAR + ")")
    manifest = _ingest(manifest_path, root)
    try:
        feats, _ = pl.materialize_features(config, manifest)
    except (pl.ConfigError, be.BackendError) as exc:
        _fail(exc)
    dim = len(next(iter(feats.values())))
    click.echo(f"cached {len(feats)} representations (dim {dim}) "
               f"under {config.cache_dir}")


@main.command("train")
@config_option
@manifest_option
@root_option
@click.option("--model-out", required=True, type=click.Path(dir_okay=False))
@click.option("--split", default="train", show_default=True)
def train_cmd(config_path, manifest_path, root, model_out, split):
    """Train the one-vs-rest linear SVM and save it."""
    from adired.svm import train as train_svm  # noqa: PLC0415

    config = _load_config(config_path)
    manifest = _ingest(manifest_path, root)
    try:
        feats, _ = pl.materialize_features(config, manifest)
        entries = manifest.for_split(split)
        if not entries:
            _fail(f"no rows with split {split!r}")
        model = train_svm([(feats[e.relative_path], e.label) for e in entries],
                          config.svm)
    except (pl.ConfigError, be.BackendError, ValueError) as exc:
        _fail(exc)
    save_model(model, model_out)
    click.echo(f"trained {len(model.class_labels)} classes -> {model_out}")


@main.command()
@config_option
@manifest_option
@root_option
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--split", default="test", show_default=True)
def evaluate(config_path, manifest_path, root, model_path, split):
    """Score a saved model on a split."""
    config = _load_config(config_path)
    manifest = _ingest(manifest_path, root)
    try:
        feats, _ = pl.materialize_features(config, manifest)
        model = load_svm_model(model_path)
        entries = manifest.for_split(split)
        if not entries:
            _fail(f"no rows with split {split!r}")
        preds = [predict(model, feats[e.relative_path]) for e in entries]
        acc = accuracy_score(preds, [e.label for e in entries])
    except (pl.ConfigError, be.BackendError, ValueError) as exc:
        _fail(exc)
    click.echo(f"accuracy: {acc:.4f} ({len(entries)} images)")


@main.command("run")
@config_option
@manifest_option
@root_option
@click.option("--report", "report_path", default=None,
              type=click.Path(dir_okay=False), help="Write a report CSV.")
def run(config_path, manifest_path, root, report_path):
    """Full experiment: features, training, and test accuracy."""
    config = _load_config(config_path)
    manifest = _ingest(manifest_path, root)
    try:
        report = pl.run_experiment(config, manifest, report_path)
    except (pl.ConfigError, pl.ManifestError, be.BackendError, ValueError) as exc:
        _fail(exc)
    click.echo(f"mode={report.mode} accuracy={report.accuracy:.4f} "
               f"avg_patches={report.avg_patches_per_image:.4f}")


@main.command()
@config_option
@manifest_option
@root_option
@click.option("--mode", required=True, type=click.Choice(["dense", "random"]))
@click.option("--report", "report_path", default=None,
              type=click.Path(dir_okay=False))
def baseline(config_path, manifest_path, root, mode, report_path):
    """Run the fixed-count dense or random sampling baseline."""
    from dataclasses import replace  # noqa: PLC0415

    config = replace(_load_config(config_path), mode=mode)
    manifest = _ingest(manifest_path, root)
    try:
        report = pl.run_experiment(config, manifest, report_path)
    except (pl.ConfigError, pl.ManifestError, be.BackendError, ValueError) as exc:
        _fail(exc)
    click.echo(f"mode={report.mode} accuracy={report.accuracy:.4f} "
               f"avg_patches={report.avg_patches_per_image:.4f}")


@main.command("sweep-threshold")
@config_option
@manifest_option
@root_option
@click.option("--thresholds", required=True,
              help="Comma-separated T values, e.g. 0,50,100,150,200,250.")
@click.option("--out", "out_csv", required=True, type=click.Path(dir_okay=False))
@click.option("--figure", default=None, type=click.Path(dir_okay=False),
              help="Also render a PNG (default: <out>.png).")
def sweep_threshold(config_path, manifest_path, root, thresholds, out_csv, figure):
    """Accuracy and avg regions/image across selection thresholds."""
    config = _load_config(config_path)
    manifest = _ingest(manifest_path, root)
    try:
        t_values = [float(t) for t in thresholds.split(",") if t.strip()]
    except ValueError as exc:
        _fail(f"bad --thresholds: {exc}")
    try:
        rows = pl.sweep_threshold(config, manifest, t_values, out_csv)
    except (pl.ConfigError, pl.ManifestError, be.BackendError, ValueError) as exc:
        _fail(exc)
    fig_path = figure or out_csv + ".png"
    plots.plot_threshold_sweep(rows, fig_path)
    click.echo(f"wrote {out_csv} and {fig_path}")


@main.command("class-stats")
@config_option
@manifest_option
@root_option
@click.option("--out", "out_csv", required=True, type=click.Path(dir_okay=False))
@click.option("--figure", default=None, type=click.Path(dir_okay=False))
def class_stats(config_path, manifest_path, root, out_csv, figure):
    """Per-class mean region counts, as CSV and a bar chart."""
    config = _load_config(config_path)
    manifest = _ingest(manifest_path, root)
    try:
        rows = pl.per_class_region_stats(config, manifest, out_csv)
    except (pl.ConfigError, be.BackendError) as exc:
        _fail(exc)
    fig_path = figure or out_csv + ".png"
    plots.plot_class_region_stats(rows, fig_path)
    click.echo(f"wrote {out_csv} and {fig_path}")


@main.command("make-synthetic")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--images-per-class", default=50, show_default=True,
              help="Per class per split.")
@click.option("--seed", default=20240801, show_default=True)
def make_synthetic(out_dir, images_per_class, seed):
    """Generate the bundled 4-class planted-motif dataset."""
    from adired.synthetic import make_dataset  # noqa: PLC0415

    manifest = make_dataset(out_dir, images_per_class, seed)
    click.echo(f"wrote {manifest}")


if __name__ == "__main__":
    main()
