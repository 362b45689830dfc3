"""``sdsa`` command line: gen, train, eval, report."""
from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

import click

from .config import load_config
from .errors import SdsaError
from .ndmath import RngStream
from .pipeline.evaluate import METRIC_FIELDS, cross_region_matrix, summarize
from .pipeline.experiment import DATASET_KINDS, generate_dataset, region_test_sets, split_datasets
from .pipeline.io import atomic_dir, atomic_write_text, dump_json, load_dataset_dir, write_dataset
from .pipeline.persist import load_bundle, save_bundle
from .pipeline.train import train_five_step

METRICS_VERSION = 1
REPORT_TARGETS = ("ra", "rh", "yield")


def _fail(exc):
    raise click.ClickException(str(exc)) from exc


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for per-epoch losses.")
def main(verbose):
    """Region-aware knowledge-guided flux models: generate, train, evaluate, report."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(message)s")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config's base seed.")
def gen(config_path, out_dir, seed):
    """Write synthetic and observed datasets (static.csv, daily.csv, manifest.json)."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg = cfg.with_seed(seed)
        with atomic_dir(out_dir) as tmp:
            for kind in DATASET_KINDS:
                samples, targets, manifest = generate_dataset(cfg, kind)
                write_dataset(tmp / kind, samples, targets, manifest)
    except (SdsaError, OSError) as exc:
        _fail(exc)
    click.echo(f"wrote {out_dir}")


def _load_splits(cfg, data_dir):
    data_dir = Path(data_dir)
    loaded = [load_dataset_dir(data_dir / kind) for kind in DATASET_KINDS]
    return split_datasets(cfg, *loaded)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--level", required=True, type=click.Choice(["1", "2", "3"]))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def train(config_path, data_dir, level, out_dir):
    """Run the five-step protocol at one awareness level and save the bundle."""
    try:
        cfg = load_config(config_path)
        syn, obs = _load_splits(cfg, data_dir)
        bundle = train_five_step(cfg, syn, obs, int(level), RngStream(cfg.seed))
        save_bundle(bundle, out_dir)
    except (SdsaError, OSError) as exc:
        _fail(exc)
    click.echo(f"wrote {out_dir}")


def metrics_document(matrix):
    return {
        "format_version": METRICS_VERSION,
        "sources": matrix.sources,
        "regions": matrix.regions,
        "records": matrix.records(),
        "summary": summarize(matrix),
    }


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(file_okay=False))
@click.option("--bundle", "bundle_dirs", required=True, multiple=True, type=click.Path(file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=True))
def eval_(config_path, data_dir, bundle_dirs, out_path):
    """Evaluate bundles on every region's held-out observed samples."""
    try:
        cfg = load_config(config_path)
        _, obs = _load_splits(cfg, data_dir)
        bundles = [load_bundle(d) for d in bundle_dirs]
        matrix = cross_region_matrix(bundles, region_test_sets(obs, cfg.regions.names))
        atomic_write_text(out_path, dump_json(metrics_document(matrix)))
    except (SdsaError, OSError) as exc:
        _fail(exc)
    click.echo(f"wrote {out_path}")


def _read_metrics(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SdsaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format_version") != METRICS_VERSION:
        raise SdsaError(f"{path}: unsupported metrics format")
    recs = doc.get("records")
    if not recs:
        raise SdsaError(f"{path}: no metric records")
    for r in recs:
        missing = {"source", "test_region", *METRIC_FIELDS} - set(r)
        if missing:
            raise SdsaError(f"{path}: record lacks {sorted(missing)}")
    return doc


def report_csv(doc):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "test_region", "target", "mse"])
    for r in doc["records"]:
        for t in REPORT_TARGETS:
            v = r[f"mse_{t}"]
            w.writerow([r["source"], r["test_region"], t, "" if v is None else repr(float(v))])
    return buf.getvalue()


def report_markdown(doc):
    lines = ["# Same-region test MSE: region-specific vs pooled models", ""]
    regions = doc["regions"]
    sources = doc["sources"]
    lines.append("| source | " + " | ".join(f"{r} mse_ra | {r} mse_rh" for r in regions) + " |")
    lines.append("|---|" + "---|" * (2 * len(regions)))
    cells = {(r["source"], r["test_region"]): r for r in doc["records"]}
    for s in sources:
        row = []
        for reg in regions:
            c = cells.get((s, reg), {})
            row += [f"{c.get('mse_ra', float('nan')):.5f}", f"{c.get('mse_rh', float('nan')):.5f}"]
        lines.append(f"| {s} | " + " | ".join(row) + " |")
    lines += ["", "## Winner per region (lowest same-region mse_ra + mse_rh)", ""]
    for reg in regions:
        scored = [(cells[(s, reg)]["mse_ra"] + cells[(s, reg)]["mse_rh"], s) for s in sources
                  if (s, reg) in cells and cells[(s, reg)]["mse_ra"] is not None]
        if not scored:
            continue
        best = min(scored)[1]
        flags = (doc.get("summary") or {}).get(reg)
        note = ""
        if flags is not None:
            note = " (region model beats every pooled model)" if flags["beats_all_pooled"] else \
                " (region model does not beat every pooled model)"
        lines.append(f"- {reg}: {best}{note}")
    return "\n".join(lines) + "\n"


@main.command()
@click.option("--metrics", "metrics_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def report(metrics_path, out_dir):
    """Emit plot-ready CSV and a markdown summary from metrics.json."""
    try:
        doc = _read_metrics(metrics_path)
        csv_text, md_text = report_csv(doc), report_markdown(doc)
        with atomic_dir(out_dir) as tmp:
            (tmp / "mse_by_source_and_region.csv").write_text(csv_text)
            (tmp / "summary.md").write_text(md_text)
    except (SdsaError, OSError) as exc:
        _fail(exc)
    click.echo(f"wrote {out_dir}")


if __name__ == "__main__":
    main()
