"""Command-line interface.

Every verb is a thin wrapper over the library: generate synthetic cities,
validate and featurize datasets, compose batches, move labeling sheets in and
out, audit labels, train/predict/evaluate, and serve the HTTP API.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .. import audit as audit_mod
from ..config import AppConfig, load_config
from ..domain import (
    Dataset,
    FEATURE_NAMES,
    LabelRecord,
    LabelValue,
    ParcelKind,
    effective_labels,
    stable_seed,
)
from ..errors import VadTriageError
from ..evaluate import (
    SensitivityThresholds,
    content_sensitivity,
    external_consensus,
    equity_probe,
    pool_median_value,
)
from ..features import candidate_filter
from ..forest import Forest, fit_forest, oob_score, cross_validate
from ..ingest import export_features_csv, load_dataset
from ..sampler import MixConfig, SamplingBatch, compose_batch
from ..synth import CityConfig, generate_city, write_city_csv
from .core import SessionManager, load_session_dataset


@click.group()
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file (see README for keys).")
@click.pass_context
def main(ctx, seed, config_path):
    """Human-in-the-loop triage engine for VAD parcels."""
    ctx.obj = load_config(config_path, seed)


def _load(data_dir: str, cfg: AppConfig) -> Dataset:
    return load_session_dataset(data_dir, cfg)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True), encoding="utf-8")
    click.echo(f"wrote {path}")


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--n-parcels", default=5000, show_default=True)
@click.option("--n-neighborhoods", default=20, show_default=True)
@click.option("--reporting-bias", default=0.0, show_default=True)
@click.option("--vad-base-rate", default=0.15, show_default=True)
@click.pass_obj
def synth(cfg, out, n_parcels, n_neighborhoods, reporting_bias, vad_base_rate):
    """Generate a synthetic municipality (CSV schemas + hidden ground truth)."""
    city = CityConfig(
        n_parcels=n_parcels,
        n_neighborhoods=n_neighborhoods,
        reporting_bias=reporting_bias,
        vad_base_rate=vad_base_rate,
        seed=cfg.seed,
    )
    ds, truth = generate_city(city)
    write_city_csv(ds, truth, out)
    click.echo(f"wrote {out}: {len(ds.parcels)} parcels, {len(ds.incidents)} incidents")


@main.command()
@click.option("--parcels", required=True, type=click.Path(exists=True))
@click.option("--incidents", required=True, type=click.Path(exists=True))
@click.option("--stats", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None, help="Write the ingest report here.")
@click.pass_obj
def ingest(cfg, parcels, incidents, stats, out):
    """Validate a parcel/incident CSV pair and report rejects."""
    ds, report = load_dataset(parcels, incidents, stats, study_window=cfg.study_window)
    summary = {
        "parcels": len(ds.parcels),
        "incidents_accepted": report.n_accepted,
        "unresolved": report.unresolved,
        "out_of_window": report.out_of_window,
    }
    if out:
        _write_json(out, summary)
    else:
        click.echo(json.dumps(summary, indent=2))


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--pool-only/--all-parcels", default=True, show_default=True)
@click.pass_obj
def features(cfg, data, out, pool_only):
    """Compute the seven features and export them as CSV."""
    ds = _load(data, cfg)
    ids = candidate_filter(ds, cfg.filter) if pool_only else None
    export_features_csv(ds, out, ids)
    click.echo(f"wrote {out}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--n", required=True, type=int)
@click.option("--mix", default="0.5,0,0.5", show_default=True,
              help="random,uncertainty,diversity fractions.")
@click.option("--model", type=click.Path(exists=True), default=None,
              help="Forest JSON for uncertainty sampling.")
@click.option("--out", required=True, type=click.Path())
@click.option("--round", "round_no", default=1, show_default=True)
@click.pass_obj
def sample(cfg, data, n, mix, model, out, round_no):
    """Compose a labeling batch from the candidate pool."""
    ds = _load(data, cfg)
    pool = candidate_filter(ds, cfg.filter)
    r, u, d = (float(v) for v in mix.split(","))
    forest = Forest.from_json(Path(model).read_text()) if model else None
    batch = compose_batch(pool, ds, forest, n, MixConfig(r, u, d),
                          seed=stable_seed(cfg.seed, "cli-batch", round_no),
                          round_no=round_no)
    _write_json(out, batch.to_dict())
    batch.write_csv(Path(out).with_suffix(".csv"))


@main.command("export-sheet")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--batch", "batch_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.pass_obj
def export_sheet_cmd(cfg, data, batch_path, out):
    """Write the transposed labeling sheet for a batch."""
    from .sheets import export_sheet

    ds = _load(data, cfg)
    batch = SamplingBatch.from_dict(json.loads(Path(batch_path).read_text()))
    export_sheet(batch.parcel_ids, ds, path=out)
    click.echo(f"wrote {out} ({len(batch.parcel_ids)} parcel columns)")


@main.command("import-sheet")
@click.option("--sheet", required=True, type=click.Path(exists=True))
@click.option("--annotator", required=True)
@click.option("--round", "round_no", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
def import_sheet_cmd(sheet, annotator, round_no, out):
    """Parse a filled labeling sheet into label records."""
    from .sheets import import_sheet

    records = import_sheet(sheet, annotator, round_no)
    _write_json(out, [r.to_dict() for r in records])
    click.echo(f"{len(records)} labels")


def _read_labels(path) -> list[LabelRecord]:
    return [LabelRecord.from_dict(d) for d in json.loads(Path(path).read_text())]


def _kind_rows(ds: Dataset, labels: dict[str, LabelValue], kind: ParcelKind):
    ids = sorted(p for p in labels if p in ds.parcels and ds.parcels[p].kind is kind)
    X = ds.feature_matrix(ids)
    y = np.array([labels[p] is LabelValue.VAD for p in ids])
    return ids, X, y


@main.command("audit")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.pass_obj
def audit_cmd(cfg, data, labels_path, out):
    """Flag isolated labels and near-duplicate disagreements."""
    ds = _load(data, cfg)
    labels = effective_labels(_read_labels(labels_path))
    conflicts = []
    trees = {}
    for kind in (ParcelKind.LAND, ParcelKind.STRUCTURE):
        ids, X, y = _kind_rows(ds, labels, kind)
        if len(ids) < 2 or len(np.unique(y)) < 2:
            continue
        tree = audit_mod.fit_audit_tree(X, y)
        trees[kind.value] = audit_mod.export_tree(tree)
        conflicts.extend(audit_mod.flag_isolated_labels(tree, X, y, ids, cfg.audit))
    feats = {p: ds.features[p].as_array() for p in labels if p in ds.features}
    conflicts.extend(audit_mod.flag_disagreements(
        {p: v for p, v in labels.items() if p in feats}, feats, cfg.audit))
    _write_json(out, {
        "conflicts": [c.to_dict() for c in conflicts],
        "audit_trees": trees,
    })
    click.echo(f"{len(conflicts)} conflicts flagged")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.pass_obj
def train(cfg, data, labels_path, out_dir):
    """Train per-kind forests on effective labels; write forests + metrics."""
    ds = _load(data, cfg)
    labels = effective_labels(_read_labels(labels_path))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics = {}
    for kind in (ParcelKind.LAND, ParcelKind.STRUCTURE):
        ids, X, y = _kind_rows(ds, labels, kind)
        if not ids:
            continue
        seed = stable_seed(cfg.seed, "cli-train", kind.value)
        forest = fit_forest(X, y, cfg.forest, seed=seed, kind=kind.value)
        (out / f"forest-{kind.value}.json").write_text(forest.to_json())
        entry = {"n_rows": len(ids), "n_vad": int(y.sum()), "oob": oob_score(forest, y)}
        if cfg.cv_at_retrain:
            entry["cv"] = cross_validate(X, y, cfg.forest, k=cfg.cv_folds, seed=seed).to_dict()
        metrics[kind.value] = entry
    _write_json(out / "metrics.json", metrics)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--model-dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.pass_obj
def predict(cfg, data, model_dir, out):
    """Score the candidate pool with trained forests; write CSV."""
    import csv as csv_mod

    ds = _load(data, cfg)
    pool = sorted(candidate_filter(ds, cfg.filter))
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv_mod.writer(fh)
        writer.writerow(["parcel_id", "kind", "proba", "label"])
        for kind in (ParcelKind.LAND, ParcelKind.STRUCTURE):
            path = Path(model_dir) / f"forest-{kind.value}.json"
            if not path.exists():
                continue
            forest = Forest.from_json(path.read_text())
            ids = [p for p in pool if ds.parcels[p].kind is kind]
            if not ids:
                continue
            proba = forest.predict_proba(ds.feature_matrix(ids))
            for pid, p in zip(ids, proba):
                label = "VAD" if p >= cfg.classification_threshold else "NotVAD"
                writer.writerow([pid, kind.value, f"{p:.6f}", label])
    click.echo(f"wrote {out}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--validation", "validations", multiple=True,
              help="name=ids.json, repeatable.")
@click.option("--out", type=click.Path(), default=None)
@click.pass_obj
def evaluate(cfg, data, pred_path, validations, out):
    """Consensus + content sensitivity for one prediction set."""
    import csv as csv_mod

    ds = _load(data, cfg)
    pool = candidate_filter(ds, cfg.filter)
    predicted = set()
    with open(pred_path, newline="", encoding="utf-8") as fh:
        for row in csv_mod.DictReader(fh):
            if row["label"] == "VAD":
                predicted.add(row["parcel_id"])
    low = cfg.low_value_threshold
    if low == "pool_median":
        low = pool_median_value(ds.features, pool)
    result = {
        "output_count": len(predicted),
        "content_sensitivity": content_sensitivity(
            predicted, ds.features, SensitivityThresholds(low_value_threshold=float(low))),
        "consensus": {},
    }
    for spec_item in validations:
        name, _, path = spec_item.partition("=")
        ids = set(json.loads(Path(path).read_text()))
        result["consensus"][name] = 100.0 * external_consensus(predicted, ids)
    if ds.neighborhood_stats:
        result["equity_probe"] = equity_probe(ds.neighborhood_stats).to_dict()
    if out:
        _write_json(out, result)
    else:
        click.echo(json.dumps(result, indent=2, sort_keys=True))


@main.command("plot-data")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--kind", type=click.Choice(["Land", "Structure"]), default="Structure",
              show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--pd-features", default="", help="Comma-separated feature names "
              "for partial dependence (default: all seven).")
@click.pass_obj
def plot_data(cfg, data, labels_path, kind, out_dir, pd_features):
    """Emit ready-to-plot tables: drop-column importance and PD curves."""
    from ..interpret import (
        default_feature_groups,
        drop_column_importance,
        partial_dependence,
        write_curve_csv,
        write_importance_csv,
    )

    ds = _load(data, cfg)
    labels = effective_labels(_read_labels(labels_path))
    ids, X, y = _kind_rows(ds, labels, ParcelKind(kind))
    if not ids:
        raise click.ClickException(f"no labeled {kind} parcels")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    report = drop_column_importance(X, y, cfg.forest, default_feature_groups(),
                                    seed=cfg.seed, k=cfg.cv_folds)
    write_importance_csv(report, out / "importance.csv")
    _write_json(out / "importance.json", report.to_dict())

    wanted = [f.strip() for f in pd_features.split(",") if f.strip()] or list(FEATURE_NAMES)
    forest = fit_forest(X, y, cfg.forest, seed=stable_seed(cfg.seed, "plot-data", kind))
    curves = []
    for name in wanted:
        curve = partial_dependence(forest, X, FEATURE_NAMES.index(name))
        write_curve_csv(curve, out / f"pd_{name}.csv")
        curves.append(curve.to_dict())
    _write_json(out / "partial_dependence.json", curves)
    click.echo(f"wrote importance + {len(curves)} PD curves to {out}")


@main.command()
@click.option("--sessions", "sessions_root", required=True, type=click.Path(exists=True))
@click.option("--session-id", required=True)
@click.option("--out", type=click.Path(), default=None)
@click.option("--csv-dir", type=click.Path(), default=None,
              help="Also write one CSV per metric family here.")
@click.option("--text/--json", "as_text", default=True, show_default=True)
def compare(sessions_root, session_id, out, csv_dir, as_text):
    """Render a session's full method-comparison report."""
    manager = SessionManager(sessions_root)
    session = manager.get(session_id)
    report = session.get_report()
    if out:
        Path(out).write_text(report.to_json(), encoding="utf-8")
        click.echo(f"wrote {out}")
    if csv_dir:
        report.write_csv_files(csv_dir)
        click.echo(f"wrote metric-family CSVs to {csv_dir}")
    if as_text:
        click.echo(report.to_text())


@main.command()
@click.option("--sessions", "sessions_root", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Directory of built console assets to serve at /ui.")
def serve(sessions_root, host, port, static_dir):
    """Run the HTTP API (and optionally the labeling console)."""
    import uvicorn

    from .api import create_app

    app = create_app(sessions_root, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


def entrypoint():  # pragma: no cover - console-script shim
    try:
        main()
    except VadTriageError as exc:
        click.echo(f"error [{exc.code}]: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
