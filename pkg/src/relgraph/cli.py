"""Command-line entry point: ``relgraph <subcommand>``.

Errors are reported as one JSON object on stderr with a distinct exit code:
2 usage, 3 malformed input file, 4 infeasible parameters, 5 numerical or
training failure, 1 anything else.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import analyze as an
from .extract import ExtractError, edge_strengths, threshold_sweep
from .flops import CnnTemplate, FlopsError, MlpTemplate, match_width_staged, match_width_uniform, reference_budget, spec_flops
from .generators import GeneratorParams, SweepConfig, generate as make_graph, sweep as run_sweep
from .graph import GraphError, load_graph, save_graph
from .measures import CSV_COLUMNS, MeasureError, csv_row, measure_all, parse_csv_value
from .nn import TrainConfig, TrainingDiverged, TrainingError, init, save_weights, load_weights, train as train_model
from .sampler import BinSpec, subsample_every_ninth, subsample_one_per_bin
from .translate import relational_cnn_flops_spec, relational_mlp_spec, spec_from_dict

EXIT_USAGE = 2
EXIT_MALFORMED = 3
EXIT_INFEASIBLE = 4
EXIT_NUMERIC = 5


class MalformedInput(Exception):
    pass


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedInput(f"{path}: {exc}") from None


def _load_graph(path):
    try:
        return load_graph(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedInput(f"{path}: {exc}") from None


def _load_toml(path):
    import tomli

    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise MalformedInput(f"{path}: {exc}") from None


def _emit(obj, output):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        click.echo(text, nl=False)


def _graph_files(path: Path) -> list[Path]:
    return sorted(path.glob("*.json")) if path.is_dir() else [path]


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Relational-graph design-space toolkit."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@cli.command()
@click.option("--family", required=True, type=click.Choice(["ws_flex", "ws", "er", "ba", "harary", "ring", "complete"]))
@click.option("--n", "n", required=True, type=int)
@click.option("--k", type=float, help="Average degree (ws_flex, ring) or degree (ws).")
@click.option("--m", type=int, help="Edge count (er, harary) or attachment count (ba).")
@click.option("--p", type=float, help="Rewiring probability.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Write graph JSON here instead of stdout.")
def generate(family, n, k, m, p, seed, output):
    """Generate one graph."""
    if family == "ws" and k is not None:
        k = int(k) if float(k).is_integer() else k
    params = GeneratorParams(family, n, k, p if p is not None else (0.0 if family in ("ws", "ws_flex") else None), m, seed)
    g = make_graph(params)
    if output:
        save_graph(g, output)
    else:
        click.echo(g.to_json())


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
@click.option("--measures/--no-measures", default=False, help="Also write measures.csv for generated graphs.")
@click.option("--jobs", type=int, default=None, help="Worker processes (default: CPU count).")
def sweep(config_path, output, measures, jobs):
    """Run a parameter sweep; one JSON file per graph plus a sweep.jsonl manifest."""
    raw = _load_toml(config_path)
    config = SweepConfig.from_dict(raw.get("sweep", raw))
    out = Path(output)
    out.mkdir(parents=True, exist_ok=True)
    writer = None
    mfh = None
    if measures:
        mfh = open(out / "measures.csv", "w", newline="")
        writer = csv.DictWriter(mfh, CSV_COLUMNS)
        writer.writeheader()
    kept = skipped = 0
    with open(out / "sweep.jsonl", "w") as manifest:
        for item in run_sweep(config, jobs=jobs or os.cpu_count() or 1):
            rec = item.record()
            gid = f"{config.family}-" + "-".join(map(str, item.index))
            rec["graph_id"] = gid
            manifest.write(json.dumps(rec, sort_keys=True) + "\n")
            if item.graph is None:
                skipped += 1
                continue
            kept += 1
            save_graph(item.graph, out / f"{gid}.json")
            if writer is not None:
                writer.writerow(csv_row(gid, item.graph, measure_all(item.graph)))
    if mfh is not None:
        mfh.close()
    click.echo(json.dumps({"graphs": kept, "skipped": skipped, "total": kept + skipped}))


@cli.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Measures CSV (default stdout).")
def measure(path, output):
    """Measure one graph JSON file or every *.json in a directory."""
    fh = open(output, "w", newline="") if output else sys.stdout
    try:
        writer = csv.DictWriter(fh, CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for f in _graph_files(Path(path)):
            g = _load_graph(f)
            writer.writerow(csv_row(f.stem, g, measure_all(g)))
    finally:
        if output:
            fh.close()


def _read_measures_csv(path):
    rows = []
    try:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append((row["graph_id"], parse_csv_value(row["L"]), float(row["C"])))
    except (OSError, KeyError, ValueError) as exc:
        raise MalformedInput(f"{path}: {exc}") from None
    return rows


@cli.command()
@click.option("--measures", "measures_csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--graphs", "graph_dir", type=click.Path(exists=True, file_okay=False), help="Graph directory (checked for presence).")
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--every-ninth", is_flag=True, help="Further keep bins with row and column index = 5 mod 9.")
def sample(measures_csv, graph_dir, output, seed, every_ninth):
    """One graph per (L, C) bin of the 135x135 grid; writes selected.txt and bins.csv."""
    rows = _read_measures_csv(measures_csv)
    if graph_dir:
        missing = [gid for gid, *_ in rows if not (Path(graph_dir) / f"{gid}.json").exists()]
        if missing:
            raise MalformedInput(f"{len(missing)} graphs listed in {measures_csv} missing from {graph_dir}, e.g. {missing[0]}")
    entries = [(gid, (L, C)) for gid, L, C in rows if L is not None]
    binned = subsample_one_per_bin(entries, BinSpec.appendix(), seed)
    if every_ninth:
        binned = subsample_every_ninth(binned)
    out = Path(output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "selected.txt").write_text("".join(f"{b.item}\n" for b in binned))
    with open(out / "bins.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["li", "ci", "graph_id", "L", "C"])
        for b in binned:
            w.writerow([b.li, b.ci, b.item, repr(b.L), repr(b.C)])
    click.echo(json.dumps({"selected": len(binned), "candidates": len(rows)}))


def _cnn_options(f):
    opts = [
        click.option("--stage-widths", default="64,128,256", show_default=True),
        click.option("--stage-depths", default="2,2,2", show_default=True),
        click.option("--spatial", default="28,14,7", show_default=True, help="Side length per stage."),
        click.option("--kernel-area", type=int, default=9, show_default=True),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _ints(text):
    return tuple(int(v) for v in text.split(","))


@cli.command()
@click.argument("graph_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--input-dim", type=int, default=3072, show_default=True)
@click.option("--hidden-dim", type=int, default=512, show_default=True)
@click.option("--hidden-layers", type=int, default=5, show_default=True)
@click.option("--output-dim", type=int, default=10, show_default=True)
@click.option("--cnn", is_flag=True, help="Build the convolutional FLOPS-accounting spec instead.")
@_cnn_options
@click.option("-o", "--output", type=click.Path(dir_okay=False))
def translate(graph_path, input_dim, hidden_dim, hidden_layers, output_dim, cnn, stage_widths, stage_depths, spatial, kernel_area, output):
    """Translate a graph into a NetworkSpec JSON."""
    g = _load_graph(graph_path)
    if cnn:
        spec = relational_cnn_flops_spec(g, _ints(stage_widths), _ints(stage_depths), kernel_area, _ints(spatial))
    else:
        spec = relational_mlp_spec(g, input_dim, hidden_dim, hidden_layers, output_dim)
    d = spec.to_dict()
    d["flops"] = spec_flops(spec)
    _emit(d, output)


@cli.command("flops-match")
@click.argument("graph_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--template", type=click.Choice(["mlp", "cnn"]), default="mlp", show_default=True)
@click.option("--input-dim", type=int, default=3072, show_default=True)
@click.option("--hidden-dim", type=int, default=512, show_default=True)
@click.option("--hidden-layers", type=int, default=5, show_default=True)
@click.option("--output-dim", type=int, default=10, show_default=True)
@_cnn_options
@click.option("--reference", type=int, help="Reference FLOPS (default: complete-graph baseline of the template).")
@click.option("--tolerance", type=float, default=0.005, show_default=True)
@click.option("--staged/--uniform", default=None, help="Matching scheme (default: staged for cnn, uniform for mlp).")
@click.option("-o", "--output", type=click.Path(dir_okay=False))
def flops_match(graph_path, template, input_dim, hidden_dim, hidden_layers, output_dim, stage_widths, stage_depths, spatial, kernel_area, reference, tolerance, staged, output):
    """Find layer width(s) matching a FLOPS budget."""
    from .flops import FlopsBudget

    g = _load_graph(graph_path)
    if template == "mlp":
        arch = MlpTemplate(input_dim, hidden_dim, hidden_layers, output_dim)
    else:
        arch = CnnTemplate(_ints(stage_widths), _ints(stage_depths), kernel_area, _ints(spatial))
    budget = FlopsBudget(reference, tolerance) if reference else reference_budget(arch, tolerance=tolerance)
    staged = template == "cnn" if staged is None else staged
    result = match_width_staged(g, budget, None, arch) if staged else match_width_uniform(g, budget, arch)
    d = result.to_dict()
    d["reference"] = budget.reference
    _emit(d, output)


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), help="CSV or binary dataset; default is the synthetic mixing task.")
@click.option("--epochs", type=int, default=10, show_default=True)
@click.option("--batch-size", type=int, default=128, show_default=True)
@click.option("--lr", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--no-bn", is_flag=True, help="Disable BatchNorm.")
@click.option("--val-fraction", type=float, default=0.25, show_default=True)
@click.option("--graph-id", default=None)
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False), help="Records JSONL (appended).")
@click.option("--weights", type=click.Path(dir_okay=False), help="Weights dump (.npz).")
def train(spec_path, data_path, epochs, batch_size, lr, seed, no_bn, val_fraction, graph_id, output, weights):
    """Train a masked MLP from a spec JSON."""
    from .data import load_dataset, mixing_task

    try:
        spec = spec_from_dict(_read_json(spec_path))
    except KeyError as exc:
        raise MalformedInput(f"{spec_path}: missing field {exc}") from None
    if data_path:
        try:
            ds = load_dataset(data_path, val_fraction, seed)
        except (OSError, ValueError, IndexError) as exc:
            raise MalformedInput(f"{data_path}: {exc}") from None
    else:
        ds = mixing_task(features=spec.widths[0], classes=spec.widths[-1], val_fraction=val_fraction, seed=seed)
    if ds.input_dim != spec.widths[0] or ds.classes != spec.widths[-1]:
        raise MalformedInput(f"dataset shape ({ds.input_dim} features, {ds.classes} classes) does not match spec widths {spec.widths}")
    config = TrainConfig(epochs, batch_size, lr, seed, not no_bn)
    model = init(spec, seed, normalization=config.normalization)
    measures = measure_all(spec.graph) if spec.graph.n >= 2 else None
    gid = graph_id or Path(spec_path).stem
    try:
        model, record = train_model(model, ds, config, gid, measures, spec.widths[1], spec_flops(spec))
    except TrainingDiverged as exc:
        with open(output, "a") as fh:
            fh.write(json.dumps(exc.record.to_dict(), sort_keys=True) + "\n")
        raise
    with open(output, "a") as fh:
        fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
    if weights:
        save_weights(model, weights)
    click.echo(json.dumps({"graph_id": gid, "final_error": record.final_error}))


def _read_records(path):
    records = []
    try:
        for line in Path(path).read_text().splitlines():
            if line.strip():
                records.append(an.ExperimentRecord.from_dict(json.loads(line)))
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedInput(f"{path}: {exc}") from None
    return records


@cli.command()
@click.argument("records_path", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
@click.option("--l-bins", type=int, default=5, show_default=True)
@click.option("--c-bins", type=int, default=5, show_default=True)
@click.option("--alpha", type=float, default=0.05, show_default=True)
@click.option("--curve-epoch", type=int, default=3, show_default=True)
@click.option("--heatmap-csv", type=click.Path(dir_okay=False), help="Also write a dense plot-ready grid.")
def analyze(records_path, output, l_bins, c_bins, alpha, curve_epoch, heatmap_csv):
    """Bins CSV, sweet-spot JSON and correlations JSON from records JSONL."""
    from .pipeline import write_analysis

    records = _read_records(records_path)
    paths = write_analysis(records, output, {"l_bins": l_bins, "c_bins": c_bins, "alpha": alpha, "curve_epoch": curve_epoch}, heatmap_csv)
    click.echo(json.dumps(paths, sort_keys=True))


@cli.command()
@click.argument("weights_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--n", "n", required=True, type=int, help="Number of nodes to group dimensions into.")
@click.option("--thresholds", required=True, help="Comma-separated ascending thresholds.")
@click.option("--normalized", is_flag=True, help="Divide block norms by block size.")
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
def extract(weights_path, n, thresholds, normalized, output):
    """Extract graphs from a weights dump at several thresholds."""
    try:
        model = load_weights(weights_path)
    except (OSError, ValueError, KeyError) as exc:
        raise MalformedInput(f"{weights_path}: {exc}") from None
    ts = [float(t) for t in thresholds.split(",")]
    strengths = edge_strengths(model, n, normalized=normalized)
    results = threshold_sweep(strengths, ts)
    out = Path(output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "graphs.json").write_text(
        json.dumps([{"threshold": t, **g.to_dict()} for t, g, _ in results], sort_keys=True) + "\n"
    )
    with open(out / "measures.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, ["threshold"] + CSV_COLUMNS)
        writer.writeheader()
        for t, g, m in results:
            writer.writerow({"threshold": repr(t), **csv_row(f"t{t}", g, m)})
    np.save(out / "strengths.npy", strengths.matrix)
    click.echo(json.dumps({"thresholds": len(results), "edges": [g.num_edges for _, g, _ in results]}))


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="TOML config; defaults to the bundled demo.")
@click.option("-o", "--output", required=True, type=click.Path(file_okay=False))
@click.option("--jobs", type=int, default=None, help="Parallel training jobs (default: CPU count).")
def pipeline(config_path, output, jobs):
    """Run the whole desk experiment."""
    from .pipeline import load_config, run_pipeline

    if config_path:
        _load_toml(config_path)
    cfg = load_config(config_path)
    paths = run_pipeline(cfg, output, jobs)
    click.echo(json.dumps(paths, sort_keys=True))


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def run(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="relgraph", standalone_mode=False, auto_envvar_prefix="RELGRAPH")
    except click.exceptions.Abort:
        return _fail(1, "aborted", "aborted")
    except click.UsageError as exc:
        return _fail(EXIT_USAGE, "usage", exc.format_message())
    except click.ClickException as exc:
        return _fail(EXIT_USAGE, "usage", exc.format_message())
    except MalformedInput as exc:
        return _fail(EXIT_MALFORMED, "malformed_input", str(exc))
    except (MeasureError, TrainingError, an.AnalysisError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, type(exc).__name__, str(exc))
    except (GraphError, FlopsError, ExtractError) as exc:
        return _fail(EXIT_INFEASIBLE, type(exc).__name__, str(exc))
    except Exception as exc:  # noqa: BLE001
        return _fail(1, type(exc).__name__, str(exc))
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
