"""End-to-end desk experiment: generate -> measure -> sample -> match -> train -> analyze."""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli

from . import analyze as an
from .data import load_dataset, mixing_task
from .flops import MlpTemplate, match_width_uniform, reference_budget
from .generators import SweepConfig, complete, sweep
from .graph import Graph, new_graph, save_graph
from .measures import measure_all, path_length_and_clustering
from .nn import TrainConfig, init, train
from .sampler import BinSpec, coarse_geometry, subsample_one_per_bin

log = logging.getLogger(__name__)

DEFAULTS = {
    "seed": 0,
    "generate": {
        "family": "ws_flex",
        "n": 16,
        "k": {"start": 2.0, "stop": 15.0, "count": 40},
        "p": {"start": 0.0, "stop": 1.0, "count": 30, "transform": "square"},
        "seeds": 2,
    },
    "sample": {"graphs": 30, "l_bins": 30, "c_bins": 30, "l_range": [1.0, 4.0], "c_range": [0.0, 1.0], "controls": True},
    "dataset": {"kind": "mixing", "samples": 4000, "features": 12, "groups": 3, "classes": 2, "val_fraction": 0.25},
    "model": {"hidden_dim": 64, "hidden_layers": 3},
    "train": {"epochs": 20, "batch_size": 64, "initial_lr": 0.1, "seeds": 3, "normalization": True},
    "analyze": {"l_bins": 5, "c_bins": 5, "alpha": 0.05, "curve_epoch": 3},
}


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if path is not None:
        with open(path, "rb") as fh:
            user = tomli.load(fh)
        _merge(cfg, user)
    if overrides:
        _merge(cfg, overrides)
    return cfg


def _merge(base: dict, extra: dict) -> None:
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict) and key not in ("k", "p", "m"):
            _merge(base[key], val)
        else:
            base[key] = val


def build_dataset(cfg: dict, seed: int):
    d = cfg["dataset"]
    if d.get("kind", "mixing") == "mixing":
        return mixing_task(
            samples=d["samples"],
            features=d["features"],
            groups=d["groups"],
            classes=d["classes"],
            val_fraction=d["val_fraction"],
            seed=seed,
        )
    return load_dataset(d["path"], d.get("val_fraction", 0.25), seed)


def select_graphs(cfg: dict) -> list[tuple[str, Graph]]:
    """Sweep, measure, keep one graph per (L, C) bin, thin evenly to the requested count."""
    gen = dict(cfg["generate"])
    gen.setdefault("seed", cfg["seed"])
    scfg = SweepConfig.from_dict(gen)
    s = cfg["sample"]
    spec = BinSpec.uniform(s["l_range"], s["c_range"], s["l_bins"], s["c_bins"])
    entries = []
    for item in sweep(scfg):
        if item.graph is None:
            continue
        L, C = path_length_and_clustering(item.graph)
        if L is None:
            continue
        gid = f"{scfg.family}-" + "-".join(map(str, item.index))
        entries.append(((gid, item.graph), (L, C)))
    binned = subsample_one_per_bin(entries, spec, seed=cfg["seed"])
    want = int(s["graphs"])
    if len(binned) > want:
        pick = np.unique(np.linspace(0, len(binned) - 1, want).round().astype(int))
        binned = [binned[i] for i in pick]
    chosen = [b.item for b in binned]
    if s.get("controls", True):
        n = scfg.n
        chosen.append(("complete", complete(n)))
        chosen.append(("edgeless", new_graph(n, [], {"family": "edgeless", "n": n})))
    return chosen


@dataclass(frozen=True)
class Job:
    index: int
    graph_id: str
    graph: Graph
    seed: int


def run_job(job: Job, cfg: dict) -> dict:
    ds = build_dataset(cfg, cfg["seed"])
    m = cfg["model"]
    tmpl = MlpTemplate(ds.input_dim, m["hidden_dim"], m["hidden_layers"], ds.classes)
    match = match_width_uniform(job.graph, reference_budget(tmpl), tmpl)
    t = cfg["train"]
    tc = TrainConfig(t["epochs"], t["batch_size"], t["initial_lr"], job.seed, t.get("normalization", True))
    model = init(tmpl.build(job.graph, match.widths), job.seed, normalization=tc.normalization)
    measures = measure_all(job.graph)
    _, rec = train(model, ds, tc, job.graph_id, measures, match.width, match.flops)
    rec.meta = {"job": job.index, "deviation": match.deviation, "edges": job.graph.num_edges}
    return rec.to_dict()


def _run_job_args(args):
    return run_job(*args)


def _dump(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)


def run_pipeline(cfg: dict, out_dir, jobs: int | None = None) -> dict:
    """Run every stage, writing files under ``out_dir``; returns output paths."""
    out = Path(out_dir)
    (out / "graphs").mkdir(parents=True, exist_ok=True)
    graphs = select_graphs(cfg)
    with open(out / "selected.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["graph_id", "n", "edges"])
        for gid, g in graphs:
            save_graph(g, out / "graphs" / f"{gid}.json")
            w.writerow([gid, g.n, g.num_edges])

    job_list = []
    for gid, g in graphs:
        for s in range(int(cfg["train"]["seeds"])):
            job_list.append(Job(len(job_list), gid, g, s))

    records_path = out / "records.jsonl"
    done: dict[int, dict] = {}
    if records_path.exists():
        for line in records_path.read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                done[rec["meta"]["job"]] = rec
    todo = [j for j in job_list if j.index not in done]
    log.info("%d training jobs (%d already recorded)", len(job_list), len(done))
    jobs = jobs or os.cpu_count() or 1
    with open(records_path, "a") as fh:
        if jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                for rec in pool.map(_run_job_args, [(j, cfg) for j in todo]):
                    done[rec["meta"]["job"]] = rec
                    fh.write(_dump(rec) + "\n")
                    fh.flush()
        else:
            for j in todo:
                rec = run_job(j, cfg)
                done[j.index] = rec
                fh.write(_dump(rec) + "\n")
                fh.flush()
    # canonical order so resumed runs produce identical files
    records_path.write_text("".join(_dump(done[i]) + "\n" for i in sorted(done)))

    records = [an.ExperimentRecord.from_dict(done[i]) for i in sorted(done)]
    paths = write_analysis(records, out, cfg["analyze"])
    paths["records"] = str(records_path)
    return paths


def per_graph_means(records) -> list[an.ExperimentRecord]:
    """Average seeds of the same graph into one record (curves averaged epoch-wise)."""
    groups: dict[str, list] = {}
    for r in records:
        groups.setdefault(r.graph_id, []).append(r)
    out = []
    for gid, rs in groups.items():
        curve = np.mean([r.curve for r in rs], axis=0).tolist()
        out.append(an.ExperimentRecord(gid, rs[0].measures, rs[0].width, rs[0].flops, -1, float(np.mean([r.final_error for r in rs])), curve))
    return out


def write_analysis(records, out_dir, acfg: dict, heatmap_csv=None) -> dict:
    """Bins CSV, sweet-spot JSON and correlations JSON for a list of records."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    connected = [r for r in records if r.L is not None and r.final_error is not None]
    paths = {}
    if not connected:
        raise an.AnalysisError("no connected-graph records to analyze")
    geometry = coarse_geometry([(r.L, r.C) for r in connected], acfg.get("l_bins", 5), acfg.get("c_bins", 5))
    grid = an.aggregate(records, geometry)
    bins_path = out / "bins.csv"
    with open(bins_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["li", "ci", "L_lo", "L_hi", "C_lo", "C_hi", "mean", "count"])
        for key in sorted(grid.cells):
            cell = grid.cells[key]
            w.writerow([*key, *(repr(float(v)) for v in grid.cell_bounds(key)), repr(cell.mean), cell.count])
    paths["bins"] = str(bins_path)

    if heatmap_csv:
        rows, cols = geometry.shape
        with open(heatmap_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["li"] + [f"c{ci}" for ci in range(cols)])
            for li in range(rows):
                w.writerow([li] + [repr(grid.cells[(li, ci)].mean) if (li, ci) in grid.cells else "" for ci in range(cols)])
        paths["heatmap"] = str(heatmap_csv)

    sweet_path = out / "sweet_spot.json"
    try:
        spot = an.sweet_spot(grid, acfg.get("alpha", 0.05)).to_dict()
    except an.AnalysisError as exc:
        spot = {"error": str(exc)}
    sweet_path.write_text(json.dumps(spot, indent=2, sort_keys=True) + "\n")
    paths["sweet_spot"] = str(sweet_path)

    corr = {}
    graph_means = per_graph_means(connected)
    for name, measure in (("L", lambda r: r.L), ("C", lambda r: r.C)):
        try:
            fit = an.polyfit2([measure(r) for r in graph_means], [r.final_error for r in graph_means])
            corr[f"polyfit2_{name}"] = {"a": fit.a, "b": fit.b, "c": fit.c, "residual": fit.residual}
        except an.AnalysisError as exc:
            corr[f"polyfit2_{name}"] = {"error": str(exc)}
    epoch = acfg.get("curve_epoch", 3)
    try:
        corr[f"epoch{epoch}_vs_final"] = an.curve_correlation(graph_means, epoch)
    except an.AnalysisError as exc:
        corr[f"epoch{epoch}_vs_final"] = {"error": str(exc)}
    by_id = {r.graph_id: r for r in records}
    controls = {gid: float(np.mean([r.final_error for r in records if r.graph_id == gid])) for gid in ("complete", "edgeless") if gid in by_id}
    if controls:
        corr["controls_mean_error"] = controls
    corr_path = out / "correlations.json"
    corr_path.write_text(json.dumps(corr, indent=2, sort_keys=True) + "\n")
    paths["correlations"] = str(corr_path)
    return paths
