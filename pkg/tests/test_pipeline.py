import json

import pytest

from relgraph.pipeline import load_config, run_pipeline, select_graphs

SMALL = {
    "generate": {"n": 8, "k": {"start": 2.0, "stop": 7.0, "count": 8}, "p": {"start": 0.0, "stop": 1.0, "count": 6, "transform": "square"}, "seeds": 1},
    "sample": {"graphs": 5, "l_bins": 10, "c_bins": 10, "l_range": [1.0, 4.0]},
    "dataset": {"samples": 600, "features": 6, "groups": 2},
    "model": {"hidden_dim": 16, "hidden_layers": 2},
    "train": {"epochs": 3, "batch_size": 32, "seeds": 2},
    "analyze": {"l_bins": 3, "c_bins": 3},
}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = load_config(overrides=SMALL)
    return cfg, out, run_pipeline(cfg, out, jobs=1)


class TestConfig:
    def test_bundled_demo_equals_defaults(self):
        from importlib import resources

        path = resources.files("relgraph") / "configs" / "demo.toml"
        assert load_config(path) == load_config()

    def test_overrides_merge(self):
        cfg = load_config(overrides={"train": {"epochs": 2}})
        assert cfg["train"]["epochs"] == 2 and cfg["train"]["batch_size"] == 64


class TestSelection:
    def test_controls_appended(self):
        cfg = load_config(overrides=SMALL)
        chosen = select_graphs(cfg)
        ids = [gid for gid, _ in chosen]
        assert ids[-2:] == ["complete", "edgeless"]
        assert len(ids) <= 7 and len(set(ids)) == len(ids)


class TestRun:
    def test_outputs(self, small_run):
        cfg, out, paths = small_run
        lines = (out / "records.jsonl").read_text().splitlines()
        n_graphs = len((out / "selected.csv").read_text().splitlines()) - 1
        assert len(lines) == n_graphs * 2
        assert [json.loads(x)["meta"]["job"] for x in lines] == list(range(len(lines)))
        assert set(paths) >= {"bins", "sweet_spot", "correlations", "records"}

    def test_deterministic(self, small_run, tmp_path):
        cfg, out, _ = small_run
        run_pipeline(cfg, tmp_path, jobs=2)
        for name in ("records.jsonl", "bins.csv", "sweet_spot.json", "correlations.json"):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()

    def test_resume(self, small_run, tmp_path):
        cfg, out, _ = small_run
        lines = (out / "records.jsonl").read_text().splitlines(keepends=True)
        (tmp_path / "records.jsonl").write_text("".join(lines[::2]))
        run_pipeline(cfg, tmp_path, jobs=1)
        assert (tmp_path / "records.jsonl").read_bytes() == (out / "records.jsonl").read_bytes()
