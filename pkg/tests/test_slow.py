"""Full-scale design-space sweep (hours on one core); opt in with RELGRAPH_SLOW=1."""

import os
from importlib import resources

import pytest
import tomli

from relgraph.generators import SweepConfig, sweep
from relgraph.measures import path_length_and_clustering
from relgraph.sampler import BinSpec, subsample_every_ninth, subsample_one_per_bin


@pytest.mark.slow
def test_appendix_sweep_bin_count():
    text = (resources.files("relgraph") / "configs" / "ws_flex.toml").read_text()
    cfg = SweepConfig.from_dict(tomli.loads(text)["sweep"])
    entries = []
    for item in sweep(cfg, jobs=os.cpu_count() or 1):
        if item.graph is not None:
            L, C = path_length_and_clustering(item.graph)
            if L is not None:
                entries.append((item.index, (L, C)))
    kept = subsample_one_per_bin(entries, BinSpec.appendix(), seed=0)
    assert abs(len(kept) - 3942) <= 0.02 * 3942
    assert abs(len(subsample_every_ninth(kept)) - 52) <= 6
