import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relgraph.generators import complete, ws_flex
from relgraph.graph import new_graph
from relgraph.translate import (
    TranslateError,
    block_mask,
    layer_mask,
    node_slices,
    partition_dims,
    relational_cnn_flops_spec,
    relational_mlp_spec,
    spec_from_dict,
)


class TestPartition:
    def test_examples(self):
        assert partition_dims(5, 4) == [2, 1, 1, 1]
        assert partition_dims(9, 4) == [3, 2, 2, 2]
        assert partition_dims(8, 4) == [2, 2, 2, 2]

    def test_too_narrow(self):
        with pytest.raises(TranslateError):
            partition_dims(3, 4)

    @given(m=st.integers(1, 600), n=st.integers(1, 64))
    def test_shape(self, m, n):
        if m < n:
            return
        parts = partition_dims(m, n)
        assert sum(parts) == m and len(parts) == n
        assert max(parts) - min(parts) <= 1
        assert parts == sorted(parts, reverse=True)

    def test_slices(self):
        assert node_slices([2, 1, 1]) == [slice(0, 2), slice(2, 3), slice(3, 4)]


class TestMasks:
    def test_complete_is_dense(self):
        assert layer_mask(complete(4), [3, 2, 2, 2], [2, 1, 1, 1]).all()

    def test_edgeless_is_identity(self):
        np.testing.assert_array_equal(layer_mask(new_graph(2, []), [1, 1], [1, 1]), np.eye(2, dtype=bool))

    def test_cycle_blocks(self, cycle4):
        mask = layer_mask(cycle4, [2, 1, 1, 1], [3, 2, 2, 2])
        assert mask.shape == (9, 5)
        out_sl, in_sl = node_slices([3, 2, 2, 2]), node_slices([2, 1, 1, 1])
        for i in range(4):
            for j in range(4):
                block = mask[out_sl[i], in_sl[j]]
                zero = {i, j} in ({0, 2}, {1, 3})
                assert (not block.any()) if zero else block.all()

    def test_partition_length_checked(self, cycle4):
        with pytest.raises(TranslateError):
            layer_mask(cycle4, [2, 2], [2, 2, 1, 1])

    def test_density_equal_partitions(self):
        g = ws_flex(16, 5.5, 0.3, 1)
        mask = layer_mask(g, [4] * 16, [4] * 16)
        assert mask.mean() == pytest.approx((2 * g.num_edges + 16) / 256)

    def test_block_symmetry(self):
        b = block_mask(ws_flex(12, 3.7, 0.5, 2))
        assert (b == b.T).all() and b.diagonal().all()


class TestMlpSpec:
    def test_baseline(self):
        spec = relational_mlp_spec(complete(64), 3072, 512, 5, 10)
        assert spec.widths == (3072, 512, 512, 512, 512, 512, 512, 10)
        assert spec.rounds == 5
        assert all(spec.mask(layer).all() for layer in spec.layers.masked_layers)
        assert spec.mask(0) is None and spec.mask(6) is None

    def test_four_node_example(self, cycle4):
        spec = relational_mlp_spec(cycle4, 65, 65, 4, 65)
        assert spec.rounds == 4
        assert spec.partitions[1] == (17, 16, 16, 16)

    def test_one_dim_per_node(self):
        g = ws_flex(8, 3, 0.0)
        spec = relational_mlp_spec(g, 10, 8, 2, 3)
        np.testing.assert_array_equal(spec.mask(1), g.adjacency().astype(bool) | np.eye(8, dtype=bool))

    def test_too_narrow(self):
        with pytest.raises(TranslateError):
            relational_mlp_spec(complete(64), 10, 32, 2, 3)

    def test_round_trip(self, cycle4):
        spec = relational_mlp_spec(cycle4, 12, 9, 2, 3)
        back = spec_from_dict(json.loads(json.dumps(spec.to_dict())))
        assert back.widths == spec.widths and back.graph == spec.graph
        for layer in spec.layers.masked_layers:
            np.testing.assert_array_equal(back.mask(layer), spec.mask(layer))


class TestCnnSpec:
    def test_reference(self):
        spec = relational_cnn_flops_spec(complete(64), (64, 128, 256), (2, 2, 2), 9, (28, 14, 7))
        assert spec.kind == "cnn"
        assert all(spec.mask(layer).all() for layer in spec.layers.masked_layers)

    def test_small_channels(self):
        g = ws_flex(16, 4, 0.2, 0)
        spec = relational_cnn_flops_spec(g, (16,), (1,), 9, (56,))
        assert spec.rounds == 1

    def test_too_many_nodes(self):
        with pytest.raises(TranslateError):
            relational_cnn_flops_spec(complete(32), (16, 64), (1, 1), 9, (28, 14))
