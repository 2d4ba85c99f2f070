import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netmend import (
    InvalidChainError,
    InvalidSplitError,
    Network,
    ShapeError,
    SubnetworkChain,
    combine,
    split,
)
from tests.conftest import random_network


class TestEvaluate:
    def test_toy_trace(self, toy_net):
        trace = toy_net.evaluate([1.0])
        np.testing.assert_allclose(trace.layers[1], [1.0, 1.0])
        np.testing.assert_allclose(trace.layers[2], [0.01, 100.0])
        np.testing.assert_allclose(trace.layers[3], [10.0, 1.0])
        np.testing.assert_allclose(trace.output, [11.0, -11.0])

    def test_zero_input_propagates(self):
        rng = np.random.default_rng(0)
        net = random_network(rng, [3, 4, 4, 2])
        trace = net.evaluate(np.zeros(3))
        for layer in trace.layers[1:]:
            np.testing.assert_array_equal(layer, np.zeros_like(layer))

    def test_relu_kills_negative_preactivations(self):
        rng = np.random.default_rng(1)
        w0 = -np.abs(rng.normal(size=(4, 3)))
        w1 = rng.normal(size=(2, 4))
        net = Network([w0, w1])
        trace = net.evaluate([0.5, 1.0, 2.0])
        np.testing.assert_array_equal(trace.layers[1], np.zeros(4))
        np.testing.assert_array_equal(trace.output, np.zeros(2))

    def test_hidden_layers_non_negative(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            net = random_network(rng, [3, 5, 4, 3, 2])
            trace = net.evaluate(rng.normal(size=3))
            for layer in trace.layers[1:-1]:
                assert np.all(layer >= 0)

    def test_dimension_mismatch(self, toy_net):
        with pytest.raises(ShapeError):
            toy_net.evaluate([1.0, 2.0])

    def test_bias_is_used(self):
        net = Network([[[1.0]]], biases=[[0.5]])
        np.testing.assert_allclose(net.evaluate([2.0]).output, [2.5])


class TestClassify:
    def test_toy_label(self, toy_net):
        assert toy_net.classify([1.0]) == 1

    def test_two_layer_fix_label(self, fig_two_layer_net):
        assert fig_two_layer_net.classify([1.0]) == 2
        np.testing.assert_allclose(fig_two_layer_net.evaluate([1.0]).output, [1.0, 1.1])

    def test_tie_breaks_to_lowest_index(self):
        # output [5, 5]: both output weights read the same hidden neuron
        net = Network([[[5.0]], [[1.0], [1.0]]])
        out = net.evaluate([1.0]).output
        np.testing.assert_allclose(out, [5.0, 5.0])
        assert net.classify([1.0]) == 1


class TestSplitCombine:
    def test_toy_split_at_three(self, toy_net):
        chain = split(toy_net, [3])
        assert len(chain.subnets) == 2
        assert len(chain.subnets[0].weights) == 2
        assert len(chain.subnets[1].weights) == 2
        assert chain.subnets[0].layer_sizes == (1, 2, 2)
        assert chain.subnets[1].layer_sizes == (2, 2, 2)

    def test_empty_split_is_whole_net(self, toy_net):
        chain = split(toy_net, [])
        assert len(chain.subnets) == 1
        assert chain.subnets[0].weights_equal(toy_net)

    def test_five_layer_two_cuts(self):
        rng = np.random.default_rng(3)
        net = random_network(rng, [2, 3, 3, 3, 2])
        chain = split(net, [2, 4])
        assert [len(s.weights) for s in chain.subnets] == [1, 2, 1]
        assert combine(chain).weights_equal(net)

    def test_round_trip_exact(self, toy_net):
        assert combine(split(toy_net, [3])).weights_equal(toy_net)

    @pytest.mark.parametrize("indices", [[1], [5], [0], [3, 3], [4, 3]])
    def test_invalid_indices(self, toy_net, indices):
        with pytest.raises(InvalidSplitError):
            split(toy_net, indices)

    def test_mismatched_seam_raises(self):
        rng = np.random.default_rng(4)
        a = random_network(rng, [2, 3, 4])
        b = random_network(rng, [3, 3, 2])
        with pytest.raises(InvalidChainError):
            SubnetworkChain((a, b), (3,))

    def test_wrong_index_count_raises(self):
        rng = np.random.default_rng(5)
        a = random_network(rng, [2, 3, 4])
        b = random_network(rng, [4, 3, 2])
        with pytest.raises(InvalidChainError):
            SubnetworkChain((a, b), ())

    @settings(max_examples=40, deadline=None)
    @given(data=st.data())
    def test_round_trip_property(self, data):
        seed = data.draw(st.integers(0, 10_000))
        rng = np.random.default_rng(seed)
        n = data.draw(st.integers(3, 7))
        sizes = [int(rng.integers(1, 5)) for _ in range(n)]
        net = random_network(rng, sizes)
        interior = list(range(2, n))
        cuts = data.draw(
            st.lists(st.sampled_from(interior), unique=True, max_size=len(interior))
        )
        chain = split(net, sorted(cuts))
        assert combine(chain).weights_equal(net)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), cut_seed=st.integers(0, 100))
    def test_chain_composition_matches_direct_eval(self, seed, cut_seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 8))
        sizes = [int(rng.integers(1, 6)) for _ in range(n)]
        net = random_network(rng, sizes)
        cut_rng = np.random.default_rng(cut_seed)
        k = int(cut_rng.integers(1, min(3, n - 2) + 1))
        cuts = sorted(
            int(i) for i in cut_rng.choice(range(2, n), size=k, replace=False)
        )
        chain = split(net, cuts)
        x = rng.normal(size=sizes[0])
        np.testing.assert_allclose(
            chain.evaluate(x), net.evaluate(x).output, atol=1e-9
        )

    def test_final_weight_indices(self, toy_net):
        chain = split(toy_net, [3])
        assert chain.final_weight_indices() == (1, 3)


class TestApplyDelta:
    def test_single_entry_change(self, toy_net, fig_single_layer_net):
        assert fig_single_layer_net.weights[3][0, 0] == pytest.approx(-1.21)
        np.testing.assert_allclose(
            fig_single_layer_net.evaluate([1.0]).output, [-11.1, -11.0]
        )

    def test_zero_delta_identity(self, toy_net):
        same = toy_net.apply_delta(2, np.zeros((2, 2)))
        assert same.weights_equal(toy_net)

    def test_deltas_add(self, toy_net):
        rng = np.random.default_rng(6)
        d1 = rng.normal(size=(2, 2))
        d2 = rng.normal(size=(2, 2))
        one_step = toy_net.apply_delta(3, d1 + d2)
        two_step = toy_net.apply_delta(3, d1).apply_delta(3, d2)
        for a, b in zip(one_step.weights, two_step.weights):
            np.testing.assert_allclose(a, b, atol=1e-15)

    def test_layer_sizes_preserved(self, toy_net):
        changed = toy_net.apply_delta(0, np.ones((2, 1)))
        assert changed.layer_sizes == toy_net.layer_sizes

    def test_shape_mismatch(self, toy_net):
        with pytest.raises(ShapeError):
            toy_net.apply_delta(3, np.zeros((3, 2)))

    def test_source_net_unchanged(self, toy_net):
        before = [w.copy() for w in toy_net.weights]
        toy_net.apply_delta(3, np.ones((2, 2)))
        for a, b in zip(before, toy_net.weights):
            np.testing.assert_array_equal(a, b)


class TestValidation:
    def test_non_finite_weights_rejected(self):
        with pytest.raises(ShapeError):
            Network([[[np.inf], [1.0]]])

    def test_inconsistent_shapes_rejected(self):
        with pytest.raises(ShapeError):
            Network([[[1.0, 2.0]], [[1.0, 2.0]]])

    def test_immutable(self, toy_net):
        with pytest.raises(AttributeError):
            toy_net.weights = ()
        with pytest.raises(ValueError):
            toy_net.weights[0][0, 0] = 5.0
