"""Tensor, tape, and operation contracts."""

import math

import numpy as np
import pytest

from afrseg import ops
from afrseg.tensor import Param, ShapeError, Tape, Tensor, backward

from reference import ref_conv2d, ref_resize_bilinear, ref_softmax


class TestTensorBasics:
    def test_data_is_float64_and_frozen(self):
        t = Tensor([[1, 2], [3, 4]])
        assert t.data.dtype == np.float64
        with pytest.raises(ValueError):
            t.data[0, 0] = 5.0

    def test_construction_copies(self):
        src = np.ones(3)
        t = Tensor(src)
        src[0] = 7.0
        assert t.data[0] == 1.0

    def test_item_requires_scalar(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()
        assert Tensor(4.25).item() == 4.25

    def test_param_starts_with_zero_grad(self):
        p = Param("w", np.ones((2, 3)))
        assert p.grad.data.shape == (2, 3)
        assert not p.grad.data.any()


class TestElementwise:
    def test_mul_broadcasts_single_channel_map(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.normal(size=(1, 3, 2, 2)))
        half = Tensor(np.full((1, 1, 2, 2), 0.5))
        out = ops.mul(a, half)
        np.testing.assert_array_equal(out.data, a.data * 0.5)

    def test_add_rejects_mismatched_spatial_extent(self):
        a = Tensor(np.zeros((1, 3, 4, 4)))
        b = Tensor(np.zeros((1, 1, 2, 4)))
        with pytest.raises(ShapeError):
            ops.add(a, b)

    def test_wide_broadcast_rejected(self):
        a = Tensor(np.zeros((1, 3, 4, 4)))
        b = Tensor(np.zeros((1, 3, 1, 1)))
        with pytest.raises(ShapeError):
            ops.mul(a, b)

    def test_equal_shape_ops(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 2, 3, 3))
        y = rng.normal(size=(2, 2, 3, 3))
        np.testing.assert_array_equal(ops.add(Tensor(x), Tensor(y)).data, x + y)
        np.testing.assert_array_equal(ops.sub(Tensor(x), Tensor(y)).data, x - y)
        np.testing.assert_array_equal(ops.mul(Tensor(x), Tensor(y)).data, x * y)


class TestSigmoid:
    def test_zero_maps_to_half(self):
        assert ops.sigmoid(Tensor(0.0)).item() == 0.5

    def test_log3_maps_to_three_quarters(self):
        out = ops.sigmoid(Tensor(math.log(3.0))).item()
        np.testing.assert_allclose(out, 0.75, atol=1e-15)

    def test_strictly_inside_unit_interval(self):
        x = Tensor(np.array([-1e4, -50.0, 0.0, 50.0, 1e4]))
        out = ops.sigmoid(x).data
        assert (out > 0.0).all() and (out < 1.0).all()


class TestSoftmax:
    def test_two_channel_log_odds(self):
        logits = Tensor(np.array([0.0, math.log(3.0)]).reshape(1, 2, 1, 1))
        out = ops.softmax_channels(logits).data.ravel()
        np.testing.assert_allclose(out, [0.25, 0.75], atol=1e-15)

    def test_constant_channels_give_uniform(self):
        logits = Tensor(np.full((1, 5, 2, 2), 3.7))
        np.testing.assert_allclose(ops.softmax_channels(logits).data, 0.2, atol=1e-15)

    def test_shift_invariance_and_normalization(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 4, 3, 3))
        a = ops.softmax_channels(Tensor(x)).data
        b = ops.softmax_channels(Tensor(x + 11.5)).data
        np.testing.assert_allclose(a, b, atol=1e-12)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(a, ref_softmax(x), atol=1e-12)

    def test_single_channel_rejected(self):
        with pytest.raises(ShapeError):
            ops.softmax_channels(Tensor(np.zeros((1, 1, 2, 2))))


class TestChannelReductions:
    def test_channel_mean_matches_numpy(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 6, 3, 3))
        out = ops.channel_mean(Tensor(x))
        assert out.data.shape == (2, 1, 3, 3)
        np.testing.assert_allclose(out.data, x.mean(axis=1, keepdims=True), atol=1e-15)

    def test_channel_max_tie_routes_to_lowest_index(self):
        x = np.zeros((1, 3, 1, 1))
        x[0, 1] = x[0, 2] = 2.0  # tie between channels 1 and 2
        p = Param("x", x)
        with Tape() as tape:
            out = ops.channel_max(ops.read(p))
            loss = ops.sum_all(out)
        backward(tape, loss)
        np.testing.assert_array_equal(p.grad.data.ravel(), [0.0, 1.0, 0.0])


class TestConv1x1:
    def test_channel_sum_projection(self):
        x = Tensor(np.array([2.0, 5.0]).reshape(1, 2, 1, 1))
        w = Param("w", np.array([[1.0, 1.0]]))
        out = ops.conv1x1(x, w)
        assert out.data.reshape(()) == 7.0

    def test_matches_einsum_with_bias(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(2, 5, 4, 4))
        w = rng.normal(size=(3, 5))
        b = rng.normal(size=3)
        out = ops.conv1x1(Tensor(x), Param("w", w), Param("b", b))
        want = np.einsum("oc,bchw->bohw", w, x) + b[None, :, None, None]
        np.testing.assert_allclose(out.data, want, atol=1e-12)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            ops.conv1x1(Tensor(np.zeros((1, 3, 2, 2))), Param("w", np.zeros((1, 4))))


class TestConv:
    def test_all_ones_3x3_gives_nines(self):
        x = Tensor(np.ones((1, 1, 3, 3)))
        w = Param("w", np.ones((1, 1, 3, 3)))
        b = Param("b", np.zeros(1))
        out = ops.conv3x3(x, w, b)
        np.testing.assert_allclose(out.data, 9.0, atol=1e-12)

    def test_conv3x3_rejects_multichannel(self):
        x = Tensor(np.zeros((1, 2, 4, 4)))
        w = Param("w", np.zeros((1, 1, 3, 3)))
        with pytest.raises(ShapeError):
            ops.conv3x3(x, w)

    def test_conv3x3_matches_reference(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 1, 5, 6))
        w = rng.normal(size=(1, 1, 3, 3))
        b = rng.normal(size=1)
        out = ops.conv3x3(Tensor(x), Param("w", w), Param("b", b))
        np.testing.assert_allclose(out.data, ref_conv2d(x, w, b), atol=1e-12)

    def test_conv2d_matches_reference(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 3, 5, 4))
        w = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        out = ops.conv2d(Tensor(x), Param("w", w), Param("b", b))
        np.testing.assert_allclose(out.data, ref_conv2d(x, w, b), atol=1e-12)

    def test_conv2d_1x1_height_reflects_safely(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(1, 1, 1, 5))
        w = rng.normal(size=(1, 1, 3, 3))
        out = ops.conv2d(Tensor(x), Param("w", w))
        np.testing.assert_allclose(out.data, ref_conv2d(x, w), atol=1e-12)


class TestResize:
    def test_same_size_is_exact_identity(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(1, 2, 4, 4))
        out = ops.resize_bilinear(Tensor(x), 4, 4)
        assert (out.data == x).all()

    def test_two_to_four_upsample(self):
        x = Tensor(np.array([0.0, 1.0]).reshape(1, 1, 2, 1))
        out = ops.resize_bilinear(x, 4, 1)
        np.testing.assert_allclose(out.data.ravel(), [0.0, 0.25, 0.75, 1.0], atol=1e-15)

    def test_downsample_averages_pairs(self):
        x = Tensor(np.arange(4.0).reshape(1, 1, 1, 4))
        out = ops.resize_bilinear(x, 1, 2)
        np.testing.assert_allclose(out.data.ravel(), [0.5, 2.5], atol=1e-15)

    def test_constant_preserved(self):
        x = Tensor(np.full((1, 1, 5, 7), 3.25))
        out = ops.resize_bilinear(x, 9, 3)
        np.testing.assert_allclose(out.data, 3.25, atol=1e-12)

    def test_matches_reference(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(2, 3, 6, 5))
        for oh, ow in [(12, 10), (3, 2), (6, 5), (7, 11)]:
            out = ops.resize_bilinear(Tensor(x), oh, ow)
            np.testing.assert_allclose(out.data, ref_resize_bilinear(x, oh, ow),
                                       atol=1e-12)


class TestBackward:
    def test_sum_gives_unit_gradients(self):
        p = Param("p", np.arange(6.0).reshape(2, 3))
        with Tape() as tape:
            loss = ops.sum_all(ops.read(p))
        backward(tape, loss)
        np.testing.assert_array_equal(p.grad.data, np.ones((2, 3)))

    def test_square_gives_two_p(self):
        vals = np.array([[1.5, -2.0, 0.5]])
        p = Param("p", vals)
        with Tape() as tape:
            v = ops.read(p)
            loss = ops.sum_all(ops.mul(v, v))
        backward(tape, loss)
        np.testing.assert_allclose(p.grad.data, 2.0 * vals, atol=1e-15)

    def test_repeated_backward_accumulates(self):
        p = Param("p", np.ones(4))
        with Tape() as tape:
            loss = ops.sum_all(ops.read(p))
        backward(tape, loss)
        backward(tape, loss)
        np.testing.assert_array_equal(p.grad.data, np.full(4, 2.0))
        p.zero_grad()
        assert not p.grad.data.any()

    def test_non_scalar_loss_rejected(self):
        p = Param("p", np.ones(4))
        with Tape() as tape:
            v = ops.scale(ops.read(p), 2.0)
        with pytest.raises(ShapeError):
            backward(tape, v)

    def test_foreign_loss_rejected(self):
        p = Param("p", np.ones(2))
        with Tape() as tape:
            ops.sum_all(ops.read(p))
        stray = ops.sum_all(Tensor(np.ones(2)))  # computed off-tape
        with pytest.raises(ValueError):
            backward(tape, stray)

    def test_ops_outside_tape_do_not_record(self):
        with Tape() as tape:
            pass
        out = ops.sigmoid(Tensor(np.zeros(3)))
        assert len(tape) == 0
        assert out.data.shape == (3,)

    def test_nested_tapes_rejected(self):
        with Tape():
            with pytest.raises(RuntimeError):
                with Tape():
                    pass

    def test_detach_blocks_gradient(self):
        p = Param("p", np.full(3, 2.0))
        with Tape() as tape:
            v = ops.read(p)
            loss = ops.sum_all(ops.mul(v, ops.detach(v)))
        backward(tape, loss)
        # only the differentiable factor contributes: d/dv (v * const) = const
        np.testing.assert_allclose(p.grad.data, np.full(3, 2.0), atol=1e-15)


class TestDeterminismAndFiniteness:
    def test_identical_inputs_identical_bits(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(2, 3, 8, 8))
        w = rng.normal(size=(4, 3, 3, 3))
        a = ops.conv2d(Tensor(x), Param("w", w)).data
        b = ops.conv2d(Tensor(x), Param("w", w)).data
        assert (a == b).all()

    def test_finite_in_finite_out(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(2, 4, 6, 6)) * 10.0
        outs = [
            ops.sigmoid(Tensor(x)),
            ops.softmax_channels(Tensor(x)),
            ops.relu(Tensor(x)),
            ops.exp(ops.scale(Tensor(x), -1.0)),
            ops.resize_bilinear(Tensor(x), 3, 9),
            ops.channel_mean(Tensor(x)),
            ops.channel_max(Tensor(x)),
        ]
        for out in outs:
            assert np.isfinite(out.data).all()
