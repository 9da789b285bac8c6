"""Tape autodiff: op semantics and gradients against finite differences."""

import math

import numpy as np
import pytest

import mimlm.autodiff as ad
from mimlm.autodiff import Tape
from mimlm.errors import ConfigError, NumericError, ShapeError
from mimlm.rng import RngStream

from helpers import finite_difference, max_rel_err

SEEDS = list(range(10))


def fd_check(build_loss, arrays, tol=1e-4):
    """Compare tape gradients of `build_loss(tape, leaves) -> scalar Tensor`
    against central finite differences on `arrays`."""
    tape = Tape()
    leaves = {name: tape.leaf(arr) for name, arr in arrays.items()}
    loss = build_loss(tape, leaves)
    tape.backward(loss)

    def f():
        t = Tape()
        lv = {name: t.leaf(arr) for name, arr in arrays.items()}
        return float(build_loss(t, lv).data)

    fd = finite_difference(f, arrays)
    for name in arrays:
        err = max_rel_err(leaves[name].grad, fd[name])
        assert err < tol, f"{name}: rel err {err}"


class TestMatmul:
    def test_identity(self):
        tape = Tape()
        eye = tape.leaf([[1.0, 0.0], [0.0, 1.0]])
        b = tape.leaf([[3.0, 4.0], [5.0, 6.0]])
        assert np.array_equal(ad.matmul(eye, b).data, b.data)

    def test_hand_arithmetic(self):
        tape = Tape()
        out = ad.matmul(tape.leaf([[1.0, 2.0]]), tape.leaf([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_shape_mismatch_names_both_shapes(self):
        tape = Tape()
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(tape.leaf(np.zeros((2, 3))), tape.leaf(np.zeros((2, 3))))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        arrays = {"a": rng.normal(size=(3, 3)), "b": rng.normal(size=(3, 3))}
        fd_check(lambda t, lv: ad.sum_all(ad.matmul(lv["a"], lv["b"])), arrays)


class TestElementwise:
    def test_sigmoid_at_zero(self):
        tape = Tape()
        assert float(ad.sigmoid(tape.leaf(0.0)).data) == 0.5

    def test_tanh_at_zero(self):
        tape = Tape()
        assert float(ad.tanh(tape.leaf(0.0)).data) == 0.0

    def test_sigmoid_derivative_at_zero(self):
        tape = Tape()
        x = tape.leaf(0.0)
        tape.backward(ad.sigmoid(x))
        assert float(x.grad) == pytest.approx(0.25, abs=1e-12)
        # agrees with finite differences
        h = 1e-6
        fd = (1 / (1 + math.exp(-h)) - 1 / (1 + math.exp(h))) / (2 * h)
        assert float(0.25) == pytest.approx(fd, abs=1e-9)

    def test_sigmoid_stable_in_tails(self):
        tape = Tape()
        out = ad.sigmoid(tape.leaf([-1000.0, 1000.0])).data
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx(0.0, abs=1e-300)
        assert out[1] == pytest.approx(1.0, abs=1e-300)

    def test_log_rejects_non_positive(self):
        tape = Tape()
        with pytest.raises(NumericError, match="non-positive"):
            ad.log(tape.leaf([1.0, 0.0]))

    def test_incompatible_shapes_rejected(self):
        tape = Tape()
        with pytest.raises(ShapeError, match=r"\(2,\).*\(3,\)"):
            ad.add(tape.leaf([1.0, 2.0]), tape.leaf([1.0, 2.0, 3.0]))

    def test_scalar_broadcast(self):
        tape = Tape()
        x = tape.leaf([[1.0, 2.0], [3.0, 4.0]])
        out = 2.0 * x + 1.0
        assert out.data.tolist() == [[3.0, 5.0], [7.0, 9.0]]
        tape.backward(ad.sum_all(out))
        assert np.array_equal(x.grad, np.full((2, 2), 2.0))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        arrays = {"a": rng.normal(size=(4,)), "b": rng.normal(size=(4,))}

        def build(t, lv):
            a, b = lv["a"], lv["b"]
            mix = ad.mul(ad.add(a, b), ad.sub(a, b))
            acts = ad.sigmoid(a) + ad.tanh(b) + ad.exp(0.1 * a) + ad.neg(b)
            safe_log = ad.log(ad.exp(a))  # strictly positive input
            return ad.sum_all(mix + acts + safe_log)

        fd_check(build, arrays)


class TestLogSoftmax:
    def test_symmetric_two_way(self):
        tape = Tape()
        out = ad.log_softmax(tape.leaf([0.0, 0.0])).data
        assert out == pytest.approx([-math.log(2)] * 2, abs=1e-12)

    def test_max_subtraction_prevents_overflow(self):
        tape = Tape()
        out = ad.log_softmax(tape.leaf([1000.0, 0.0])).data
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx(0.0, abs=1e-12)
        assert out[1] == pytest.approx(-1000.0, rel=1e-12)

    def test_normalizes_within_1e9(self):
        rng = np.random.default_rng(3)
        tape = Tape()
        out = ad.log_softmax(tape.leaf(rng.normal(size=(7, 11)) * 5)).data
        assert np.exp(out).sum(axis=-1) == pytest.approx(np.ones(7), abs=1e-9)

    def test_rejects_nonfinite(self):
        tape = Tape()
        with pytest.raises(NumericError, match="NaN or Inf"):
            ad.log_softmax(tape.leaf([np.inf, 0.0]))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        arrays = {"x": rng.normal(size=(5,))}
        weights = rng.normal(size=(5,))

        def build(t, lv):
            return ad.sum_all(ad.mul(ad.log_softmax(lv["x"]), t.constant(weights)))

        fd_check(build, arrays)


class TestEmbeddingLookup:
    def test_gather_semantics(self):
        tape = Tape()
        table = tape.leaf(np.arange(6.0).reshape(3, 2))
        out = ad.embedding_lookup(table, [2, 0])
        assert out.data.tolist() == [[4.0, 5.0], [0.0, 1.0]]

    def test_repeated_index_accumulates(self):
        tape = Tape()
        table = tape.leaf(np.zeros((3, 2)))
        tape.backward(ad.sum_all(ad.embedding_lookup(table, [0, 0])))
        assert table.grad.tolist() == [[2.0, 2.0], [0.0, 0.0], [0.0, 0.0]]

    def test_out_of_range_id(self):
        tape = Tape()
        with pytest.raises(IndexError, match="out of range"):
            ad.embedding_lookup(tape.leaf(np.zeros((3, 2))), [3])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        arrays = {"table": rng.normal(size=(4, 3))}
        ids = rng.integers(0, 4, size=6)
        weights = rng.normal(size=(6, 3))

        def build(t, lv):
            gathered = ad.embedding_lookup(lv["table"], ids)
            return ad.sum_all(ad.mul(gathered, t.constant(weights)))

        fd_check(build, arrays)


class TestDropout:
    def test_rate_zero_is_identity(self):
        tape = Tape()
        x = tape.leaf(np.ones(5))
        assert ad.dropout(x, 0.0, "train", RngStream(0)) is x

    def test_eval_mode_is_identity(self):
        tape = Tape()
        x = tape.leaf(np.ones(5))
        assert ad.dropout(x, 0.5, "eval", None) is x

    def test_invalid_rate(self):
        tape = Tape()
        with pytest.raises(ConfigError, match="rate"):
            ad.dropout(tape.leaf(np.ones(3)), 1.0, "train", RngStream(0))

    def test_survivor_scaling_preserves_mean(self):
        # law of large numbers: mean within 1% of 1 over 1e6 elements
        tape = Tape()
        x = tape.leaf(np.ones(1_000_000))
        out = ad.dropout(x, 0.5, "train", RngStream(7))
        assert float(out.data.mean()) == pytest.approx(1.0, abs=0.01)

    def test_gradient_masks_match_forward(self):
        tape = Tape()
        x = tape.leaf(np.ones(1000))
        out = ad.dropout(x, 0.3, "train", RngStream(11))
        tape.backward(ad.sum_all(out))
        assert np.array_equal(x.grad, np.where(out.data > 0, 1 / 0.7, 0.0))


class TestStructuralOps:
    @pytest.mark.parametrize("seed", SEEDS)
    def test_add_bias_concat_rows_gradients(self, seed):
        rng = np.random.default_rng(seed)
        arrays = {
            "x": rng.normal(size=(3, 4)),
            "bias": rng.normal(size=(4,)),
            "y": rng.normal(size=(3, 2)),
        }
        ids = rng.integers(0, 6, size=3)
        weights = rng.normal(size=(3,))

        def build(t, lv):
            joined = ad.concat([ad.add_bias(lv["x"], lv["bias"]), lv["y"]], axis=1)
            picked = ad.take_per_row(joined, ids)
            return ad.mean_all(ad.mul(picked, t.constant(weights))) + \
                ad.sum_all(ad.sum_rows(ad.reshape(lv["y"], (2, 3))))

        fd_check(build, arrays)

    def test_take_per_row_values(self):
        tape = Tape()
        x = tape.leaf([[1.0, 2.0], [3.0, 4.0]])
        assert ad.take_per_row(x, [1, 0]).data.tolist() == [2.0, 3.0]

    def test_concat_shape_mismatch(self):
        tape = Tape()
        with pytest.raises(ShapeError):
            ad.concat([tape.leaf(np.zeros((2, 2))), tape.leaf(np.zeros((3, 2)))], axis=1)


class TestTape:
    def test_backward_requires_scalar(self):
        tape = Tape()
        x = tape.leaf(np.ones(3))
        with pytest.raises(ShapeError, match="scalar"):
            tape.backward(ad.exp(x))

    def test_tape_freed_after_backward(self):
        tape = Tape()
        x = tape.leaf(np.ones(3))
        tape.backward(ad.sum_all(ad.exp(x)))
        assert len(tape) == 0

    def test_cross_tape_operands_rejected(self):
        t1, t2 = Tape(), Tape()
        with pytest.raises(ValueError, match="different tapes"):
            ad.add(t1.leaf(np.ones(2)), t2.leaf(np.ones(2)))

    def test_seeded_forward_backward_bit_reproducible(self):
        def run():
            tape = Tape()
            rng = RngStream(123)
            x = tape.leaf(rng.normal((4, 4)))
            y = ad.dropout(ad.sigmoid(ad.matmul(x, x)), 0.2, "train", rng.split("drop"))
            loss = ad.sum_all(y)
            tape.backward(loss)
            return float(loss.data), x.grad.copy()

        (l1, g1), (l2, g2) = run(), run()
        assert l1 == l2
        assert np.array_equal(g1, g2)

    def test_nan_guard_reports_producing_op(self):
        tape = Tape(debug_nan=True)
        with np.errstate(invalid="ignore", over="ignore"):
            inf = ad.exp(tape.leaf(1000.0))
            with pytest.raises(NumericError, match="'sub' produced NaN"):
                ad.sub(inf, inf)
