import numpy as np
import pytest

from normalbridge import tensorcore as tc
from normalbridge.tensorcore import (
    AdamWState,
    SeededRng,
    Tensor,
    adamw_step,
    backward,
    conv2d,
    load_checkpoint,
    mse_loss,
    save_checkpoint,
)

from grad_cases import CASES, run_case


def conv2d_oracle(x, w, b=None, stride=1, padding=0):
    """Nested-loop cross-correlation, the reference for conv2d."""
    n, c, h, wd = x.shape
    k, _, kh, kw = w.shape
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, k, oh, ow))
    for ni in range(n):
        for ki in range(k):
            for oi in range(oh):
                for oj in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += xp[ni, ci, oi * stride + i, oj * stride + j] * w[ki, ci, i, j]
                    out[ni, ki, oi, oj] = acc + (b[ki] if b is not None else 0.0)
    return out


class TestConv2d:
    def test_ones_input_single_kernel(self):
        x = Tensor(np.ones((1, 1, 3, 3)))
        w = Tensor(np.full((1, 1, 1, 1), 2.0))
        out = conv2d(x, w)
        assert out.shape == (1, 1, 3, 3)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 3, 3), 2.0))

    def test_identity_kernel(self):
        rng = SeededRng(1)
        x = rng.normal((1, 1, 5, 5))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        out = conv2d(Tensor(x), Tensor(w), padding=1)
        np.testing.assert_array_equal(out.data, x)

    def test_matches_nested_loop_oracle(self):
        rng = SeededRng(2)
        x = rng.normal((1, 2, 5, 5))
        w = rng.normal((3, 2, 3, 3))
        b = rng.normal((3,))
        for stride, pad in [(1, 0), (1, 1), (2, 1)]:
            got = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad).data
            want = conv2d_oracle(x, w, b, stride=stride, padding=pad)
            assert np.max(np.abs(got - want)) < 1e-12

    def test_shape_errors(self):
        with pytest.raises(ValueError, match="channel mismatch"):
            conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
        with pytest.raises(ValueError, match="too small"):
            conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))))


class TestMseLoss:
    def test_equal_inputs_zero(self):
        a = Tensor(np.arange(6.0).reshape(2, 3))
        assert mse_loss(a, Tensor(a.data.copy())).item() == 0.0

    def test_scalar_example(self):
        assert mse_loss(Tensor([2.0]), Tensor([0.0])).item() == 4.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse_loss(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_gradient_is_scaled_difference(self):
        rng = SeededRng(3)
        pred = Tensor(rng.normal((4, 5)), requires_grad=True)
        target = Tensor(rng.normal((4, 5)))
        backward(mse_loss(pred, target))
        want = 2.0 * (pred.data - target.data) / pred.size
        np.testing.assert_allclose(pred.grad, want, rtol=1e-12)


class TestBackward:
    def test_sum_gives_ones(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        backward(x.sum())
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_square_sum(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        backward((x * x).sum())
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            backward(x * x)

    def test_detached_loss_rejected(self):
        with pytest.raises(ValueError, match="detached"):
            backward(Tensor(3.0))

    def test_tape_is_topological_and_single_visit(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = x * 2.0
        z = (y + x).sum()
        tape = backward(z)
        pos = {r.output_id: i for i, r in enumerate(tape.records)}
        for rec in tape.records:
            for pid in rec.input_ids:
                if pid in pos:
                    assert pos[pid] < pos[rec.output_id]
        assert len({r.output_id for r in tape.records}) == len(tape.records)

    def test_grad_accumulates_over_fanout(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * x + x * 2.0  # dy/dx = 2x + 2 = 8
        backward(y.sum())
        np.testing.assert_allclose(x.grad, [8.0])


class TestGradChecks:
    @pytest.mark.parametrize("name,builder", CASES, ids=[c[0] for c in CASES])
    def test_analytic_matches_fd(self, name, builder):
        rng = SeededRng(100)
        worst = max(run_case(builder, rng.stream_rng(i)) for i in range(5))
        assert worst < 1e-4, f"{name}: max rel err {worst:.3e}"


class TestAdamW:
    def test_zero_grad_zero_decay_unchanged(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.zeros(2)
        st = AdamWState(weight_decay=0.0)
        adamw_step({"p": p}, st)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_single_step_descends_quadratic(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        p.grad = 2.0 * p.data  # d/dw w^2
        adamw_step({"p": p}, AdamWState(weight_decay=0.0))
        assert p.data[0] < 1.0

    def test_reaches_quadratic_minimum(self):
        # f(w) = (w0 - 0.3)^2 + 2 (w1 + 0.7)^2, minimum at (0.3, -0.7)
        target = np.array([0.3, -0.7])
        p = Tensor(np.zeros(2), requires_grad=True)
        st = AdamWState(lr=3e-2, weight_decay=0.0)
        for _ in range(200):
            p.grad = np.array([2.0 * (p.data[0] - 0.3), 4.0 * (p.data[1] + 0.7)])
            adamw_step({"p": p}, st)
        assert np.max(np.abs(p.data - target)) < 1e-3

    def test_nonfinite_grad_names_parameter(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([np.nan, 0.0])
        with pytest.raises(FloatingPointError, match="'p'"):
            adamw_step({"p": p}, AdamWState())

    def test_decoupled_weight_decay(self):
        p = Tensor(np.array([10.0]), requires_grad=True)
        p.grad = np.zeros(1)
        st = AdamWState(lr=0.1, weight_decay=0.5)
        adamw_step({"p": p}, st)
        # zero grad: only the decay term moves the weight
        np.testing.assert_allclose(p.data, [10.0 * (1 - 0.1 * 0.5)])


class TestDeterminism:
    @staticmethod
    def _train_trajectory(seed):
        rng = SeededRng(seed)
        w = Tensor(rng.normal((4, 3)) * 0.1, requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        st = AdamWState()
        params = {"w": w, "b": b}
        for step in range(100):
            x = Tensor(rng.normal((8, 4)))
            t = Tensor(rng.normal((8, 3)))
            loss = mse_loss((x @ w + b).tanh(), t)
            for p in params.values():
                p.zero_grad()
            backward(loss)
            adamw_step(params, st)
        return w.data.copy(), b.data.copy()

    def test_bit_identical_trajectories(self):
        w1, b1 = self._train_trajectory(42)
        w2, b2 = self._train_trajectory(42)
        assert w1.tobytes() == w2.tobytes()
        assert b1.tobytes() == b2.tobytes()

    def test_different_seed_differs(self):
        w1, _ = self._train_trajectory(42)
        w2, _ = self._train_trajectory(43)
        assert w1.tobytes() != w2.tobytes()


class TestNoNanProperty:
    def test_finite_inputs_stay_finite(self):
        rng = SeededRng(7)
        for i in range(30):
            r = rng.stream_rng(i)
            x = Tensor(r.normal((2, 4, 4, 4)) * 10.0)
            w = Tensor(r.normal((3, 4, 3, 3)))
            g = Tensor(r.uniform(0.5, 1.5, (3,)))
            be = Tensor(r.normal((3,)))
            out = tc.group_norm(tc.conv2d(x, w, padding=1).leaky_relu(0.1), 1, g, be)
            out = tc.l2_normalize(out, axis=1)
            assert np.isfinite(out.data).all()
            assert np.isfinite(tc.upsample_nearest(out).sigmoid().data).all()


class TestSeededRng:
    def test_same_key_same_sequence(self):
        a = SeededRng(5, 9).normal((100,))
        b = SeededRng(5, 9).normal((100,))
        np.testing.assert_array_equal(a, b)

    def test_streams_independent(self):
        a = SeededRng(5, 0).normal((100,))
        b = SeededRng(5, 1).normal((100,))
        assert not np.array_equal(a, b)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = SeededRng(11)
        params = {
            "enc.w": Tensor(rng.normal((3, 2, 3, 3))),
            "enc.b": Tensor(rng.normal((3,))),
            "scalar": Tensor(np.array(0.1234567890123456789)),
        }
        path = tmp_path / "model.nblb"
        save_checkpoint(path, params)
        loaded = load_checkpoint(path)
        assert set(loaded) == set(params)
        for name, p in params.items():
            assert loaded[name].tobytes() == p.data.tobytes()
            assert loaded[name].shape == p.data.shape

    def test_magic_checked(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"JUNK!" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)
