"""Randomized gradient-check cases shared by unit tests and acceptance.

Each case builder returns ``(fn, arrays)`` where ``fn`` maps Tensors to a
scalar Tensor loss. The same forward is differentiated analytically
(backward pass) and numerically (central differences); inputs are drawn
away from kinks (relu) and domain edges (log, sqrt, div).
"""

import numpy as np

from normalbridge import tensorcore as tc
from fdcheck import central_fd_grads, max_rel_err


def _away_from(rng, shape, lo=-2.0, hi=2.0, keepout=0.05):
    x = rng.uniform(lo, hi, shape)
    x = np.where(np.abs(x) < keepout, x + np.sign(x + 1e-12) * 2 * keepout, x)
    return x


def _proj(rng, shape):
    w = rng.uniform(-1.0, 1.0, shape)
    return lambda t: (t * tc.Tensor(w)).sum()


def _rand_shape(rng, max_rank=4, max_extent=5):
    rank = int(rng.integers(1, max_rank + 1))
    return tuple(int(rng.integers(1, max_extent + 1)) for _ in range(rank))


def case_add(rng):
    shape = _rand_shape(rng)
    a = rng.normal(shape)
    b = rng.normal(shape)
    p = _proj(rng, shape)
    return lambda ta, tb: p(ta + tb), [a, b]


def case_mul_broadcast(rng):
    a = rng.normal((3, 4, 2))
    b = rng.normal((4, 1))
    p = _proj(rng, (3, 4, 2))
    return lambda ta, tb: p(ta * tb), [a, b]


def case_div(rng):
    a = rng.normal((2, 5))
    b = _away_from(rng, (2, 5), keepout=0.5)
    p = _proj(rng, (2, 5))
    return lambda ta, tb: p(ta / tb), [a, b]


def case_pow(rng):
    a = rng.uniform(0.4, 2.0, (3, 3))
    p = _proj(rng, (3, 3))
    return lambda ta: p(ta ** 1.7), [a]


def case_exp(rng):
    a = rng.uniform(-2.0, 1.5, (2, 3, 2))
    p = _proj(rng, (2, 3, 2))
    return lambda ta: p(ta.exp()), [a]


def case_log(rng):
    a = rng.uniform(0.5, 3.0, (4, 3))
    p = _proj(rng, (4, 3))
    return lambda ta: p(ta.log()), [a]


def case_sqrt(rng):
    a = rng.uniform(0.3, 3.0, (5,))
    p = _proj(rng, (5,))
    return lambda ta: p(ta.sqrt()), [a]


def case_sigmoid(rng):
    a = rng.normal((3, 4))
    p = _proj(rng, (3, 4))
    return lambda ta: p(ta.sigmoid()), [a]


def case_tanh(rng):
    a = rng.normal((6,))
    p = _proj(rng, (6,))
    return lambda ta: p(ta.tanh()), [a]


def case_relu(rng):
    a = _away_from(rng, (3, 4))
    p = _proj(rng, (3, 4))
    return lambda ta: p(ta.relu()), [a]


def case_leaky_relu(rng):
    a = _away_from(rng, (2, 3, 2))
    p = _proj(rng, (2, 3, 2))
    return lambda ta: p(ta.leaky_relu(0.1)), [a]


def case_sum_axis(rng):
    a = rng.normal((3, 4, 2))
    axis = int(rng.integers(0, 3))
    keep = bool(rng.integers(0, 2))
    return lambda ta: (ta.sum(axis=axis, keepdims=keep) ** 2.0).sum(), [a]


def case_mean(rng):
    a = rng.normal((4, 4))
    return lambda ta: (ta.mean(axis=1) ** 2.0).sum(), [a]


def case_reshape_transpose(rng):
    a = rng.normal((2, 3, 4))
    p = _proj(rng, (4, 6))
    return lambda ta: p(ta.transpose(2, 0, 1).reshape(4, 6)), [a]


def case_slice(rng):
    a = rng.normal((4, 6))
    p = _proj(rng, (2, 3))
    return lambda ta: p(ta[1:3, ::2]), [a]


def case_concat(rng):
    a = rng.normal((2, 3))
    b = rng.normal((2, 2))
    p = _proj(rng, (2, 5))
    return lambda ta, tb: p(tc.concat([ta, tb], axis=1)), [a, b]


def case_matmul(rng):
    a = rng.normal((3, 4))
    b = rng.normal((4, 2))
    p = _proj(rng, (3, 2))
    return lambda ta, tb: p(ta @ tb), [a, b]


def case_matmul_batched(rng):
    a = rng.normal((2, 3, 4))
    b = rng.normal((4, 2))
    p = _proj(rng, (2, 3, 2))
    return lambda ta, tb: p(ta @ tb), [a, b]


def case_linear_relu(rng):
    x = rng.normal((3, 5))
    w = rng.normal((5, 4)) * 0.5
    b = rng.normal((4,))
    p = _proj(rng, (3, 4))
    return lambda tx, tw, tb: p((tx @ tw + tb).relu()), [x, w, b]


def case_conv2d(rng):
    x = rng.normal((1, 2, 5, 5))
    w = rng.normal((2, 2, 3, 3)) * 0.5
    b = rng.normal((2,))
    p = _proj(rng, (1, 2, 5, 5))
    return lambda tx, tw, tb: p(tc.conv2d(tx, tw, tb, stride=1, padding=1)), [x, w, b]


def case_conv2d_stride(rng):
    x = rng.normal((2, 1, 6, 6))
    w = rng.normal((3, 1, 3, 3)) * 0.5
    p = _proj(rng, (2, 3, 2, 2))
    return lambda tx, tw: p(tc.conv2d(tx, tw, stride=2, padding=0)), [x, w]


def case_upsample(rng):
    x = rng.normal((1, 2, 3, 3))
    p = _proj(rng, (1, 2, 6, 6))
    return lambda tx: p(tc.upsample_nearest(tx, 2)), [x]


def case_group_norm(rng):
    x = rng.normal((2, 4, 3, 3))
    gamma = rng.uniform(0.5, 1.5, (4,))
    beta = rng.normal((4,))
    p = _proj(rng, (2, 4, 3, 3))
    return lambda tx, tg, tb: p(tc.group_norm(tx, 2, tg, tb)), [x, gamma, beta]


def case_mse(rng):
    a = rng.normal((3, 4))
    b = rng.normal((3, 4))
    return lambda ta, tb: tc.mse_loss(ta, tb), [a, b]


def case_bce(rng):
    z = rng.normal((8,))
    t = rng.integers(0, 2, (8,)).astype(np.float64)
    return lambda tz: tc.bce_with_logits(tz, t), [z]


def case_l2_normalize(rng):
    x = _away_from(rng, (3, 3, 3), keepout=0.2)
    p = _proj(rng, (3, 3, 3))
    return lambda tx: p(tc.l2_normalize(tx, axis=2)), [x]


def case_composite_conv_relu_mse(rng):
    x = rng.normal((1, 1, 6, 6))
    w = rng.normal((2, 1, 3, 3)) * 0.5
    b = rng.normal((2,))
    tgt = rng.normal((1, 2, 6, 6))
    return (
        lambda tx, tw, tb: tc.mse_loss(tc.conv2d(tx, tw, tb, padding=1).relu(), tc.Tensor(tgt)),
        [x, w, b],
    )


CASES = [
    ("add", case_add),
    ("mul_broadcast", case_mul_broadcast),
    ("div", case_div),
    ("pow", case_pow),
    ("exp", case_exp),
    ("log", case_log),
    ("sqrt", case_sqrt),
    ("sigmoid", case_sigmoid),
    ("tanh", case_tanh),
    ("relu", case_relu),
    ("leaky_relu", case_leaky_relu),
    ("sum_axis", case_sum_axis),
    ("mean", case_mean),
    ("reshape_transpose", case_reshape_transpose),
    ("slice", case_slice),
    ("concat", case_concat),
    ("matmul", case_matmul),
    ("matmul_batched", case_matmul_batched),
    ("linear_relu", case_linear_relu),
    ("conv2d", case_conv2d),
    ("conv2d_stride", case_conv2d_stride),
    ("upsample_nearest", case_upsample),
    ("group_norm", case_group_norm),
    ("mse_loss", case_mse),
    ("bce_with_logits", case_bce),
    ("l2_normalize", case_l2_normalize),
    ("composite_conv_relu_mse", case_composite_conv_relu_mse),
]


def run_case(builder, rng, h=1e-5):
    """Return max relative error between analytic and FD gradients."""
    fn, arrays = builder(rng)
    tensors = [tc.Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = fn(*tensors)
    tc.backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def eval_np(*arrs):
        return fn(*[tc.Tensor(a) for a in arrs]).item()

    numeric = central_fd_grads(eval_np, [a.copy() for a in arrays], h=h)
    return max(max_rel_err(a, n) for a, n in zip(analytic, numeric))
