"""Tensor engine: forward semantics, backward rules, finite-difference audit."""

import numpy as np
import pytest

from tadgraph import autodiff as ad
from tadgraph.autodiff import Tensor
from tadgraph.errors import ConfigError, ContractError, ShapeError


def test_matmul_identity():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    out = ad.matmul(Tensor(np.eye(2)), m)
    np.testing.assert_array_equal(out.data, m.data)


def test_matmul_hand_product():
    out = ad.matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_grad_matches_finite_differences():
    rng = np.random.default_rng(7)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    err = ad.grad_check(lambda: ad.tsum(ad.matmul(a, b)), [a, b])
    assert err < 1e-3


def test_relu_values():
    out = ad.relu(Tensor([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])


def test_sigmoid_at_zero():
    assert ad.sigmoid(Tensor([0.0])).data[0] == pytest.approx(0.5)


def test_mean_of_constant_is_constant():
    out = ad.tmean(Tensor(np.full((3, 5), 2.5)), axis=1)
    np.testing.assert_allclose(out.data, 2.5)
    assert out.shape == (3,)


def test_mean_invalid_axis():
    with pytest.raises(ShapeError):
        ad.tmean(Tensor(np.zeros((2, 2))), axis=2)


def test_add_requires_matched_shapes():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))))


def test_backward_sum_gives_ones():
    theta = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    ad.tsum(theta).backward()
    np.testing.assert_array_equal(theta.grad, np.ones((2, 3)))


def test_backward_sum_of_squares_gives_two_theta():
    theta = Tensor(np.arange(1.0, 7.0).reshape(2, 3), requires_grad=True)
    ad.tsum(ad.square(theta)).backward()
    np.testing.assert_allclose(theta.grad, 2.0 * theta.data)


def test_backward_requires_scalar():
    theta = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ContractError):
        ad.square(theta).backward()


def test_backward_accumulates_until_reset():
    theta = Tensor(np.ones(4), requires_grad=True)
    ad.tsum(theta).backward()
    ad.tsum(theta).backward()
    np.testing.assert_array_equal(theta.grad, 2.0 * np.ones(4))
    ad.zero_grad([theta])
    assert theta.grad is None


def test_forward_deterministic():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 5))
    w = rng.normal(size=(3, 2, 4))

    def run():
        return ad.grouped_conv1d(Tensor(x), Tensor(w), groups=2).data

    np.testing.assert_array_equal(run(), run())


def test_no_grad_blocks_recording():
    theta = Tensor(np.ones(3), requires_grad=True)
    with ad.no_grad():
        out = ad.tsum(ad.square(theta))
    assert not out.requires_grad and out._parents == ()


# ---------------------------------------------------------------------------
# grouped 1-D convolution
# ---------------------------------------------------------------------------

class TestGroupedConv1d:
    def test_pointwise_identity(self):
        x = Tensor(np.random.default_rng(0).normal(size=(3, 6)))
        w = Tensor(np.eye(3)[None])       # k=1, identity mapping
        out = ad.grouped_conv1d(x, w, groups=1)
        np.testing.assert_allclose(out.data, x.data)

    def test_kernel3_ramp_by_direct_summation(self):
        # single channel, length-4 ramp, taps (w1, w2, w3); oracle sums by hand
        x_vals = np.array([0.0, 1.0, 2.0, 3.0])
        w1, w2, w3 = 0.5, -1.0, 2.0
        padded = np.concatenate([[0.0], x_vals, [0.0]])
        expected = np.array([w1 * padded[t] + w2 * padded[t + 1] + w3 * padded[t + 2]
                             for t in range(4)])
        w = Tensor(np.array([w1, w2, w3]).reshape(3, 1, 1))
        out = ad.grouped_conv1d(Tensor(x_vals[None, :]), w, groups=1)
        np.testing.assert_allclose(out.data[0], expected)

    def test_two_groups_equal_split_compute_concat(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(6, 9))
        w = rng.normal(size=(3, 3, 4))   # C_in/g = 3, C_out = 4 (2 per group)
        full = ad.grouped_conv1d(Tensor(x), Tensor(w), groups=2).data
        top = ad.grouped_conv1d(Tensor(x[:3]), Tensor(w[:, :, :2]), groups=1).data
        bottom = ad.grouped_conv1d(Tensor(x[3:]), Tensor(w[:, :, 2:]), groups=1).data
        np.testing.assert_allclose(full, np.concatenate([top, bottom]), atol=1e-12)

    def test_groups_match_independent_convs_many_seeds(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            groups, c_g, length = 4, 2, 7
            c_in = groups * c_g
            x = rng.normal(size=(c_in, length))
            w = rng.normal(size=(3, c_g, c_in))
            full = ad.grouped_conv1d(Tensor(x), Tensor(w), groups=groups).data
            parts = []
            for g in range(groups):
                xs = x[g * c_g:(g + 1) * c_g]
                ws = w[:, :, g * c_g:(g + 1) * c_g]
                parts.append(ad.grouped_conv1d(Tensor(xs), Tensor(ws), groups=1).data)
            np.testing.assert_allclose(full, np.concatenate(parts), atol=1e-12)

    def test_indivisible_channels_rejected(self):
        with pytest.raises(ConfigError):
            ad.grouped_conv1d(Tensor(np.zeros((5, 4))), Tensor(np.zeros((3, 2, 4))), groups=2)

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            ad.grouped_conv1d(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 2, 2))), groups=1)


# ---------------------------------------------------------------------------
# finite-difference audit of every registered operation
# ---------------------------------------------------------------------------

def _op_cases(rng):
    """(name, builder) pairs; each builder returns (f, params)."""
    def mk(shape, offset=0.0, positive=False):
        base = rng.normal(size=shape)
        if positive:
            base = np.abs(base) + 0.5
        return Tensor(base + offset, requires_grad=True)

    a = mk((2, 3))
    b = mk((2, 3))
    m1 = mk((2, 4))
    m2 = mk((4, 3))
    pos = mk((2, 3), positive=True)
    away = Tensor(rng.normal(size=(2, 3)) + np.where(rng.normal(size=(2, 3)) > 0, 1.0, -1.0),
                  requires_grad=True)
    bias = mk((3,))
    conv_x = mk((4, 5))
    conv_w = mk((3, 2, 4))
    weights = rng.normal(size=(3, 3))

    return [
        ("add", lambda: ad.tsum(ad.square(ad.add(a, b))), [a, b]),
        ("add_const", lambda: ad.tsum(ad.square(ad.add(a, 1.5))), [a]),
        ("mul", lambda: ad.tsum(ad.mul(a, b)), [a, b]),
        ("mul_const_array", lambda: ad.tsum(ad.mul(a, np.full((2, 3), 0.7))), [a]),
        ("square", lambda: ad.tsum(ad.square(a)), [a]),
        ("relu", lambda: ad.tsum(ad.square(ad.relu(away))), [away]),
        ("sigmoid", lambda: ad.tsum(ad.square(ad.sigmoid(a))), [a]),
        ("log", lambda: ad.tsum(ad.log(pos)), [pos]),
        ("clip_interior", lambda: ad.tsum(ad.square(ad.clip(a, -50.0, 50.0))), [a]),
        ("mean_axis", lambda: ad.tsum(ad.square(ad.tmean(a, axis=1))), [a]),
        ("mean_all", lambda: ad.square(ad.tmean(a)), [a]),
        ("matmul", lambda: ad.tsum(ad.square(ad.matmul(m1, m2))), [m1, m2]),
        ("add_bias", lambda: ad.tsum(ad.square(ad.add_bias(a, bias))), [a, bias]),
        ("transpose", lambda: ad.tsum(ad.square(a.transpose())), [a]),
        ("reshape", lambda: ad.tsum(ad.square(a.reshape(3, 2))), [a]),
        ("concat", lambda: ad.tsum(ad.square(ad.concat([a, b], axis=1))), [a, b]),
        ("slice", lambda: ad.tsum(ad.square(a[0:1, 1:])), [a]),
        ("resample", lambda: ad.tsum(ad.square(ad.resample_columns(a, weights))), [a]),
        ("grouped_conv1d", lambda: ad.tsum(ad.square(
            ad.grouped_conv1d(conv_x, conv_w, groups=2))), [conv_x, conv_w]),
    ]


@pytest.mark.parametrize("seed", range(20))
def test_every_op_backward_passes_grad_check(seed):
    rng = np.random.default_rng(seed)
    for name, f, params in _op_cases(rng):
        err = ad.grad_check(f, params)
        assert err < 1e-3, f"op {name} failed grad check with rel err {err}"


def test_grad_check_on_linear_function_near_zero_error():
    theta = Tensor(np.arange(1.0, 5.0), requires_grad=True)
    assert ad.grad_check(lambda: ad.tsum(theta), theta) < 1e-8


def test_grad_check_relu_away_from_kink():
    theta = Tensor(np.array([1.0, -2.0, 3.0, -4.0]), requires_grad=True)
    assert ad.grad_check(lambda: ad.tsum(ad.relu(theta)), theta) < 1e-6
