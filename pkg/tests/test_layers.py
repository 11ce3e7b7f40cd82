import numpy as np
import pytest

from qent import nn
from qent.errors import BatchTooSmallError, ShapeMismatchError
from qent.nn.gradcheck import finite_difference_check
from qent.nn.tensor import Tensor


def conv2d_naive(x, w, b, stride, padding):
    """Quadruple-loop direct cross-correlation oracle."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    out = np.zeros((n, f, oh, ow), dtype=x.dtype)
    for i in range(n):
        for fi in range(f):
            for p in range(oh):
                for q in range(ow):
                    patch = xp[i, :, p * stride : p * stride + kh, q * stride : q * stride + kw]
                    out[i, fi, p, q] = (patch * w[fi]).sum() + b[fi]
    return out


class TestConv2d:
    def test_sum_of_ones(self):
        x = Tensor(np.ones((1, 1, 2, 2)))
        w = Tensor(np.ones((1, 1, 2, 2)))
        b = Tensor(np.zeros(1))
        out = nn.conv2d(x, w, b, stride=1, padding=0)
        assert out.data.shape == (1, 1, 1, 1)
        assert out.data[0, 0, 0, 0] == 4.0

    def test_identity_kernel(self, rng):
        x = Tensor(rng.standard_normal((2, 1, 5, 5)))
        w = Tensor(np.ones((1, 1, 1, 1)))
        b = Tensor(np.zeros(1))
        out = nn.conv2d(x, w, b, stride=1, padding=0)
        assert np.array_equal(out.data, x.data)

    def test_matches_naive_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 4))
            c = int(rng.integers(1, 5))
            f = int(rng.integers(1, 6))
            k = int(rng.integers(1, 4))
            s = int(rng.integers(1, 3))
            p = int(rng.integers(0, 3))
            h = int(rng.integers(k, k + 6))
            x = rng.standard_normal((n, c, h, h))
            w = rng.standard_normal((f, c, k, k))
            b = rng.standard_normal(f)
            mine = nn.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=s, padding=p).data
            assert np.abs(mine - conv2d_naive(x, w, b, s, p)).max() < 1e-12

    def test_output_size_formula(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 9, 9)))
        w = Tensor(rng.standard_normal((5, 2, 3, 3)))
        b = Tensor(np.zeros(5))
        out = nn.conv2d(x, w, b, stride=2, padding=1)
        assert out.shape == (1, 5, 5, 5)

    def test_channel_mismatch_raises(self, rng):
        with pytest.raises(ShapeMismatchError):
            nn.conv2d(
                Tensor(rng.standard_normal((1, 3, 4, 4))),
                Tensor(rng.standard_normal((2, 2, 2, 2))),
                Tensor(np.zeros(2)),
            )

    def test_gradients(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 6, 6)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 3, 3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal(4), requires_grad=True)
        t = Tensor(rng.standard_normal((2, 4, 3, 3)))
        finite_difference_check(
            lambda: nn.l1_loss(nn.conv2d(x, w, b, stride=2, padding=1), t),
            [x, w, b],
            np.random.default_rng(3),
            n_coords=120,
        )


class TestConvTranspose2d:
    def test_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 1, 4, 4)))
        w = Tensor(np.ones((1, 1, 1, 1)))
        b = Tensor(np.zeros(1))
        out = nn.conv_transpose2d(x, w, b, stride=1, padding=0)
        assert np.array_equal(out.data, x.data)

    def test_adjoint_identity(self, rng):
        for _ in range(10):
            c, f, k, s, p = 2, 3, 3, 2, 1
            h = 6
            oh = (h + 2 * p - k) // s + 1
            op = h - ((oh - 1) * s - 2 * p + k)
            x = rng.standard_normal((2, c, h, h))
            w = rng.standard_normal((f, c, k, k))
            y = rng.standard_normal((2, f, oh, oh))
            conv = nn.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(f)), stride=s, padding=p).data
            convt = nn.conv_transpose2d(
                Tensor(y), Tensor(w), Tensor(np.zeros(c)), stride=s, padding=p, output_padding=op
            ).data
            assert abs((conv * y).sum() - (x * convt).sum()) < 1e-10

    def test_shape_formula_matches_builtin_decoders(self):
        from qent.cae import builtin_spec, resolve_decoder_geometry

        for d in range(2, 8):
            spec = builtin_spec(d)
            sizes, fixes = resolve_decoder_geometry(spec)
            cur = sizes[-1]
            targets = list(reversed(sizes[:-1]))
            i = 0
            for layer in spec.decoder_layers:
                if layer.kind != "ConvTranspose2D":
                    continue
                fix = fixes[i]
                base = nn.conv_transpose_output_size(
                    cur, layer.kernel, layer.stride, layer.padding, fix["output_padding"]
                )
                if fix["crop"] is not None:
                    assert base > fix["crop"]
                elif fix["pad"] is not None:
                    assert base < fix["pad"]
                else:
                    assert base == targets[i]
                cur = targets[i]
                i += 1

    def test_gradients(self, rng):
        x = Tensor(rng.standard_normal((2, 4, 3, 3)), requires_grad=True)
        w = Tensor(rng.standard_normal((4, 3, 3, 3)), requires_grad=True)
        b = Tensor(rng.standard_normal(3), requires_grad=True)
        t = Tensor(rng.standard_normal((2, 3, 6, 6)))
        finite_difference_check(
            lambda: nn.l1_loss(nn.conv_transpose2d(x, w, b, stride=2, padding=1, output_padding=1), t),
            [x, w, b],
            np.random.default_rng(3),
            n_coords=120,
        )


class TestBatchNorm2d:
    def test_train_mode_normalizes(self, rng):
        x = Tensor(rng.standard_normal((8, 3, 4, 4)) * 5 + 2)
        gamma = Tensor(np.ones(3))
        beta = Tensor(np.zeros(3))
        state = nn.BatchNormState(3, dtype=np.float64)
        out = nn.batch_norm2d(x, gamma, beta, state, training=True).data
        assert np.abs(out.mean(axis=(0, 2, 3))).max() < 1e-6
        assert np.abs(out.var(axis=(0, 2, 3)) - 1.0).max() < 1e-5

    def test_eval_mode_affine(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)))
        gamma = Tensor(np.full(3, 2.0))
        beta = Tensor(np.full(3, 0.5))
        state = nn.BatchNormState(3, dtype=np.float64)
        out = nn.batch_norm2d(x, gamma, beta, state, training=False, eps=1e-5).data
        expected = x.data * 2.0 / np.sqrt(1.0 + 1e-5) + 0.5
        assert np.abs(out - expected).max() < 1e-12

    def test_running_stats_update(self, rng):
        x = Tensor(rng.standard_normal((16, 2, 5, 5)) * 3 + 1)
        state = nn.BatchNormState(2, dtype=np.float64)
        nn.batch_norm2d(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), state, training=True, momentum=0.1)
        m = 16 * 25
        expected_mean = 0.1 * x.data.mean(axis=(0, 2, 3))
        expected_var = 0.9 * 1.0 + 0.1 * x.data.var(axis=(0, 2, 3)) * m / (m - 1)
        assert np.allclose(state.running_mean, expected_mean)
        assert np.allclose(state.running_var, expected_var)

    def test_batch_too_small(self, rng):
        x = Tensor(rng.standard_normal((1, 3, 1, 1)))
        state = nn.BatchNormState(3, dtype=np.float64)
        with pytest.raises(BatchTooSmallError):
            nn.batch_norm2d(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), state, training=True)

    @pytest.mark.parametrize("training", [True, False])
    def test_gradients(self, rng, training):
        x = Tensor(rng.standard_normal((4, 3, 3, 3)), requires_grad=True)
        gamma = Tensor(rng.standard_normal(3) + 1.5, requires_grad=True)
        beta = Tensor(rng.standard_normal(3), requires_grad=True)
        state = nn.BatchNormState(3, dtype=np.float64)
        state.running_mean = rng.standard_normal(3)
        state.running_var = rng.random(3) + 0.5
        t = Tensor(rng.standard_normal((4, 3, 3, 3)))

        def loss():
            frozen = nn.BatchNormState(3, dtype=np.float64)
            frozen.running_mean = state.running_mean.copy()
            frozen.running_var = state.running_var.copy()
            return nn.l1_loss(
                nn.batch_norm2d(x, gamma, beta, frozen, training=training), t
            )

        finite_difference_check(loss, [x, gamma, beta], np.random.default_rng(5), n_coords=120)


class TestDropout2d:
    def test_rate_zero_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)))
        assert nn.dropout2d(x, 0.0, training=True, rng=rng) is x

    def test_eval_identity(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 4, 4)))
        assert nn.dropout2d(x, 0.9, training=False) is x

    def test_channel_drop_frequency(self):
        rng = np.random.default_rng(0)
        x = Tensor(np.ones((100, 100, 2, 2)))
        out = nn.dropout2d(x, 0.5, training=True, rng=rng).data
        dropped = (out[:, :, 0, 0] == 0).mean()
        assert abs(dropped - 0.5) < 0.01
        kept = out[out != 0]
        assert np.allclose(kept, 2.0)

    def test_whole_channels_dropped(self):
        rng = np.random.default_rng(1)
        x = Tensor(np.ones((4, 8, 3, 3)))
        out = nn.dropout2d(x, 0.5, training=True, rng=rng).data
        per_channel = out.reshape(4, 8, -1)
        assert np.all((per_channel == 0).all(axis=2) | (per_channel == 2.0).all(axis=2))


class TestActivations:
    def test_leaky_relu_values(self):
        x = Tensor(np.array([-1.0, 0.0, 2.0]))
        out = nn.leaky_relu(x, 0.1).data
        assert np.allclose(out, [-0.1, 0.0, 2.0])

    def test_gelu_zero(self):
        assert nn.gelu(Tensor(np.zeros(3))).data.sum() == 0.0

    def test_gelu_exact_form(self, rng):
        from scipy.special import erf

        x = rng.standard_normal(100)
        out = nn.gelu(Tensor(x)).data
        assert np.abs(out - x * 0.5 * (1 + erf(x / np.sqrt(2)))).max() < 1e-15

    def test_softmax_simplex_and_shift_invariance(self, rng):
        z = rng.standard_normal((6, 5))
        y1 = nn.softmax(Tensor(z)).data
        y2 = nn.softmax(Tensor(z + 13.7)).data
        assert np.abs(y1.sum(axis=-1) - 1.0).max() < 1e-12
        assert np.abs(y1 - y2).max() < 1e-12

    @pytest.mark.parametrize(
        "fn",
        [
            lambda x: nn.leaky_relu(x, 0.1),
            nn.gelu,
            nn.softmax,
        ],
    )
    def test_gradients(self, rng, fn):
        base = rng.standard_normal((4, 6))
        base[np.abs(base) < 1e-3] = 0.5  # keep clear of kinks
        x = Tensor(base, requires_grad=True)
        t = Tensor(rng.standard_normal((4, 6)))
        finite_difference_check(
            lambda: nn.l1_loss(fn(x), t), [x], np.random.default_rng(4), n_coords=24
        )


class TestLinear:
    def test_affine(self, rng):
        x = rng.standard_normal((3, 4))
        w = rng.standard_normal((2, 4))
        b = rng.standard_normal(2)
        out = nn.linear(Tensor(x), Tensor(w), Tensor(b)).data
        assert np.allclose(out, x @ w.T + b)

    def test_gradients(self, rng):
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        w = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal(2), requires_grad=True)
        t = Tensor(rng.standard_normal((3, 2)))
        finite_difference_check(
            lambda: nn.l1_loss(nn.linear(x, w, b), t), [x, w, b], np.random.default_rng(6), n_coords=26
        )


class TestL1Loss:
    def test_equal_inputs(self, rng):
        x = Tensor(rng.standard_normal((3, 3)))
        assert nn.l1_loss(x, x).data == 0.0

    def test_simple_value(self):
        out = nn.l1_loss(Tensor(np.array([1.0, -1.0])), Tensor(np.zeros(2)))
        assert out.data == 1.0

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeMismatchError):
            nn.l1_loss(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_gradient_is_scaled_sign(self, rng):
        p = Tensor(rng.standard_normal(10) + 3.0, requires_grad=True)
        t = Tensor(np.zeros(10))
        nn.l1_loss(p, t).backward()
        assert np.allclose(p.grad, np.sign(p.data) / 10)


class TestAdam:
    def test_zero_gradient_no_move(self, rng):
        p = Tensor(rng.standard_normal(5), requires_grad=True)
        before = p.data.copy()
        opt = nn.Adam([p], 0.1)
        p.grad = np.zeros(5)
        opt.step()
        assert np.array_equal(p.data, before)

    def test_first_step_is_lr(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = nn.Adam([p], 0.1)
        p.grad = np.array([1.0])
        opt.step()
        # bias correction makes mhat/sqrt(vhat) = 1 on the first step
        assert abs(p.data[0] - 0.9) < 1e-7

    def test_quadratic_descent(self):
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = nn.Adam([p], 1e-2)
        for _ in range(1000):
            p.grad = 2 * p.data
            opt.step()
        assert abs(p.data[0]) < 0.1


class TestPadCrop:
    def test_pad_and_crop_are_adjoint_shapes(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 5, 5)), requires_grad=True)
        padded = nn.zero_pad2d(x, (2, 2), (2, 2))
        assert padded.shape == (1, 2, 9, 9)
        cropped = nn.center_crop2d(padded, 5, 5)
        assert np.array_equal(cropped.data, x.data)

    def test_gradients(self, rng):
        x = Tensor(rng.standard_normal((1, 2, 6, 6)), requires_grad=True)
        t = Tensor(rng.standard_normal((1, 2, 4, 4)))
        finite_difference_check(
            lambda: nn.l1_loss(nn.center_crop2d(x, 4, 4), t), [x], np.random.default_rng(8), n_coords=20
        )
        t2 = Tensor(rng.standard_normal((1, 2, 8, 8)))
        finite_difference_check(
            lambda: nn.l1_loss(nn.zero_pad2d(x, (1, 1), (1, 1)), t2), [x], np.random.default_rng(9), n_coords=20
        )
