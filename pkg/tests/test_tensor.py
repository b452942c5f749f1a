import numpy as np
import pytest

from foss import tensor as tt
from foss.tensor import Parameter, Tensor, backward, grad_check


def triple_loop_matmul(a, b):
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal((a @ b).data, b.data)

    def test_zero(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[0.0], [0.0]])
        assert np.array_equal((a @ b).data, [[0.0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        got = (Tensor(a) @ Tensor(b)).data
        assert np.allclose(got, triple_loop_matmul(a, b), atol=1e-12, rtol=0)

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(tt.DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((2, 2)))


class TestElementwise:
    def test_mul_by_zeros(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        assert np.array_equal((x * Tensor(np.zeros((2, 3)))).data, np.zeros((2, 3)))

    def test_add_zero_identity(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        assert np.array_equal((x + Tensor(np.zeros((2, 3)))).data, x.data)

    def test_mul_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
        got = (Tensor(a) * Tensor(b)).data
        want = np.array([[a[i, j] * b[i, j] for j in range(5)] for i in range(4)])
        assert np.array_equal(got, want)

    def test_non_broadcastable_raises(self):
        with pytest.raises(tt.DimensionError):
            Tensor(np.zeros((2, 3))) + Tensor(np.zeros((4, 5)))


class TestSilu:
    def test_zero(self):
        assert tt.silu(Tensor(0.0)).item() == 0.0

    def test_large_positive_saturates(self):
        assert tt.silu(Tensor(50.0)).item() == pytest.approx(50.0, abs=1e-9)

    def test_at_one(self):
        assert tt.silu(Tensor(1.0)).item() == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), abs=1e-12)


class TestLayerNorm:
    def test_constant_row_zero_output(self):
        x = Tensor(np.full((3, 4), 7.0))
        g, b = Tensor(np.ones(4)), Tensor(np.zeros(4))
        out = tt.layer_norm(x, g, b, eps=1e-5)
        assert np.all(np.abs(out.data) < 1e-9)

    def test_gamma_zero_broadcasts_beta(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.normal(size=(2, 4)))
        out = tt.layer_norm(x, Tensor(np.zeros(4)), Tensor([1.0, 2.0, 3.0, 4.0]))
        assert np.allclose(out.data, np.broadcast_to([1, 2, 3, 4], (2, 4)))

    def test_row_statistics(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(5, 16)))
        out = tt.layer_norm(x, Tensor(np.ones(16)), Tensor(np.zeros(16)), eps=1e-10)
        assert np.all(np.abs(out.data.mean(axis=-1)) < 1e-9)
        assert np.allclose(out.data.var(axis=-1), 1.0, atol=1e-6)


class TestSoftmax:
    def test_uniform(self):
        out = tt.softmax(Tensor(np.zeros(7)[None, :]))
        assert np.allclose(out.data, 1.0 / 7.0, atol=1e-15)

    def test_saturation(self):
        x = np.zeros(4)
        x[2] = 1e6
        out = tt.softmax(Tensor(x[None, :]))
        want = np.zeros(4)
        want[2] = 1.0
        assert np.allclose(out.data[0], want, atol=1e-12)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 6))
        got = tt.softmax(Tensor(x), axis=-1).data
        want = np.exp(x) / np.exp(x).sum(axis=-1, keepdims=True)
        assert np.allclose(got, want, atol=1e-12, rtol=0)

    def test_sums_to_one(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            x = rng.uniform(-50, 50, size=(4, 9))
            s = tt.softmax(Tensor(x), axis=-1).data.sum(axis=-1)
            assert np.all(np.abs(s - 1.0) <= 1e-12)


def sliding_window_conv(x, kernel, mode):
    t, c = x.shape
    w = kernel.shape[0]
    half = w // 2
    xp = np.pad(x, ((half, half), (0, 0)))
    if mode == "depthwise":
        out = np.zeros((t, c))
        for i in range(t):
            for ch in range(c):
                for tap in range(w):
                    out[i, ch] += xp[i + tap, ch] * kernel[tap, ch]
    else:
        cout = kernel.shape[2]
        out = np.zeros((t, cout))
        for i in range(t):
            for o in range(cout):
                for ch in range(c):
                    for tap in range(w):
                        out[i, o] += xp[i + tap, ch] * kernel[tap, ch, o]
    return out


class TestConv1d:
    def test_delta_kernel_identity(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(6, 3))
        k = np.zeros((3, 3))
        k[1, :] = 1.0
        out = tt.conv1d(Tensor(x), Tensor(k), mode="depthwise")
        assert np.allclose(out.data, x, atol=1e-15)

    def test_shift_kernel_with_zero_pad(self):
        x = Tensor(np.array([[1.0], [2.0], [3.0]]))
        k = Tensor(np.array([[1.0], [0.0], [0.0]]))
        out = tt.conv1d(x, k, mode="depthwise")
        assert np.allclose(out.data[:, 0], [0.0, 1.0, 2.0])

    @pytest.mark.parametrize("mode", ["depthwise", "standard"])
    def test_matches_sliding_window_oracle(self, mode):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(9, 4))
        k = rng.normal(size=(5, 4) if mode == "depthwise" else (5, 4, 2))
        out = tt.conv1d(Tensor(x), Tensor(k), mode=mode)
        assert np.allclose(out.data, sliding_window_conv(x, k, mode), atol=1e-12)

    def test_even_kernel_rejected(self):
        with pytest.raises(tt.ConfigurationError):
            tt.conv1d(Tensor(np.zeros((4, 2))), Tensor(np.zeros((2, 2))), mode="depthwise")


class TestBackward:
    def test_sum_gives_ones(self):
        x = Parameter("x", np.arange(6.0).reshape(2, 3))
        backward(tt.tsum(x))
        assert np.array_equal(x.grad, np.ones((2, 3)))

    def test_quadratic_gives_2x(self):
        x = Parameter("x", np.arange(6.0).reshape(2, 3))
        backward(tt.tsum(x * x))
        assert np.allclose(x.grad, 2 * x.data)

    def test_non_scalar_loss_rejected(self):
        x = Parameter("x", np.ones(3))
        with pytest.raises(tt.ContractError):
            backward(x * x)

    def test_deterministic_bit_identical(self):
        rng = np.random.default_rng(9)
        x = Parameter("x", rng.normal(size=(4, 4)))
        w = Parameter("w", rng.normal(size=(4, 4)))

        def run():
            x.zero_grad()
            w.zero_grad()
            backward(tt.tsum(tt.silu(x @ w) * x))
            return x.grad.copy(), w.grad.copy()

        g1, g2 = run(), run()
        assert np.array_equal(g1[0], g2[0]) and np.array_equal(g1[1], g2[1])

    def test_broadcast_adjoint_shapes(self):
        a = Parameter("a", np.ones((3, 4)))
        b = Parameter("b", np.ones((1, 4)))
        c = Parameter("c", np.ones(4))
        backward(tt.tsum(a * b + c))
        assert a.grad.shape == (3, 4)
        assert b.grad.shape == (1, 4)
        assert c.grad.shape == (4,)
        assert np.allclose(b.grad, 3.0)
        assert np.allclose(c.grad, 3.0)


class TestGradCheck:
    def test_linear_function_exact(self):
        x = Parameter("x", np.array([1.0, -2.0, 3.0]))
        err = grad_check(lambda: tt.tsum(x * 4.0 + 1.0), [x])
        assert err < 1e-10

    def test_silu_random_points(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            x = Parameter("x", rng.normal(size=5))
            err = grad_check(lambda: tt.tsum(tt.silu(x)), [x])
            assert err < 1e-6

    @pytest.mark.parametrize("op", ["matmul", "mul", "add", "sub", "div", "softmax",
                                    "layer_norm", "conv1d", "silu", "sigmoid",
                                    "softplus", "exp", "abs", "gather", "take_along",
                                    "cos", "sin", "concat", "mean"])
    def test_each_primitive(self, op):
        rng = np.random.default_rng(hash(op) % 2**32)
        for _ in range(10):
            a = Parameter("a", rng.normal(size=(3, 4)))
            b = Parameter("b", rng.normal(size=(4, 3)))
            # Linear drift keeps gradient coordinates O(1), so the relative
            # error is not dominated by finite-difference noise near zero.
            drift = rng.normal(size=1)[0] + 1.0

            def fn():
                if op == "matmul":
                    y = a @ b
                elif op == "mul":
                    y = a * tt.swapaxes(b, 0, 1)
                elif op == "add":
                    y = a + tt.swapaxes(b, 0, 1)
                elif op == "sub":
                    y = a - tt.swapaxes(b, 0, 1)
                elif op == "div":
                    y = a / (tt.swapaxes(b, 0, 1) * tt.swapaxes(b, 0, 1) + 1.0)
                elif op == "softmax":
                    y = tt.softmax(a, axis=-1) * tt.swapaxes(b, 0, 1)
                elif op == "layer_norm":
                    gamma = tt.reshape(tt.narrow(b, 1, 0, 1), (4,)) + 1.0
                    beta = tt.reshape(tt.narrow(b, 1, 1, 1), (4,))
                    y = tt.layer_norm(a, gamma, beta)
                elif op == "conv1d":
                    y = tt.conv1d(a, tt.swapaxes(b, 0, 1), mode="depthwise")
                elif op == "silu":
                    y = tt.silu(a)
                elif op == "sigmoid":
                    y = tt.sigmoid(a)
                elif op == "softplus":
                    y = tt.softplus(a)
                elif op == "exp":
                    y = tt.exp(a * 0.3)
                elif op == "abs":
                    y = tt.absolute(a + 0.05)
                elif op == "cos":
                    y = tt.cos(a)
                elif op == "sin":
                    y = tt.sin(a)
                elif op == "gather":
                    y = tt.gather(a, [2, 0, 1, 0], axis=1)
                elif op == "take_along":
                    y = tt.take_along(a, np.array([[1], [0], [2]]), axis=0)
                elif op == "concat":
                    y = tt.concat([a, tt.swapaxes(b, 0, 1)], axis=0)
                else:
                    y = tt.tmean(a, axis=0, keepdims=True) * tt.tmean(b)
                return tt.tsum(y * y + y * drift)

            err = grad_check(fn, [a, b])
            assert err < 1e-6, f"{op}: {err}"
