import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sodasr.errors import CheckpointError, DomainError, NonFiniteError, ShapeError
from sodasr.numerics import (
    Adam,
    AdamState,
    Tensor,
    adam_step,
    bilinear_sample,
    concat,
    conv2d,
    decode_checkpoint,
    elementwise,
    encode_checkpoint,
    finite_difference_check,
    gelu,
    gumbel_noise,
    gumbel_softmax,
    gumbel_softmax_logits,
    layer_norm,
    leaky_relu,
    load_checkpoint,
    matmul,
    no_grad,
    save_checkpoint,
    separable_resize,
    softmax,
    stack,
    upsample_conv2d,
    upsample_nearest,
)
from sodasr.numerics import tensor as T


def t64(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True, dtype=np.float64)


# ----------------------------------------------------------------- elementwise
def test_sigmoid_zero():
    assert elementwise("sigmoid", Tensor([0.0])).data[0] == 0.5


def test_add_example():
    np.testing.assert_array_equal(elementwise("add", Tensor([1, 2]), Tensor([3, 4])).data, [4, 6])


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_log_exp_identity(rng, dtype):
    x = rng.uniform(0, 10, 1000).astype(dtype)
    back = elementwise("log", elementwise("exp", Tensor(x))).data
    assert np.abs(back - x).max() < 1e-6


def test_broadcast_mismatch_raises():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))


def test_log_domain_error():
    with pytest.raises(DomainError):
        Tensor([1.0, 0.0]).log()
    with pytest.raises(DomainError):
        Tensor([1.0]) / Tensor([0.0])


def test_scalar_operands_keep_dtype():
    x = Tensor(np.ones(3, np.float64))
    assert (2 * x - 1).dtype == np.float64
    assert (Tensor(np.ones(3, np.float32)) / 3).dtype == np.float32


def test_sigmoid_saturates_without_overflow():
    with np.errstate(over="raise"):
        out = Tensor(np.array([-1000.0, 1000.0])).sigmoid().data
    np.testing.assert_allclose(out, [0.0, 1.0])


# ---------------------------------------------------------------------- matmul
def test_matmul_identity(rng):
    a = rng.standard_normal((3, 3))
    np.testing.assert_array_equal(matmul(Tensor(np.eye(3)), Tensor(a)).data, a)


def test_matmul_example():
    out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_inner_mismatch():
    with pytest.raises(ShapeError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_grad_matches_ones_bt(rng):
    a, b = t64(rng, 3, 4), t64(rng, 4, 2)
    matmul(a, b).sum().backward()
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    assert finite_difference_check(lambda: matmul(a, b).sum(), [a, b]) < 1e-4


def test_batched_matmul_broadcast_grad(rng):
    a, b = t64(rng, 2, 3, 4), t64(rng, 4, 5)
    w = rng.standard_normal((2, 3, 5))
    assert finite_difference_check(lambda: (matmul(a, b) * w).sum(), [a, b]) < 1e-6


# --------------------------------------------------------------------- softmax
def test_softmax_examples():
    np.testing.assert_allclose(softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, rtol=1e-6)
    assert softmax(Tensor([[5.0]]), axis=-1).data[0, 0] == 1.0
    # exp(k)/sum(exp) evaluated by hand: e^1, e^2, e^3 over their sum
    ref = np.exp([1.0, 2.0, 3.0]) / np.exp([1.0, 2.0, 3.0]).sum()
    np.testing.assert_allclose(ref, [0.09003, 0.24473, 0.66524], atol=1e-5)
    np.testing.assert_allclose(softmax(Tensor([1.0, 2.0, 3.0], dtype=np.float64)).data, ref, rtol=1e-12)


def test_softmax_bad_axis():
    with pytest.raises(ShapeError):
        softmax(Tensor(np.ones((2, 2))), axis=2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-80, 80), min_size=1, max_size=12), st.integers(1, 3))
def test_softmax_is_distribution(values, rows):
    x = np.tile(np.asarray(values), (rows, 1))
    p = softmax(Tensor(x, dtype=np.float64), axis=-1).data
    assert np.all(p > 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)


def test_softmax_large_logits_stable():
    p = softmax(Tensor([1000.0, 1000.0])).data
    np.testing.assert_allclose(p, [0.5, 0.5])


# ------------------------------------------------------------------ layer norm
def test_layer_norm_examples():
    const = layer_norm(Tensor(np.full((2, 4), 3.0)), np.ones(4), np.zeros(4), eps=1e-5).data
    np.testing.assert_array_equal(const, np.zeros((2, 4)))
    out = layer_norm(Tensor([[1.0, 3.0]], dtype=np.float64), np.ones(2), np.zeros(2), eps=0.0).data
    np.testing.assert_allclose(out, [[-1.0, 1.0]])


def test_layer_norm_grad(rng):
    x, g, b = t64(rng, 3, 5), t64(rng, 5), t64(rng, 5)
    w = rng.standard_normal((3, 5))
    assert finite_difference_check(lambda: (layer_norm(x, g, b) * w).sum(), [x, g, b]) < 1e-4


# ------------------------------------------------------------------------ conv
def test_conv_identity_1x1(rng):
    x = rng.standard_normal((2, 5, 5, 4)).astype(np.float32)
    k = np.eye(4, dtype=np.float32)[None, None]
    np.testing.assert_array_equal(conv2d(Tensor(x), Tensor(k)).data, x)


def test_conv_ones_interior():
    out = conv2d(Tensor(np.ones((1, 5, 5, 1))), Tensor(np.ones((3, 3, 1, 1)))).data
    assert out[0, 2, 2, 0] == 9.0
    assert out[0, 0, 0, 0] == 4.0  # zero padding at the corner


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 4, 4, 3))), Tensor(np.ones((3, 3, 2, 1))))
    with pytest.raises(ShapeError):
        conv2d(Tensor(np.ones((1, 4, 4, 3))), Tensor(np.ones((2, 2, 3, 1))))


def _direct_conv(x, w, stride, pad):
    b, h, wd, c = x.shape
    kh, kw, _, co = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    ho, wo = (h + 2 * pad - kh) // stride + 1, (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((b, ho, wo, co))
    for n in range(b):
        for i in range(ho):
            for j in range(wo):
                patch = xp[n, i * stride : i * stride + kh, j * stride : j * stride + kw, :]
                out[n, i, j] = np.einsum("abc,abcd->d", patch, w)
    return out


@pytest.mark.parametrize("cin,stride", [(2, 1), (9, 1), (2, 2), (9, 2)])
def test_conv_matches_direct_loop(rng, cin, stride):
    x = rng.standard_normal((2, 6, 5, cin))
    w = rng.standard_normal((3, 3, cin, 3))
    out = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), stride=stride).data
    np.testing.assert_allclose(out, _direct_conv(x, w, stride, 1), rtol=1e-12, atol=1e-12)


# covers the column path (small cin), the narrow-output backward and the tap loop
@pytest.mark.parametrize("cin,cout,stride", [(2, 2, 1), (8, 2, 1), (3, 2, 2), (8, 2, 2), (9, 9, 1), (9, 9, 2)])
def test_conv_grad(rng, cin, cout, stride):
    x, w, b = t64(rng, 1, 5, 4, cin), t64(rng, 3, 3, cin, cout), t64(rng, cout)
    probe = rng.standard_normal(conv2d(x, w, b, stride=stride).shape)
    assert finite_difference_check(lambda: (conv2d(x, w, b, stride=stride) * probe).sum(), [x, w, b]) < 1e-4


@pytest.mark.parametrize("factor,kernel", [(2, 3), (4, 3), (3, 5), (4, 1)])
def test_upsample_conv_matches_two_step(rng, factor, kernel):
    x, w, b = t64(rng, 2, 5, 3, 4), t64(rng, kernel, kernel, 4, 3), t64(rng, 3)
    fused = upsample_conv2d(x, w, b, factor).data
    np.testing.assert_allclose(fused, conv2d(upsample_nearest(x, factor), w, b).data, rtol=1e-12, atol=1e-12)
    probe = rng.standard_normal(fused.shape)
    assert finite_difference_check(lambda: (upsample_conv2d(x, w, b, factor) * probe).sum(), [x, w, b]) < 1e-4


def test_separable_resize_matches_einsum_and_grad(rng):
    x = t64(rng, 2, 5, 4, 3)
    mh, mw = rng.standard_normal((7, 5)), rng.standard_normal((3, 4))
    out = separable_resize(x, mh, mw)
    np.testing.assert_allclose(out.data, np.einsum("oh,pw,bhwc->bopc", mh, mw, x.data), rtol=1e-12, atol=1e-12)
    probe = rng.standard_normal(out.shape)
    assert finite_difference_check(lambda: (separable_resize(x, mh, mw) * probe).sum(), [x]) < 1e-4
    with pytest.raises(ShapeError):
        separable_resize(x, mw, mh)


def test_upsample_conv_rejects_even_kernel():
    with pytest.raises(ShapeError):
        upsample_conv2d(Tensor(np.ones((1, 2, 2, 1))), Tensor(np.ones((2, 2, 1, 1))), factor=2)


# ---------------------------------------------------------------- Gumbel-softmax
def test_gumbel_softmax_reduces_to_normalization():
    v = np.array([[0.5, 2.0, 1.5]])
    np.testing.assert_allclose(gumbel_softmax(Tensor(v), 1.0, noise=0.0).data, v / v.sum(), rtol=1e-12)


def test_gumbel_softmax_rejects_bad_inputs():
    with pytest.raises(DomainError):
        gumbel_softmax(Tensor(np.array([1.0, 0.0])), 1.0, rng=np.random.default_rng(0))
    with pytest.raises(DomainError):
        gumbel_softmax(Tensor(np.array([1.0, 2.0])), 0.0, rng=np.random.default_rng(0))


def test_gumbel_noise_distribution():
    g = gumbel_noise(200_000, np.random.default_rng(0))
    assert abs(g.mean() - np.euler_gamma) < 0.01
    assert abs(g.var() - np.pi**2 / 6) < 0.03


def test_gumbel_softmax_grad(rng):
    z = t64(rng, 3, 5)
    noise = rng.standard_normal((3, 5))
    probe = rng.standard_normal((3, 5))
    assert finite_difference_check(lambda: (gumbel_softmax_logits(z, 0.7, noise=noise) * probe).sum(), z) < 1e-4


# -------------------------------------------------------------------- bilinear
def test_bilinear_at_cell_center():
    x = np.arange(12, dtype=np.float64).reshape(1, 3, 4, 1)
    coords = np.array([[[(2 + 0.5) / 4, (1 + 0.5) / 3]]])
    assert bilinear_sample(Tensor(x), Tensor(coords)).data[0, 0, 0] == x[0, 1, 2, 0]


def test_bilinear_midway():
    x = np.array([[[[2.0], [6.0]]]])  # 1x1x2 map
    out = bilinear_sample(Tensor(x), Tensor([[[0.5, 0.5]]])).data
    assert out[0, 0, 0] == 4.0


def test_bilinear_clamps_out_of_range():
    x = np.arange(4, dtype=np.float64).reshape(1, 2, 2, 1)
    out = bilinear_sample(Tensor(x), Tensor([[[-3.0, -3.0], [7.0, 7.0]]])).data
    np.testing.assert_array_equal(out[0, :, 0], [0.0, 3.0])


def test_bilinear_grad(rng):
    x = t64(rng, 2, 3, 4, 2)
    # keep samples clear of texel-grid crossings where the interpolant has kinks
    c = rng.uniform(0.2, 0.8, (2, 5, 2))
    c = Tensor(c, requires_grad=True, dtype=np.float64)
    probe = rng.standard_normal((2, 5, 2))
    assert finite_difference_check(lambda: (bilinear_sample(x, c) * probe).sum(), [x, c], h=1e-7) < 1e-3


# --------------------------------------------------------------- other kernels
@pytest.mark.parametrize(
    "fn",
    [
        lambda a: a.exp(),
        lambda a: (a * a + 1.0).log(),
        lambda a: a.sigmoid(),
        lambda a: (a + 0.05).abs(),
        lambda a: gelu(a),
        lambda a: leaky_relu(a),
        lambda a: 1.0 / (a * a + 1.0),
        lambda a: a.reshape(2, -1).transpose(1, 0) * 3.0,
        lambda a: a.mean(axis=1, keepdims=True) - a,
        lambda a: concat([a, a * 2], axis=0),
        lambda a: stack([a, a.exp()], axis=1),
        lambda a: a[:, 1:3],
        lambda a: upsample_nearest(a.reshape(1, 2, 3, 1), 2),
    ],
)
def test_unary_grads(rng, fn):
    a = t64(rng, 2, 3)
    probe = rng.standard_normal(fn(a).shape)
    assert finite_difference_check(lambda: (fn(a) * probe).sum(), a) < 1e-4


def test_reshape_transpose_roundtrip_bit_exact(rng):
    x = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
    t = Tensor(x).reshape(6, 20).reshape(2, 3, 4, 5).transpose(3, 1, 0, 2).transpose(2, 1, 3, 0)
    assert np.array_equal(t.data, x)


def test_backward_populates_all_ancestors(rng):
    a = t64(rng, 3)
    mid = a * 2.0
    out = (mid * mid).sum()
    out.backward()
    assert mid.grad is not None and mid.grad.shape == mid.shape
    np.testing.assert_allclose(a.grad, 8.0 * a.data)


def test_no_grad_records_nothing(rng):
    a = t64(rng, 3)
    with no_grad():
        out = (a * 2.0).sum()
    assert not out.requires_grad and out._parents == ()


def test_shared_subgraph_accumulates(rng):
    a = t64(rng, 4)
    b = a.exp()
    (b * b + b).sum().backward()
    np.testing.assert_allclose(a.grad, 2 * np.exp(2 * a.data) + np.exp(a.data))


def test_deep_graph_no_recursion_limit():
    a = Tensor(np.ones(2), requires_grad=True, dtype=np.float64)
    x = a
    for _ in range(5000):
        x = x * 1.0
    x.sum().backward()
    np.testing.assert_array_equal(a.grad, np.ones(2))


# ------------------------------------------------------------------------ adam
def test_adam_first_step_closed_form(rng):
    g = rng.standard_normal(5)
    p = Tensor(np.zeros(5), requires_grad=True, dtype=np.float64)
    state = AdamState(learning_rate=0.01)
    adam_step([p], [g], state)
    expected = -0.01 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p.data, expected, atol=1e-6)
    assert state.step_count == 1


def test_adam_zero_gradient_noop():
    p = Tensor(np.arange(4.0), requires_grad=True, dtype=np.float64)
    state = AdamState(learning_rate=0.1)
    for k in range(3):
        adam_step([p], [np.zeros(4)], state)
        assert state.step_count == k + 1
    np.testing.assert_array_equal(p.data, np.arange(4.0))


def test_adam_defaults_and_rejects_nonfinite():
    state = AdamState(learning_rate=1e-4)
    assert (state.beta1, state.beta2) == (0.9, 0.999)
    p = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(NonFiniteError, match="w"):
        adam_step([p], [np.array([1.0, np.nan])], state, names=["w"])
    np.testing.assert_array_equal(p.data, [1.0, 1.0])
    assert state.step_count == 0


def test_adam_minimises_quadratic():
    p = Tensor(np.array([3.0, -2.0]), requires_grad=True, dtype=np.float64)
    opt = Adam([("p", p)], lr=0.1)
    for _ in range(300):
        opt.zero_grad()
        (p * p).sum().backward()
        opt.step()
    assert np.abs(p.data).max() < 0.05


# ------------------------------------------------------------ gradient checker
def test_fd_check_quadratic_exact(rng):
    x = t64(rng, 6)
    assert finite_difference_check(lambda: (x * x).sum(), x) < 1e-8


def test_fd_check_softmax_matmul_composite(rng):
    a, b = t64(rng, 3, 4), t64(rng, 4, 4)
    probe = rng.standard_normal((3, 4))
    assert finite_difference_check(lambda: (softmax(matmul(a, b)) * probe).sum(), [a, b]) < 1e-4


def test_fd_check_detects_wrong_gradient(rng):
    x = t64(rng, 4)

    def broken():
        y = x * x
        y._backward = lambda g: (g * 3.0 * x.data,)  # wrong on purpose
        return y.sum()

    assert finite_difference_check(broken, x) > 0.1


# ------------------------------------------------------------------ checkpoint
def test_checkpoint_roundtrip(tmp_path, rng):
    tensors = {"a.w": rng.standard_normal((3, 2)).astype(np.float32), "b": np.float32(rng.standard_normal(4)),
               "scalar": np.array(2.5, np.float32)}
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, tensors)
    raw = path.read_bytes()
    assert raw[:8] == b"SODASR\x00\x01"
    back = load_checkpoint(path)
    assert list(back) == list(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])


def test_checkpoint_validation():
    blob = encode_checkpoint({"w": np.ones((2, 2), np.float32)})
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"BADMAGIC" + blob[8:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(blob[:-1])
    with pytest.raises(CheckpointError):
        decode_checkpoint(blob + b"\x00")


def test_tensor_backward_requires_scalar():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3), requires_grad=True).backward()
    assert isinstance(T.unbroadcast(np.ones((2, 3, 4)), (3, 1)), np.ndarray)
