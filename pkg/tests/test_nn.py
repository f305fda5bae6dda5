import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snoresite.nn import (LSTM, Adam, BatchNorm, BiLSTMClassifier, Bottleneck, Conv2d, Dense,
                          DivergenceError, GlobalAvgPool, MaxPool2d, ReLU, ResNet, ResNetConfig,
                          SGDMomentum, TrainConfig, check_module, fit, grad_check,
                          load_checkpoint, lstm_cell, lstm_cell_backward, predict_logits,
                          resnet_parameter_count, save_checkpoint, softmax, softmax_xent)
from snoresite.nn.gradcheck import rel_error
from snoresite.nn.layers import conv_output_size


def rng(seed=0):
    return np.random.default_rng(seed)


def sum_loss(out, targets):
    """Weighted sum with fixed random weights; exercises every output entry."""
    w = np.random.default_rng(99).normal(size=out.shape)
    return float(np.sum(out * w)), w


def targets_for(n, k=9):
    return np.arange(n) % k


# --- dense / softmax -------------------------------------------------------------

def test_dense_identity_and_zero_grad():
    d = Dense(4, 4)
    d.params["W"] = np.eye(4)
    x = rng().normal(size=(3, 4))
    np.testing.assert_array_equal(d.forward(x), x)
    dx = d.backward(np.zeros((3, 4)))
    assert not dx.any() and not d.grads["W"].any() and not d.grads["b"].any()


def test_dense_gradcheck():
    r = check_module(Dense(5, 3, rng(1)), rng(2).normal(size=(4, 5)), None, sum_loss)
    assert r.max_err < 1e-6


def test_dense_shape_error():
    with pytest.raises(ValueError):
        Dense(5, 3).forward(np.zeros((2, 4)))


def test_softmax_properties():
    z = rng(3).normal(size=(5, 9)) * 50
    np.testing.assert_allclose(softmax(z).sum(axis=1), 1.0, atol=1e-12)
    loss, _ = softmax_xent(np.zeros((1, 9)), [4])
    assert loss == pytest.approx(np.log(9))
    assert np.isfinite(softmax_xent(np.array([[1e4, -1e4]]), [1])[0])


def test_softmax_xent_gradcheck():
    z = rng(4).normal(size=(3, 9))
    t = np.array([0, 5, 8])
    _, g = softmax_xent(z, t)
    err, _, _, _, _ = grad_check(lambda: softmax_xent(z, t)[0], {"z": z}, {"z": g})
    assert err < 1e-8


def test_softmax_xent_bad_targets():
    with pytest.raises(ValueError):
        softmax_xent(np.zeros((2, 3)), [0, 3])


# --- convolution -----------------------------------------------------------------

def conv_oracle(x, W, stride, pad):
    n, h, w, c = x.shape
    co, ci, k, _ = W.shape
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c))
    xp[:, pad:pad + h, pad:pad + w] = x
    ho, wo = (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1
    y = np.zeros((n, ho, wo, co))
    for b in range(n):
        for i in range(ho):
            for j in range(wo):
                for o in range(co):
                    acc = 0.0
                    for ch in range(c):
                        for di in range(k):
                            for dj in range(k):
                                acc += xp[b, i * stride + di, j * stride + dj, ch] * W[o, ch, di, dj]
                    y[b, i, j, o] = acc
    return y


@pytest.mark.parametrize("k, stride, pad, hw", [(3, 1, 1, (5, 6)), (3, 2, 1, (7, 8)), (1, 2, 0, (5, 5)),
                                                 (7, 2, 3, (9, 10)), (1, 1, 0, (4, 3))])
def test_conv_matches_loop_oracle(k, stride, pad, hw):
    conv = Conv2d(2, 3, k, stride, pad, rng(5))
    x = rng(6).normal(size=(2, *hw, 2))
    np.testing.assert_allclose(conv.forward(x), conv_oracle(x, conv.params["W"], stride, pad),
                               rtol=0, atol=1e-12)


@pytest.mark.parametrize("k, stride, pad", [(3, 1, 1), (3, 2, 1), (1, 2, 0), (7, 2, 3)])
def test_conv_gradcheck(k, stride, pad):
    r = check_module(Conv2d(2, 3, k, stride, pad, rng(7)), rng(8).normal(size=(2, 7, 6, 2)),
                     None, sum_loss)
    assert r.max_err < 1e-4


def test_conv_identity_1x1():
    conv = Conv2d(3, 3, 1)
    conv.params["W"] = np.eye(3)[:, :, None, None]
    x = rng(9).normal(size=(2, 4, 5, 3))
    np.testing.assert_array_equal(conv.forward(x), x)


def test_conv_output_size_floor_and_error():
    assert conv_output_size(64, 7, 2, 3) == 32
    assert conv_output_size(63, 3, 2, 1) == 32
    assert conv_output_size(126, 7, 2, 3) == 63
    with pytest.raises(ValueError):
        conv_output_size(2, 7, 1, 0)


def test_conv_channel_mismatch():
    with pytest.raises(ValueError):
        Conv2d(2, 3, 3).forward(np.zeros((1, 5, 5, 4)))


# --- batch norm, pooling ---------------------------------------------------------

def test_batchnorm_train_statistics():
    # output variance is var / (var + eps); a wide input keeps that within 1e-6 of one
    x = rng(10).normal(3, 5, size=(8, 4, 5, 3))
    y = BatchNorm(3).forward(x)
    np.testing.assert_allclose(y.mean(axis=(0, 1, 2)), 0, atol=1e-6)
    np.testing.assert_allclose(y.var(axis=(0, 1, 2)), 1, atol=1e-6)


def test_batchnorm_constant_channel_gives_beta():
    bn = BatchNorm(2)
    bn.params["beta"] = np.array([0.3, -0.7])
    y = bn.forward(np.full((4, 2), 5.0))
    np.testing.assert_allclose(y, np.tile([0.3, -0.7], (4, 1)))


def test_batchnorm_running_stats_and_eval():
    bn = BatchNorm(1)
    x = np.array([[1.0], [3.0]])
    bn.forward(x)
    assert bn.buffers["running_mean"][0] == pytest.approx(0.1 * 2.0)
    assert bn.buffers["running_var"][0] == pytest.approx(0.9 + 0.1 * 2.0)  # unbiased var of {1, 3}
    y = bn.forward(np.array([[0.2]]), train=False)
    assert y[0, 0] == pytest.approx((0.2 - 0.2) / np.sqrt(1.1 + 1e-5))


def test_batchnorm_batch_of_one_rejected():
    with pytest.raises(ValueError):
        BatchNorm(2).forward(np.zeros((1, 2)))


@pytest.mark.parametrize("train", [True, False])
def test_batchnorm_gradcheck(train):
    bn = BatchNorm(3)
    bn.params["gamma"] = rng(11).normal(size=3)
    bn.params["beta"] = rng(12).normal(size=3)
    bn.buffers["running_var"] = np.array([0.5, 1.5, 2.0])
    r = check_module(bn, rng(13).normal(size=(4, 3, 2, 3)), None, sum_loss, train=train)
    assert r.max_err < 1e-4


def test_relu_and_pool_gradcheck():
    x = rng(14).normal(size=(2, 7, 6, 3))
    assert check_module(ReLU(), x, None, sum_loss).max_err < 1e-4
    r = check_module(MaxPool2d(3, 2, 1), x, None, sum_loss)
    assert r.max_err < 1e-4
    assert check_module(GlobalAvgPool(), x, None, sum_loss).max_err < 1e-4


def test_maxpool_values():
    x = np.arange(16.0).reshape(1, 4, 4, 1)
    y = MaxPool2d(3, 2, 1).forward(x)
    np.testing.assert_array_equal(y[0, :, :, 0], [[5, 7], [13, 15]])


# --- bottleneck / resnet ---------------------------------------------------------

@pytest.mark.parametrize("c_in, mid, stride", [(8, 2, 1), (4, 2, 2), (4, 4, 1)])
def test_bottleneck_gradcheck(c_in, mid, stride):
    b = Bottleneck(c_in, mid, stride, rng(15))
    r = check_module(b, rng(16).normal(size=(2, 6, 5, c_in)), None, sum_loss)
    assert r.max_err < 1e-4
    assert (b.shortcut is None) == (stride == 1 and c_in == 4 * mid)


def test_bottleneck_zero_weights_is_relu():
    b = Bottleneck(8, 2, 1)
    for name, p in b.named_parameters():
        if name.endswith("W"):
            p[...] = 0
    x = rng(17).normal(size=(2, 3, 3, 8))
    np.testing.assert_allclose(b.forward(x, train=False), np.maximum(x, 0))


def test_bottleneck_output_channels():
    assert Bottleneck(4, 3, 2).forward(np.zeros((2, 6, 6, 4))).shape == (2, 3, 3, 12)


def test_resnet_output_and_eval_independence():
    m = ResNet(ResNetConfig(blocks=(1, 1, 1, 1), width=4))
    x = rng(18).normal(size=(3, 64, 126))
    assert m.forward(x).shape == (3, 9)
    single = m.forward(x[:1], train=False)
    pair = m.forward(np.concatenate([x[:1], x[:1]]), train=False)
    np.testing.assert_allclose(pair, np.vstack([single, single]), atol=1e-12)


def test_resnet_gradcheck_gradient_config():
    m = ResNet(ResNetConfig(blocks=(1, 1, 1, 1), width=4)).astype(np.float64)
    r = check_module(m, rng(19).normal(size=(2, 64, 126)), np.array([1, 3]), softmax_xent,
                     max_per_tensor=8, floor=1e-5)
    assert r.max_err < 1e-4


def test_resnet_parameter_count_hand_derived():
    # stem 7x7 conv + BN, one bottleneck per stage (widths 4, 8, 16, 32), dense head
    stem = 49 * 4 + 2 * 4
    stages = 0
    c_in = 4
    for m in (4, 8, 16, 32):
        stages += c_in * m + 9 * m * m + m * 4 * m   # three convs
        stages += 2 * (m + m + 4 * m)                 # three BNs
        stages += c_in * 4 * m + 2 * 4 * m            # projection conv + BN
        c_in = 4 * m
    head = 128 * 9 + 9
    cfg = ResNetConfig(blocks=(1, 1, 1, 1), width=4)
    assert stem + stages + head == 33765
    assert resnet_parameter_count(cfg) == 33765
    assert ResNet(cfg).parameter_count() == 33765
    assert ResNet(ResNetConfig()).parameter_count() == resnet_parameter_count(ResNetConfig())


def test_full_width_formula():
    # the full-width network is constructible; its size follows the same formula
    assert resnet_parameter_count(ResNetConfig(width=64)) == 23520201


def test_resnet_config_validation():
    with pytest.raises(ValueError):
        ResNetConfig(blocks=(1, 0))
    with pytest.raises(ValueError):
        ResNet(ResNetConfig(blocks=(1,), width=2)).forward(np.zeros((2, 16, 16, 2)))


# --- LSTM ------------------------------------------------------------------------

def zero_params(d, h):
    return {"Wx": np.zeros((d, 4 * h)), "Wh": np.zeros((h, 4 * h)), "b": np.zeros(4 * h)}


def test_lstm_cell_zero_params():
    p = zero_params(3, 2)
    h, c, _ = lstm_cell(np.ones(3), np.zeros(2), np.zeros(2), p)
    assert not h.any() and not c.any()
    h, c, _ = lstm_cell(np.ones(3), np.zeros(2), np.array([0.8, -2.0]), p)
    np.testing.assert_allclose(c, [0.4, -1.0])
    np.testing.assert_allclose(h, 0.5 * np.tanh([0.4, -1.0]))


def test_lstm_cell_gradcheck():
    r0 = rng(20)
    p = {"Wx": r0.normal(size=(3, 8)), "Wh": r0.normal(size=(2, 8)), "b": r0.normal(size=8)}
    x, h0, c0 = r0.normal(size=(2, 3)), r0.normal(size=(2, 2)), r0.normal(size=(2, 2))
    wh, wc = r0.normal(size=(2, 2)), r0.normal(size=(2, 2))
    h, c, cache = lstm_cell(x, h0, c0, p)
    dx, dh0, dc0, grads = lstm_cell_backward(wh, wc, cache, p)

    def loss():
        h, c, _ = lstm_cell(x, h0, c0, p)
        return float(np.sum(h * wh) + np.sum(c * wc))

    params = dict(p, x=x, h0=h0, c0=c0)
    analytic = dict(grads, x=dx, h0=dh0, c0=dc0)
    assert grad_check(loss, params, analytic).max_err < 1e-4


def test_lstm_bptt_five_steps():
    lstm = LSTM(3, 4, rng(21))
    r = check_module(lstm, rng(22).normal(size=(2, 5, 3)), None, sum_loss)
    assert r.max_err < 1e-4


def test_bilstm_gradcheck_reduced():
    m = BiLSTMClassifier(39, 4, 9, seed=1).astype(np.float64)
    r = check_module(m, rng(23).normal(size=(2, 6, 39)), np.array([2, 7]), softmax_xent)
    assert r.max_err < 1e-4


def test_bilstm_direction_swap_symmetry():
    m = BiLSTMClassifier(5, 3, 9, seed=2)
    x = rng(24).normal(size=(2, 7, 5))
    swapped = BiLSTMClassifier(5, 3, 9, seed=2)
    for k in ("Wx", "Wh", "b"):
        swapped.fwd.params[k] = m.bwd.params[k].copy()
        swapped.bwd.params[k] = m.fwd.params[k].copy()
    W = m.head.params["W"]
    swapped.head.params["W"] = np.vstack([W[3:], W[:3]])
    np.testing.assert_allclose(swapped.forward(x[:, ::-1]), m.forward(x), atol=1e-12)


def test_bilstm_output_and_width_check():
    m = BiLSTMClassifier()
    assert m.forward(np.zeros((157, 39))).shape == (1, 9)
    with pytest.raises(ValueError):
        m.forward(np.zeros((1, 157, 40)))


def test_lstm_forget_bias_initialized_to_one():
    lstm = LSTM(3, 4)
    np.testing.assert_array_equal(lstm.params["b"][4:8], 1.0)
    assert not lstm.params["b"][:4].any() and not lstm.params["b"][8:].any()


# --- optimizers ------------------------------------------------------------------

def test_zero_gradient_leaves_params():
    for opt in (Adam(1e-3), SGDMomentum(1e-2)):
        p = {"w": np.array([1.0, -2.0])}
        opt.step(p, {"w": np.zeros(2)})
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3).filter(lambda v: abs(v) > 1e-6), min_size=1, max_size=5),
       st.floats(1e-5, 1e-1))
def test_adam_first_step_bounded_by_lr(g, lr):
    p = {"w": np.zeros(len(g))}
    Adam(lr).step(p, {"w": np.array(g)})
    assert np.all(np.abs(p["w"]) <= lr * (1 + 1e-6))
    np.testing.assert_array_equal(np.sign(p["w"]), -np.sign(g))


def test_sgd_momentum_closed_form():
    opt = SGDMomentum(0.1, 0.5)
    p = {"w": np.array([0.0])}
    opt.step(p, {"w": np.array([1.0])})
    opt.step(p, {"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(-0.1 - 0.1 * 1.5)


def test_optimizer_shape_mismatch():
    with pytest.raises(ValueError):
        Adam().step({"w": np.zeros(2)}, {"w": np.zeros(3)})


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(ValueError):
        TrainConfig(lr=0)


# --- training loop / checkpoints -------------------------------------------------

def memorize(model, X, y, steps=500, lr=1e-3):
    opt = Adam(lr)
    for step in range(1, steps + 1):
        loss, d = softmax_xent(model.forward(X), y)
        model.backward(d)
        opt.step(dict(model.named_parameters()), dict(model.named_grads()))
        if loss < 0.01:
            return step
    return None


def test_bilstm_memorizes_32_samples():
    m = BiLSTMClassifier(39, 64, 9, seed=0)
    X = rng(25).normal(size=(32, 157, 39)) / np.sqrt(39)
    assert memorize(m, X, targets_for(32), lr=1e-2) is not None


def test_resnet_memorizes_32_samples():
    m = ResNet(ResNetConfig())
    X = rng(26).normal(size=(32, 64, 126))
    assert memorize(m, X, targets_for(32), lr=1e-2) is not None


def tiny_problem():
    r0 = rng(27)
    X = r0.normal(size=(40, 6, 3))
    y = (X[:, :, 0].mean(axis=1) > 0).astype(int)
    return X, y


def test_fit_learns_and_selects_best():
    X, y = tiny_problem()
    m = BiLSTMClassifier(3, 8, 2, seed=0)
    hist = fit(m, X, y, X, y, TrainConfig(epochs=15, batch_size=8, lr=1e-2, dtype="float64"))
    assert len(hist) == 15
    assert hist[-1]["loss"] < hist[0]["loss"]
    assert m.best_val_macro_f1 == max(h["val_macro_f1"] for h in hist)


def test_fit_is_deterministic_and_checkpoint_roundtrips():
    X, y = tiny_problem()
    cfg = TrainConfig(epochs=3, batch_size=8, seed=5)
    texts = []
    for _ in range(2):
        m = BiLSTMClassifier(3, 4, 2, seed=5)
        fit(m, X, y, X, y, cfg)
        texts.append(save_checkpoint(m, "bilstm", ["V", "O"], 5, cfg))
    assert texts[0] == texts[1]
    back, header = load_checkpoint(texts[0])
    assert header["model_kind"] == "bilstm" and header["classes"] == ["V", "O"]
    assert set(json.loads(texts[0])["header"]) >= {"model_kind", "config", "seed", "epoch",
                                                   "val_macro_f1"}
    back.astype(np.float32)
    np.testing.assert_allclose(predict_logits(back, X.astype(np.float32)),
                               predict_logits(m, X.astype(np.float32)), atol=1e-5)


def test_resnet_checkpoint_roundtrip():
    m = ResNet(ResNetConfig(blocks=(1, 1, 1, 1), width=4, n_classes=3))
    m.forward(rng(28).normal(size=(4, 32, 40)))  # move the running statistics
    back, _ = load_checkpoint(save_checkpoint(m, "resnet", ["V", "O", "T"], 0))
    x = rng(29).normal(size=(2, 32, 40))
    np.testing.assert_allclose(back.forward(x, train=False), m.forward(x, train=False), atol=1e-12)


def test_divergence_raises():
    m = ResNet(ResNetConfig(blocks=(1,), width=2, n_classes=2))
    X = rng(30).normal(size=(8, 16, 16)) * 1e307  # convolution sums overflow
    cfg = TrainConfig(epochs=1, batch_size=8, dtype="float64")
    with np.errstate(all="ignore"), pytest.raises(DivergenceError):
        fit(m, X, np.arange(8) % 2, cfg=cfg)


def test_kink_screening_rejects_straddling_probe():
    relu = ReLU()
    x = np.array([[3e-6, 1.0]])
    r = check_module(relu, x, None, sum_loss)
    assert r.kinks["<input>"] == 1 and r.max_err < 1e-8
    r = check_module(relu, x, None, sum_loss, screen_kinks=False)
    assert r.max_err > 1e-2


def test_rel_error_floor():
    assert rel_error(0.0, 1e-10) == pytest.approx(1e-2)
    assert rel_error(0.0, 1e-10, floor=1e-5) == pytest.approx(1e-5)
