import math

import numpy as np
import pytest

from iotduel.nn import (
    Activation,
    AdamState,
    Dense,
    EmptyMask,
    Lstm,
    MissingCache,
    Network,
    ShapeMismatch,
    adam_step,
    backend,
    build_opponent_network,
    build_q_network,
    clone_network,
    grad_check,
    mse_loss,
    relu_kink_margin,
    softmax,
    softmax_cross_entropy,
)
from iotduel.nn import kernels_numpy

BACKENDS = backend.available_backends()


@pytest.fixture(params=BACKENDS)
def active_backend(request):
    original = backend.active_name()
    backend.use_backend(request.param)
    yield request.param
    backend.use_backend(original)


def tiny_stack(rng, in_dim=5):
    return Network(
        [
            Dense(in_dim, 4, Activation.RELU, rng),
            Lstm(4, 3, rng),
            Lstm(3, 3, rng),
            Dense(3, 2, Activation.RELU, rng),
            Dense(2, 2, Activation.LINEAR, rng),
        ]
    )


def nudged_input(net, rng, shape, margin=1e-4):
    x = rng.normal(size=shape)
    for _ in range(50):
        if relu_kink_margin(net, x) >= margin:
            return x
        x = rng.normal(size=shape)
    raise AssertionError("could not find a kink-free input")


# --- forward -----------------------------------------------------------


def test_identity_dense_layer():
    rng = np.random.default_rng(0)
    layer = Dense(3, 3, Activation.LINEAR, rng)
    layer.w = np.eye(3)
    layer.b = np.zeros(3)
    x = rng.normal(size=(7, 3))
    assert np.array_equal(layer.forward(x), x)


def test_zeroed_network_maps_zero_to_zero(active_backend):
    rng = np.random.default_rng(1)
    net = tiny_stack(rng)
    net.set_parameters([np.zeros_like(p) for _, p in net.parameters()])
    out = net.forward(np.zeros((4, 2, 5)))
    assert np.all(out == 0.0)


def test_one_unit_lstm_matches_hand_recurrence(active_backend):
    rng = np.random.default_rng(2)
    layer = Lstm(1, 1, rng)
    wi, wf, wg, wo = 0.5, -0.3, 0.8, 0.2
    ui, uf, ug, uo = 0.1, 0.4, -0.6, 0.9
    bi, bf, bg, bo = 0.05, 1.0, -0.2, 0.3
    layer.wx = np.array([[wi, wf, wg, wo]])
    layer.wh = np.array([[ui, uf, ug, uo]])
    layer.b = np.array([bi, bf, bg, bo])

    xs = [0.7, -1.2]
    h = c = 0.0
    sig = lambda z: 1.0 / (1.0 + math.exp(-z))
    for x in xs:
        gi = sig(wi * x + ui * h + bi)
        gf = sig(wf * x + uf * h + bf)
        gg = math.tanh(wg * x + ug * h + bg)
        go = sig(wo * x + uo * h + bo)
        c = gf * c + gi * gg
        h = go * math.tanh(c)

    out = layer.forward(np.array(xs).reshape(2, 1, 1))
    assert out[-1, 0, 0] == pytest.approx(h, abs=1e-12)


def test_forward_is_deterministic(active_backend):
    rng = np.random.default_rng(3)
    net = tiny_stack(rng)
    x = rng.normal(size=(6, 2, 5))
    a = net.forward(x)
    b = net.forward(x)
    assert np.array_equal(a, b)


def test_lstm_state_isolation(active_backend):
    rng = np.random.default_rng(4)
    net = tiny_stack(rng)
    a = rng.normal(size=(5, 1, 5))
    b = rng.normal(size=(4, 1, 5))
    net.forward(a)
    after_a = net.forward(b)
    alone = net.forward(b)
    assert np.array_equal(after_a, alone)


def test_streaming_step_matches_batched_forward(active_backend):
    rng = np.random.default_rng(5)
    net = tiny_stack(rng)
    x = rng.normal(size=(6, 1, 5))
    batched = net.forward(x)
    carries = net.init_carries(1)
    for t in range(6):
        out, carries = net.step(x[t], carries)
        assert out[0] == pytest.approx(batched[t, 0], abs=1e-12)


def test_shape_errors():
    rng = np.random.default_rng(6)
    net = tiny_stack(rng)
    with pytest.raises(ShapeMismatch):
        net.forward(np.zeros((3, 2, 9)))
    with pytest.raises(ShapeMismatch):
        net.forward(np.zeros((3, 5)))
    fresh = tiny_stack(rng)
    with pytest.raises(MissingCache):
        fresh.backward(np.zeros((3, 2, 2)))


# --- backward ----------------------------------------------------------


def test_gradients_match_finite_differences_dense_only(active_backend):
    rng = np.random.default_rng(7)
    net = Network(
        [
            Dense(4, 6, Activation.TANH, rng),
            Dense(6, 3, Activation.RELU, rng),
            Dense(3, 2, Activation.LINEAR, rng),
        ]
    )
    x = nudged_input(net, rng, (3, 2, 4))
    assert grad_check(net, x, h=1e-5) < 1e-6


def test_gradients_match_finite_differences_full_stack(active_backend):
    rng = np.random.default_rng(8)
    net = tiny_stack(rng)
    x = nudged_input(net, rng, (4, 2, 5))
    assert grad_check(net, x, h=1e-5) < 1e-4


def test_backward_linearity(active_backend):
    rng = np.random.default_rng(9)
    net = tiny_stack(rng)
    x = rng.normal(size=(4, 2, 5))
    net.forward(x)
    net.backward(np.zeros((4, 2, 2)))
    assert all(np.all(g == 0.0) for _, g in net.gradients())

    dout = rng.normal(size=(4, 2, 2))
    net.forward(x)
    net.backward(dout)
    single = [g.copy() for _, g in net.gradients()]
    net.forward(x)
    net.backward(2.0 * dout)
    double = [g for _, g in net.gradients()]
    for s, d in zip(single, double):
        assert d == pytest.approx(2.0 * s, abs=1e-12)


def test_backends_agree_bitwise_close():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(10)
    T, B, I, H = 7, 3, 5, 4
    x = rng.normal(size=(T, B, I))
    wx = rng.normal(size=(I, 4 * H)) * 0.4
    wh = rng.normal(size=(H, 4 * H)) * 0.4
    b = rng.normal(size=4 * H) * 0.1
    h0 = rng.normal(size=(B, H)) * 0.2
    c0 = rng.normal(size=(B, H)) * 0.2
    dh = rng.normal(size=(T, B, H))

    from iotduel.nn import _kernels

    f_np = kernels_numpy.lstm_forward(x, wx, wh, b, h0, c0)
    f_cy = _kernels.lstm_forward(x, wx, wh, b, h0, c0)
    for a, c in zip(f_np, f_cy):
        assert np.allclose(a, c, rtol=1e-10, atol=1e-12)
    b_np = kernels_numpy.lstm_backward(dh, x, *f_np, wx, wh, h0, c0)
    b_cy = _kernels.lstm_backward(dh, x, *f_cy, wx, wh, h0, c0)
    for a, c in zip(b_np, b_cy):
        assert np.allclose(a, c, rtol=1e-10, atol=1e-12)


# --- losses ------------------------------------------------------------


def test_mse_identity_case():
    pred = np.array([1.0, 2.0])
    loss, grad = mse_loss(pred, pred.copy(), np.ones(2))
    assert loss == 0.0
    assert np.all(grad == 0.0)


def test_mse_single_entry():
    loss, grad = mse_loss(np.array([1.0, 0.0]), np.zeros(2), np.array([1.0, 0.0]))
    assert loss == 1.0
    assert grad.tolist() == [2.0, 0.0]


def test_mse_matches_naive_loop():
    rng = np.random.default_rng(11)
    pred = rng.normal(size=(32, 2))
    target = rng.normal(size=(32, 2))
    mask = (rng.random((32, 2)) < 0.5).astype(float)
    mask[0, 0] = 1.0
    loss, grad = mse_loss(pred, target, mask)
    count = mask.sum()
    ref_loss = sum(
        (pred[i, j] - target[i, j]) ** 2
        for i in range(32)
        for j in range(2)
        if mask[i, j]
    ) / count
    assert loss == pytest.approx(ref_loss, abs=1e-12)
    for i in range(32):
        for j in range(2):
            ref = 2 * (pred[i, j] - target[i, j]) / count if mask[i, j] else 0.0
            assert grad[i, j] == pytest.approx(ref, abs=1e-12)


def test_mse_errors():
    with pytest.raises(EmptyMask):
        mse_loss(np.ones(3), np.ones(3), np.zeros(3))
    with pytest.raises(ShapeMismatch):
        mse_loss(np.ones(3), np.ones(4), np.ones(3))


def test_softmax_cross_entropy_values():
    loss, _ = softmax_cross_entropy(np.zeros((5, 2)), np.zeros(5, dtype=int))
    assert loss == pytest.approx(math.log(2), abs=1e-12)
    confident = np.array([[20.0, -20.0]])
    loss, _ = softmax_cross_entropy(confident, np.array([0]))
    assert loss == pytest.approx(0.0, abs=1e-12)


def test_softmax_cross_entropy_gradient_is_probs_minus_onehot():
    rng = np.random.default_rng(12)
    logits = rng.normal(size=(6, 2))
    labels = rng.integers(0, 2, size=6)
    _, grad = softmax_cross_entropy(logits, labels)
    probs = softmax(logits)
    onehot = np.zeros_like(probs)
    onehot[np.arange(6), labels] = 1.0
    assert grad == pytest.approx((probs - onehot) / 6, abs=1e-12)


# --- adam --------------------------------------------------------------


def test_adam_first_step_is_signed_lr():
    w = np.array([1.0, -2.0, 3.0])
    g = np.array([0.4, -0.1, 2.0])
    state = AdamState.for_params([w])
    adam_step([w], [g], state, lr=0.001)
    expected = np.array([1.0, -2.0, 3.0]) - 0.001 * np.sign(g)
    assert w == pytest.approx(expected, abs=1e-6)


def test_adam_zero_gradient_fixed_point():
    w = np.array([1.0, 2.0])
    state = AdamState.for_params([w])
    for _ in range(10):
        adam_step([w], [np.zeros(2)], state, lr=0.1)
    assert w.tolist() == [1.0, 2.0]


def test_adam_descends_quadratic_bowl():
    w = np.array([1.0])
    state = AdamState.for_params([w])
    start = abs(w[0])
    for _ in range(100):
        adam_step([w], [2.0 * w], state, lr=0.001)
    assert abs(w[0]) < start


def test_adam_shape_mismatch():
    w = np.array([1.0])
    state = AdamState.for_params([w])
    with pytest.raises(ShapeMismatch):
        adam_step([w], [np.zeros(2)], state, lr=0.1)


# --- wiring ------------------------------------------------------------


def test_clone_is_deep():
    rng = np.random.default_rng(13)
    net = tiny_stack(rng)
    twin = clone_network(net)
    for (_, a), (_, b) in zip(net.parameters(), twin.parameters()):
        assert np.array_equal(a, b)
    frozen = clone_network(twin)
    net.layers[0].w += 1.0
    for (_, a), (_, b) in zip(twin.parameters(), frozen.parameters()):
        assert np.array_equal(a, b)
    assert not np.array_equal(net.layers[0].w, twin.layers[0].w)


def test_parameter_count_formula():
    for input_dim in (10, 31, 64):
        net = build_q_network(input_dim, np.random.default_rng(0))
        expected = (
            input_dim * 64 + 64          # dense in
            + 64 * 128 + 32 * 128 + 128  # lstm 1
            + 32 * 128 + 32 * 128 + 128  # lstm 2
            + 32 * 16 + 16               # dense 16
            + 16 * 2 + 2                 # head
        )
        assert net.parameter_count() == expected
        assert net.parameter_count() == 64 * input_dim + 21362


def test_q_network_spec_matches_published_architecture():
    net = build_q_network(12, np.random.default_rng(0))
    assert net.spec() == [
        ("dense", 12, 64, "relu"),
        ("lstm", 64, 32),
        ("lstm", 32, 32),
        ("dense", 32, 16, "relu"),
        ("dense", 16, 2, "linear"),
    ]


def test_opponent_network_head_starts_at_zero():
    net = build_opponent_network(10, 8, np.random.default_rng(0))
    head = net.layers[-1]
    assert np.all(head.w == 0.0) and np.all(head.b == 0.0)
