import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from persreg import nncore
from persreg.nncore import Grads, MLPSpec, Params, Tape
from persreg.verify import gradient_mismatch, numerical_grads


def test_spec_validation():
    with pytest.raises(ValueError):
        MLPSpec(2, (), 1)
    with pytest.raises(ValueError):
        MLPSpec(2, (0,), 1)
    with pytest.raises(ValueError):
        MLPSpec(2, (3,), 1, dropout_prob=1.5)
    assert MLPSpec(2, [3, 4], 1).n_layers == 3


def test_init_shapes_and_determinism():
    spec = MLPSpec(2, (3,), 1)
    p = nncore.init_params(spec, 7)
    assert [w.shape for w in p.weights] == [(3, 2), (1, 3)]
    assert [b.shape for b in p.biases] == [(3,), (1,)]
    assert all((b == 0).all() for b in p.biases)
    assert all((v == 0).all() for v in p.vel_weights + p.vel_biases)
    q = nncore.init_params(spec, 7)
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
    r = nncore.init_params(spec, 8)
    assert not np.array_equal(p.weights[0], r.weights[0])


def test_glorot_bounds():
    spec = MLPSpec(50, (30,), 10)
    p = nncore.init_params(spec, 0)
    for w in p.weights:
        fan_out, fan_in = w.shape
        assert np.abs(w).max() <= math.sqrt(6.0 / (fan_in + fan_out))


def test_params_shape_check():
    spec = MLPSpec(2, (3,), 1)
    with pytest.raises(ValueError):
        Params(spec, [np.zeros((2, 2)), np.zeros((1, 3))], [np.zeros(3), np.zeros(1)])


def test_relu_identity_layer():
    spec = MLPSpec(2, (2,), 2)
    p = Params(spec, [np.eye(2), np.eye(2)], [np.zeros(2), np.zeros(2)])
    x = np.array([[1.0, 2.0], [-1.0, -3.0]])  # two examples, columns
    _, cap = nncore.forward(p, x)
    np.testing.assert_array_equal(cap.values[0][:, 0], [1.0, 0.0])
    assert cap.layer_ids == [0, 1]
    assert cap.batch_size == 2 and cap.sizes == [2, 2]


def test_forward_rejects_small_batch_and_bad_shapes():
    p = nncore.init_params(MLPSpec(2, (3,), 2), 0)
    with pytest.raises(ValueError):
        nncore.forward(p, np.zeros((2, 1)))
    with pytest.raises(ValueError):
        nncore.forward(p, np.zeros((3, 4)))
    with pytest.raises(ValueError):
        nncore.forward(p, np.zeros((2, 4)), mode="test")


def test_no_dropout_train_equals_eval():
    p = nncore.init_params(MLPSpec(3, (5, 4), 2), 1)
    x = np.random.default_rng(0).standard_normal((3, 10))
    a, _ = nncore.forward(p, x, "train", 5)
    b, _ = nncore.forward(p, x, "eval")
    np.testing.assert_array_equal(a.value, b.value)


def test_dropout_expectation():
    spec = MLPSpec(3, (6,), 2, dropout_prob=0.5)
    p = nncore.init_params(spec, 2)
    p.biases[0][:] = 0.3
    x = np.random.default_rng(1).standard_normal((3, 4))
    _, ev = nncore.forward(p, x, "eval")
    total = np.zeros_like(ev.values[0])
    n_masks = 10_000
    for s in range(n_masks):
        _, tr = nncore.forward(p, x, "train", (9, s))
        total += tr.values[0]
    mean = total / n_masks
    target = ev.values[0]
    mask = target > 0.1
    assert np.all(np.abs(mean[mask] - target[mask]) <= 0.05 * target[mask])


def test_dropout_mask_scaling():
    gen = np.random.default_rng(0)
    m = nncore.dropout_mask((100, 100), 0.25, gen)
    assert set(np.unique(m)) <= {0.0, 1.0 / 0.75}
    assert np.all(nncore.dropout_mask((3, 3), 1.0, gen) == 0)


def test_cce_examples():
    assert nncore.cross_entropy(np.zeros((10, 3)), [0, 4, 9]) == pytest.approx(math.log(10), abs=1e-12)
    sat = np.zeros((3, 2))
    sat[1, :] = 1000.0
    assert nncore.cross_entropy(sat, [1, 1]) == pytest.approx(0.0, abs=1e-12)
    assert nncore.cross_entropy(np.array([[1.0], [2.0]]), [1]) == pytest.approx(0.313262, abs=1e-6)
    assert nncore.cross_entropy(np.array([[1.0], [2.0]]), [1]) == pytest.approx(math.log1p(math.exp(-1)), rel=1e-14)
    with pytest.raises(ValueError):
        nncore.cross_entropy(np.zeros((2, 2)), [0, 2])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_cce_nonnegative(classes, batch, seed):
    gen = np.random.default_rng(seed)
    logits = 5 * gen.standard_normal((classes, batch))
    assert nncore.cross_entropy(logits, gen.integers(0, classes, batch)) >= 0.0


def test_backward_constant_root():
    p = nncore.init_params(MLPSpec(2, (3,), 2), 0)
    tape = Tape()
    tape.watch_params(p)
    root = tape.leaf(np.array(4.0))
    g = nncore.backward(tape, root)
    assert all((a == 0).all() for a in g.arrays())


def test_backward_linear_form():
    tape = Tape()
    w = tape.leaf(np.array([[1.0, -2.0, 3.0]]))
    x = tape.leaf(np.array([[0.5], [1.5], [-2.0]]))
    root = nncore.matmul(tape, w, x)
    tape.backward(root)
    np.testing.assert_array_equal(w.grad, x.value.T)


def test_backward_rejects_non_scalar_and_foreign_nodes():
    tape = Tape()
    a = tape.leaf(np.ones((2, 2)))
    with pytest.raises(ValueError):
        tape.backward(a)
    other = Tape()
    with pytest.raises(ValueError):
        nncore.add(other, a, a)


def test_stack_rows_gradient():
    tape = Tape()
    a = tape.leaf(np.arange(6.0).reshape(3, 2))
    b = tape.leaf(np.arange(4.0).reshape(2, 2))
    s = nncore.stack_rows(tape, [(a, [2, 0]), (b, [1])])
    np.testing.assert_array_equal(s.value, [[4, 5], [0, 1], [2, 3]])
    weights = tape.leaf(np.array([[1.0, 2.0, 3.0]]))
    root = nncore.matmul(tape, weights, nncore.matmul(tape, s, tape.leaf(np.ones((2, 1)))))
    tape.backward(root)
    np.testing.assert_array_equal(a.grad, [[2, 2], [0, 0], [1, 1]])
    np.testing.assert_array_equal(b.grad, [[0, 0], [3, 3]])


def _cce_value(params, x, y):
    logits, _ = nncore.forward(params, x)
    return nncore.cross_entropy(logits.value, y)


def test_cce_gradients_finite_differences():
    gen = np.random.default_rng(3)
    for k in range(50):
        sizes = [(2, (4,), 3), (3, (5, 5), 2), (4, (3, 6), 4)][k % 3]
        spec = MLPSpec(*sizes)
        p = nncore.init_params(spec, int(gen.integers(2**31)))
        for b in p.biases:
            b[:] = 0.1 * gen.standard_normal(b.shape)
        n = int(gen.integers(2, 12))
        x = gen.standard_normal((spec.input_dim, n))
        y = gen.integers(0, spec.output_dim, n)
        tape = Tape()
        logits, _ = nncore.forward(p, x, tape=tape)
        analytic = nncore.backward(tape, nncore.cce_loss(tape, logits, y))
        numeric = numerical_grads(lambda q: _cce_value(q, x, y), p)
        ok, ratio = gradient_mismatch(analytic, numeric, 1e-5, 1e-8)
        assert ok, f"config {k}: {ratio}"


def test_momentum_steps():
    spec = MLPSpec(1, (1,), 1)
    p = Params(spec, [np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    zero = Grads.zeros_like(p)
    nncore.sgd_momentum_step(p, zero, 0.01)
    assert p.weights[0][0, 0] == 1.0

    g = Grads([np.full((1, 1), 2.0), np.full((1, 1), 2.0)], [np.zeros(1), np.zeros(1)])
    q = Params(spec, [np.ones((1, 1)), np.ones((1, 1))], [np.zeros(1), np.zeros(1)])
    nncore.sgd_momentum_step(q, g, 0.1, momentum=0.0)
    assert q.weights[0][0, 0] == pytest.approx(1.0 - 0.2)

    r = Params(spec, [np.zeros((1, 1)), np.zeros((1, 1))], [np.zeros(1), np.zeros(1)])
    nncore.sgd_momentum_step(r, g, 0.01, 0.9)
    nncore.sgd_momentum_step(r, g, 0.01, 0.9)
    assert r.weights[0][0, 0] == pytest.approx(-(0.01 * 2.0 + 0.019 * 2.0), rel=1e-12)


def test_lr_schedule():
    assert nncore.lr_schedule(0) == 0.01
    assert nncore.lr_schedule(3520) == pytest.approx(0.0095, rel=1e-12)
    assert nncore.lr_schedule(7040) == pytest.approx(0.009025, rel=1e-12)
    # continuous, not stepped
    assert nncore.lr_schedule(1760) == pytest.approx(0.01 * 0.95**0.5, rel=1e-12)
    with pytest.raises(ValueError):
        nncore.lr_schedule(-1)


def test_forward_backward_deterministic():
    spec = MLPSpec(3, (5,), 2, dropout_prob=0.3)
    x = np.random.default_rng(0).standard_normal((3, 8))
    y = np.array([0, 1] * 4)
    out = []
    for _ in range(2):
        p = nncore.init_params(spec, 11)
        tape = Tape()
        logits, _ = nncore.forward(p, x, "train", (11, 4), tape)
        g = nncore.backward(tape, nncore.cce_loss(tape, logits, y))
        nncore.sgd_momentum_step(p, g, 0.01)
        out.append(p.arrays())
    assert all(np.array_equal(a, b) for a, b in zip(*out))


def test_predict_matches_forward():
    p = nncore.init_params(MLPSpec(3, (5, 4), 2), 4)
    x = np.random.default_rng(0).standard_normal((20, 3))
    logits, cap = nncore.forward(p, x.T)
    np.testing.assert_allclose(nncore.predict(p, x, batch_size=7), logits.value, rtol=1e-13)
    np.testing.assert_allclose(nncore.hidden_activations(p, x), np.vstack(cap.values[:-1]), rtol=1e-13)
