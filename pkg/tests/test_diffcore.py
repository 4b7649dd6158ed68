import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cdrl.diffcore import (
    MlpSpec,
    ParamSet,
    finite_difference_grad,
    init_params,
    log_softmax,
    mlp_backward,
    mlp_forward,
    relative_error,
    softmax_tempered,
)
from cdrl.exceptions import ParameterError, ShapeError
from cdrl.losses import entropy

# mpmath (40 digits) evaluation of exp(z_i/tau) / sum_j exp(z_j/tau) for z=[2, 0], tau=2
SOFTMAX_2_0_TAU2 = [0.7310585786300048792, 0.2689414213699951207]

finite_logits = arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50))


def test_softmax_uniform():
    np.testing.assert_allclose(softmax_tempered([0.0, 0.0, 0.0], 1.0), [1 / 3] * 3, atol=1e-15)


def test_softmax_ln2():
    np.testing.assert_allclose(softmax_tempered([np.log(2), 0.0], 1.0), [2 / 3, 1 / 3], atol=1e-15)


def test_softmax_tempered_against_high_precision():
    np.testing.assert_allclose(softmax_tempered([2.0, 0.0], 2.0), SOFTMAX_2_0_TAU2, rtol=1e-14)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_softmax_rejects_bad_tau(tau):
    with pytest.raises(ParameterError):
        softmax_tempered([1.0, 2.0], tau)


def test_softmax_rejects_empty():
    with pytest.raises(ShapeError):
        softmax_tempered([], 1.0)
    with pytest.raises(ShapeError):
        log_softmax([])


def test_log_softmax_examples():
    np.testing.assert_allclose(log_softmax([0.0, 0.0]), [-np.log(2)] * 2, atol=1e-15)
    for c in (-700.0, 0.0, 3.5, 1e6):
        np.testing.assert_allclose(log_softmax([c] * 4), [-np.log(4)] * 4, atol=1e-12)
    out = log_softmax([1000.0, 0.0])
    assert np.all(np.isfinite(out))
    assert out[0] == pytest.approx(0.0, abs=1e-300)
    assert out[1] == pytest.approx(-1000.0, rel=1e-15)


@settings(max_examples=200, deadline=None)
@given(finite_logits, st.floats(0.05, 20.0), st.floats(-100, 100))
def test_softmax_normalized_and_shift_invariant(z, tau, c):
    p = softmax_tempered(z, tau)
    assert abs(p.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(softmax_tempered(z + c, tau), p, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(finite_logits)
def test_log_softmax_exponentiates_to_one(z):
    assert abs(np.exp(log_softmax(z)).sum() - 1.0) < 1e-12


def test_entropy_nondecreasing_in_tau():
    rng = np.random.default_rng(0)
    taus = np.geomspace(0.05, 50, 60)
    for _ in range(200):
        z = rng.normal(scale=3, size=rng.integers(2, 7))
        if np.ptp(z) == 0:
            continue
        h = [entropy(softmax_tempered(z, t)) for t in taus]
        assert np.all(np.diff(h) >= -1e-12)


def _random_instance(rng, input_dim=3, hidden=((5, "relu"), (4, "identity")), heads=(("a", 2), ("b", 3))):
    spec = MlpSpec(input_dim, hidden, heads)
    params = init_params(spec, rng)
    params.data += rng.normal(scale=0.1, size=params.size)
    return spec, params


def _straight_line_forward(spec, params, x):
    h = np.array(x, dtype=float)
    for i, (_, act) in enumerate(spec.hidden):
        w = params.weight(f"hidden{i}")
        b = params.bias(f"hidden{i}")
        z = np.array([sum(h[r] * w[r, c] for r in range(len(h))) + b[c] for c in range(w.shape[1])])
        h = np.array([max(v, 0.0) for v in z]) if act == "relu" else z
    out = {}
    for name, width in spec.heads:
        w = params.weight("head_" + name)
        b = params.bias("head_" + name)
        out[name] = np.array([sum(h[r] * w[r, c] for r in range(len(h))) + b[c] for c in range(width)])
    return out


def test_paramset_layout_and_views():
    p = ParamSet([("l0", 2, 3, True), ("l1", 3, 1, False)])
    assert p.size == 2 * 3 + 3 + 3
    p.weight("l0")[1, 2] = 7.0
    assert p.data[5] == 7.0
    p.bias("l0")[0] = 1.5
    assert p.data[6] == 1.5
    assert p.bias("l1") is None
    with pytest.raises(ShapeError):
        ParamSet([("l0", 2, 2, True)], np.zeros(3))


def test_forward_zero_params_gives_zero_heads():
    spec = MlpSpec(3, ((4, "relu"),), (("a", 2), ("b", 1)))
    out, _ = mlp_forward(spec, ParamSet(spec.layout()), np.array([0.3, -1.0, 2.0]))
    for v in out.values():
        assert np.all(v == 0.0)


def test_forward_identity_layer():
    spec = MlpSpec(4, (), (("out", 4),))
    params = ParamSet(spec.layout())
    params.weight("head_out")[...] = np.eye(4)
    x = np.array([0.5, -2.0, 3.0, 1e-3])
    out, _ = mlp_forward(spec, params, x)
    np.testing.assert_array_equal(out["out"], x)


def test_forward_matches_straight_line_reimplementation():
    rng = np.random.default_rng(1)
    for _ in range(20):
        spec, params = _random_instance(rng)
        x = rng.normal(size=3)
        out, _ = mlp_forward(spec, params, x)
        ref = _straight_line_forward(spec, params, x)
        for name in ref:
            np.testing.assert_allclose(out[name], ref[name], rtol=1e-12, atol=1e-12)


def test_forward_batch_matches_rows():
    rng = np.random.default_rng(2)
    spec, params = _random_instance(rng)
    xs = rng.normal(size=(6, 3))
    batch, _ = mlp_forward(spec, params, xs)
    for i, x in enumerate(xs):
        row, _ = mlp_forward(spec, params, x)
        np.testing.assert_allclose(batch["a"][i], row["a"], rtol=1e-13)


def test_forward_shape_errors():
    spec, params = _random_instance(np.random.default_rng(0))
    with pytest.raises(ShapeError):
        mlp_forward(spec, params, np.zeros(4))
    other = MlpSpec(3, ((5, "relu"),), (("a", 2),))
    with pytest.raises(ShapeError):
        mlp_forward(other, params, np.zeros(3))


def test_backward_zero_head_grads():
    rng = np.random.default_rng(3)
    spec, params = _random_instance(rng)
    _, tape = mlp_forward(spec, params, rng.normal(size=3))
    grads, dx = mlp_backward(spec, params, tape, {"a": np.zeros(2), "b": np.zeros(3)})
    assert np.all(grads.data == 0) and np.all(dx == 0)


def test_backward_single_linear_layer_weight_row():
    spec = MlpSpec(3, (), (("y", 2),))
    params = init_params(spec, np.random.default_rng(0))
    x = np.array([0.2, -0.7, 1.3])
    _, tape = mlp_forward(spec, params, x)
    grads, dx = mlp_backward(spec, params, tape, {"y": np.array([1.0, 0.0])})
    # loss = y[0]; dL/dW[:, 0] = x, bias grad e_0, input grad W[:, 0]
    np.testing.assert_array_equal(grads.weight("head_y")[:, 0], x)
    np.testing.assert_array_equal(grads.weight("head_y")[:, 1], 0.0)
    np.testing.assert_array_equal(grads.bias("head_y"), [1.0, 0.0])
    np.testing.assert_allclose(dx, params.weight("head_y")[:, 0])


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(20):
        spec, params = _random_instance(rng)
        x = rng.normal(size=3)
        ga, gb = rng.normal(size=2), rng.normal(size=3)

        def f(p):
            out, _ = mlp_forward(spec, p, x)
            return float(out["a"] @ ga + out["b"] @ gb)

        _, tape = mlp_forward(spec, params, x)
        grads, _ = mlp_backward(spec, params, tape, {"a": ga, "b": gb})
        fd = finite_difference_grad(f, params, 1e-5)
        assert relative_error(grads.data, fd.data) < 1e-4


def test_backward_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    spec, params = _random_instance(rng)
    x = rng.normal(size=3)
    g = rng.normal(size=2)
    _, tape = mlp_forward(spec, params, x)
    _, dx = mlp_backward(spec, params, tape, {"a": g})
    eps = 1e-6
    fd = np.array([
        (mlp_forward(spec, params, x + eps * e)[0]["a"] @ g - mlp_forward(spec, params, x - eps * e)[0]["a"] @ g)
        / (2 * eps)
        for e in np.eye(3)
    ])
    assert relative_error(dx, fd) < 1e-4


def test_backward_is_bitwise_reproducible():
    rng = np.random.default_rng(6)
    spec, params = _random_instance(rng)
    x = rng.normal(size=(4, 3))
    hg = {"a": rng.normal(size=(4, 2)), "b": rng.normal(size=(4, 3))}
    runs = []
    for _ in range(2):
        out, tape = mlp_forward(spec, params, x)
        grads, dx = mlp_backward(spec, params, tape, hg)
        runs.append((out["a"].tobytes(), grads.data.tobytes(), dx.tobytes()))
    assert runs[0] == runs[1]


def test_backward_rejects_bad_head_grad():
    rng = np.random.default_rng(7)
    spec, params = _random_instance(rng)
    _, tape = mlp_forward(spec, params, rng.normal(size=3))
    with pytest.raises(ShapeError):
        mlp_backward(spec, params, tape, {"a": np.zeros(3)})
    with pytest.raises(ShapeError):
        mlp_backward(spec, params, tape, {"zzz": np.zeros(2)})


def test_finite_difference_examples():
    p = ParamSet([("w", 1, 2, False)], [1.0, 2.0])
    assert np.all(finite_difference_grad(lambda q: 3.0, p, 1e-5).data == 0)
    g = finite_difference_grad(lambda q: float(q.data @ q.data), p, 1e-5)
    np.testing.assert_allclose(g.data, [2.0, 4.0], rtol=1e-9)
    with pytest.raises(ParameterError):
        finite_difference_grad(lambda q: 0.0, p, 0.0)


def test_init_params_within_fan_in_bound():
    spec = MlpSpec(9, ((16, "relu"),), (("o", 4),))
    p = init_params(spec, np.random.default_rng(0))
    assert np.abs(p.weight("hidden0")).max() <= 1 / 3
    assert np.abs(p.weight("head_o")).max() <= 1 / 4
    assert np.all(p.bias("hidden0") == 0)
    q = init_params(spec, np.random.default_rng(0))
    np.testing.assert_array_equal(p.data, q.data)
