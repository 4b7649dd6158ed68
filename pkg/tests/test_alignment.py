import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from cdrl.alignment import (
    AlignmentNetwork,
    align_forward,
    align_train_step,
    alignment_loss_and_grad,
    alignment_spec,
    collect_logit_pairs,
    offline_train_alignment,
)
from cdrl.diffcore import ParamSet, finite_difference_grad, init_params, relative_error
from cdrl.envs import AimFire5, Catch3
from cdrl.exceptions import ConfigError, ShapeError
from cdrl.losses import tempered_kl_rows
from cdrl.networks import StudentNetwork, TeacherNetwork, pad_or_truncate


def test_spec_shape():
    spec = alignment_spec(3, 5)
    assert spec.hidden == ((32, "relu"),) * 4
    assert spec.head_dims == {"out": 5}


def test_identity_network_is_exact():
    net = AlignmentNetwork.identity(4)
    z = np.random.default_rng(0).normal(size=(7, 4))
    np.testing.assert_array_equal(net.transform(z), z)


def test_zero_params_map_to_uniform():
    spec = alignment_spec(3, 5)
    out = align_forward(spec, ParamSet(spec.layout()), np.array([2.0, -1.0, 0.5]))
    np.testing.assert_array_equal(out, np.zeros(5))


def test_forward_rejects_wrong_width():
    spec = alignment_spec(3, 5)
    with pytest.raises(ShapeError):
        align_forward(spec, ParamSet(spec.layout()), np.zeros(4))


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(20):
        spec = alignment_spec(3, 5, hidden_width=6, n_hidden=2)
        params = init_params(spec, rng)
        # move biases off zero so no preactivation sits exactly on a ReLU kink
        params.data += rng.normal(scale=0.1, size=params.size)
        za = rng.normal(scale=2, size=(4, 3))
        zb = rng.normal(scale=2, size=(4, 5))
        tau = float(rng.uniform(0.5, 2))
        _, g = alignment_loss_and_grad(spec, params, za, zb, tau)
        fd = finite_difference_grad(lambda p: alignment_loss_and_grad(spec, p, za, zb, tau)[0], params)
        assert relative_error(g.data, fd.data) < 1e-4


def test_perfect_fit_gives_zero_loss_and_no_update():
    net = AlignmentNetwork.identity(3)
    z = np.random.default_rng(2).normal(size=(5, 3))
    before = net.params_.data.copy()
    loss = align_train_step(net.spec_, net.params_, z, z, tau=1.0, lr=0.1)
    assert abs(loss) < 1e-12
    np.testing.assert_allclose(net.params_.data, before, atol=1e-12)


def test_loss_decreases_on_fixed_pairs():
    rng = np.random.default_rng(3)
    za = rng.normal(size=(256, 3))
    zb = za @ rng.normal(size=(3, 5))
    net = AlignmentNetwork(random_state=0)
    first = net.partial_fit(za, zb)
    for _ in range(499):
        last = net.partial_fit(za, zb)
    assert last < first


def test_identity_limit_when_teacher_is_expert():
    expert = StudentNetwork("aimfire5", seed=4)
    expert.params.data *= 3
    teacher = TeacherNetwork.from_network(expert)
    net = offline_train_alignment(teacher, expert, AimFire5(), steps=20000, n_samples=4000, seed=0)
    za, zb, _ = collect_logit_pairs(teacher, expert, AimFire5(), 2000, seed=1)
    assert net.mean_kl(za, zb) < 0.01


def test_aligned_beats_padding_across_action_spaces():
    rng = np.random.default_rng(5)
    teacher = TeacherNetwork("catch3", seed=5)
    teacher.params.data += rng.normal(scale=0.5, size=teacher.params.size)
    expert = StudentNetwork("aimfire5", seed=6)
    expert.params.data *= 4
    env = AimFire5()
    net = offline_train_alignment(teacher, expert, env, steps=5000, n_samples=4000, seed=0)
    za, zb, _ = collect_logit_pairs(teacher, expert, env, 2000, seed=1)
    aligned = tempered_kl_rows(zb, net.transform(za)).mean()
    padded = tempered_kl_rows(zb, pad_or_truncate(za, 5)).mean()
    assert aligned < padded


def test_zero_budget_leaves_initial_params():
    teacher = TeacherNetwork("catch3", seed=7)
    expert = StudentNetwork("aimfire5", seed=8)
    net = offline_train_alignment(teacher, expert, AimFire5(), steps=0, seed=3)
    fresh = init_params(net.spec_, np.random.default_rng(3))
    np.testing.assert_array_equal(net.params_.data, fresh.data)


def test_offline_rejects_mismatched_expert():
    teacher = TeacherNetwork("catch3")
    expert = StudentNetwork("catch3")
    with pytest.raises(ConfigError):
        offline_train_alignment(teacher, expert, AimFire5(), steps=10)


def test_transform_before_fit_raises():
    with pytest.raises(NotFittedError):
        AlignmentNetwork().transform(np.zeros((1, 3)))


def test_collect_pairs_shapes_and_consistency():
    teacher = TeacherNetwork("catch3", seed=9)
    expert = StudentNetwork("catch3", seed=10)
    za, zb, obs = collect_logit_pairs(teacher, expert, Catch3(), 100, seed=0)
    assert za.shape == zb.shape == (100, 3)
    np.testing.assert_allclose(za[17], teacher.forward(obs[17]).policy_logits, rtol=1e-13)
