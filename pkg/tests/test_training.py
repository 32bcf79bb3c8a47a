"""Optimizers and the deterministic training loop."""

import numpy as np
import pytest

import meshlearn.network as net
from meshlearn.training import (Adam, SGDMomentum, TrainConfig, evaluate,
                                make_optimizer, optimizer_step, train, _prepare)

from test_network import small_config, small_mesh


def tiny_dataset(n_per_class=3, seed=0):
    """(mesh, label) pairs from three easily separable shape classes."""
    from meshlearn.data import SyntheticSpec, generate_synthetic
    spec = SyntheticSpec(samples_per_class=n_per_class, face_band=(80, 140),
                         jitter=0.01, seed=seed)
    return [(s.mesh, s.class_id) for s in generate_synthetic(spec).samples]


def test_train_config_validation():
    with pytest.raises(ValueError, match="learning rate"):
        TrainConfig(learning_rate=-0.1)
    with pytest.raises(ValueError, match="batch size"):
        TrainConfig(batch_size=0)
    TrainConfig(learning_rate=0.0)    # zero is allowed


# ---------------------------------------------------------------------------
# optimizers


def test_sgd_zero_gradient_no_change():
    config = small_config()
    params = net.init_params(config)
    before = [a.copy() for _, a in params.named_arrays()]
    grads = net.zeros_like_params(params)
    SGDMomentum(lr=0.1, momentum=0.0).step(params, grads)
    for (_, a), b in zip(params.named_arrays(), before):
        assert np.array_equal(a, b)


def test_sgd_scalar_step():
    config = small_config()
    params = net.init_params(config)
    grads = net.zeros_like_params(params)
    grads.classifier_b[:] = 1.0
    p0 = params.classifier_b.copy()
    SGDMomentum(lr=0.1, momentum=0.0).step(params, grads)
    assert np.allclose(params.classifier_b, p0 - 0.1, atol=1e-15)


def test_sgd_momentum_accumulates():
    config = small_config()
    params = net.init_params(config)
    grads = net.zeros_like_params(params)
    grads.classifier_b[:] = 1.0
    p0 = params.classifier_b.copy()
    opt = SGDMomentum(lr=0.1, momentum=0.5)
    opt.step(params, grads)     # v = -0.1
    opt.step(params, grads)     # v = -0.15
    assert np.allclose(params.classifier_b, p0 - 0.1 - 0.15, atol=1e-12)


def test_adam_constant_gradient_step_magnitude():
    # with a constant gradient, the bias-corrected step magnitude is lr
    config = small_config()
    params = net.init_params(config)
    grads = net.zeros_like_params(params)
    grads.classifier_b[:] = 0.7
    p0 = params.classifier_b.copy()
    opt = Adam(lr=0.01)
    opt.step(params, grads)
    step1 = np.abs(params.classifier_b - p0)
    assert np.allclose(step1, 0.01, rtol=1e-5)
    for _ in range(5):
        prev = params.classifier_b.copy()
        opt.step(params, grads)
        assert np.allclose(np.abs(params.classifier_b - prev), 0.01, rtol=1e-4)


def test_optimizer_step_functional_form():
    config = small_config()
    params = net.init_params(config)
    grads = net.zeros_like_params(params)
    grads.classifier_b[:] = 1.0
    cfg = TrainConfig(learning_rate=0.1, momentum=0.0, optimizer="sgd")
    p0 = params.classifier_b.copy()
    params, state = optimizer_step(params, grads, cfg)
    assert isinstance(state, SGDMomentum)
    assert np.allclose(params.classifier_b, p0 - 0.1, atol=1e-15)
    with pytest.raises(ValueError, match="optimizer"):
        make_optimizer(TrainConfig(optimizer="bogus"))


# ---------------------------------------------------------------------------
# training loop


def test_lr_zero_keeps_params_and_baseline_accuracy():
    data = tiny_dataset(3)
    config = small_config()
    tc = TrainConfig(learning_rate=0.0, epochs=1, batch_size=4, optimizer="sgd",
                     momentum=0.0)
    result = train(data, data, config, tc)
    init = net.init_params(config, np.random.default_rng(config.seed))
    for (_, a), (_, b) in zip(result.params.named_arrays(), init.named_arrays()):
        assert np.array_equal(a, b)
    prepared = _prepare(data, config)
    assert result.metrics[0].test_acc == evaluate(prepared, init, config)


def test_initial_loss_near_log_c():
    data = tiny_dataset(2)
    config = small_config()
    tc = TrainConfig(learning_rate=0.0, epochs=1, batch_size=4)
    result = train(data, data, config, tc)
    assert abs(result.metrics[0].loss - np.log(3)) <= 0.2 * np.log(3)


def test_single_sample_memorization():
    data = [tiny_dataset(1)[0]]   # one mesh, class 0
    config = small_config()
    tc = TrainConfig(learning_rate=1e-2, epochs=60, batch_size=1,
                     optimizer="adam")
    result = train(data, data, config, tc)
    assert min(m.loss for m in result.metrics) < 0.01


def test_training_determinism_bit_exact():
    data = tiny_dataset(2)
    config = small_config()
    tc = TrainConfig(learning_rate=1e-3, epochs=3, batch_size=3)
    r1 = train(data, data, config, tc)
    r2 = train(data, data, config, tc)
    assert [m.line() for m in r1.metrics] == [m.line() for m in r2.metrics]
    for (_, a), (_, b) in zip(r1.params.named_arrays(), r2.params.named_arrays()):
        assert np.array_equal(a, b)


def test_thread_count_does_not_change_result():
    data = tiny_dataset(2)
    config = small_config()
    r1 = train(data, data, config, TrainConfig(epochs=2, batch_size=3, threads=1))
    r2 = train(data, data, config, TrainConfig(epochs=2, batch_size=3, threads=4))
    for (_, a), (_, b) in zip(r1.params.named_arrays(), r2.params.named_arrays()):
        assert np.array_equal(a, b)


def test_train_error_contracts():
    config = small_config()
    with pytest.raises(ValueError, match="empty training split"):
        train([], [], config, TrainConfig(epochs=1))
    data = [(small_mesh(), 7)]
    with pytest.raises(ValueError, match="label out of range"):
        train(data, [], config, TrainConfig(epochs=1))
    with pytest.raises(ValueError, match="empty evaluation"):
        evaluate([], net.init_params(config), config)


def test_best_checkpoint_tracking_and_early_stop():
    data = tiny_dataset(2)
    config = small_config()
    tc = TrainConfig(learning_rate=5e-3, epochs=30, batch_size=3,
                     optimizer="adam")
    result = train(data, data, config, tc, stop_at_test_acc=1.0)
    assert result.best_test_acc == max(m.test_acc for m in result.metrics)
    assert result.metrics[result.best_epoch].test_acc == result.best_test_acc
