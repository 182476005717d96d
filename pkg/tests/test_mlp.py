import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import (
    batched_finite_differences,
    finite_difference_gradients,
    flatten,
    random_triple,
    relative_error,
    straight_line_forward,
)

from srlab.dataset import DatasetSplit, PatchSet
from srlab.errors import (
    BadMagicError,
    DimensionError,
    FileFormatError,
    TrailingBytesError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from srlab.mlp import (
    MlpModel,
    TrainConfig,
    TrainingDivergedError,
    backward,
    forward,
    init_model,
    load_model,
    loss,
    mean_loss,
    run_epoch,
    save_model,
    sgd_step,
    train,
)


def patch_set(inputs, targets):
    n = len(inputs)
    z = np.zeros(n, dtype=np.int64)
    return PatchSet(np.asarray(inputs, float), np.asarray(targets, float), z, z, z, z, ("synthetic",))


def toy_split(n=300, seed=0, same_validation=False):
    r = np.random.default_rng(seed)
    x = r.random((n, 9))
    y = np.stack([x[:, 4], (x[:, 4] + x[:, 5]) / 2, (x[:, 4] + x[:, 7]) / 2, x[:, [4, 5, 7, 8]].mean(1)], axis=1)
    train_set = patch_set(x, y)
    if same_validation:
        return DatasetSplit(train_set, train_set, train_set, seed)
    xv = r.random((n // 3, 9))
    yv = np.stack([xv[:, 4], (xv[:, 4] + xv[:, 5]) / 2, (xv[:, 4] + xv[:, 7]) / 2, xv[:, [4, 5, 7, 8]].mean(1)], axis=1)
    val = patch_set(xv, yv)
    return DatasetSplit(train_set, val, val, seed)


# ---------------------------------------------------------------- init


def test_init_deterministic_and_sized():
    a, b = init_model(20, 7), init_model(20, 7)
    assert a.equals(b)
    assert not a.equals(init_model(20, 8))
    assert a.parameter_count() == 9 * 20 + 20 + 20 * 4 + 4 == 284
    assert np.all(np.abs(a.w1) <= math.sqrt(6 / 29))
    assert np.all(np.abs(a.w1) <= math.sqrt(6 / 13))
    assert np.all(np.abs(a.w2) <= math.sqrt(6 / 24))
    assert not a.b1.any() and not a.b2.any()


def test_init_rejects_empty_hidden_layer():
    with pytest.raises(ValueError):
        init_model(0)


def test_model_invariants():
    with pytest.raises(ValueError):
        MlpModel(np.zeros((3, 9)), np.zeros(2), np.zeros((4, 3)), np.zeros(4))
    with pytest.raises(ValueError):
        MlpModel(np.full((3, 9), np.nan), np.zeros(3), np.zeros((4, 3)), np.zeros(4))


# ------------------------------------------------------------- forward


def test_forward_zero_model():
    m = MlpModel(np.zeros((20, 9)), np.zeros(20), np.zeros((4, 20)), np.zeros(4))
    np.testing.assert_array_equal(forward(m, np.random.default_rng(0).random(9)), [0.5] * 4)


def test_forward_input_decoupled():
    c = 1.3
    m = init_model(20, 1)
    m = MlpModel(m.w1, m.b1, np.zeros((4, 20)), np.full(4, c))
    for x in (np.zeros(9), np.ones(9)):
        np.testing.assert_allclose(forward(m, x), [1 / (1 + math.exp(-c))] * 4, rtol=0, atol=1e-15)


def test_forward_matches_oracle():
    for seed in range(10):
        m, x, _ = random_triple(seed)
        np.testing.assert_allclose(forward(m, x), straight_line_forward(m, x), rtol=0, atol=1e-12)


def test_forward_batch_and_dimension_check():
    m = init_model(5, 0)
    batch = np.random.default_rng(0).random((6, 9))
    out = forward(m, batch)
    assert out.shape == (6, 4)
    np.testing.assert_allclose(out[2], forward(m, batch[2]), atol=1e-15)
    with pytest.raises(ValueError):
        forward(m, np.zeros(8))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_forward_strictly_inside_unit_interval(seed):
    m, x, _ = random_triple(seed)
    out = forward(m, x)
    assert np.all(out > 0) and np.all(out < 1)


# ------------------------------------------------------------ backward


def test_zero_gradient_at_target():
    m, x, _ = random_triple(3)
    g = backward(m, x, forward(m, x))
    for part in (g.w1, g.b1, g.w2, g.b2):
        assert not part.any()


def test_output_bias_gradient_by_hand():
    m, x, t = random_triple(4)
    out = straight_line_forward(m, x)
    expected = (2 / 4) * (out - t) * out * (1 - out)
    np.testing.assert_allclose(backward(m, x, t).b2, expected, rtol=1e-13, atol=1e-16)


@pytest.mark.parametrize("seed", range(3))
def test_backward_matches_loop_finite_differences(seed):
    m, x, t = random_triple(seed)
    g = backward(m, x, t)
    numeric = finite_difference_gradients(m, x, t)
    for analytic, fd in zip((g.w1, g.b1, g.w2, g.b2), numeric):
        assert relative_error(analytic, fd).max() < 1e-4


def test_backward_matches_batched_finite_differences():
    for seed in range(100, 130):
        m, x, t = random_triple(seed)
        g = backward(m, x, t)
        analytic = np.concatenate([g.w1.ravel(), g.b1, g.w2.ravel(), g.b2])
        assert relative_error(analytic, batched_finite_differences(m, x, t)).max() < 1e-4


def test_backward_dimension_check():
    with pytest.raises(ValueError):
        backward(init_model(3, 0), np.zeros(9), np.zeros(3))


def test_small_sgd_step_does_not_increase_loss():
    failures = 0
    for seed in range(100):
        m, x, t = random_triple(seed)
        g = backward(m, x, t)
        norm = math.sqrt(sum(float(np.sum(p * p)) for p in (g.w1, g.b1, g.w2, g.b2)))
        if loss(sgd_step(m, x, t, 1e-3), x, t) > loss(m, x, t) and norm >= 1e-12:
            failures += 1
    assert failures == 0


# --------------------------------------------------------- SGD kernels


def test_compiled_epoch_matches_reference_steps():
    r = np.random.default_rng(0)
    x, y = r.random((40, 9)), r.random((40, 4))
    order = r.permutation(40)
    fast = init_model(20, 2)
    slow = fast.copy()
    run_epoch(fast, x, y, order, 0.1)
    for i in order:
        slow = sgd_step(slow, x[i], y[i], 0.1)
    np.testing.assert_allclose(flatten(fast), flatten(slow), rtol=0, atol=1e-12)


def test_compiled_minibatch_averages_gradients():
    r = np.random.default_rng(1)
    x, y = r.random((4, 9)), r.random((4, 4))
    m = init_model(6, 3)
    expected = flatten(m).copy()
    grads = [backward(m, x[i], y[i]) for i in range(4)]
    mean = np.mean([np.concatenate([g.w1.ravel(), g.b1, g.w2.ravel(), g.b2]) for g in grads], axis=0)
    run_epoch(m, x, y, np.arange(4), 0.5, batch_size=4)
    np.testing.assert_allclose(flatten(m), expected - 0.5 * mean, rtol=0, atol=1e-14)


def test_mean_loss_matches_numpy():
    r = np.random.default_rng(2)
    x, y = r.random((50, 9)), r.random((50, 4))
    m = init_model(20, 0)
    assert mean_loss(m, x, y) == pytest.approx(np.mean((forward(m, x) - y) ** 2), abs=1e-14)


# ------------------------------------------------------------- training


def test_train_config_validation():
    for bad in ({"learning_rate": 0}, {"max_epochs": 0}, {"patience": 0}, {"batch_size": 0}):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_train_constant_targets():
    c = 0.3
    r = np.random.default_rng(5)
    x = r.random((400, 9))
    y = np.full((400, 4), c)
    split = DatasetSplit(patch_set(x[:300], y[:300]), patch_set(x[300:], y[300:]), patch_set(x[300:], y[300:]), 0)
    model, report = train(init_model(20, 0), split, TrainConfig(learning_rate=0.5, max_epochs=60, patience=10))
    probe = np.random.default_rng(9).random((200, 9))
    assert np.max(np.abs(forward(model, probe) - c)) < 0.02


def test_train_curve_decreasing_at_small_lr():
    split = toy_split(same_validation=True)
    _, report = train(init_model(20, 0), split, TrainConfig(learning_rate=0.01, max_epochs=8, patience=1))
    assert len(report.train_mse) >= 5
    first = report.train_mse[:5]
    assert all(b <= a for a, b in zip(first, first[1:]))


def test_train_keeps_best_epoch_and_is_deterministic():
    split = toy_split()
    cfg = TrainConfig(learning_rate=0.5, max_epochs=25, patience=3, rng_seed=11)
    m1, r1 = train(init_model(20, 0), split, cfg)
    m2, r2 = train(init_model(20, 0), split, cfg)
    assert m1.equals(m2)
    assert r1 == r2
    best = r1.validation_mse[r1.best_epoch]
    assert all(best <= v for v in r1.validation_mse)
    assert mean_loss(m1, split.validation.inputs, split.validation.targets) == best
    assert r1.stop_reason in ("patience", "max_epochs")


def test_train_does_not_mutate_input_model():
    m = init_model(20, 0)
    before = m.copy()
    train(m, toy_split(), TrainConfig(max_epochs=2))
    assert m.equals(before)


def test_train_rejects_empty_split():
    empty = patch_set(np.zeros((0, 9)), np.zeros((0, 4)))
    split = DatasetSplit(empty, empty, empty, 0)
    with pytest.raises(ValueError):
        train(init_model(4, 0), split, TrainConfig())


def test_train_divergence_reported():
    split = toy_split()
    split.train.inputs[0, 0] = np.nan
    with pytest.raises(TrainingDivergedError):
        train(init_model(4, 0), split, TrainConfig(max_epochs=3))


# ---------------------------------------------------------- persistence


def test_model_round_trip(tmp_path):
    m, _, _ = random_triple(0)
    save_model(m, tmp_path / "m.mlp")
    back = load_model(tmp_path / "m.mlp")
    assert back.equals(m)
    raw = (tmp_path / "m.mlp").read_bytes()
    assert raw[:6] == b"MLPSR\x01"
    assert len(raw) == 6 + 16 + 8 * 284


def test_model_file_errors(tmp_path):
    path = tmp_path / "m.mlp"
    save_model(init_model(20, 0), path)
    good = path.read_bytes()
    cases = {
        BadMagicError: b"XLPSR" + good[5:],
        UnsupportedVersionError: good[:5] + b"\x02" + good[6:],
        TruncatedFileError: good[:-3],
        TrailingBytesError: good + b"\x00",
        DimensionError: good[:6] + (0).to_bytes(4, "little") + good[10:],
    }
    for error, blob in cases.items():
        path.write_bytes(blob)
        with pytest.raises(error):
            load_model(path)
    path.write_bytes(good[:10])
    with pytest.raises(TruncatedFileError):
        load_model(path)
    assert issubclass(BadMagicError, FileFormatError)
