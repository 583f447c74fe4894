import math

import numpy as np
import pytest

from spatialrank import mlp
from spatialrank.cli import random_check_case
from spatialrank.core import BoundingBox, SpatialRelation, assemble_features
from spatialrank.synthgen import label_of

LN9 = math.log(9)


def loop_forward_eval(model, features):
    """Eval-mode forward with plain Python loops, independent of the numpy path."""
    p, b = model.params, model.buffers
    a = [float(v) for v in features]
    for i in (1, 2):
        W, bias = p[f"W{i}"], p[f"b{i}"]
        out = []
        for r in range(W.shape[0]):
            h = bias[r]
            for c in range(W.shape[1]):
                h += W[r, c] * a[c]
            xhat = (h - b[f"running_mean{i}"][r]) / math.sqrt(b[f"running_var{i}"][r] + model.eps)
            y = p[f"gamma{i}"][r] * xhat + p[f"beta{i}"][r]
            out.append(max(y, 0.0))
        a = out
    W, bias = p["W3"], p["b3"]
    return [bias[r] + sum(W[r, c] * a[c] for c in range(W.shape[1])) for r in range(W.shape[0])]


def randomized_model(seed, in_dim=11):
    rng = np.random.default_rng(seed)
    model = mlp.init_model(in_dim, seed=seed)
    for i in (1, 2):
        n = model.params[f"gamma{i}"].shape[0]
        model.params[f"gamma{i}"] = rng.uniform(0.5, 1.5, n)
        model.params[f"beta{i}"] = rng.uniform(-0.5, 0.5, n)
        model.buffers[f"running_mean{i}"] = rng.normal(0, 0.3, n)
        model.buffers[f"running_var{i}"] = rng.uniform(0.2, 2.0, n)
    return model


def test_zero_network_is_uniform():
    model = mlp.zero_model(8)
    logits, _ = mlp.forward(model, np.full((3, 8), 0.3), "eval")
    assert np.all(logits == 0.0)
    assert mlp.predict(model, np.full(8, 0.3)) == pytest.approx(np.full(9, 1 / 9), abs=1e-15)


def test_train_mode_identical_inputs_give_beta():
    model = mlp.init_model(8, seed=3)
    model.params["beta1"] = np.linspace(-1, 1, 16)
    _, cache = mlp.forward(model, np.tile(np.linspace(0.1, 0.8, 8), (2, 1)), "train")
    assert np.allclose(cache[1]["xhat"], 0.0, atol=1e-12)
    assert np.allclose(cache[1]["y"], model.params["beta1"], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_loop_oracle(seed):
    model = randomized_model(seed)
    x = np.random.default_rng(100 + seed).uniform(0, 1, 11)
    logits, _ = mlp.forward(model, x, "eval")
    assert logits[0] == pytest.approx(loop_forward_eval(model, x), abs=1e-10)


def test_dimension_mismatch():
    model = mlp.init_model(11)
    with pytest.raises(mlp.DimensionError, match="in_dim=11"):
        mlp.forward(model, np.zeros((2, 8)))
    with pytest.raises(mlp.DimensionError):
        mlp.predict(model, np.zeros(8))


def test_train_mode_updates_running_stats():
    model = mlp.init_model(8, seed=0)
    x = np.random.default_rng(0).uniform(0, 1, (12, 8))
    z = x @ model.params["W1"].T + model.params["b1"]
    mlp.forward(model, x, "train")
    assert model.buffers["running_mean1"] == pytest.approx(0.1 * z.mean(0), abs=1e-12)
    assert model.buffers["running_var1"] == pytest.approx(0.9 + 0.1 * z.var(0, ddof=1), abs=1e-12)
    before = {k: v.copy() for k, v in model.buffers.items()}
    mlp.forward(model, x, "train", update_stats=False)
    mlp.forward(model, x, "eval")
    assert all(np.array_equal(before[k], model.buffers[k]) for k in before)


def test_cross_entropy_uniform_logits():
    loss, grad = mlp.softmax_cross_entropy(np.zeros((4, 9)), [0, 3, 5, 8])
    assert loss == pytest.approx(LN9, abs=1e-12)
    assert grad.sum(axis=1) == pytest.approx(np.zeros(4), abs=1e-15)


def test_cross_entropy_saturates():
    logits = np.zeros((1, 9))
    logits[0, 4] = 800.0
    loss, _ = mlp.softmax_cross_entropy(logits, [4])
    assert loss == 0.0


def test_cross_entropy_hand_computed():
    # row 1: logit 1 on the true class 0; row 2: logits 2 (true class 1) and -1
    logits = np.zeros((2, 9))
    logits[0, 0] = 1.0
    logits[1, 1] = 2.0
    logits[1, 8] = -1.0
    loss, grad = mlp.softmax_cross_entropy(logits, [0, 1])
    assert loss == pytest.approx(1.0318320219915513, abs=1e-10)
    p = mlp.softmax(logits)
    expected = p.copy()
    expected[0, 0] -= 1
    expected[1, 1] -= 1
    assert grad == pytest.approx(expected / 2, abs=1e-15)


def test_backward_zero_upstream():
    model, x, y = random_check_case(1)
    _, cache = mlp.forward(model, x, "train", update_stats=False)
    grads = mlp.backward(model, cache, np.zeros((x.shape[0], 9)))
    assert all(np.all(g == 0) for g in grads.values())
    assert set(grads) == set(mlp.PARAM_NAMES)


def test_output_layer_closed_form():
    model, x, y = random_check_case(2)
    logits, cache = mlp.forward(model, x, "train", update_stats=False)
    _, dlogits = mlp.softmax_cross_entropy(logits, y)
    grads = mlp.backward(model, cache, dlogits)
    assert grads["W3"] == pytest.approx(dlogits.T @ cache["a2"], abs=1e-15)
    assert grads["b3"] == pytest.approx(dlogits.sum(0), abs=1e-15)


def test_backward_requires_train_cache():
    model = mlp.init_model(8)
    _, cache = mlp.forward(model, np.zeros((2, 8)), "eval")
    with pytest.raises(ValueError):
        mlp.backward(model, cache, np.zeros((2, 9)))


@pytest.mark.parametrize("seed", range(3))
def test_gradient_check_passes(seed):
    model, x, y = random_check_case(seed)
    assert mlp.gradient_check(model, x, y, step=1e-5) < 1e-4


def test_gradient_check_catches_sign_flip():
    model, x, y = random_check_case(4)
    logits, cache = mlp.forward(model, x, "train", update_stats=False)
    _, dlogits = mlp.softmax_cross_entropy(logits, y)
    grads = mlp.backward(model, cache, dlogits)
    grads["W2"] = -grads["W2"]
    assert mlp.gradient_check(model, x, y, grads=grads) > 1e-1


def test_gradient_check_subsample():
    model, x, y = random_check_case(5)
    assert mlp.gradient_check(model, x, y, max_scalars=200, seed=1) < 1e-4


def test_gradient_check_at_zero_gradient_point():
    # zero network, one label per class: softmax is uniform and matches the
    # label frequencies, and every hidden activation is zero
    model = mlp.zero_model(8)
    x = np.random.default_rng(0).uniform(0, 1, (9, 8))
    y = np.arange(9)
    logits, cache = mlp.forward(model, x, "train", update_stats=False)
    _, d = mlp.softmax_cross_entropy(logits, y)
    assert all(np.abs(g).max() < 1e-15 for g in mlp.backward(model, cache, d).values())
    assert mlp.gradient_check(model, x, y) < 1e-2


def test_adam_zero_gradient_fresh_state():
    model = mlp.init_model(8, seed=1)
    before = {k: v.copy() for k, v in model.params.items()}
    state = mlp.AdamState(lr=1e-3)
    mlp.adam_step(model, {k: np.zeros_like(v) for k, v in before.items()}, state)
    assert all(np.array_equal(before[k], model.params[k]) for k in before)
    assert state.t == 1


def _scalar_model(theta):
    model = mlp.init_model(8)
    model.params = {"theta": np.array([theta])}
    return model


def test_adam_first_step():
    model = _scalar_model(0.0)
    mlp.adam_step(model, {"theta": np.array([1.0])}, mlp.AdamState(lr=1e-5))
    assert model.params["theta"][0] == pytest.approx(-1e-5 / (1 + 1e-8), abs=1e-20)


def test_adam_three_step_trace():
    # hand simulation: theta0 = 0.5, grads 1, -0.5, 2, lr = 0.1
    model = _scalar_model(0.5)
    state = mlp.AdamState(lr=0.1)
    expected = [0.400000001, 0.37336629737090316, 0.3075551378428032]
    for g, want in zip([1.0, -0.5, 2.0], expected):
        mlp.adam_step(model, {"theta": np.array([g])}, state)
        assert model.params["theta"][0] == pytest.approx(want, abs=1e-12)
    assert state.t == 3
    assert np.all(state.v["theta"] >= 0)


def test_train_config_validation():
    with pytest.raises(ValueError):
        mlp.TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        mlp.TrainConfig(batch_size=1)
    defaults = mlp.TrainConfig()
    assert (defaults.epochs, defaults.batch_size, defaults.learning_rate) == (100, 12, 1e-5)


def test_train_too_few_instances(synth_split):
    with pytest.raises(ValueError, match="batch_size"):
        mlp.train(synth_split.train[:5], mlp.TrainConfig(epochs=1))


def test_train_deterministic(synth_split):
    cfg = mlp.TrainConfig(epochs=3, seed=11, use_geo=True)
    a, ha = mlp.train(synth_split.train, cfg)
    b, hb = mlp.train(synth_split.train, cfg)
    assert mlp.save_checkpoint(a, cfg) == mlp.save_checkpoint(b, cfg)
    assert ha == hb and len(ha) == 3


def test_training_loss_after_first_epoch(trained_geo):
    model, history = trained_geo
    assert len(history) == 100
    assert history[0] < LN9
    assert history[-1] <= history[0]
    for name in ("running_var1", "running_var2"):
        assert np.all(model.buffers[name] > 0)
    assert all(np.all(np.isfinite(v)) for v in model.params.values())


def test_trained_model_recognizes_inside(trained_geo):
    model, _ = trained_geo
    obj = BoundingBox(0.3, 0.3, 0.4, 0.4)
    subj = BoundingBox(0.45, 0.45, 0.1, 0.1)
    assert label_of(subj, obj) is SpatialRelation.INSIDE
    probs = mlp.predict(model, assemble_features(subj, obj, True))
    assert int(np.argmax(probs)) == SpatialRelation.INSIDE
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_checkpoint_round_trip(trained_geo):
    model, _ = trained_geo
    data = mlp.save_checkpoint(model, mlp.TrainConfig(seed=7, use_geo=True))
    loaded = mlp.load_checkpoint(data)
    x = np.random.default_rng(3).uniform(0, 1, (20, 11))
    for row in x:
        assert mlp.predict(loaded, row).tobytes() == mlp.predict(model, row).tobytes()
    assert mlp.train_config_from_checkpoint(data) == mlp.TrainConfig(seed=7, use_geo=True)


def test_checkpoint_errors(trained_geo):
    model, _ = trained_geo
    data = mlp.save_checkpoint(model)
    with pytest.raises(mlp.CheckpointError):
        mlp.load_checkpoint(data[: len(data) // 2])
    bumped = data.replace(b'"version": 1', b'"version": 99')
    with pytest.raises(mlp.CheckpointError, match="version"):
        mlp.load_checkpoint(bumped)
    loaded = mlp.load_checkpoint(data)
    with pytest.raises(mlp.DimensionError):
        mlp.predict(loaded, np.zeros(8))
