import json
import math

import numpy as np
import pytest

from jitdp import fusion
from jitdp.errors import CorruptFile, DimMismatch, NonFiniteLoss, VersionMismatch

TEXT_DIM, CAT_DIM, NUM_DIM = 7, 5, 4


def make_batch(seed, n=6):
    rng = np.random.RandomState(seed)
    return (
        rng.randn(n, TEXT_DIM),
        rng.randn(n, CAT_DIM),
        rng.randn(n, NUM_DIM),
        rng.randint(0, 2, n).astype(np.float64),
    )


def make_model(method, seed=0, **kwargs):
    kwargs.setdefault("d", 6)
    kwargs.setdefault("hidden", 5)
    return fusion.init_model(
        method, text_dim=TEXT_DIM, cat_dim=CAT_DIM, num_dim=NUM_DIM,
        seed=seed, **kwargs
    )


def finite_difference(model, batch, step=1e-6):
    """Central differences for every parameter; returns {name: array}."""
    T, C, N, y = batch
    out = {}
    for name, param in model.params.items():
        grad = np.zeros_like(param)
        flat = param.reshape(-1) if param.shape else param.reshape(1)
        flat_grad = grad.reshape(-1) if param.shape else grad.reshape(1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fusion.loss(model, T, C, N, y)
            flat[i] = orig - step
            down = fusion.loss(model, T, C, N, y)
            flat[i] = orig
            flat_grad[i] = (up - down) / (2.0 * step)
        out[name] = grad
    return out


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


# ---------------------------------------------------------------------
# combine


def test_concat_dimension_is_sum_of_modalities():
    model = fusion.init_model("unimodal_concat", text_dim=4)
    assert model.dims["d_m"] == 4 + 13 + 13
    m = fusion.combine(model, np.ones(4), np.ones(13), np.ones(13))
    assert m.shape == (30,)
    assert np.array_equal(m, np.ones(30))


def test_attention_weights_form_a_simplex():
    model = make_model("attention_sum", seed=3)
    T, C, N, _ = make_batch(11)
    _, cache = fusion._combine_forward(model, T, C, N)
    sums = cache["A"].sum(axis=1)
    assert np.all(np.abs(sums - 1.0) < 1e-12)
    assert np.all(cache["A"] >= 0.0)


def test_gating_dead_gates_reduce_to_text_projection():
    model = make_model("gating_sum", seed=5)
    # force every gate pre-activation negative
    model.params["b_gc"][:] = -1e6
    model.params["b_gn"][:] = -1e6
    T, C, N, _ = make_batch(7)
    m = fusion.combine(model, T, C, N)
    assert np.array_equal(m, T @ model.params["W_t"].T)


def test_gating_beta_zero_is_text_only():
    model = make_model("gating_sum", seed=5, beta=0.0)
    T, C, N, _ = make_batch(8)
    m = fusion.combine(model, T, C, N)
    assert np.array_equal(m, T @ model.params["W_t"].T)


def test_gating_alpha_stays_clamped():
    model = make_model("gating_sum", seed=9)
    T, C, N, _ = make_batch(13, n=40)
    _, cache = fusion._combine_forward(model, T, C, N)
    assert np.all(cache["alpha"] >= 0.0)
    assert np.all(cache["alpha"] <= 1.0)


def test_combine_rejects_wrong_dims():
    model = make_model("attention_sum")
    with pytest.raises(DimMismatch):
        fusion.combine(model, np.ones(TEXT_DIM + 1), np.ones(CAT_DIM), np.ones(NUM_DIM))


# ---------------------------------------------------------------------
# head and loss


def test_all_zero_parameters_predict_half():
    model = make_model("unimodal_concat")
    for name in model.params:
        model.params[name] = np.zeros_like(model.params[name])
    p = fusion.predict_proba(model, np.ones(TEXT_DIM), np.ones(CAT_DIM), np.ones(NUM_DIM))
    assert p == 0.5


def test_all_zero_parameters_loss_is_ln2():
    model = make_model("gating_sum")
    for name in model.params:
        model.params[name] = np.zeros_like(model.params[name])
    T, C, N, y = make_batch(2)
    assert fusion.loss(model, T, C, N, y) == pytest.approx(math.log(2), abs=1e-12)


def test_probabilities_stay_in_open_interval():
    for method in fusion.COMBINE_METHODS:
        model = make_model(method, seed=1)
        T, C, N, _ = make_batch(4, n=20)
        p = fusion.predict_proba(model, 3.0 * T, 3.0 * C, 3.0 * N)
        assert np.all(p > 0.0)
        assert np.all(p < 1.0)
        # extreme inputs may saturate the sigmoid at the limits of float64,
        # but must never produce NaN or leave [0, 1]
        p = fusion.predict_proba(model, 1e3 * T, 1e3 * C, 1e3 * N)
        assert np.all(np.isfinite(p))
        assert np.all((p >= 0.0) & (p <= 1.0))


def test_prediction_invariant_to_batch_order():
    model = make_model("attention_sum", seed=2)
    T, C, N, _ = make_batch(5, n=9)
    p = fusion.predict_proba(model, T, C, N)
    perm = np.random.RandomState(0).permutation(9)
    p_perm = fusion.predict_proba(model, T[perm], C[perm], N[perm])
    assert np.array_equal(p[perm], p_perm)


def test_loss_permutation_invariant():
    model = make_model("gating_sum", seed=4)
    T, C, N, y = make_batch(6, n=16)
    base = fusion.loss(model, T, C, N, y)
    perm = np.random.RandomState(1).permutation(16)
    assert fusion.loss(model, T[perm], C[perm], N[perm], y[perm]) == pytest.approx(
        base, abs=1e-12
    )


# ---------------------------------------------------------------------
# gradients


@pytest.mark.parametrize("method", fusion.COMBINE_METHODS)
def test_gradients_match_finite_differences(method):
    model = make_model(method, seed=12)
    batch = make_batch(21)
    _, grads = fusion.loss_and_grads(model, *batch)
    fd = finite_difference(model, batch)
    assert set(grads) == set(model.params)
    for name in grads:
        assert relative_error(grads[name], fd[name]) < 1e-4, name


# ---------------------------------------------------------------------
# training


def test_zero_learning_rate_changes_nothing():
    model = make_model("unimodal_concat", seed=6, lr=0.0, epochs=3)
    before = {k: v.copy() for k, v in model.params.items()}
    train = make_batch(31, n=12)
    val = make_batch(32, n=4)
    fusion.train(model, train, val)
    for name, param in model.params.items():
        assert np.array_equal(param, before[name])


def test_single_instance_loss_is_non_increasing():
    model = make_model("unimodal_concat", seed=7, lr=1e-3, epochs=10, batch=1)
    T, C, N, _ = make_batch(41, n=1)
    y = np.array([1.0])
    report = fusion.train(model, (T, C, N, y), (T, C, N, y))
    losses = report.train_loss
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_training_is_bit_reproducible():
    def run():
        model = make_model("attention_sum", seed=8, epochs=4, lr=1e-2, batch=4)
        report = fusion.train(model, make_batch(51, n=20), make_batch(52, n=8))
        return model, report

    m1, r1 = run()
    m2, r2 = run()
    assert r1 == r2
    for name in m1.params:
        assert np.array_equal(m1.params[name], m2.params[name])


def test_training_keeps_best_validation_epoch():
    model = make_model("unimodal_concat", seed=9, epochs=5, lr=1e-2, batch=4)
    report = fusion.train(model, make_batch(61, n=20), make_batch(62, n=10))
    assert 0 <= report.best_epoch < 5
    assert report.val_f1[report.best_epoch] == max(report.val_f1)


def test_poisoned_parameters_raise_non_finite_loss():
    model = make_model("unimodal_concat", seed=10, epochs=2)
    model.params["W1"][:] = np.inf
    with np.errstate(invalid="ignore"), pytest.raises(NonFiniteLoss):
        fusion.train(model, make_batch(71, n=8), make_batch(72, n=4))


def test_separable_toy_set_reaches_high_f1():
    # label = 1 iff the first text coordinate is positive, with a unit
    # margin so the classes are cleanly separable
    rng = np.random.RandomState(5)
    n = 200
    T = rng.randn(n, TEXT_DIM)
    C = rng.randn(n, CAT_DIM)
    N = rng.randn(n, NUM_DIM)
    y = (T[:, 0] > 0).astype(np.float64)
    T[:, 0] += np.where(y == 1.0, 1.0, -1.0)
    model = make_model("unimodal_concat", seed=11, epochs=40, lr=1e-2, batch=16)
    fusion.train(model, (T[:120], C[:120], N[:120], y[:120]),
                 (T[120:160], C[120:160], N[120:160], y[120:160]))
    p = fusion.predict_proba(model, T[160:], C[160:], N[160:])
    preds = (p >= 0.5).astype(int)
    truth = y[160:].astype(int)
    tp = int(np.sum((preds == 1) & (truth == 1)))
    fp = int(np.sum((preds == 1) & (truth == 0)))
    fn = int(np.sum((preds == 0) & (truth == 1)))
    f1 = 2 * tp / (2 * tp + fp + fn)
    assert f1 >= 0.95


# ---------------------------------------------------------------------
# persistence


def test_save_load_round_trip(tmp_path):
    model = make_model("gating_sum", seed=13)
    path = str(tmp_path / "model.json")
    fusion.save_model(model, path)
    loaded = fusion.load_model(path)
    assert loaded.combine_method == model.combine_method
    assert loaded.dims == model.dims
    assert loaded.hyper == model.hyper
    for name in model.params:
        assert np.array_equal(loaded.params[name], model.params[name])

    again = str(tmp_path / "again.json")
    fusion.save_model(loaded, again)
    assert open(path, "rb").read() == open(again, "rb").read()


def test_load_rejects_future_version(tmp_path):
    model = make_model("unimodal_concat")
    path = str(tmp_path / "model.json")
    fusion.save_model(model, path)
    blob = json.loads(open(path).read())
    blob["format_version"] = 999
    open(path, "w").write(json.dumps(blob))
    with pytest.raises(VersionMismatch):
        fusion.load_model(path)


def test_load_rejects_truncated_file(tmp_path):
    model = make_model("unimodal_concat")
    path = str(tmp_path / "model.json")
    fusion.save_model(model, path)
    data = open(path, "rb").read()
    open(path, "wb").write(data[: len(data) // 2])
    with pytest.raises(CorruptFile):
        fusion.load_model(path)


def test_load_rejects_missing_parameter(tmp_path):
    model = make_model("attention_sum")
    path = str(tmp_path / "model.json")
    fusion.save_model(model, path)
    blob = json.loads(open(path).read())
    del blob["parameters"]["W_q"]
    open(path, "w").write(json.dumps(blob))
    with pytest.raises(CorruptFile):
        fusion.load_model(path)
