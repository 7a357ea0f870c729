"""Multimodal fusion models over (text, categorical, numerical) inputs.

Three combine methods produce the fused vector m: plain concatenation,
attention-weighted summation of per-modality projections queried by the
text projection, and gated summation where the tabular contribution is
norm-clamped against the text projection. A one-hidden-layer head maps m
to a defect probability. Training is full manual backpropagation with
Adam-style updates, all in 64-bit floats, and is bit-reproducible for a
fixed seed.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import CorruptFile, DimMismatch, NonFiniteLoss, VersionMismatch
from .evaluation import f1_score
from .storage import read_json, write_json

FORMAT_VERSION = 1
COMBINE_METHODS = ("unimodal_concat", "attention_sum", "gating_sum")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class FusionModel:
    combine_method: str
    dims: dict  # text_dim, cat_dim, num_dim, d, d_m, hidden
    hyper: dict  # beta, lr, epochs, batch, seed, threshold
    params: dict  # name -> float64 ndarray


@dataclass(frozen=True)
class TrainReport:
    train_loss: tuple  # per-epoch mean BCE over the training split
    val_f1: tuple  # per-epoch F1 on the validation split
    best_epoch: int  # epoch whose parameters the model keeps


def _param_specs(combine_method, dims):
    """Parameter names and shapes, in initialization order."""
    dt, dc, dn = dims["text_dim"], dims["cat_dim"], dims["num_dim"]
    d, hidden, d_m = dims["d"], dims["hidden"], dims["d_m"]
    specs = []
    if combine_method == "attention_sum":
        specs += [("W_t", (d, dt)), ("W_c", (d, dc)), ("W_n", (d, dn)),
                  ("W_q", (d, dt))]
    elif combine_method == "gating_sum":
        specs += [("W_t", (d, dt)), ("W_c", (d, dc)), ("W_n", (d, dn)),
                  ("W_gc", (d, dt + dc)), ("b_gc", (d,)),
                  ("W_gn", (d, dt + dn)), ("b_gn", (d,))]
    specs += [("W1", (hidden, d_m)), ("b1", (hidden,)), ("w2", (hidden,)),
              ("b2", ())]
    return specs


def init_model(combine_method, text_dim, cat_dim=13, num_dim=13, d=64,
               hidden=32, beta=1.0, lr=1e-3, epochs=50, batch=32, seed=0,
               threshold=0.5):
    """Seeded model with uniform(-s, s) weights, s = sqrt(6/(fan_in+fan_out)).

    Bias vectors start at zero; the output weight vector w2 is treated as
    a (1 x hidden) matrix for its fan computation.
    """
    if combine_method not in COMBINE_METHODS:
        raise ValueError("unknown combine method %r" % combine_method)
    d_m = text_dim + cat_dim + num_dim if combine_method == "unimodal_concat" else d
    dims = {"text_dim": text_dim, "cat_dim": cat_dim, "num_dim": num_dim,
            "d": d, "d_m": d_m, "hidden": hidden}
    hyper = {"beta": float(beta), "lr": float(lr), "epochs": int(epochs),
             "batch": int(batch), "seed": int(seed), "threshold": float(threshold)}
    rng = np.random.RandomState(seed)
    params = {}
    for name, shape in _param_specs(combine_method, dims):
        if name.startswith("b"):
            params[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_out, fan_in = shape if len(shape) == 2 else (1, shape[0])
            s = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-s, s, size=shape).astype(np.float64)
    return FusionModel(combine_method=combine_method, dims=dims, hyper=hyper,
                       params=params)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_batch(x, dim, what):
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DimMismatch("%s has shape %s, expected (*, %d)"
                          % (what, arr.shape, dim))
    return arr, single


def _check_inputs(model, text, cat, num):
    dims = model.dims
    T, single = _as_batch(text, dims["text_dim"], "text")
    C, _ = _as_batch(cat, dims["cat_dim"], "cat")
    N, _ = _as_batch(num, dims["num_dim"], "num")
    if not (len(T) == len(C) == len(N)):
        raise DimMismatch("modalities disagree on batch size")
    return T, C, N, single


def _combine_forward(model, T, C, N):
    P = model.params
    method = model.combine_method
    if method == "unimodal_concat":
        M = np.concatenate([T, C, N], axis=1)
        return M, {}
    if method == "attention_sum":
        scale = 1.0 / math.sqrt(model.dims["d"])
        Kt = T @ P["W_t"].T
        Kc = C @ P["W_c"].T
        Kn = N @ P["W_n"].T
        Q = T @ P["W_q"].T
        S = np.stack([(Q * Kt).sum(axis=1), (Q * Kc).sum(axis=1),
                      (Q * Kn).sum(axis=1)], axis=1) * scale
        E = np.exp(S - S.max(axis=1, keepdims=True))
        A = E / E.sum(axis=1, keepdims=True)
        M = A[:, 0:1] * Kt + A[:, 1:2] * Kc + A[:, 2:3] * Kn
        return M, {"Kt": Kt, "Kc": Kc, "Kn": Kn, "Q": Q, "A": A, "scale": scale}
    # gating_sum
    beta = model.hyper["beta"]
    Tp = T @ P["W_t"].T
    TC = np.concatenate([T, C], axis=1)
    TN = np.concatenate([T, N], axis=1)
    Zc = TC @ P["W_gc"].T + P["b_gc"]
    Zn = TN @ P["W_gn"].T + P["b_gn"]
    Gc = np.maximum(Zc, 0.0)
    Gn = np.maximum(Zn, 0.0)
    Pc = C @ P["W_c"].T
    Pn = N @ P["W_n"].T
    H = Gc * Pc + Gn * Pn
    nt = np.linalg.norm(Tp, axis=1)
    nh = np.linalg.norm(H, axis=1)
    ratio = np.zeros(len(Tp), dtype=np.float64)
    has_h = nh > 0.0
    ratio[has_h] = beta * nt[has_h] / nh[has_h]
    alpha = np.minimum(ratio, 1.0)  # alpha stays 0 where nh == 0
    M = Tp + alpha[:, None] * H
    return M, {"Tp": Tp, "TC": TC, "TN": TN, "Zc": Zc, "Zn": Zn, "Gc": Gc,
               "Gn": Gn, "Pc": Pc, "Pn": Pn, "H": H, "nt": nt, "nh": nh,
               "ratio": ratio, "alpha": alpha, "has_h": has_h, "beta": beta}


def combine(model, text, cat, num):
    """The fused representation m for one instance or a batch."""
    T, C, N, single = _check_inputs(model, text, cat, num)
    M, _ = _combine_forward(model, T, C, N)
    return M[0] if single else M


def _head_forward(model, M):
    P = model.params
    Z1 = M @ P["W1"].T + P["b1"]
    R = np.maximum(Z1, 0.0)
    z = R @ P["w2"] + P["b2"]
    return Z1, R, z


def predict_proba(model, text, cat, num):
    T, C, N, single = _check_inputs(model, text, cat, num)
    M, _ = _combine_forward(model, T, C, N)
    _, _, z = _head_forward(model, M)
    p = _sigmoid(z)
    return float(p[0]) if single else p


def predict(model, text, cat, num, threshold=None):
    """Hard 0/1 class at the model's (or an explicit) threshold."""
    threshold = model.hyper["threshold"] if threshold is None else threshold
    p = predict_proba(model, text, cat, num)
    if isinstance(p, float):
        return 1 if p >= threshold else 0
    return (p >= threshold).astype(int)


def _bce(z, y):
    # numerically stable mean of -[y log p + (1-y) log(1-p)], p = sigmoid(z)
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per.mean())


def loss(model, text, cat, num, labels):
    T, C, N, _ = _check_inputs(model, text, cat, num)
    y = np.asarray(labels, dtype=np.float64)
    M, _ = _combine_forward(model, T, C, N)
    _, _, z = _head_forward(model, M)
    return _bce(z, y)


def loss_and_grads(model, text, cat, num, labels):
    """Mean BCE and its exact gradient for every parameter tensor."""
    T, C, N, _ = _check_inputs(model, text, cat, num)
    y = np.asarray(labels, dtype=np.float64)
    P = model.params
    M, cache = _combine_forward(model, T, C, N)
    Z1, R, z = _head_forward(model, M)
    value = _bce(z, y)

    B = len(y)
    dz = (_sigmoid(z) - y) / B
    grads = {
        "w2": R.T @ dz,
        "b2": np.asarray(dz.sum()),
    }
    dR = np.outer(dz, P["w2"])
    dZ1 = dR * (Z1 > 0.0)
    grads["W1"] = dZ1.T @ M
    grads["b1"] = dZ1.sum(axis=0)
    dM = dZ1 @ P["W1"]

    method = model.combine_method
    if method == "unimodal_concat":
        return value, grads

    if method == "attention_sum":
        Kt, Kc, Kn = cache["Kt"], cache["Kc"], cache["Kn"]
        Q, A, scale = cache["Q"], cache["A"], cache["scale"]
        dA = np.stack([(dM * Kt).sum(axis=1), (dM * Kc).sum(axis=1),
                       (dM * Kn).sum(axis=1)], axis=1)
        inner = (A * dA).sum(axis=1, keepdims=True)
        dS = A * (dA - inner)
        dQ = scale * (dS[:, 0:1] * Kt + dS[:, 1:2] * Kc + dS[:, 2:3] * Kn)
        dKt = A[:, 0:1] * dM + scale * dS[:, 0:1] * Q
        dKc = A[:, 1:2] * dM + scale * dS[:, 1:2] * Q
        dKn = A[:, 2:3] * dM + scale * dS[:, 2:3] * Q
        grads["W_t"] = dKt.T @ T
        grads["W_c"] = dKc.T @ C
        grads["W_n"] = dKn.T @ N
        grads["W_q"] = dQ.T @ T
        return value, grads

    # gating_sum
    Tp, H = cache["Tp"], cache["H"]
    nt, nh = cache["nt"], cache["nh"]
    alpha, ratio, has_h, beta = cache["alpha"], cache["ratio"], cache["has_h"], cache["beta"]
    c = (dM * H).sum(axis=1)
    dTp = dM.copy()
    dH = alpha[:, None] * dM
    # alpha depends on the two norms only where the clamp is inactive
    active = has_h & (ratio < 1.0)
    t_active = active & (nt > 0.0)
    coef_t = np.zeros(len(c), dtype=np.float64)
    coef_t[t_active] = beta * c[t_active] / (nh[t_active] * nt[t_active])
    dTp += coef_t[:, None] * Tp
    coef_h = np.zeros(len(c), dtype=np.float64)
    coef_h[active] = -beta * nt[active] * c[active] / nh[active] ** 3
    dH += coef_h[:, None] * H

    Gc, Gn, Pc, Pn = cache["Gc"], cache["Gn"], cache["Pc"], cache["Pn"]
    Zc, Zn, TC, TN = cache["Zc"], cache["Zn"], cache["TC"], cache["TN"]
    dGc = dH * Pc
    dGn = dH * Pn
    dZc = dGc * (Zc > 0.0)
    dZn = dGn * (Zn > 0.0)
    grads["W_gc"] = dZc.T @ TC
    grads["b_gc"] = dZc.sum(axis=0)
    grads["W_gn"] = dZn.T @ TN
    grads["b_gn"] = dZn.sum(axis=0)
    grads["W_c"] = (dH * Gc).T @ C
    grads["W_n"] = (dH * Gn).T @ N
    grads["W_t"] = dTp.T @ T
    return value, grads


def _validate_set(model, batch, what):
    text, cat, num, labels = batch
    T, C, N, _ = _check_inputs(model, text, cat, num)
    y = np.asarray(labels, dtype=np.float64)
    if len(y) != len(T):
        raise DimMismatch("%s labels disagree with batch size" % what)
    if len(y) == 0:
        raise ValueError("%s split is empty" % what)
    return T, C, N, y


def train(model, train_set, val_set):
    """Adam training with per-epoch validation; keeps the best-F1 epoch.

    Sets are (text, cat, num, labels) arrays. The whole loop is driven by
    one seeded generator, so a fixed seed gives bit-identical parameters
    and report across runs.
    """
    Tt, Ct, Nt, yt = _validate_set(model, train_set, "train")
    Tv, Cv, Nv, yv = _validate_set(model, val_set, "validation")
    hyper = model.hyper
    lr, batch, threshold = hyper["lr"], hyper["batch"], hyper["threshold"]

    rng = np.random.RandomState(hyper["seed"])
    adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0
    best_f1 = -1.0
    best_params = None
    best_epoch = -1
    train_losses = []
    val_f1s = []
    n = len(yt)

    for epoch in range(hyper["epochs"]):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            value, grads = loss_and_grads(model, Tt[idx], Ct[idx], Nt[idx], yt[idx])
            if not math.isfinite(value):
                raise NonFiniteLoss("training loss diverged", epoch=epoch)
            step += 1
            for name, g in grads.items():
                adam_m[name] = ADAM_BETA1 * adam_m[name] + (1.0 - ADAM_BETA1) * g
                adam_v[name] = ADAM_BETA2 * adam_v[name] + (1.0 - ADAM_BETA2) * g * g
                m_hat = adam_m[name] / (1.0 - ADAM_BETA1 ** step)
                v_hat = adam_v[name] / (1.0 - ADAM_BETA2 ** step)
                model.params[name] = model.params[name] - lr * m_hat / (
                    np.sqrt(v_hat) + ADAM_EPS
                )
        epoch_loss = loss(model, Tt, Ct, Nt, yt)
        if not math.isfinite(epoch_loss):
            raise NonFiniteLoss("training loss diverged", epoch=epoch)
        pv = predict_proba(model, Tv, Cv, Nv)
        preds = [1 if p >= threshold else 0 for p in np.atleast_1d(pv)]
        f1 = f1_score(preds, [int(v) for v in yv])
        train_losses.append(float(epoch_loss))
        val_f1s.append(float(f1))
        if f1 > best_f1:
            best_f1 = f1
            best_params = {k: v.copy() for k, v in model.params.items()}
            best_epoch = epoch

    if best_params is not None:
        model.params = best_params
    return TrainReport(
        train_loss=tuple(train_losses),
        val_f1=tuple(val_f1s),
        best_epoch=best_epoch,
    )


def save_model(model, path):
    payload = {
        "format_version": FORMAT_VERSION,
        "combine_method": model.combine_method,
        "dims": model.dims,
        "hyperparameters": model.hyper,
        "parameters": {
            name: {"shape": list(arr.shape),
                   "data": [float(x) for x in arr.ravel()]}
            for name, arr in model.params.items()
        },
    }
    write_json(path, payload)


def load_model(path):
    obj = read_json(path)
    if not isinstance(obj, dict) or "format_version" not in obj:
        raise CorruptFile("%s: not a model file" % path)
    if obj["format_version"] != FORMAT_VERSION:
        raise VersionMismatch(
            "model format %s, supported %d" % (obj["format_version"], FORMAT_VERSION)
        )
    try:
        dims = {k: int(v) for k, v in obj["dims"].items()}
        hyper = obj["hyperparameters"]
        combine_method = obj["combine_method"]
        params = {}
        for name, blob in obj["parameters"].items():
            arr = np.array(blob["data"], dtype=np.float64).reshape(blob["shape"])
            params[name] = arr
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile("%s: %s" % (path, exc)) from exc
    if combine_method not in COMBINE_METHODS:
        raise CorruptFile("%s: unknown combine method %r" % (path, combine_method))
    expected = {name for name, _ in _param_specs(combine_method, dims)}
    if set(params) != expected:
        raise CorruptFile("%s: parameter set mismatch" % path)
    return FusionModel(combine_method=combine_method, dims=dims, hyper=hyper,
                       params=params)
