"""From-scratch recurrent forecaster.

GRU and LSTM cells with hand-derived backpropagation through time, a
stacked-layer architecture (recurrent layers feeding a tanh dense layer
of 16 units and a linear output unit), gradient clipping, Adam, and a
seeded, fully reproducible training loop. No autodiff framework: the
gradients are closed-form for this fixed architecture and are verified
against central finite differences in the test suite.

Cell equations (sigmoid s, elementwise *):

GRU    z = s(Wz x + Uz h + bz)
       r = s(Wr x + Ur h + br)
       hc = tanh(Wh x + Uh (r*h) + bh)
       h' = (1 - z)*h + z*hc

LSTM   i, f, o = s(W x + U h + b)   (per gate)
       g  = tanh(Wg x + Ug h + bg)
       c' = f*c + i*g
       h' = o*tanh(c')

Parameters are stored per layer as fused matrices W (gates*H, D),
U (gates*H, H) and b (gates*H,) with gate order z,r,candidate for GRU
and i,f,o,g for LSTM.
"""
from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError
from .features import Dataset, FeatureWindow, WindowScaler

__all__ = [
    "ModelConfig",
    "TrainConfig",
    "TrainedModel",
    "AdamState",
    "init_params",
    "gru_cell_forward",
    "lstm_cell_forward",
    "model_forward",
    "compute_gradients",
    "clip_gradients",
    "adam_step",
    "train",
    "predict",
    "save_model",
    "load_model",
]

_GATES = {"gru": 3, "lstm": 4}


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class ModelConfig:
    """Architecture: cell kind, recurrent widths, dense head, init seed."""

    cell_kind: str
    input_dim: int
    layer_sizes: tuple = (64, 64, 64)
    dense_sizes: tuple = (16, 1)
    seed: int = 0

    def __post_init__(self):
        if self.cell_kind not in _GATES:
            raise ValueError(f"cell_kind must be 'gru' or 'lstm', got {self.cell_kind!r}")
        object.__setattr__(self, "layer_sizes", tuple(int(w) for w in self.layer_sizes))
        object.__setattr__(self, "dense_sizes", tuple(int(w) for w in self.dense_sizes))
        if self.input_dim < 1 or any(w < 1 for w in self.layer_sizes) or not self.layer_sizes:
            raise ValueError("input_dim and all layer widths must be >= 1")
        if len(self.dense_sizes) != 2 or self.dense_sizes[1] != 1 or self.dense_sizes[0] < 1:
            raise ValueError("dense head is fixed at two layers (width, 1)")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gradient_clip_norm: float = 5.0
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if min(self.learning_rate, self.eps, self.gradient_clip_norm) <= 0:
            raise ValueError("learning_rate, eps and gradient_clip_norm must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


def param_names(config: ModelConfig) -> list[str]:
    names = []
    for layer in range(len(config.layer_sizes)):
        names += [f"rnn{layer}.W", f"rnn{layer}.U", f"rnn{layer}.b"]
    return names + ["dense0.W", "dense0.b", "dense1.W", "dense1.b"]


def init_params(config: ModelConfig) -> dict[str, np.ndarray]:
    """Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.

    Biases start at zero except the LSTM forget gate, which starts at
    1.0 so early training does not erase the cell state.
    """
    rng = np.random.default_rng(config.seed)
    gates = _GATES[config.cell_kind]
    params: dict[str, np.ndarray] = {}
    d_in = config.input_dim
    for layer, width in enumerate(config.layer_sizes):
        bw = 1.0 / np.sqrt(d_in)
        bu = 1.0 / np.sqrt(width)
        params[f"rnn{layer}.W"] = rng.uniform(-bw, bw, size=(gates * width, d_in))
        params[f"rnn{layer}.U"] = rng.uniform(-bu, bu, size=(gates * width, width))
        bias = np.zeros(gates * width)
        if config.cell_kind == "lstm":
            bias[width : 2 * width] = 1.0  # forget gate
        params[f"rnn{layer}.b"] = bias
        d_in = width
    d0 = config.dense_sizes[0]
    b0 = 1.0 / np.sqrt(d_in)
    params["dense0.W"] = rng.uniform(-b0, b0, size=(d0, d_in))
    params["dense0.b"] = np.zeros(d0)
    b1 = 1.0 / np.sqrt(d0)
    params["dense1.W"] = rng.uniform(-b1, b1, size=(1, d0))
    params["dense1.b"] = np.zeros(1)
    return params


def layer_params(params: dict[str, np.ndarray], layer: int) -> dict[str, np.ndarray]:
    """Fused {W, U, b} arrays of one recurrent layer."""
    return {k: params[f"rnn{layer}.{k}"] for k in ("W", "U", "b")}


def gru_cell_forward(x_t, h_prev, lp) -> np.ndarray:
    """One GRU step. ``lp`` holds fused W (3H, D), U (3H, H), b (3H,) in z,r,candidate order.

    Works on single vectors or (batch, dim) arrays. The new state is a
    convex combination of h_prev and the tanh candidate, so its
    magnitude never exceeds max(|h_prev|, 1).
    """
    W, U, b = lp["W"], lp["U"], lp["b"]
    H = U.shape[1]
    ax = x_t @ W.T + b
    hu = h_prev @ U[: 2 * H].T
    z = _sigmoid(ax[..., :H] + hu[..., :H])
    r = _sigmoid(ax[..., H : 2 * H] + hu[..., H:])
    hc = np.tanh(ax[..., 2 * H :] + (r * h_prev) @ U[2 * H :].T)
    return (1.0 - z) * h_prev + z * hc


def lstm_cell_forward(x_t, h_prev, c_prev, lp) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step (no peepholes). Gate order in the fused arrays: i,f,o,g."""
    W, U, b = lp["W"], lp["U"], lp["b"]
    H = U.shape[1]
    a = x_t @ W.T + h_prev @ U.T + b
    i = _sigmoid(a[..., :H])
    f = _sigmoid(a[..., H : 2 * H])
    o = _sigmoid(a[..., 2 * H : 3 * H])
    g = np.tanh(a[..., 3 * H :])
    c_t = f * c_prev + i * g
    return o * np.tanh(c_t), c_t


class _Cache:
    """Forward-pass intermediates of one recurrent layer (arrays shaped (n, B, H))."""

    __slots__ = ("inputs", "h_prev", "z", "r", "hc", "rh", "i", "f", "o", "g", "c_prev", "tc")

    def __init__(self, **kw):
        for k in self.__slots__:
            setattr(self, k, kw.get(k))


def _gru_layer_forward(seq, lp):
    n, B, _ = seq.shape
    W, U, b = lp["W"], lp["U"], lp["b"]
    H = U.shape[1]
    ax = seq.reshape(n * B, -1) @ W.T + b
    ax = ax.reshape(n, B, 3 * H)
    Uzr = U[: 2 * H]
    Uh = U[2 * H :]
    h = np.zeros((B, H))
    hs = np.empty((n, B, H))
    cache = _Cache(
        inputs=seq,
        h_prev=np.empty((n, B, H)),
        z=np.empty((n, B, H)),
        r=np.empty((n, B, H)),
        hc=np.empty((n, B, H)),
        rh=np.empty((n, B, H)),
    )
    for t in range(n):
        hu = h @ Uzr.T
        z = _sigmoid(ax[t, :, :H] + hu[:, :H])
        r = _sigmoid(ax[t, :, H : 2 * H] + hu[:, H:])
        rh = r * h
        hc = np.tanh(ax[t, :, 2 * H :] + rh @ Uh.T)
        cache.h_prev[t] = h
        cache.z[t] = z
        cache.r[t] = r
        cache.hc[t] = hc
        cache.rh[t] = rh
        h = (1.0 - z) * h + z * hc
        hs[t] = h
    return hs, cache


def _gru_layer_backward(d_above, cache, lp, grads, layer):
    n, B, H = d_above.shape
    U = lp["U"]
    W = lp["W"]
    Uzr = U[: 2 * H]
    Uh = U[2 * H :]
    dA = np.empty((n, B, 3 * H))
    dh_next = np.zeros((B, H))
    for t in range(n - 1, -1, -1):
        dh = d_above[t] + dh_next
        z, r, hc, h_prev = cache.z[t], cache.r[t], cache.hc[t], cache.h_prev[t]
        dhc = dh * z
        dz = dh * (hc - h_prev)
        dh_prev = dh * (1.0 - z)
        dah = dhc * (1.0 - hc * hc)
        d_rh = dah @ Uh
        dr = d_rh * h_prev
        dh_prev += d_rh * r
        daz = dz * z * (1.0 - z)
        dar = dr * r * (1.0 - r)
        dA[t, :, :H] = daz
        dA[t, :, H : 2 * H] = dar
        dA[t, :, 2 * H :] = dah
        dh_prev += np.concatenate([daz, dar], axis=1) @ Uzr
        dh_next = dh_prev
    flat = dA.reshape(n * B, 3 * H)
    seq_flat = cache.inputs.reshape(n * B, -1)
    hp_flat = cache.h_prev.reshape(n * B, H)
    rh_flat = cache.rh.reshape(n * B, H)
    grads[f"rnn{layer}.W"] += flat.T @ seq_flat
    gU = grads[f"rnn{layer}.U"]
    gU[: 2 * H] += flat[:, : 2 * H].T @ hp_flat
    gU[2 * H :] += flat[:, 2 * H :].T @ rh_flat
    grads[f"rnn{layer}.b"] += flat.sum(axis=0)
    return (flat @ W).reshape(n, B, -1)


def _lstm_layer_forward(seq, lp):
    n, B, _ = seq.shape
    W, U, b = lp["W"], lp["U"], lp["b"]
    H = U.shape[1]
    ax = seq.reshape(n * B, -1) @ W.T + b
    ax = ax.reshape(n, B, 4 * H)
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    hs = np.empty((n, B, H))
    cache = _Cache(
        inputs=seq,
        h_prev=np.empty((n, B, H)),
        c_prev=np.empty((n, B, H)),
        i=np.empty((n, B, H)),
        f=np.empty((n, B, H)),
        o=np.empty((n, B, H)),
        g=np.empty((n, B, H)),
        tc=np.empty((n, B, H)),
    )
    for t in range(n):
        a = ax[t] + h @ U.T
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        o = _sigmoid(a[:, 2 * H : 3 * H])
        g = np.tanh(a[:, 3 * H :])
        cache.h_prev[t] = h
        cache.c_prev[t] = c
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        cache.i[t] = i
        cache.f[t] = f
        cache.o[t] = o
        cache.g[t] = g
        cache.tc[t] = tc
        hs[t] = h
    return hs, cache


def _lstm_layer_backward(d_above, cache, lp, grads, layer):
    n, B, H = d_above.shape
    U = lp["U"]
    W = lp["W"]
    dA = np.empty((n, B, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(n - 1, -1, -1):
        dh = d_above[t] + dh_next
        i, f, o, g = cache.i[t], cache.f[t], cache.o[t], cache.g[t]
        tc, c_prev = cache.tc[t], cache.c_prev[t]
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dc_next = dc * f
        dA[t, :, :H] = di * i * (1.0 - i)
        dA[t, :, H : 2 * H] = df * f * (1.0 - f)
        dA[t, :, 2 * H : 3 * H] = do * o * (1.0 - o)
        dA[t, :, 3 * H :] = dg * (1.0 - g * g)
        dh_next = dA[t] @ U
    flat = dA.reshape(n * B, 4 * H)
    grads[f"rnn{layer}.W"] += flat.T @ cache.inputs.reshape(n * B, -1)
    grads[f"rnn{layer}.U"] += flat.T @ cache.h_prev.reshape(n * B, H)
    grads[f"rnn{layer}.b"] += flat.sum(axis=0)
    return (flat @ W).reshape(n, B, -1)


def _forward(X, params, config, want_cache=False):
    """X: (B, rows, n_points) -> scaled predictions (B,), plus caches if requested."""
    B, rows, n = X.shape
    if rows != config.input_dim:
        raise ValueError(f"window has {rows} feature rows, model expects {config.input_dim}")
    seq = np.ascontiguousarray(np.moveaxis(X, 2, 0))  # (n, B, rows)
    layer_fwd = _gru_layer_forward if config.cell_kind == "gru" else _lstm_layer_forward
    caches = []
    for layer in range(len(config.layer_sizes)):
        seq, cache = layer_fwd(seq, layer_params(params, layer))
        caches.append(cache)
    h_last = seq[-1]
    a1 = h_last @ params["dense0.W"].T + params["dense0.b"]
    d1 = np.tanh(a1)
    pred = (d1 @ params["dense1.W"].T + params["dense1.b"])[:, 0]
    if not want_cache:
        return pred
    return pred, (caches, h_last, d1)


def model_forward(window: FeatureWindow | np.ndarray, model: "TrainedModel") -> float:
    """Scaled prediction for a single (already scaled) feature window."""
    matrix = window.matrix if isinstance(window, FeatureWindow) else np.asarray(window)
    return float(_forward(matrix[None, :, :], model.params, model.config)[0])


def compute_gradients(X, y, params, config: ModelConfig):
    """Mean-squared-error loss over the batch and its gradient for every parameter.

    Raises DivergenceError when the loss is non-finite, naming the
    first offending window.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValueError("expected a non-empty batch of shape (B, rows, n_points)")
    B = X.shape[0]
    pred, (caches, h_last, d1) = _forward(X, params, config, want_cache=True)
    resid = pred - y
    loss = float(np.mean(resid * resid))
    if not np.isfinite(loss):
        bad = int(np.flatnonzero(~np.isfinite(resid))[0]) if np.any(~np.isfinite(resid)) else 0
        raise DivergenceError(f"non-finite loss; first bad window index {bad} in batch", batch=bad)

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dpred = (2.0 / B) * resid
    da2 = dpred[:, None]
    grads["dense1.W"] += da2.T @ d1
    grads["dense1.b"] += da2.sum(axis=0)
    dd1 = da2 @ params["dense1.W"]
    da1 = dd1 * (1.0 - d1 * d1)
    grads["dense0.W"] += da1.T @ h_last
    grads["dense0.b"] += da1.sum(axis=0)
    dh_last = da1 @ params["dense0.W"]

    n = X.shape[2]
    top = len(config.layer_sizes) - 1
    d_above = np.zeros((n, B, config.layer_sizes[top]))
    d_above[-1] = dh_last
    layer_bwd = _gru_layer_backward if config.cell_kind == "gru" else _lstm_layer_backward
    for layer in range(top, -1, -1):
        d_above = layer_bwd(d_above, caches[layer], layer_params(params, layer), grads, layer)
    return grads, loss


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float):
    """Rescale the whole gradient set to global L2 norm <= max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params):
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params, grads, state: AdamState, t: int, config: TrainConfig):
    """One Adam update (bias-corrected, step counter t >= 1), gradients pre-clipped."""
    grads, _ = clip_gradients(grads, config.gradient_clip_norm)
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params = {}
    for k, p in params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        mhat = state.m[k] / c1
        vhat = state.v[k] / c2
        new_params[k] = p - config.learning_rate * mhat / (np.sqrt(vhat) + config.eps)
    return new_params, state


@dataclass(frozen=True)
class TrainedModel:
    """Learned parameters plus everything needed to reuse them."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    scaler: WindowScaler | None
    loss_trace: tuple[float, ...] = ()
    train_config: TrainConfig | None = None


def train(train_ds: Dataset, config: TrainConfig, model_config: ModelConfig) -> TrainedModel:
    """Seeded mini-batch training; reproducible to the bit given equal seeds.

    Windows are reshuffled every epoch with a generator seeded by
    ``shuffle_seed``; the last partial batch is kept. The loss trace
    records the window-weighted mean batch loss per epoch. Never
    touches anything but the training split it is given.
    """
    if len(train_ds) == 0:
        raise ValueError("empty training set")
    X, y = train_ds.X, train_ds.y
    params = init_params(model_config)
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(config.shuffle_seed)
    trace = []
    step = 0
    n = len(train_ds)
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            pick = perm[start : start + config.batch_size]
            try:
                grads, loss = compute_gradients(X[pick], y[pick], params, model_config)
            except DivergenceError as exc:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}, batch {start // config.batch_size}: {exc}",
                    epoch=epoch,
                    batch=start // config.batch_size,
                ) from None
            step += 1
            params, state = adam_step(params, grads, state, step, config)
            loss_sum += loss * pick.size
        trace.append(loss_sum / n)
    return TrainedModel(
        config=model_config,
        params=params,
        scaler=train_ds.scaler,
        loss_trace=tuple(trace),
        train_config=config,
    )


def predict(model: TrainedModel, windows) -> np.ndarray:
    """Forecast in MW for scaled windows (a Dataset, array, or FeatureWindow list).

    Applies the forward pass window by window (stateless across
    windows, so permuting inputs permutes outputs) and inverts the
    model's target scaling.
    """
    if isinstance(windows, Dataset):
        X = windows.X
    elif isinstance(windows, np.ndarray):
        X = windows
    else:
        X = np.stack([w.matrix for w in windows])
    if model.scaler is None:
        raise ValueError("model carries no scaler; cannot produce MW predictions")
    preds = np.empty(X.shape[0])
    for start in range(0, X.shape[0], 2048):
        stop = start + 2048
        preds[start:stop] = _forward(X[start:stop], model.params, model.config)
    return np.asarray(model.scaler.inverse_target(preds))


_FORMAT_VERSION = 1


def save_model(path, model: TrainedModel) -> None:
    """Write a versioned, byte-deterministic checkpoint (zip of npy arrays + JSON meta)."""
    meta = {
        "format_version": _FORMAT_VERSION,
        "model_config": {
            "cell_kind": model.config.cell_kind,
            "input_dim": model.config.input_dim,
            "layer_sizes": list(model.config.layer_sizes),
            "dense_sizes": list(model.config.dense_sizes),
            "seed": model.config.seed,
        },
        "train_config": None
        if model.train_config is None
        else {
            "epochs": model.train_config.epochs,
            "batch_size": model.train_config.batch_size,
            "learning_rate": model.train_config.learning_rate,
            "beta1": model.train_config.beta1,
            "beta2": model.train_config.beta2,
            "eps": model.train_config.eps,
            "gradient_clip_norm": model.train_config.gradient_clip_norm,
            "shuffle_seed": model.train_config.shuffle_seed,
        },
        "loss_trace": list(model.loss_trace),
        "scaler": None
        if model.scaler is None
        else {"target_min": model.scaler.target_min, "target_max": model.scaler.target_max},
        "param_names": sorted(model.params),
    }
    entries = {"meta.json": json.dumps(meta, sort_keys=True).encode()}

    def _npy(arr):
        buf = io.BytesIO()
        np.lib.format.write_array(buf, np.ascontiguousarray(arr))
        return buf.getvalue()

    for k, v in model.params.items():
        entries[f"param/{k}.npy"] = _npy(v)
    if model.scaler is not None:
        entries["scaler/row_min.npy"] = _npy(model.scaler.row_min)
        entries["scaler/row_max.npy"] = _npy(model.scaler.row_max)
        entries["scaler/row_scaled.npy"] = _npy(model.scaler.row_scaled)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, entries[name])


def load_model(path) -> TrainedModel:
    with zipfile.ZipFile(path) as zf:
        meta = json.loads(zf.read("meta.json"))
        if meta["format_version"] != _FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['format_version']}")

        def _read(name):
            return np.lib.format.read_array(io.BytesIO(zf.read(name)))

        params = {k: _read(f"param/{k}.npy") for k in meta["param_names"]}
        scaler = None
        if meta["scaler"] is not None:
            scaler = WindowScaler(
                row_min=_read("scaler/row_min.npy"),
                row_max=_read("scaler/row_max.npy"),
                row_scaled=_read("scaler/row_scaled.npy"),
                target_min=meta["scaler"]["target_min"],
                target_max=meta["scaler"]["target_max"],
            )
    mc = ModelConfig(
        cell_kind=meta["model_config"]["cell_kind"],
        input_dim=meta["model_config"]["input_dim"],
        layer_sizes=tuple(meta["model_config"]["layer_sizes"]),
        dense_sizes=tuple(meta["model_config"]["dense_sizes"]),
        seed=meta["model_config"]["seed"],
    )
    tc = None
    if meta["train_config"] is not None:
        tc = TrainConfig(**meta["train_config"])
    return TrainedModel(
        config=mc,
        params=params,
        scaler=scaler,
        loss_trace=tuple(meta["loss_trace"]),
        train_config=tc,
    )
