"""MILP-compatible surrogates: ReLU networks and linear regression.

Networks are trained from scratch (full-batch Adam on MSE, inputs and
targets standardized internally with the affine scaling folded back into the
first and last layers, so the stored network maps raw kg to raw kg). A
trained network embeds into a `MilpModel` as exact linear constraints with
one binary per ReLU whose pre-activation interval straddles zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .milp_ir import MilpModel


class TrainingDivergence(RuntimeError):
    """Loss became non-finite during training."""


class DegenerateDataError(ValueError):
    """Training data carries no usable signal (all inputs identical)."""


class RankDeficiencyError(ValueError):
    """Regression design matrix is rank deficient."""


@dataclass
class TrainConfig:
    hidden_layers: int = 1
    hidden_neurons: int = 10
    max_iter: int = 1000
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.hidden_layers < 1 or self.hidden_neurons < 1 or self.max_iter < 1:
            raise ValueError("TrainConfig sizes must be positive")
        if self.learning_rate <= 0:
            raise ValueError("TrainConfig learning_rate must be positive")


@dataclass
class ReluNetwork:
    """Affine + ReLU stack in raw units; identity output activation.

    `weights[s]` has shape (layer_sizes[s+1], layer_sizes[s]). When
    `clamp_output` is set the modeled function is max(0, network output).
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_box: tuple[tuple[float, float], ...]
    clamp_output: bool = True
    seed: int | None = None
    train_r2: float = float("nan")
    test_r2: float = float("nan")

    def __post_init__(self):
        for s, W in enumerate(self.weights):
            want = (self.layer_sizes[s + 1], self.layer_sizes[s])
            if W.shape != want:
                raise ValueError(f"layer {s} weight shape {W.shape} != {want}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(self.biases[s]))):
                raise ValueError(f"layer {s} has non-finite parameters")


@dataclass
class NeuronBounds:
    """Sound pre-activation intervals per layer (last entry = output layer)."""

    pre_lo: list[np.ndarray]
    pre_hi: list[np.ndarray]


@dataclass
class LinearSurrogate:
    beta: np.ndarray
    intercept: float

    def predict(self, x):
        return np.asarray(x, dtype=float) @ self.beta + self.intercept if np.ndim(x) == 2 \
            else float(np.dot(np.atleast_1d(np.asarray(x, dtype=float)), self.beta) + self.intercept)


@dataclass
class EmbeddingInfo:
    omega_ids: list[int] = field(default_factory=list)
    y_ids: list[int] = field(default_factory=list)
    binary_ids: list[int] = field(default_factory=list)
    raw_output_id: int | None = None


def forward(net: ReluNetwork, x):
    """Evaluate the network; scalar in, scalar out (or 1-d array elementwise
    for single-input networks)."""
    scalar = np.ndim(x) == 0
    a = np.atleast_1d(np.asarray(x, dtype=float))
    if net.layer_sizes[0] == 1:
        a = a.reshape(-1, 1)
    else:
        a = a.reshape(-1, net.layer_sizes[0])
    if a.shape[1] != net.layer_sizes[0]:
        raise ValueError(f"input dimension {a.shape[1]} != {net.layer_sizes[0]}")
    for s, (W, b) in enumerate(zip(net.weights, net.biases)):
        a = a @ W.T + b
        if s < len(net.weights) - 1:
            a = np.maximum(a, 0.0)
    if net.clamp_output:
        a = np.maximum(a, 0.0)
    out = a[:, 0] if net.layer_sizes[-1] == 1 else a
    return float(out[0]) if scalar else out


def _adam_loop(Ws, bs, Xs, Ys, cfg: TrainConfig):
    """Full-batch Adam updates in place for cfg.max_iter iterations."""
    mW = [np.zeros_like(W) for W in Ws]
    vW = [np.zeros_like(W) for W in Ws]
    mb = [np.zeros_like(b) for b in bs]
    vb = [np.zeros_like(b) for b in bs]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    for it in range(1, cfg.max_iter + 1):
        loss, gWs, gbs = _mse_and_grads(Ws, bs, Xs, Ys)
        if not math.isfinite(loss):
            raise TrainingDivergence(f"loss non-finite at iteration {it}")
        c1 = 1.0 - beta1 ** it
        c2 = 1.0 - beta2 ** it
        for s in range(len(Ws)):
            mW[s] = beta1 * mW[s] + (1 - beta1) * gWs[s]
            vW[s] = beta2 * vW[s] + (1 - beta2) * gWs[s] ** 2
            Ws[s] -= cfg.learning_rate * (mW[s] / c1) / (np.sqrt(vW[s] / c2) + eps)
            mb[s] = beta1 * mb[s] + (1 - beta1) * gbs[s]
            vb[s] = beta2 * vb[s] + (1 - beta2) * gbs[s] ** 2
            bs[s] -= cfg.learning_rate * (mb[s] / c1) / (np.sqrt(vb[s] / c2) + eps)


def _mse_and_grads(Ws, bs, X, Y):
    """Full-batch MSE loss and its parameter gradients by backpropagation."""
    n = X.shape[0]
    acts = [X]
    pres = []
    a = X
    for s, (W, b) in enumerate(zip(Ws, bs)):
        z = a @ W.T + b
        pres.append(z)
        a = np.maximum(z, 0.0) if s < len(Ws) - 1 else z
        acts.append(a)
    loss = float(np.mean((acts[-1] - Y) ** 2))
    delta = 2.0 * (acts[-1] - Y) / n
    gWs = [None] * len(Ws)
    gbs = [None] * len(Ws)
    for s in range(len(Ws) - 1, -1, -1):
        gWs[s] = delta.T @ acts[s]
        gbs[s] = delta.sum(axis=0)
        if s > 0:
            delta = (delta @ Ws[s]) * (pres[s - 1] > 0)
    return loss, gWs, gbs


def train_relu_network(data, cfg: TrainConfig, target_fn=None) -> ReluNetwork:
    """Fit a ReLU MLP to (input, target) pairs by full-batch Adam.

    Deterministic per cfg.seed: Glorot-uniform init, fixed iteration budget.
    When `target_fn` is given, a held-out R^2 over 100 uniform points in the
    input range is stored on the returned network; training R^2 is always
    stored (NaN when the target is constant, where R^2 is undefined).
    """
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("data must be (n, 2) pairs of (input, target)")
    if not np.all(np.isfinite(arr)):
        raise ValueError("training data must be finite")
    if arr.shape[0] < 2 or np.unique(arr[:, 0]).size < 2:
        raise DegenerateDataError("need at least 2 distinct inputs")
    x, yv = arr[:, :1], arr[:, 1:]

    mx, sx = x.mean(), x.std()
    my, sy = yv.mean(), yv.std()
    sy_eff = sy if sy > 0 else 1.0
    Xs = (x - mx) / sx
    Ys = (yv - my) / sy_eff

    rng = np.random.default_rng(cfg.seed)
    sizes = [1] + [cfg.hidden_neurons] * cfg.hidden_layers + [1]
    Ws, bs = [], []
    for nin, nout in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (nin + nout))
        Ws.append(rng.uniform(-limit, limit, size=(nout, nin)))
        bs.append(np.zeros(nout))

    # overflow inside the loop is not an error by itself: divergence is
    # detected through the finiteness check on the loss
    with np.errstate(over="ignore", invalid="ignore"):
        _adam_loop(Ws, bs, Xs, Ys, cfg)

    # fold the standardization into the first and last affine maps so the
    # stored network works in raw units
    Ws[0] = Ws[0] / sx
    bs[0] = bs[0] - (Ws[0] @ np.array([mx])).ravel()
    Ws[-1] = Ws[-1] * sy_eff
    bs[-1] = bs[-1] * sy_eff + my

    lo, hi = float(x.min()), float(x.max())
    net = ReluNetwork(tuple(sizes), Ws, bs, ((lo, hi),), clamp_output=True,
                      seed=cfg.seed)
    net.train_r2 = _r_squared(forward(net, x[:, 0]), yv[:, 0])
    if target_fn is not None:
        xt = rng.uniform(lo, hi, 100)
        yt = np.array([target_fn(v) for v in xt])
        net.test_r2 = _r_squared(forward(net, xt), yt)
    return net


def _r_squared(pred, truth) -> float:
    sst = float(np.sum((truth - truth.mean()) ** 2))
    if sst == 0.0:
        return float("nan")
    return 1.0 - float(np.sum((pred - truth) ** 2)) / sst


def fit_linear_regression(data) -> LinearSurrogate:
    """Exact least squares; columns of `data` are regressors then target."""
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError("data must be (n, k+1) with the target last")
    X = np.hstack([arr[:, :-1], np.ones((arr.shape[0], 1))])
    yv = arr[:, -1]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficiencyError("design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(X, yv, rcond=None)
    return LinearSurrogate(beta=coef[:-1], intercept=float(coef[-1]))


def propagate_bounds(net: ReluNetwork, input_box=None) -> NeuronBounds:
    """Interval arithmetic through the network: sound pre-activation bounds
    for every neuron (including the output layer) over the input box."""
    box = input_box if input_box is not None else net.input_box
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    if lo.size != net.layer_sizes[0]:
        raise ValueError("input box dimension mismatch")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("input box must be finite")
    if np.any(lo > hi):
        raise ValueError("input box has lo > hi")
    pre_lo, pre_hi = [], []
    for s, (W, b) in enumerate(zip(net.weights, net.biases)):
        Wp, Wm = np.maximum(W, 0.0), np.minimum(W, 0.0)
        zlo = Wp @ lo + Wm @ hi + b
        zhi = Wp @ hi + Wm @ lo + b
        pre_lo.append(zlo)
        pre_hi.append(zhi)
        if s < len(net.weights) - 1:
            lo, hi = np.maximum(zlo, 0.0), np.maximum(zhi, 0.0)
    return NeuronBounds(pre_lo, pre_hi)


def embed_network(model: MilpModel, net: ReluNetwork, bounds: NeuronBounds,
                  input_vars: list[int], output_var: int,
                  tag: str = "relu") -> EmbeddingInfo:
    """Encode the network exactly into the model.

    Per hidden neuron with pre-activation interval [Mlo, Mhi] straddling 0:
    continuous Y in [0, Mhi], binary Z, and rows Y >= w, Y <= w - Mlo*(1-Z),
    Y <= Mhi*Z, where w is an explicit pre-activation variable tied to the
    previous layer by an equality row. Provably inactive neurons (Mhi <= 0)
    are fixed to 0 and provably active ones (Mlo >= 0) become Y = w, both
    without a binary. The output layer is pure affine; when the network
    clamps its output one extra ReLU stage is appended.
    """
    if net.layer_sizes[-1] != 1:
        raise ValueError("embedding supports single-output networks")
    if len(input_vars) != net.layer_sizes[0]:
        raise ValueError("input variable count mismatch")
    for j, vid in enumerate(input_vars):
        v = model.variables[vid]
        blo, bhi = net.input_box[j]
        if not (math.isfinite(v.lower) and math.isfinite(v.upper)):
            raise ValueError(f"input variable {v.name!r} must carry finite bounds")
        if v.lower < blo - 1e-9 or v.upper > bhi + 1e-9:
            raise ValueError(
                f"input variable {v.name!r} bounds [{v.lower}, {v.upper}] exceed "
                f"the surrogate's trained box [{blo}, {bhi}]")

    info = EmbeddingInfo()
    prev = list(input_vars)
    n_hidden_layers = len(net.weights) - 1
    for s in range(n_hidden_layers):
        W, b = net.weights[s], net.biases[s]
        nxt = []
        for k in range(W.shape[0]):
            mlo = float(bounds.pre_lo[s][k])
            mhi = float(bounds.pre_hi[s][k])
            w_id = model.add_variable(f"{tag}:w{s}_{k}", lower=mlo, upper=mhi)
            terms = [(w_id, 1.0)] + [(prev[j], -float(W[k, j]))
                                     for j in range(W.shape[1]) if W[k, j] != 0.0]
            model.add_constraint(terms, "=", float(b[k]), tag=f"{tag}:aff{s}_{k}")
            info.omega_ids.append(w_id)
            if mhi <= 0.0:  # provably inactive
                y_id = model.add_variable(f"{tag}:y{s}_{k}", lower=0.0, upper=0.0)
            elif mlo >= 0.0:  # provably active
                y_id = model.add_variable(f"{tag}:y{s}_{k}", lower=mlo, upper=mhi)
                model.add_constraint([(y_id, 1.0), (w_id, -1.0)], "=", 0.0,
                                     tag=f"{tag}:act{s}_{k}")
            else:
                y_id = model.add_variable(f"{tag}:y{s}_{k}", lower=0.0, upper=mhi)
                z_id = model.add_variable(f"{tag}:z{s}_{k}", "binary")
                model.add_constraint([(y_id, 1.0), (w_id, -1.0)], ">=", 0.0,
                                     tag=f"{tag}:relu{s}_{k}_a")
                model.add_constraint([(y_id, 1.0), (w_id, -1.0), (z_id, -mlo)],
                                     "<=", -mlo, tag=f"{tag}:relu{s}_{k}_b")
                model.add_constraint([(y_id, 1.0), (z_id, -mhi)], "<=", 0.0,
                                     tag=f"{tag}:relu{s}_{k}_c")
                info.binary_ids.append(z_id)
            info.y_ids.append(y_id)
            nxt.append(y_id)
        prev = nxt

    W, b = net.weights[-1], net.biases[-1]
    out_lo = float(bounds.pre_lo[-1][0])
    out_hi = float(bounds.pre_hi[-1][0])
    out_terms = [(prev[j], -float(W[0, j])) for j in range(W.shape[1]) if W[0, j] != 0.0]
    if not net.clamp_output:
        _tighten(model, output_var, out_lo, out_hi)
        model.add_constraint([(output_var, 1.0)] + out_terms, "=", float(b[0]),
                             tag=f"{tag}:out")
        return info

    raw_id = model.add_variable(f"{tag}:raw_out", lower=out_lo, upper=out_hi)
    model.add_constraint([(raw_id, 1.0)] + out_terms, "=", float(b[0]),
                         tag=f"{tag}:out")
    info.raw_output_id = raw_id
    _tighten(model, output_var, max(0.0, out_lo), max(0.0, out_hi))
    if out_lo >= 0.0:
        model.add_constraint([(output_var, 1.0), (raw_id, -1.0)], "=", 0.0,
                             tag=f"{tag}:clamp")
    elif out_hi <= 0.0:
        _tighten(model, output_var, 0.0, 0.0)
    else:
        zc = model.add_variable(f"{tag}:z_clamp", "binary")
        model.add_constraint([(output_var, 1.0), (raw_id, -1.0)], ">=", 0.0,
                             tag=f"{tag}:clamp_a")
        model.add_constraint([(output_var, 1.0), (raw_id, -1.0), (zc, -out_lo)],
                             "<=", -out_lo, tag=f"{tag}:clamp_b")
        model.add_constraint([(output_var, 1.0), (zc, -out_hi)], "<=", 0.0,
                             tag=f"{tag}:clamp_c")
        info.binary_ids.append(zc)
    return info


def _tighten(model: MilpModel, vid: int, lo: float, hi: float):
    v = model.variables[vid]
    v.lower = max(v.lower, lo)
    v.upper = min(v.upper, hi)
    if v.lower > v.upper:
        raise ValueError(f"variable {v.name!r} bounds emptied by surrogate range "
                         f"[{lo}, {hi}]")


# -- serialization ----------------------------------------------------------

def surrogate_to_dict(net) -> dict:
    if isinstance(net, LinearSurrogate):
        return {"beta": list(map(float, net.beta)), "intercept": net.intercept}
    return {
        "layer_sizes": list(net.layer_sizes),
        "weights": [[float(v) for v in W.ravel()] for W in net.weights],
        "biases": [[float(v) for v in b] for b in net.biases],
        "input_box": [list(b) for b in net.input_box],
        "clamp_output": net.clamp_output,
        "seed": net.seed,
        "train_r2": net.train_r2,
        "test_r2": net.test_r2,
    }


def surrogate_from_dict(doc: dict):
    if "layer_sizes" not in doc:
        return LinearSurrogate(beta=np.asarray(doc["beta"], dtype=float),
                               intercept=float(doc["intercept"]))
    sizes = tuple(int(v) for v in doc["layer_sizes"])
    weights = []
    for s, flat in enumerate(doc["weights"]):
        weights.append(np.asarray(flat, dtype=float).reshape(sizes[s + 1], sizes[s]))
    biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
    return ReluNetwork(
        sizes, weights, biases,
        tuple((float(lo), float(hi)) for lo, hi in doc["input_box"]),
        clamp_output=bool(doc.get("clamp_output", True)),
        seed=doc.get("seed"),
        train_r2=float(doc.get("train_r2", float("nan"))),
        test_r2=float(doc.get("test_r2", float("nan"))),
    )


def save_surrogate(net, path: str):
    with open(path, "w") as fh:
        json.dump(surrogate_to_dict(net), fh, indent=1)


def load_surrogate(path: str):
    with open(path) as fh:
        return surrogate_from_dict(json.load(fh))
