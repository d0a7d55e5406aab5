"""Single-layer peephole LSTM with an N-way softmax head.

Forward recurrence, per timestep (element-wise products written *):

    i_t = sigmoid(W_i x_t + U_i h_{t-1} + V_i c_{t-1} + b_i)
    f_t = sigmoid(W_f x_t + U_f h_{t-1} + V_f c_{t-1} + b_f)
    c_t = f_t * c_{t-1} + i_t * tanh(W_c x_t + U_c h_{t-1} + b_c)
    o_t = sigmoid(W_o x_t + U_o h_{t-1} + V_o c_t + b_o)      # peeks at the NEW cell
    h_t = o_t * tanh(c_t)

Training minimizes the cross entropy of the softmax over identities, by
default averaged over every timestep of the subsequence. Gradients are exact
analytic backpropagation through time, including every peephole path; a
central finite-difference checker is provided as an independent oracle.
"""

from __future__ import annotations

import struct
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, FormatError

# serialization / init order is fixed for determinism
PARAM_ORDER = (
    "W_i", "U_i", "V_i", "b_i",
    "W_f", "U_f", "V_f", "b_f",
    "W_c", "U_c", "b_c",
    "W_o", "U_o", "V_o", "b_o",
    "W_y", "b_y",
)

MODEL_MAGIC = b"RFANET01"

LstmState = namedtuple("LstmState", ["h", "c"])


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass
class RfaModel:
    input_dim: int
    hidden_dim: int
    num_classes: int
    peephole: str = "full"  # "full" (HxH peephole matrices) or "diagonal"
    params: dict = field(default_factory=dict)

    def param_shapes(self):
        D, H, N = self.input_dim, self.hidden_dim, self.num_classes
        vshape = (H, H) if self.peephole == "full" else (H,)
        shapes = {}
        for g in "ifco":
            shapes[f"W_{g}"] = (H, D)
            shapes[f"U_{g}"] = (H, H)
            if g != "c":
                shapes[f"V_{g}"] = vshape
            shapes[f"b_{g}"] = (H,)
        shapes["W_y"] = (N, H)
        shapes["b_y"] = (N,)
        return shapes

    def zero_grads(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def copy(self):
        return RfaModel(
            self.input_dim,
            self.hidden_dim,
            self.num_classes,
            self.peephole,
            {k: v.copy() for k, v in self.params.items()},
        )


def init_model(input_dim, hidden_dim, num_classes, seed, peephole="full", init_bound=0.01):
    """All weights and biases i.i.d. uniform in [-init_bound, init_bound]."""
    if min(input_dim, hidden_dim, num_classes) < 1:
        raise ConfigurationError("model dimensions must be >= 1")
    if peephole not in ("full", "diagonal"):
        raise ConfigurationError(f"unknown peephole mode {peephole!r}")
    model = RfaModel(input_dim, hidden_dim, num_classes, peephole)
    rng = np.random.default_rng(seed)
    shapes = model.param_shapes()
    for name in PARAM_ORDER:
        model.params[name] = rng.uniform(-init_bound, init_bound, shapes[name])
    return model


def _peep(V, c):
    return V @ c if V.ndim == 2 else V * c


def _peep_t(V, d):
    return V.T @ d if V.ndim == 2 else V * d


def lstm_step(model, x, prev):
    """One recurrence step; returns the new state and the gate record."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise DataError(f"input has shape {x.shape}, expected ({model.input_dim},)")
    p = model.params
    h_prev, c_prev = prev
    i = _sigmoid(p["W_i"] @ x + p["U_i"] @ h_prev + _peep(p["V_i"], c_prev) + p["b_i"])
    f = _sigmoid(p["W_f"] @ x + p["U_f"] @ h_prev + _peep(p["V_f"], c_prev) + p["b_f"])
    g = np.tanh(p["W_c"] @ x + p["U_c"] @ h_prev + p["b_c"])
    c = f * c_prev + i * g
    o = _sigmoid(p["W_o"] @ x + p["U_o"] @ h_prev + _peep(p["V_o"], c) + p["b_o"])
    h = o * np.tanh(c)
    return LstmState(h, c), {"i": i, "f": f, "g": g, "o": o, "c": c, "h": h}


def softmax_predict(model, h):
    """Class probabilities from a hidden vector, max-subtracted for stability."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (model.hidden_dim,):
        raise DataError(f"hidden vector has shape {h.shape}, expected ({model.hidden_dim},)")
    return _softmax(model.params["W_y"] @ h + model.params["b_y"])


@dataclass
class ForwardTrace:
    x: np.ndarray       # (L, D)
    i: np.ndarray       # (L, H)
    f: np.ndarray
    g: np.ndarray       # candidate tanh
    o: np.ndarray
    c: np.ndarray
    h: np.ndarray
    mask: np.ndarray    # dropout keep mask, (L, H)
    hd: np.ndarray      # h after inverted-dropout scaling
    y: np.ndarray       # (L, N)
    losses: np.ndarray  # (L,) per-timestep -log y[label]
    label: int
    dropout_rate: float
    loss_mode: str


def forward(model, xs, label, dropout_rate=0.0, rng=None, loss_mode="per_timestep"):
    """Run the subsequence through the network; returns (trace, loss).

    Inverted dropout is applied to h_t before the softmax: kept units are
    divided by (1 - rate), so inference needs no rescaling. With rate 0 the
    mask is all ones and the pass is deterministic.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != model.input_dim:
        raise DataError(f"subsequence has shape {xs.shape}, expected (L, {model.input_dim})")
    if not 0 <= label < model.num_classes:
        raise DataError(f"label {label} out of range for {model.num_classes} classes")
    if not 0.0 <= dropout_rate < 1.0:
        raise ConfigurationError("dropout rate must be in [0, 1)")
    if dropout_rate > 0.0 and rng is None:
        raise ConfigurationError("dropout requires a random generator")
    if loss_mode not in ("per_timestep", "final"):
        raise ConfigurationError(f"unknown loss mode {loss_mode!r}")

    L, H, N = xs.shape[0], model.hidden_dim, model.num_classes
    rec = {k: np.empty((L, H)) for k in ("i", "f", "g", "o", "c", "h", "mask", "hd")}
    ys = np.empty((L, N))
    losses = np.empty(L)
    keep = 1.0 - dropout_rate
    state = LstmState(np.zeros(H), np.zeros(H))
    for t in range(L):
        state, gates = lstm_step(model, xs[t], state)
        mask = (rng.random(H) >= dropout_rate).astype(np.float64) if dropout_rate > 0 else np.ones(H)
        hd = gates["h"] * mask / keep
        y = softmax_predict(model, hd)
        for k in ("i", "f", "g", "o", "c", "h"):
            rec[k][t] = gates[k]
        rec["mask"][t] = mask
        rec["hd"][t] = hd
        ys[t] = y
        losses[t] = -np.log(y[label])
    loss = losses.mean() if loss_mode == "per_timestep" else losses[-1]
    trace = ForwardTrace(
        xs, rec["i"], rec["f"], rec["g"], rec["o"], rec["c"], rec["h"],
        rec["mask"], rec["hd"], ys, losses, label, dropout_rate, loss_mode,
    )
    return trace, loss


def backward(model, trace, label):
    """Exact gradients of the forward loss w.r.t. every parameter (BPTT)."""
    if trace.h.shape[1] != model.hidden_dim or trace.x.shape[1] != model.input_dim:
        raise DataError("trace dimensions do not match the model")
    if label != trace.label:
        raise DataError("label does not match the traced forward pass")
    p = model.params
    L, H = trace.h.shape
    keep = 1.0 - trace.dropout_rate
    grads = model.zero_grads()
    onehot = np.zeros(model.num_classes)
    onehot[label] = 1.0

    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(L - 1, -1, -1):
        wt = 1.0 / L if trace.loss_mode == "per_timestep" else float(t == L - 1)
        c_prev = trace.c[t - 1] if t > 0 else np.zeros(H)
        h_prev = trace.h[t - 1] if t > 0 else np.zeros(H)
        i, f, g, o, c = trace.i[t], trace.f[t], trace.g[t], trace.o[t], trace.c[t]
        tc = np.tanh(c)

        dz = (trace.y[t] - onehot) * wt
        grads["W_y"] += np.outer(dz, trace.hd[t])
        grads["b_y"] += dz
        dh = p["W_y"].T @ dz * trace.mask[t] / keep + dh_next

        do = dh * tc
        da_o = do * o * (1.0 - o)
        dc = dh * o * (1.0 - tc * tc) + dc_next + _peep_t(p["V_o"], da_o)

        da_i = dc * g * i * (1.0 - i)
        da_f = dc * c_prev * f * (1.0 - f)
        da_g = dc * i * (1.0 - g * g)

        x = trace.x[t]
        for gate, da in (("i", da_i), ("f", da_f), ("c", da_g), ("o", da_o)):
            grads[f"W_{gate}"] += np.outer(da, x)
            grads[f"U_{gate}"] += np.outer(da, h_prev)
            grads[f"b_{gate}"] += da
        if model.peephole == "full":
            grads["V_i"] += np.outer(da_i, c_prev)
            grads["V_f"] += np.outer(da_f, c_prev)
            grads["V_o"] += np.outer(da_o, c)
        else:
            grads["V_i"] += da_i * c_prev
            grads["V_f"] += da_f * c_prev
            grads["V_o"] += da_o * c

        dh_next = (
            p["U_i"].T @ da_i + p["U_f"].T @ da_f + p["U_c"].T @ da_g + p["U_o"].T @ da_o
        )
        dc_next = dc * f + _peep_t(p["V_i"], da_i) + _peep_t(p["V_f"], da_f)
    return grads


def sgd_update(model, grads, lr):
    """In-place theta <- theta - lr * grad for every parameter."""
    for name, g in grads.items():
        model.params[name] -= lr * g
    return model


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    subseq_len: int = 10
    epochs: int = 400
    lr_initial: float = 0.001
    lr_after: float = 0.0001
    lr_switch_epoch: int = 200
    dropout_rate: float = 0.5
    batch_size: int = 16
    seed: int = 0
    init_bound: float = 0.01
    hidden_dim: int = 512
    peephole: str = "full"
    loss_mode: str = "per_timestep"
    clip_norm: float | None = None

    def validate(self):
        if self.subseq_len < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("subseq_len/batch_size must be >= 1, epochs >= 0")
        if self.lr_initial <= 0 or self.lr_after <= 0:
            raise ConfigurationError("learning rates must be > 0")
        if self.lr_switch_epoch > self.epochs:
            raise ConfigurationError("lr_switch_epoch must be <= epochs")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout rate must be in [0, 1)")
        if self.hidden_dim < 1:
            raise ConfigurationError("hidden_dim must be >= 1")
        if self.peephole not in ("full", "diagonal"):
            raise ConfigurationError(f"unknown peephole mode {self.peephole!r}")
        if self.loss_mode not in ("per_timestep", "final"):
            raise ConfigurationError(f"unknown loss mode {self.loss_mode!r}")


@dataclass
class LabeledSequence:
    label: int
    features: np.ndarray  # (T, D)
    name: str = ""


def train(sequences, cfg):
    """SGD over randomly drawn length-L subsequences; one instance per
    sequence per epoch, shuffled and processed in mini-batches with averaged
    gradients. Fully deterministic given cfg.seed.

    Returns (model, per-epoch mean loss history).
    """
    cfg.validate()
    if not sequences:
        raise DataError("empty training set")
    labels = sorted({s.label for s in sequences})
    if len(labels) < 2:
        raise DataError("training requires at least 2 classes")
    num_classes = max(labels) + 1
    L = cfg.subseq_len
    for s in sequences:
        if s.features.shape[0] < L:
            raise DataError(
                f"sequence {s.name or s.label!r} has {s.features.shape[0]} frames; "
                f"need at least {L}"
            )
    input_dim = sequences[0].features.shape[1]

    rng = np.random.default_rng(cfg.seed)
    model = init_model(
        input_dim, cfg.hidden_dim, num_classes, rng.integers(2**63),
        peephole=cfg.peephole, init_bound=cfg.init_bound,
    )
    history = []
    for epoch in range(cfg.epochs):
        instances = []
        for s in sequences:
            start = int(rng.integers(0, s.features.shape[0] - L + 1))
            instances.append((s.features[start : start + L], s.label))
        order = rng.permutation(len(instances))
        lr = cfg.lr_initial if epoch < cfg.lr_switch_epoch else cfg.lr_after
        epoch_losses = []
        for b in range(0, len(order), cfg.batch_size):
            batch = order[b : b + cfg.batch_size]
            acc = model.zero_grads()
            for idx in batch:
                xs, label = instances[idx]
                trace, loss = forward(
                    model, xs, label,
                    dropout_rate=cfg.dropout_rate, rng=rng, loss_mode=cfg.loss_mode,
                )
                g = backward(model, trace, label)
                for name in acc:
                    acc[name] += g[name]
                epoch_losses.append(loss)
            inv = 1.0 / len(batch)
            for name in acc:
                acc[name] *= inv
            if cfg.clip_norm is not None:
                total = np.sqrt(sum(float(np.sum(g * g)) for g in acc.values()))
                if total > cfg.clip_norm:
                    scale = cfg.clip_norm / total
                    for name in acc:
                        acc[name] *= scale
            sgd_update(model, acc, lr)
        history.append(float(np.mean(epoch_losses)))
    return model, history


# ---------------------------------------------------------------------------
# finite-difference gradient oracle
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    dims: tuple
    per_tensor: dict
    max_rel_error: float
    threshold: float = 1e-4

    @property
    def passed(self):
        return self.max_rel_error < self.threshold


def grad_check(
    input_dim=6, hidden_dim=4, num_classes=3, subseq_len=5, seed=0,
    eps=1e-5, peephole="full", loss_mode="per_timestep", corrupt=None,
):
    """Compare analytic BPTT gradients against central finite differences.

    Relative error is |a - n| / max(|a|, |n|, 1e-6); the floor keeps
    finite-difference roundoff (about 1e-11 on an O(1) loss) from inflating
    the ratio on near-zero gradient entries. The worst entry per tensor is
    reported. ``corrupt`` is a test hook mutating the analytic gradients
    before comparison.
    """
    rng = np.random.default_rng(seed)
    model = init_model(
        input_dim, hidden_dim, num_classes, rng.integers(2**63),
        peephole=peephole, init_bound=0.3,
    )
    xs = rng.standard_normal((subseq_len, input_dim)) * 0.8
    label = int(rng.integers(num_classes))

    trace, _ = forward(model, xs, label, loss_mode=loss_mode)
    analytic = backward(model, trace, label)
    if corrupt is not None:
        corrupt(analytic)

    per_tensor = {}
    for name in PARAM_ORDER:
        flat = model.params[name].ravel()
        aflat = analytic[name].ravel()
        worst = 0.0
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            _, lp = forward(model, xs, label, loss_mode=loss_mode)
            flat[k] = orig - eps
            _, lm = forward(model, xs, label, loss_mode=loss_mode)
            flat[k] = orig
            numeric = (lp - lm) / (2.0 * eps)
            rel = abs(aflat[k] - numeric) / max(abs(aflat[k]), abs(numeric), 1e-6)
            worst = max(worst, rel)
        per_tensor[name] = worst
    return GradCheckReport(
        (input_dim, hidden_dim, num_classes, subseq_len),
        per_tensor,
        max(per_tensor.values()),
    )


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------

def save_model(path, model):
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(
            struct.pack(
                "<IIIB",
                model.input_dim,
                model.hidden_dim,
                model.num_classes,
                0 if model.peephole == "full" else 1,
            )
        )
        for name in PARAM_ORDER:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MODEL_MAGIC:
        raise FormatError("bad model magic", 0)
    D, H, N, mode = struct.unpack_from("<IIIB", data, 8)
    if mode not in (0, 1):
        raise FormatError(f"unknown peephole mode byte {mode}", 20)
    model = RfaModel(D, H, N, "full" if mode == 0 else "diagonal")
    shapes = model.param_shapes()
    pos = 21
    for name in PARAM_ORDER:
        shape = shapes[name]
        count = int(np.prod(shape))
        need = count * 8
        if len(data) - pos < need:
            raise FormatError(f"truncated tensor {name}", len(data))
        model.params[name] = (
            np.frombuffer(data, "<f8", count, pos).reshape(shape).astype(np.float64)
        )
        pos += need
    return model
