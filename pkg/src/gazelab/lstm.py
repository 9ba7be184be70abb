"""From-scratch LSTM autoencoder in double precision numpy.

The encoder consumes a window of feature vectors; its final hidden and cell
state seed a decoder that re-emits the window step by step (the encoder
context is also the decoder's input at every step). Training is plain
full-batch gradient descent on mean squared reconstruction error, with
analytic gradients computed by backpropagation through time. Everything is
deterministic given the seed: no dropout, no shuffling, no adaptive state.

Weight layout per layer (``enc``/``dec``) and gate (input, forget, cell,
output): ``w_x`` maps the step input, ``w_h`` the previous hidden state, and
``b`` is the bias. ``out.w``/``out.b`` project decoder hidden states back to
feature space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GazelabError, ValidationError

GATES = ("input", "forget", "cell", "output")
INIT_SCALE = 0.08
FORGET_BIAS = 1.0
MODEL_FORMAT_VERSION = 1


class ShapeError(ValidationError):
    """Array dimensions disagree with the model."""


class TrainingError(GazelabError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


@dataclass(frozen=True)
class Hyperparams:
    hidden_dim: int = 16
    epochs: int = 500
    learning_rate: float = 0.01
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.hidden_dim < 1 or self.epochs < 1:
            raise ValidationError("hidden_dim and epochs must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")


@dataclass
class LstmModel:
    input_dim: int
    hidden_dim: int
    params: dict
    norm_mean: np.ndarray
    norm_std: np.ndarray
    seed: int
    loss_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "gate_order": list(GATES),
            "weights": {k: self.params[k].tolist() for k in sorted(self.params)},
            "normalization": {
                "mean": self.norm_mean.tolist(),
                "std": self.norm_std.tolist(),
            },
            "seed": self.seed,
            "loss_history": list(self.loss_history),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LstmModel":
        if data.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValidationError(f"unsupported model format {data.get('format_version')!r}")
        d, h = data["input_dim"], data["hidden_dim"]
        shapes = param_shapes(d, h)
        params = {}
        for key, shape in shapes.items():
            arr = np.array(data["weights"][key], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"weight {key} has shape {arr.shape}, expected {shape}")
            params[key] = arr
        return cls(
            input_dim=d,
            hidden_dim=h,
            params=params,
            norm_mean=np.array(data["normalization"]["mean"], dtype=np.float64),
            norm_std=np.array(data["normalization"]["std"], dtype=np.float64),
            seed=data["seed"],
            loss_history=list(data["loss_history"]),
        )


def param_shapes(input_dim: int, hidden_dim: int) -> dict:
    shapes = {}
    for layer, in_dim in (("enc", input_dim), ("dec", hidden_dim)):
        for gate in GATES:
            shapes[f"{layer}.w_x.{gate}"] = (hidden_dim, in_dim)
            shapes[f"{layer}.w_h.{gate}"] = (hidden_dim, hidden_dim)
            shapes[f"{layer}.b.{gate}"] = (hidden_dim,)
    shapes["out.w"] = (input_dim, hidden_dim)
    shapes["out.b"] = (input_dim,)
    return shapes


def init_model(
    input_dim: int,
    hidden_dim: int,
    seed: int,
    norm_mean: np.ndarray,
    norm_std: np.ndarray,
) -> LstmModel:
    """Seeded uniform init in [-0.08, 0.08]; forget-gate biases start at 1."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for key, shape in sorted(param_shapes(input_dim, hidden_dim).items()):
        params[key] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
    params["enc.b.forget"] = np.full(hidden_dim, FORGET_BIAS)
    params["dec.b.forget"] = np.full(hidden_dim, FORGET_BIAS)
    return LstmModel(
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        params=params,
        norm_mean=np.asarray(norm_mean, dtype=np.float64),
        norm_std=np.asarray(norm_std, dtype=np.float64),
        seed=seed,
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _cell_step(params: dict, layer: str, u, h, c):
    z = {}
    for gate in GATES:
        z[gate] = (
            u @ params[f"{layer}.w_x.{gate}"].T
            + h @ params[f"{layer}.w_h.{gate}"].T
            + params[f"{layer}.b.{gate}"]
        )
    i = _sigmoid(z["input"])
    f = _sigmoid(z["forget"])
    g = np.tanh(z["cell"])
    o = _sigmoid(z["output"])
    c_new = f * c + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    cache = (u, h, c, i, f, g, o, tanh_c)
    return h_new, c_new, cache


def forward(params: dict, x: np.ndarray, hidden_dim: int):
    """Run the autoencoder over a batch ``x`` of shape (N, T, D).

    Returns the reconstruction (N, T, D) plus the step caches needed for
    backpropagation.
    """
    n, t_len, _ = x.shape
    h = np.zeros((n, hidden_dim))
    c = np.zeros((n, hidden_dim))
    enc_caches = []
    for t in range(t_len):
        h, c, cache = _cell_step(params, "enc", x[:, t, :], h, c)
        enc_caches.append(cache)
    context_h, context_c = h, c

    hd, cd = context_h, context_c
    dec_caches = []
    dec_h = []
    for _ in range(t_len):
        hd, cd, cache = _cell_step(params, "dec", context_h, hd, cd)
        dec_caches.append(cache)
        dec_h.append(hd)
    y = np.stack(dec_h, axis=1) @ params["out.w"].T + params["out.b"]
    return y, (enc_caches, dec_caches, dec_h, context_h, context_c)


def reconstruct(model, x: np.ndarray) -> np.ndarray:
    """Reconstruction for a batch or single window; test doubles may supply
    their own ``reconstruct`` method instead of LSTM weights."""
    if hasattr(model, "reconstruct"):
        return model.reconstruct(x)
    squeeze = x.ndim == 2
    batch = x[None] if squeeze else x
    if batch.shape[2] != model.input_dim:
        raise ShapeError(
            f"window feature dim {batch.shape[2]} != model input dim {model.input_dim}"
        )
    y, _ = forward(model.params, batch, model.hidden_dim)
    return y[0] if squeeze else y


def _cell_backward(params, layer, cache, dh, dc_in, grads):
    u, h_prev, c_prev, i, f, g, o, tanh_c = cache
    do = dh * tanh_c
    dc = dh * o * (1.0 - tanh_c * tanh_c) + dc_in
    dz = {
        "input": (dc * g) * i * (1.0 - i),
        "forget": (dc * c_prev) * f * (1.0 - f),
        "cell": (dc * i) * (1.0 - g * g),
        "output": do * o * (1.0 - o),
    }
    du = np.zeros_like(u)
    dh_prev = np.zeros_like(h_prev)
    for gate in GATES:
        grads[f"{layer}.w_x.{gate}"] += dz[gate].T @ u
        grads[f"{layer}.w_h.{gate}"] += dz[gate].T @ h_prev
        grads[f"{layer}.b.{gate}"] += dz[gate].sum(axis=0)
        du += dz[gate] @ params[f"{layer}.w_x.{gate}"]
        dh_prev += dz[gate] @ params[f"{layer}.w_h.{gate}"]
    dc_prev = dc * f
    return dh_prev, dc_prev, du


def loss_and_gradients(params: dict, x: np.ndarray, hidden_dim: int):
    """Mean squared reconstruction error and its analytic gradients (BPTT)."""
    n, t_len, _ = x.shape
    y, (enc_caches, dec_caches, dec_h, context_h, context_c) = forward(params, x, hidden_dim)
    diff = y - x
    loss = float(np.mean(diff * diff))
    dy = 2.0 * diff / diff.size

    grads = {k: np.zeros_like(v) for k, v in params.items()}

    # Decoder: output projection feeds each step; recurrence runs backwards.
    dh_next = np.zeros((n, hidden_dim))
    dc_next = np.zeros((n, hidden_dim))
    d_context = np.zeros((n, hidden_dim))
    for t in reversed(range(t_len)):
        grads["out.w"] += dy[:, t, :].T @ dec_h[t]
        grads["out.b"] += dy[:, t, :].sum(axis=0)
        dh = dy[:, t, :] @ params["out.w"] + dh_next
        dh_next, dc_next, du = _cell_backward(params, "dec", dec_caches[t], dh, dc_next, grads)
        d_context += du  # decoder input is the encoder context at every step

    # The decoder's initial state is the encoder's final state.
    dh_enc = d_context + dh_next
    dc_enc = dc_next

    for t in reversed(range(t_len)):
        dh_enc, dc_enc, _ = _cell_backward(params, "enc", enc_caches[t], dh_enc, dc_enc, grads)

    return loss, grads


def numeric_gradients(params: dict, x: np.ndarray, hidden_dim: int, epsilon: float) -> dict:
    """Central finite-difference gradients for every parameter element."""

    def loss_at() -> float:
        y, _ = forward(params, x, hidden_dim)
        diff = y - x
        return float(np.mean(diff * diff))

    grads = {}
    for key in sorted(params):
        arr = params[key]
        grad = np.zeros_like(arr)
        for idx in range(arr.size):
            orig = arr.flat[idx]
            arr.flat[idx] = orig + epsilon
            loss_plus = loss_at()
            arr.flat[idx] = orig - epsilon
            loss_minus = loss_at()
            arr.flat[idx] = orig
            grad.flat[idx] = (loss_plus - loss_minus) / (2.0 * epsilon)
        grads[key] = grad
    return grads


GRADCHECK_DENOM_FLOOR = 1e-6


def max_relative_error(analytic: dict, numeric: dict, denom_floor: float = GRADCHECK_DENOM_FLOOR) -> float:
    """Elementwise |a - n| / max(|a| + |n|, floor), with 0/0 defined as 0.

    The floor matters because central differences cannot resolve gradient
    components below roughly |loss| * eps_machine / (2 * epsilon); components
    smaller than the floor are therefore compared absolutely against it
    (the atol/rtol convention of standard gradient checkers). Real sign or
    formula bugs flip components orders of magnitude above the floor.
    """
    worst = 0.0
    for key in sorted(analytic):
        a = analytic[key]
        n = numeric[key]
        num = np.abs(a - n)
        denom = np.maximum(np.abs(a) + np.abs(n), denom_floor)
        rel = np.where(num == 0.0, 0.0, num / denom)
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    return worst


def gradient_check(
    model: LstmModel,
    window: np.ndarray,
    epsilon: float = 1e-5,
    denom_floor: float = GRADCHECK_DENOM_FLOOR,
) -> float:
    """Compare analytic BPTT gradients against central differences.

    Returns the maximum relative error over every parameter element.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValidationError(f"epsilon must be in [1e-7, 1e-3], got {epsilon}")
    x = window[None] if window.ndim == 2 else window
    _, analytic = loss_and_gradients(model.params, x, model.hidden_dim)
    numeric = numeric_gradients(model.params, x, model.hidden_dim, epsilon)
    return max_relative_error(analytic, numeric, denom_floor)


def global_norm(grads: dict) -> float:
    total = 0.0
    for key in sorted(grads):
        g = grads[key]
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def train(
    x: np.ndarray,
    hyper: Hyperparams,
    norm_mean: np.ndarray,
    norm_std: np.ndarray,
) -> LstmModel:
    """Fit the autoencoder to normalized expert windows ``x`` (N, T, D).

    Full-batch gradient descent with global-norm clipping; bitwise
    reproducible for a fixed seed. Raises on non-finite loss, naming the
    epoch.
    """
    if x.ndim != 3 or x.shape[0] < 1:
        raise ValidationError(f"training input must be (N, T, D) with N >= 1, got {x.shape}")
    model = init_model(x.shape[2], hyper.hidden_dim, hyper.seed, norm_mean, norm_std)
    for epoch in range(hyper.epochs):
        # overflow here is the divergence signal, not an error by itself
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_and_gradients(model.params, x, hyper.hidden_dim)
        if not np.isfinite(loss):
            raise TrainingError(f"training diverged at epoch {epoch}", epoch=epoch)
        norm = global_norm(grads)
        scale = hyper.clip_norm / norm if norm > hyper.clip_norm else 1.0
        for key in sorted(model.params):
            model.params[key] -= hyper.learning_rate * scale * grads[key]
        model.loss_history.append(loss)
    return model


def reconstruction_error(model, window: np.ndarray) -> float:
    """Mean squared error between a window and its reconstruction."""
    y = reconstruct(model, window)
    if y.shape != window.shape:
        raise ShapeError(f"reconstruction shape {y.shape} != window shape {window.shape}")
    diff = y - window
    return float(np.mean(diff * diff))
