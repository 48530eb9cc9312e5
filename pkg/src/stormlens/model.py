"""LSTM-with-attention binary classifier, implemented directly on numpy.

Forward pass, per step t on input x_t (batch, d):

    a    = x_t W_x' + h_{t-1} W_h' + b          gates stacked [i, f, o, g]
    i, f, o = sigmoid(a_i), sigmoid(a_f), sigmoid(a_o);  g = tanh(a_g)
    c_t  = f * c_{t-1} + i * g
    h_t  = o * tanh(c_t)

Additive attention over the hidden states:

    s_t  = tanh(h_t W_att' + b_att)
    e_t  = s_t . v_att
    alpha = softmax(e)                          one weight per time step
    ctx  = sum_t alpha_t h_t
    p    = sigmoid(ctx . w_out + b_out)         probability of class P

The backward pass is exact reverse-mode differentiation of this graph and
serves both training (parameter gradients) and attribution (input
gradients).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError, ModelOverflowError
from .data import SequenceSet

CHECKPOINT_SCHEMA = "stormlens-model/1"

_GATES = ("i", "f", "o", "g")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LstmParams:
    """All trainable arrays. Gate rows of w_x / w_h / b are stacked in the
    order i, f, o, g; each block has ``hidden`` rows."""

    w_x: np.ndarray  # (4H, d)
    w_h: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)
    w_att: np.ndarray  # (H, H)
    b_att: np.ndarray  # (H,)
    v_att: np.ndarray  # (H,)
    w_out: np.ndarray  # (H,)
    b_out: np.ndarray  # (1,)

    @property
    def hidden(self) -> int:
        return self.w_h.shape[1]

    @property
    def input_dim(self) -> int:
        return self.w_x.shape[1]

    def items(self):
        for name in ("w_x", "w_h", "b", "w_att", "b_att", "v_att", "w_out", "b_out"):
            yield name, getattr(self, name)

    def copy(self) -> "LstmParams":
        return LstmParams(**{name: arr.copy() for name, arr in self.items()})

    def check_finite(self) -> None:
        for name, arr in self.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} contains non-finite values")

    def to_dict(self) -> dict:
        return {name: arr.tolist() for name, arr in self.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "LstmParams":
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


def init_params(input_dim: int, hidden: int, seed: int) -> LstmParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases, forget bias +1."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    H = int(hidden)
    d = int(input_dim)
    lim = 1.0 / np.sqrt(H)

    def u(*shape):
        return rng.uniform(-lim, lim, size=shape)

    b = np.zeros(4 * H)
    b[H : 2 * H] = 1.0
    return LstmParams(
        w_x=u(4 * H, d),
        w_h=u(4 * H, H),
        b=b,
        w_att=u(H, H),
        b_att=np.zeros(H),
        v_att=u(H),
        w_out=u(H),
        b_out=np.zeros(1),
    )


@dataclass
class Prediction:
    """Model output for one sequence: positive-class probability and the
    attention distribution over time steps (nonnegative, sums to 1)."""

    probability: float
    attention: np.ndarray  # (T,)


def forward_batch(params: LstmParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
    """Run the network on a batch of sequences.

    Parameters
    ----------
    X : (n, T, d) finite float array.

    Returns
    -------
    (probs (n,), alphas (n, T), cache) where the cache holds every
    intermediate needed by :func:`backward_batch`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError(f"expected (n, T, d) input, got shape {X.shape}")
    n, T, d = X.shape
    if d != params.input_dim:
        raise ValueError(f"input dim {d} does not match model dim {params.input_dim}")
    if T < 1:
        raise ValueError("need at least one time step")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    H = params.hidden

    I = np.empty((T, n, H))
    F = np.empty((T, n, H))
    O = np.empty((T, n, H))
    G = np.empty((T, n, H))
    C = np.empty((T, n, H))
    TC = np.empty((T, n, H))
    Hs = np.empty((T, n, H))

    h = np.zeros((n, H))
    c = np.zeros((n, H))
    for t in range(T):
        a = X[:, t, :] @ params.w_x.T + h @ params.w_h.T + params.b
        I[t] = _sigmoid(a[:, 0 * H : 1 * H])
        F[t] = _sigmoid(a[:, 1 * H : 2 * H])
        O[t] = _sigmoid(a[:, 2 * H : 3 * H])
        G[t] = np.tanh(a[:, 3 * H : 4 * H])
        c = F[t] * c + I[t] * G[t]
        tc = np.tanh(c)
        h = O[t] * tc
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
            raise ModelOverflowError(t)
        C[t] = c
        TC[t] = tc
        Hs[t] = h

    # additive attention over hidden states
    S = np.tanh(Hs @ params.w_att.T + params.b_att)  # (T, n, H)
    e = (S @ params.v_att).T  # (n, T)
    e_shift = e - e.max(axis=1, keepdims=True)
    expe = np.exp(e_shift)
    alpha = expe / expe.sum(axis=1, keepdims=True)  # (n, T)
    ctx = np.einsum("nt,tnh->nh", alpha, Hs)
    z = ctx @ params.w_out + params.b_out[0]
    p = _sigmoid(z)

    cache = {
        "X": X, "I": I, "F": F, "O": O, "G": G, "C": C, "TC": TC, "Hs": Hs,
        "S": S, "alpha": alpha, "ctx": ctx, "z": z, "p": p,
    }
    return p, alpha, cache


def backward_batch(
    params: LstmParams,
    cache: dict,
    dz: np.ndarray,
    want_param_grads: bool = True,
    want_input_grads: bool = False,
) -> tuple[dict | None, np.ndarray | None]:
    """Reverse-mode pass from an upstream gradient on the logit z.

    Returns ``(param_grads, input_grads)``; each is None unless requested.
    Parameter gradients are summed over the batch.
    """
    X = cache["X"]
    n, T, d = X.shape
    H = params.hidden
    I, F, O, G = cache["I"], cache["F"], cache["O"], cache["G"]
    C, TC, Hs, S, alpha = cache["C"], cache["TC"], cache["Hs"], cache["S"], cache["alpha"]

    grads = (
        {name: np.zeros_like(arr) for name, arr in params.items()}
        if want_param_grads
        else None
    )
    dX = np.zeros_like(X) if want_input_grads else None

    dz = np.asarray(dz, dtype=np.float64).reshape(n)
    if want_param_grads:
        grads["w_out"] += cache["ctx"].T @ dz
        grads["b_out"] += np.array([dz.sum()])
    dctx = dz[:, None] * params.w_out[None, :]  # (n, H)

    # attention backward
    dalpha = np.einsum("nh,tnh->nt", dctx, Hs)  # (n, T)
    de = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dS = de.T[:, :, None] * params.v_att[None, None, :]  # (T, n, H)
    dU = dS * (1.0 - S**2)
    if want_param_grads:
        grads["v_att"] += np.einsum("tnh,nt->h", S, de)
        grads["w_att"] += np.einsum("tnh,tnk->hk", dU, Hs)
        grads["b_att"] += dU.sum(axis=(0, 1))
    dH_ext = alpha.T[:, :, None] * dctx[None, :, :] + dU @ params.w_att  # (T, n, H)

    # backprop through time
    dh_next = np.zeros((n, H))
    dc_next = np.zeros((n, H))
    for t in range(T - 1, -1, -1):
        dh = dH_ext[t] + dh_next
        c_prev = C[t - 1] if t > 0 else np.zeros((n, H))
        h_prev = Hs[t - 1] if t > 0 else np.zeros((n, H))
        do = dh * TC[t]
        dc = dc_next + dh * O[t] * (1.0 - TC[t] ** 2)
        di = dc * G[t]
        dg = dc * I[t]
        df = dc * c_prev
        da = np.concatenate(
            [
                di * I[t] * (1.0 - I[t]),
                df * F[t] * (1.0 - F[t]),
                do * O[t] * (1.0 - O[t]),
                dg * (1.0 - G[t] ** 2),
            ],
            axis=1,
        )  # (n, 4H)
        if want_param_grads:
            grads["w_x"] += da.T @ X[:, t, :]
            grads["w_h"] += da.T @ h_prev
            grads["b"] += da.sum(axis=0)
        if want_input_grads:
            dX[:, t, :] = da @ params.w_x
        dh_next = da @ params.w_h
        dc_next = dc * F[t]

    return grads, dX


class LstmModel:
    """Immutable trained classifier exposing prediction and gradient access."""

    def __init__(self, params: LstmParams):
        params.check_finite()
        self.params = params

    @property
    def hidden(self) -> int:
        return self.params.hidden

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Positive-class probabilities for (n, T, d) input."""
        p, _, _ = forward_batch(self.params, X)
        return p

    def forward(self, seq: np.ndarray) -> Prediction:
        """Predict one (T, d) sequence."""
        seq = np.asarray(seq, dtype=np.float64)
        p, alpha, _ = forward_batch(self.params, seq[None, :, :])
        return Prediction(probability=float(p[0]), attention=alpha[0])

    def input_gradient_batch(self, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Exact gradient of the output probability w.r.t. every input cell."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty_like(X)
        for lo in range(0, X.shape[0], chunk):
            part = X[lo : lo + chunk]
            p, _, cache = forward_batch(self.params, part)
            dz = p * (1.0 - p)  # d sigmoid(z) / dz
            _, dX = backward_batch(
                self.params, cache, dz, want_param_grads=False, want_input_grads=True
            )
            out[lo : lo + part.shape[0]] = dX
        return out

    def input_gradient(self, seq: np.ndarray) -> np.ndarray:
        """(T, d) gradient of the probability for a single sequence."""
        seq = np.asarray(seq, dtype=np.float64)
        return self.input_gradient_batch(seq[None, :, :])[0]


@dataclass
class TrainConfig:
    hidden: int = 32
    epochs: int = 30
    batch: int = 32
    learning_rate: float = 1e-3
    lr_decay: float = 0.1  # final epoch runs at lr * lr_decay (linear ramp)
    seed: int = 42
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    class_weighted: bool = True

    def validate(self) -> None:
        if self.hidden < 1:
            raise InputError("hidden size must be >= 1")
        if self.epochs < 0:
            raise InputError("epochs must be >= 0")
        if self.batch < 1:
            raise InputError("batch size must be >= 1")
        if not self.learning_rate > 0:
            raise InputError("learning rate must be positive")
        if self.seed < 0:
            raise InputError("seed must be nonnegative")


def _bce_from_logits(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Numerically stable binary cross-entropy per element."""
    return np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))


def train(
    sequences: SequenceSet, config: TrainConfig | None = None
) -> tuple[LstmModel, list[float]]:
    """Train with Adam on class-weighted binary cross-entropy.

    Deterministic for a fixed seed (single-threaded orchestration). Returns
    the trained model and the mean training loss per epoch.
    """
    config = config or TrainConfig()
    config.validate()
    n = len(sequences)
    if n == 0:
        raise InputError("training set is empty")
    y = sequences.labels.astype(np.float64)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == n:
        raise InputError("training set contains a single class; need both P and N")

    if config.class_weighted:
        w_pos = n / (2.0 * n_pos)
        w_neg = n / (2.0 * (n - n_pos))
    else:
        w_pos = w_neg = 1.0
    sample_w = np.where(y == 1.0, w_pos, w_neg)

    params = init_params(sequences.values.shape[2], config.hidden, config.seed)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))

    m = {name: np.zeros_like(arr) for name, arr in params.items()}
    v = {name: np.zeros_like(arr) for name, arr in params.items()}
    step = 0
    history: list[float] = []

    X = sequences.values
    for epoch in range(config.epochs):
        frac = epoch / max(config.epochs - 1, 1)
        lr = config.learning_rate * (1.0 + (config.lr_decay - 1.0) * frac)
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        weight_sum = 0.0
        for lo in range(0, n, config.batch):
            idx = order[lo : lo + config.batch]
            xb, yb, wb = X[idx], y[idx], sample_w[idx]
            p, _, cache = forward_batch(params, xb)
            z = cache["z"]
            losses = _bce_from_logits(z, yb)
            loss_sum += float((wb * losses).sum())
            weight_sum += float(wb.sum())
            dz = wb * (p - yb) / wb.sum()
            grads, _ = backward_batch(params, cache, dz, want_param_grads=True)
            step += 1
            for name, arr in params.items():
                gr = grads[name]
                m[name] = config.beta1 * m[name] + (1 - config.beta1) * gr
                v[name] = config.beta2 * v[name] + (1 - config.beta2) * gr**2
                mhat = m[name] / (1 - config.beta1**step)
                vhat = v[name] / (1 - config.beta2**step)
                arr -= lr * mhat / (np.sqrt(vhat) + config.eps)
        history.append(loss_sum / weight_sum)

    return LstmModel(params), history


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def tss_from_counts(counts: ConfusionCounts) -> tuple[float, bool]:
    """True Skill Statistic: sensitivity minus false-alarm rate.

    A class with zero denominator contributes 0 to its term; the returned
    flag marks that degeneracy.
    """
    degenerate = False
    pos = counts.tp + counts.fn
    neg = counts.fp + counts.tn
    if pos > 0:
        sens = counts.tp / pos
    else:
        sens = 0.0
        degenerate = True
    if neg > 0:
        far = counts.fp / neg
    else:
        far = 0.0
        degenerate = True
    return sens - far, degenerate


@dataclass
class EvalResult:
    counts: ConfusionCounts
    tss: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "confusion": self.counts.to_dict(),
            "tss": self.tss,
            "degenerate": self.degenerate,
        }


def evaluate(model: LstmModel, test: SequenceSet, threshold: float = 0.5) -> EvalResult:
    """Confusion counts and TSS at the given probability threshold.

    Predictions with probability >= threshold count as positive.
    """
    if len(test) == 0:
        raise InputError("test set is empty")
    p = model.predict_proba(test.values)
    pred = p >= threshold
    actual = test.labels == 1
    counts = ConfusionCounts(
        tp=int(np.sum(pred & actual)),
        fp=int(np.sum(pred & ~actual)),
        tn=int(np.sum(~pred & ~actual)),
        fn=int(np.sum(~pred & actual)),
    )
    tss, degenerate = tss_from_counts(counts)
    return EvalResult(counts=counts, tss=tss, degenerate=degenerate)


def save_checkpoint(path, model: LstmModel, extra: dict | None = None) -> None:
    """Write the model as a single JSON file; floats round-trip exactly."""
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "config": {"input_dim": model.input_dim, "hidden": model.hidden},
        "params": model.params.to_dict(),
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_checkpoint(path) -> tuple[LstmModel, dict]:
    """Load a checkpoint written by :func:`save_checkpoint`."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read model checkpoint {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"model checkpoint {path} is not valid JSON: {exc}") from None
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise InputError(
            f"unsupported checkpoint schema {doc.get('schema')!r} in {path}"
        )
    params = LstmParams.from_dict(doc["params"])
    return LstmModel(params), doc.get("extra", {})
