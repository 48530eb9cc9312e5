"""Global attribution engine: exact Shapley values by coalition enumeration,
a kernel-regression approximation, and an expected-gradients path method.

All three methods attribute one value per feature (time collapsed): the
coalition value function masks a feature's column across every time step,
and the gradient method sums each feature's column over time.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InputError, SingularSystemError

MAX_EXACT_FEATURES = 20

_CHUNK_WINDOWS = 4096


@dataclass
class ShapExplanation:
    """Per-feature attribution for one explained window.

    For the exact method, ``base + phi.sum() == fx`` within 1e-6.
    """

    sample_id: str
    method: str  # "exact" | "kernel" | "gradient"
    base: float
    fx: float
    phi: np.ndarray  # (d,)

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "method": self.method,
            "base": self.base,
            "fx": self.fx,
            "phi": [float(v) for v in self.phi],
        }


@dataclass
class GlobalImportance:
    """Mean |phi| per feature with the induced descending ranking."""

    values: np.ndarray  # (d,)
    order: list[int]  # feature indices, most important first
    method: str

    def to_dict(self) -> dict:
        return {
            "values": [float(v) for v in self.values],
            "order": [int(i) for i in self.order],
            "method": self.method,
        }


def subseed(seed: int, index: int) -> int:
    """Stable per-sample sub-seed derived from (base seed, sample index)."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def sample_background(train_windows: np.ndarray, size: int, seed: int) -> np.ndarray:
    """Uniformly sample reference windows from the training set."""
    train_windows = np.asarray(train_windows, dtype=np.float64)
    n = train_windows.shape[0]
    if n == 0:
        raise InputError("cannot sample a background from an empty training set")
    k = min(int(size), n)
    if k < 1:
        raise InputError("background size must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB6]))
    idx = np.sort(rng.choice(n, size=k, replace=False))
    return train_windows[idx]


def _coalition_values(model, sample, background, masks: np.ndarray) -> np.ndarray:
    """Model output averaged over the background for each coalition mask.

    ``masks`` is (m, d) boolean; True columns are taken from the sample
    (across all time steps), the rest from each background window.
    """
    sample = np.asarray(sample, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    B = background.shape[0]
    m = masks.shape[0]
    out = np.empty(m)
    chunk = max(1, _CHUNK_WINDOWS // B)
    for lo in range(0, m, chunk):
        mk = masks[lo : lo + chunk]  # (mc, d)
        mixed = np.where(
            mk[:, None, None, :], sample[None, None, :, :], background[None, :, :, :]
        )  # (mc, B, T, d)
        mc = mk.shape[0]
        probs = model.predict_proba(mixed.reshape(mc * B, *sample.shape))
        out[lo : lo + mc] = probs.reshape(mc, B).mean(axis=1)
    return out


def coalition_value(model, sample, background, subset) -> float:
    """Value of one feature subset (columns kept from the sample)."""
    d = np.asarray(sample).shape[1]
    mask = np.zeros((1, d), dtype=bool)
    for j in subset:
        if not 0 <= int(j) < d:
            raise InputError(f"feature index {j} outside 0..{d - 1}")
        mask[0, int(j)] = True
    return float(_coalition_values(model, sample, background, mask)[0])


def _all_masks(d: int) -> tuple[np.ndarray, np.ndarray]:
    ints = np.arange(2**d, dtype=np.int64)
    bits = (ints[:, None] >> np.arange(d)[None, :]) & 1
    return ints, bits.astype(bool)


def exact_shapley(model, sample, background, sample_id: str = "") -> ShapExplanation:
    """Exact Shapley attribution by full coalition enumeration.

    phi_i = sum over S not containing i of
            |S|! (d-1-|S|)! / d! * (v(S + {i}) - v(S))

    Efficiency (base + sum phi = fx) holds by construction.
    """
    sample = np.asarray(sample, dtype=np.float64)
    d = sample.shape[1]
    if d > MAX_EXACT_FEATURES:
        raise InputError(
            f"exact enumeration is guarded at {MAX_EXACT_FEATURES} features "
            f"(got {d}); use kernel_shap instead"
        )
    ints, masks = _all_masks(d)
    values = _coalition_values(model, sample, background, masks)
    pop = masks.sum(axis=1)

    fact = [math.factorial(k) for k in range(d + 1)]
    w = np.array([fact[s] * fact[d - 1 - s] / fact[d] for s in range(d)])

    phi = np.empty(d)
    for i in range(d):
        without = (ints >> i) & 1 == 0
        m = ints[without]
        phi[i] = float(np.sum(w[pop[without]] * (values[m | (1 << i)] - values[m])))

    return ShapExplanation(
        sample_id=sample_id,
        method="exact",
        base=float(values[0]),
        fx=float(values[-1]),
        phi=phi,
    )


def _kernel_weight(d: int, size: np.ndarray) -> np.ndarray:
    comb = np.array([math.comb(d, int(s)) for s in size], dtype=np.float64)
    return (d - 1) / (comb * size * (d - size))


def kernel_shap(
    model, sample, background, n_coalitions: int, seed: int, sample_id: str = ""
) -> ShapExplanation:
    """Shapley approximation via weighted least squares on binary coalitions.

    The efficiency constraint (sum phi = fx - base) is enforced by
    eliminating the last feature's coefficient. When ``n_coalitions``
    covers all 2^d - 2 non-trivial coalitions the full enumeration is used
    with exact Shapley-kernel weights, which reproduces the exact method.
    """
    sample = np.asarray(sample, dtype=np.float64)
    d = sample.shape[1]
    if n_coalitions < d + 2:
        raise InputError(f"n_coalitions must be >= d + 2 = {d + 2}, got {n_coalitions}")

    n_nontrivial = 2**d - 2
    if n_coalitions >= n_nontrivial:
        ints, masks = _all_masks(d)
        keep = (ints != 0) & (ints != 2**d - 1)
        masks = masks[keep]
        weights = _kernel_weight(d, masks.sum(axis=1).astype(np.float64))
    else:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5A]))
        sizes = np.arange(1, d)
        size_mass = (d - 1) / (sizes * (d - sizes)) * np.array(
            [math.comb(d, int(s)) for s in sizes], dtype=np.float64
        )
        size_p = size_mass / size_mass.sum()
        counts: dict[int, int] = {}
        drawn_sizes = rng.choice(sizes, size=n_coalitions, p=size_p)
        for s in drawn_sizes:
            members = rng.choice(d, size=int(s), replace=False)
            key = int(np.sum(1 << members))
            counts[key] = counts.get(key, 0) + 1
        keys = sorted(counts)
        masks = np.zeros((len(keys), d), dtype=bool)
        for row, key in enumerate(keys):
            for j in range(d):
                masks[row, j] = bool((key >> j) & 1)
        weights = np.array([counts[k] for k in keys], dtype=np.float64)

    values = _coalition_values(model, sample, background, masks)
    base = float(model.predict_proba(np.asarray(background, dtype=np.float64)).mean())
    fx = float(model.predict_proba(sample[None, :, :])[0])

    Z = masks.astype(np.float64)
    y = values - base - Z[:, -1] * (fx - base)
    X = Z[:, :-1] - Z[:, -1:]
    try:
        beta = numerics.weighted_least_squares(X, y, weights)
    except (SingularSystemError, ValueError) as exc:
        raise SingularSystemError(
            f"kernel regression is singular ({exc}); retry with a larger n_coalitions"
        ) from None
    phi = np.append(beta, (fx - base) - beta.sum())

    return ShapExplanation(
        sample_id=sample_id, method="kernel", base=base, fx=fx, phi=phi
    )


def gradient_shap(
    model, sample, background, n_steps: int, seed: int, sample_id: str = ""
) -> ShapExplanation:
    """Expected-gradients attribution along sample-to-background paths.

    For every background window, ``n_steps`` stratified interpolation
    points are drawn (one uniform jitter per stratum); the input gradient
    at each point is weighted by (sample - background) and averaged. The
    per-cell attribution is then summed over time steps to give one value
    per feature.
    """
    if n_steps < 1:
        raise InputError("n_steps must be >= 1")
    sample = np.asarray(sample, dtype=np.float64)
    background = np.asarray(background, dtype=np.float64)
    B = background.shape[0]
    T, d = sample.shape
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6D]))
    jitter = rng.random(size=(B, n_steps))
    alphas = (np.arange(n_steps)[None, :] + jitter) / n_steps  # (B, K) in (0, 1)

    diff = sample[None, :, :] - background  # (B, T, d)
    points = background[:, None, :, :] + alphas[:, :, None, None] * diff[:, None, :, :]
    grads = model.input_gradient_batch(points.reshape(B * n_steps, T, d))
    contrib = diff[:, None, :, :] * grads.reshape(B, n_steps, T, d)
    per_cell = contrib.mean(axis=(0, 1))  # (T, d)
    phi = per_cell.sum(axis=0)

    base = float(model.predict_proba(background).mean())
    fx = float(model.predict_proba(sample[None, :, :])[0])
    return ShapExplanation(
        sample_id=sample_id, method="gradient", base=base, fx=fx, phi=phi
    )


def base_value(model, windows: np.ndarray) -> float:
    """Mean model output over a set of (training) windows."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.shape[0] == 0:
        raise InputError("base value needs a nonempty window set")
    return float(model.predict_proba(windows).mean())


def explain_set(
    model,
    windows: np.ndarray,
    background: np.ndarray,
    method: str,
    seed: int,
    sample_ids: list[str] | None = None,
    n_coalitions: int = 2048,
    n_steps: int = 16,
    threads: int = 1,
) -> list[ShapExplanation]:
    """Explain every window with the chosen method.

    Each window's stochastic sub-seed derives from (seed, window index),
    so results are independent of execution order and thread count.
    """
    windows = np.asarray(windows, dtype=np.float64)
    n = windows.shape[0]
    ids = sample_ids if sample_ids is not None else [str(i) for i in range(n)]
    if len(ids) != n:
        raise InputError("sample_ids length does not match the window count")

    def one(i: int) -> ShapExplanation:
        w = windows[i]
        if method == "exact":
            return exact_shapley(model, w, background, sample_id=ids[i])
        if method == "kernel":
            return kernel_shap(
                model, w, background, n_coalitions, subseed(seed, i), sample_id=ids[i]
            )
        if method == "gradient":
            return gradient_shap(
                model, w, background, n_steps, subseed(seed, i), sample_id=ids[i]
            )
        raise InputError(f"unknown method {method!r}; expected exact, kernel, gradient")

    if threads > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(n)))
    return [one(i) for i in range(n)]


def global_importance(explanations: list[ShapExplanation]) -> GlobalImportance:
    """Mean |phi| per feature, ranked descending (ties by catalog order)."""
    if not explanations:
        raise InputError("need at least one explanation")
    methods = {e.method for e in explanations}
    if len(methods) > 1:
        raise InputError(f"mixed explanation methods: {sorted(methods)}")
    phis = np.stack([e.phi for e in explanations])
    values = np.abs(phis).mean(axis=0)
    order = sorted(range(values.size), key=lambda j: (-values[j], j))
    return GlobalImportance(values=values, order=order, method=explanations[0].method)


def decision_path(
    explanations: list[ShapExplanation],
    importance: GlobalImportance,
    base: float,
) -> tuple[np.ndarray, list[int]]:
    """Cumulative attribution series per sample, least important first.

    Returns (paths, bottom_up) where ``paths[i]`` has d+1 values starting
    at the base and ``bottom_up`` lists the feature indices in the order
    they are added (least important at the bottom of the plot).
    """
    d = explanations[0].phi.size if explanations else 0
    if sorted(importance.order) != list(range(d)):
        raise InputError("importance ranking must cover every feature exactly once")
    bottom_up = list(reversed(importance.order))
    paths = np.empty((len(explanations), d + 1))
    for i, exp in enumerate(explanations):
        paths[i, 0] = base
        paths[i, 1:] = base + np.cumsum(exp.phi[bottom_up])
    return paths, bottom_up
