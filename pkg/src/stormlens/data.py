"""Dataset handling: CSV ingest, z-score normalization, windowing, splits,
and a synthetic generator with planted ground truth.

CSV schema (header order-insensitive, catalog order recommended)::

    ar_id,timestamp,TOTUSJZ,...,MEANGBZ,label

Timestamps are ISO-8601 UTC, labels are the literals ``P`` / ``N``.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from . import numerics
from .errors import InputError, SchemaError
from .features import FEATURE_NAMES, N_FEATURES, feature_index

log = logging.getLogger(__name__)

LABELS = ("P", "N")

_META_COLUMNS = ("ar_id", "timestamp", "label")


@dataclass(frozen=True)
class Sample:
    """One labeled observation of the 12 features for an active region."""

    ar_id: str
    timestamp: datetime
    features: np.ndarray  # (12,) float64, physical units pre-normalization
    label: str  # "P" or "N"


@dataclass
class NormStats:
    """Per-feature z-score statistics fitted on the training split."""

    mean: np.ndarray
    std: np.ndarray  # constant features stored with std 1
    constant: np.ndarray  # bool mask of constant features

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "constant": [bool(v) for v in self.constant],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
            constant=np.asarray(d["constant"], dtype=bool),
        )


@dataclass
class SequenceSet:
    """Windowed per-AR time series ready for the model.

    ``values[i]`` is a (T, 12) window whose label is the final sample's
    label (1 for P, 0 for N). Windows never span AR boundaries.
    """

    values: np.ndarray  # (n, T, 12)
    labels: np.ndarray  # (n,) int8, 1 = positive class
    ar_ids: tuple[str, ...]
    end_times: tuple[datetime, ...]
    window_length: int
    n_dropped: int = 0

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def sample_ids(self) -> list[str]:
        return [sample_id(a, t) for a, t in zip(self.ar_ids, self.end_times)]


def sample_id(ar_id: str, end_time: datetime) -> str:
    """Stable identifier for a window: ``<ar_id>:<end timestamp ISO>``."""
    return f"{ar_id}:{end_time.isoformat()}"


def features_matrix(samples: list[Sample]) -> np.ndarray:
    """Stack sample feature vectors into an (n, 12) matrix."""
    return np.stack([s.features for s in samples]).astype(np.float64)


def _parse_timestamp(text: str, line: int) -> datetime:
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(t)
    except ValueError:
        raise SchemaError(f"line {line}: invalid timestamp {text!r}") from None
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def load_csv(path) -> list[Sample]:
    """Load samples from a CSV file, sorted by (ar_id, timestamp).

    Raises
    ------
    SchemaError
        Missing/unknown/duplicate columns, or malformed cells (reported
        with their line number).
    InputError
        Missing file, bad labels, duplicated (ar_id, timestamp).
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot read data file {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        expected = set(_META_COLUMNS) | set(FEATURE_NAMES)
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise SchemaError(f"duplicate column(s): {', '.join(dupes)}")
        for name in _META_COLUMNS + FEATURE_NAMES:
            if name not in header:
                raise SchemaError(f"missing column: {name}")
        unknown = [h for h in header if h not in expected]
        if unknown:
            raise SchemaError(f"unknown column(s): {', '.join(unknown)}")
        col = {name: header.index(name) for name in header}

        samples: list[Sample] = []
        seen: set[tuple[str, datetime]] = set()
        for line, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"line {line}: expected {len(header)} fields, got {len(row)}"
                )
            ar = row[col["ar_id"]].strip()
            if not ar:
                raise SchemaError(f"line {line}: empty ar_id")
            ts = _parse_timestamp(row[col["timestamp"]], line)
            label = row[col["label"]].strip()
            if label not in LABELS:
                raise InputError(
                    f"line {line}: invalid label {label!r}; allowed labels are "
                    + ", ".join(LABELS)
                )
            feats = np.empty(N_FEATURES, dtype=np.float64)
            for j, name in enumerate(FEATURE_NAMES):
                cell = row[col[name]].strip()
                try:
                    feats[j] = float(cell)
                except ValueError:
                    raise SchemaError(
                        f"line {line}: non-numeric value {cell!r} in column {name}"
                    ) from None
            if not np.all(np.isfinite(feats)):
                raise SchemaError(f"line {line}: non-finite feature value")
            key = (ar, ts)
            if key in seen:
                raise InputError(
                    f"line {line}: duplicate (ar_id, timestamp) = ({ar}, {ts.isoformat()})"
                )
            seen.add(key)
            samples.append(Sample(ar_id=ar, timestamp=ts, features=feats, label=label))

    samples.sort(key=lambda s: (s.ar_id, s.timestamp))
    log.info("loaded %d samples from %s", len(samples), path)
    return samples


def write_csv(path, samples: list[Sample]) -> None:
    """Write samples to CSV in catalog column order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(("ar_id", "timestamp") + FEATURE_NAMES + ("label",)) + "\n")
        for s in samples:
            cells = [s.ar_id, s.timestamp.isoformat()]
            cells.extend(repr(float(v)) for v in s.features)
            cells.append(s.label)
            fh.write(",".join(cells) + "\n")


def windowize(samples: list[Sample], window_length: int) -> SequenceSet:
    """Build one window per sample that has >= T-1 predecessors in its AR.

    Samples whose AR history is too short are dropped; the count is
    recorded on the returned set.
    """
    T = int(window_length)
    if T < 1:
        raise InputError(f"window length must be >= 1, got {T}")
    ordered = sorted(samples, key=lambda s: (s.ar_id, s.timestamp))
    groups: dict[str, list[Sample]] = {}
    for s in ordered:
        groups.setdefault(s.ar_id, []).append(s)

    values, labels, ar_ids, end_times = [], [], [], []
    dropped = 0
    for ar, group in groups.items():
        for a, b in zip(group, group[1:]):
            if b.timestamp <= a.timestamp:
                raise InputError(
                    f"AR {ar}: timestamps not strictly increasing at {b.timestamp.isoformat()}"
                )
        if len(group) < T:
            dropped += len(group)
            continue
        dropped += T - 1
        feats = np.stack([s.features for s in group])
        for end in range(T - 1, len(group)):
            values.append(feats[end - T + 1 : end + 1])
            labels.append(1 if group[end].label == "P" else 0)
            ar_ids.append(ar)
            end_times.append(group[end].timestamp)

    if values:
        arr = np.stack(values).astype(np.float64)
    else:
        arr = np.zeros((0, T, N_FEATURES))
    log.info("windowize: %d windows (T=%d), %d samples dropped", len(values), T, dropped)
    return SequenceSet(
        values=arr,
        labels=np.asarray(labels, dtype=np.int8),
        ar_ids=tuple(ar_ids),
        end_times=tuple(end_times),
        window_length=T,
        n_dropped=dropped,
    )


def split(
    samples: list[Sample], train_fraction: float, seed: int
) -> tuple[list[Sample], list[Sample]]:
    """Deterministic AR-level split: no AR appears in both halves."""
    frac = float(train_fraction)
    if not 0.0 < frac < 1.0:
        raise InputError(f"train fraction must be in (0, 1), got {frac}")
    ar_ids = sorted({s.ar_id for s in samples})
    if len(ar_ids) < 2:
        raise InputError("need at least 2 ARs to split at AR granularity")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    perm = rng.permutation(len(ar_ids))
    n_train = int(round(frac * len(ar_ids)))
    n_train = min(max(n_train, 1), len(ar_ids) - 1)
    train_ars = {ar_ids[i] for i in perm[:n_train]}
    train = [s for s in samples if s.ar_id in train_ars]
    test = [s for s in samples if s.ar_id not in train_ars]
    return train, test


def fit_norm_stats(samples: list[Sample]) -> NormStats:
    """Fit z-score statistics on the (training) samples."""
    stats = numerics.zscore_fit(features_matrix(samples))
    return NormStats(mean=stats.mean, std=stats.std, constant=stats.constant)


def normalize_samples(samples: list[Sample], stats: NormStats) -> list[Sample]:
    """Return new samples with z-scored feature vectors."""
    return [
        Sample(
            ar_id=s.ar_id,
            timestamp=s.timestamp,
            features=stats.apply(s.features),
            label=s.label,
        )
        for s in samples
    ]


@dataclass(frozen=True)
class PlantSpec:
    """Ground truth planted into synthetic data.

    One dominant feature drives the labels through its trailing-window
    trend; one partner feature is generated with a target correlation to
    the dominant one.
    """

    dominant: str = "TOTPOT"
    correlate: str = "SAVNCPP"
    rho: float = 0.95
    label_noise: float = 0.01
    trend_window: int = 10

    def validate(self) -> None:
        feature_index(self.dominant)
        feature_index(self.correlate)
        if self.dominant == self.correlate:
            raise InputError("dominant and correlate features must differ")
        if not np.isfinite(self.rho) or abs(self.rho) > 1.0:
            raise InputError(f"target correlation must satisfy |rho| <= 1, got {self.rho}")
        if not 0.0 <= self.label_noise <= 0.02:
            raise InputError(
                f"label noise must be in [0, 0.02], got {self.label_noise}"
            )
        if self.trend_window < 2:
            raise InputError("trend window must be >= 2")

    def to_dict(self) -> dict:
        return {
            "dominant": self.dominant,
            "correlate": self.correlate,
            "rho": self.rho,
            "label_noise": self.label_noise,
            "trend_window": self.trend_window,
        }


# Affine maps from the unit-scale latent processes to plausible physical
# magnitudes, keyed by feature name: value = offset + scale * latent.
_SYNTH_SCALES: dict[str, tuple[float, float]] = {
    "TOTUSJZ": (5.2e4, 1.8e4),
    "USFLUX": (3.1e5, 1.1e5),
    "TOTPOT": (7.4e3, 2.6e3),
    "SAVNCPP": (2.8e4, 9.5e3),
    "ABSNJZH": (310.0, 120.0),
    "MEANPOT": (5.9e3, 2.1e3),
    "MEANSHR": (33.0, 9.0),
    "SHRGT45": (28.0, 12.0),
    "MEANJZH": (0.9, 4.1),
    "MEANGAM": (41.0, 11.0),
    "MEANALP": (0.12, 0.31),
    "MEANGBZ": (52.0, 17.0),
}

_SYNTH_EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)


def _smooth_walk(rng: np.random.Generator, length: int) -> np.ndarray:
    """Stationary AR(1) latent, unit marginal variance, coefficient 0.9."""
    w = np.empty(length)
    w[0] = rng.normal()
    innov = rng.normal(size=length - 1) * np.sqrt(1.0 - 0.9**2) if length > 1 else ()
    for t in range(1, length):
        w[t] = 0.9 * w[t - 1] + innov[t - 1]
    return w


def synth_generate(
    n_ars: int, samples_per_ar: int, seed: int, plant: PlantSpec
) -> list[Sample]:
    """Generate labeled synthetic samples with planted structure.

    Each AR follows smooth latent processes. The dominant feature carries a
    per-AR drift; a sample is labeled P when the logistic of the dominant
    feature's trailing-window trend exceeds 0.5, then labels are flipped
    with probability ``plant.label_noise``. The correlate feature is mixed
    from the standardized dominant signal to hit the target correlation.
    """
    plant.validate()
    if n_ars < 1 or samples_per_ar < 1:
        raise InputError("n_ars and samples_per_ar must be >= 1")
    L = int(samples_per_ar)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    dom = feature_index(plant.dominant)
    cor = feature_index(plant.correlate)
    others = [j for j in range(N_FEATURES) if j not in (dom, cor)]

    latent = np.zeros((n_ars, L, N_FEATURES))
    dominant = np.zeros((n_ars, L))
    labels = np.zeros((n_ars, L), dtype=bool)
    steps = np.arange(L)
    lookback = np.maximum(0, steps - (plant.trend_window - 1))

    for a in range(n_ars):
        base = rng.normal()
        # drift magnitude bounded away from zero: every AR is decisively
        # rising or falling, so window labels are recoverable from content
        drift = (1.0 if rng.random() < 0.5 else -1.0) * (0.6 + 0.9 * rng.random())
        walk = _smooth_walk(rng, L)
        g = 0.05 * base + 3.0 * drift * ((steps + 1) / L) + 0.1 * walk
        dominant[a] = g
        trend = g - g[lookback] + rng.normal(0.0, 0.02, size=L)
        labels[a] = 1.0 / (1.0 + np.exp(-4.0 * trend)) > 0.5
        for j in others:
            level = rng.normal()
            wj = _smooth_walk(rng, L)
            latent[a, :, j] = 0.6 * level + 0.6 * wj + 0.15 * rng.normal(size=L)

    if plant.label_noise > 0:
        labels ^= rng.random(size=labels.shape) < plant.label_noise

    g_flat = dominant.reshape(-1)
    g_std = (g_flat - g_flat.mean()) / max(g_flat.std(), 1e-12)
    eta = rng.normal(size=g_flat.size)
    c_std = plant.rho * g_std + np.sqrt(max(0.0, 1.0 - plant.rho**2)) * eta
    latent[:, :, dom] = dominant
    latent[:, :, cor] = c_std.reshape(n_ars, L)

    samples: list[Sample] = []
    for a in range(n_ars):
        ar_id = f"AR{a + 1:04d}"
        for t in range(L):
            feats = np.empty(N_FEATURES)
            for j, name in enumerate(FEATURE_NAMES):
                off, scale = _SYNTH_SCALES[name]
                feats[j] = off + scale * latent[a, t, j]
            samples.append(
                Sample(
                    ar_id=ar_id,
                    timestamp=_SYNTH_EPOCH + timedelta(hours=int(a * L + t)),
                    features=feats,
                    label="P" if labels[a, t] else "N",
                )
            )
    return samples
