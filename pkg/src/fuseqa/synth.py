"""Seeded synthetic multi-label data with two modalities (SAR "s1", optical "s2").

Each sample's features in modality m are a sum of fixed orthonormal class
directions scaled by that class's detectability in m, plus isotropic
Gaussian noise. All randomness is keyed on ``(seed, stream, sample index)``
so any sample can be regenerated on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sarprep import Raster
from .taxonomy import Nomenclature, hierarchy_closure

MODALITIES = ("s1", "s2")
SPLITS = ("train", "val", "test")

_LABELS, _NOISE, _DIRECTIONS, _SHIFT, _SAR, _SAR_OFFSETS = range(6)

# SAR pair model: dB means and per-channel pixel std
VV_MEAN_DB = -10.0
VH_MEAN_DB = -17.0
PIXEL_STD_DB = 2.0
BASE_CORRELATION = 0.9


@dataclass
class SynthConfig:
    nomenclature: Nomenclature
    n_samples: int = 5000
    seed: int = 0
    class_freqs: np.ndarray | None = None
    detectability: np.ndarray | None = None
    noise_sigma: float = 0.5
    domain_shift: float = 0.0
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    feature_dim: int | None = None
    volume_class: int = 0
    volume_factor: float = 4.0

    def __post_init__(self):
        n = len(self.nomenclature)
        self.class_freqs = np.full(n, 0.25) if self.class_freqs is None else np.asarray(self.class_freqs, dtype=float)
        self.detectability = (np.full((n, len(MODALITIES)), 0.9) if self.detectability is None
                              else np.asarray(self.detectability, dtype=float))
        if self.feature_dim is None:
            self.feature_dim = n + 4
        if self.class_freqs.shape != (n,) or np.any(self.class_freqs <= 0) or np.any(self.class_freqs >= 1):
            raise ValueError("class_freqs must hold one value in (0, 1) per class")
        if self.detectability.shape != (n, len(MODALITIES)):
            raise ValueError(f"detectability must have shape ({n}, {len(MODALITIES)})")
        if np.any(self.detectability < 0) or np.any(self.detectability > 1):
            raise ValueError("detectability must lie in [0, 1]")
        fr = self.split_fractions
        if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1) > 1e-9:
            raise ValueError("split_fractions must be three positive values summing to 1")
        if self.noise_sigma <= 0 or self.domain_shift < 0 or self.n_samples < 1:
            raise ValueError("noise_sigma > 0, domain_shift >= 0 and n_samples >= 1 required")
        if self.feature_dim < n:
            raise ValueError(f"feature_dim {self.feature_dim} < {n} classes: class directions not constructible")
        if not 0 <= self.volume_class < n or not 1 <= self.volume_factor <= 20:
            raise ValueError("volume_class out of range or volume_factor outside [1, 20]")

    def to_dict(self) -> dict:
        return {
            "nomenclature": self.nomenclature.names,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "class_freqs": self.class_freqs.tolist(),
            "detectability": self.detectability.tolist(),
            "noise_sigma": self.noise_sigma,
            "domain_shift": self.domain_shift,
            "split_fractions": list(self.split_fractions),
            "feature_dim": self.feature_dim,
            "volume_class": self.volume_class,
            "volume_factor": self.volume_factor,
        }


@dataclass
class Split:
    labels: np.ndarray
    features: dict[str, np.ndarray]
    indices: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass
class SynthDataset:
    splits: dict[str, Split]
    config: SynthConfig
    directions: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    raw_labels: np.ndarray | None = field(repr=False, default=None)

    def __getitem__(self, name: str) -> Split:
        return self.splits[name]


def _rng(seed: int, stream: int, *key: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, *key])


def class_directions(cfg: SynthConfig, modality: int) -> np.ndarray:
    """Orthonormal ``(feature_dim, N)`` matrix of class directions for one modality."""
    g = _rng(cfg.seed, _DIRECTIONS, modality).standard_normal((cfg.feature_dim, len(cfg.nomenclature)))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def shift_direction(cfg: SynthConfig, modality: int, directions: np.ndarray) -> np.ndarray:
    """Unit vector in the span of the class directions with seed-derived signs."""
    signs = _rng(cfg.seed, _SHIFT, modality).choice([-1.0, 1.0], size=directions.shape[1])
    u = directions @ signs
    return u / np.linalg.norm(u)


def split_sizes(n: int, fractions) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return n_train, n_val, n - n_train - n_val


def sample_labels(cfg: SynthConfig, index: int, closed: bool = True) -> np.ndarray:
    bits = (_rng(cfg.seed, _LABELS, index).random(len(cfg.nomenclature)) < cfg.class_freqs).astype(np.uint8)
    return hierarchy_closure(bits, cfg.nomenclature) if closed else bits


def gen_dataset(cfg: SynthConfig) -> SynthDataset:
    n, d = cfg.n_samples, cfg.feature_dim
    raw = np.stack([sample_labels(cfg, i, closed=False) for i in range(n)])
    labels = hierarchy_closure(raw, cfg.nomenclature)
    sizes = split_sizes(n, cfg.split_fractions)
    bounds = np.cumsum((0,) + sizes)

    directions, features = {}, {}
    for m, name in enumerate(MODALITIES):
        e = class_directions(cfg, m)
        directions[name] = e
        signal = (labels * cfg.detectability[:, m]) @ e.T
        noise = np.stack([_rng(cfg.seed, _NOISE, m, i).standard_normal(d) for i in range(n)])
        x = signal + cfg.noise_sigma * noise
        x[bounds[2]:] += cfg.domain_shift * shift_direction(cfg, m, e)
        features[name] = x

    splits = {}
    for k, name in enumerate(SPLITS):
        sl = slice(bounds[k], bounds[k + 1])
        splits[name] = Split(labels[sl], {m: f[sl] for m, f in features.items()}, np.arange(n)[sl])
    return SynthDataset(splits, cfg, directions, raw)


def gen_sar_pair(labels, cfg: SynthConfig, size: int = 16, index: int = 0) -> tuple[Raster, Raster]:
    """VV/VH dB rasters whose difference variance is driven by the volume-scatter class.

    Both channels keep the same marginal distribution whatever the volume
    bit; only their correlation changes, which scales ``var(VV - VH)`` by
    ``cfg.volume_factor`` when the bit is set. Other classes shift both
    channels' means by a class-specific amount scaled by SAR detectability.
    """
    if size < 8:
        raise ValueError("raster size must be at least 8")
    bits = np.asarray(labels)
    rho = BASE_CORRELATION
    if bits[cfg.volume_class]:
        rho = 1.0 - cfg.volume_factor * (1.0 - BASE_CORRELATION)
    offsets = _rng(cfg.seed, _SAR_OFFSETS).uniform(-3.0, 3.0, len(cfg.nomenclature))
    mask = bits.astype(bool).copy()
    mask[cfg.volume_class] = False
    offset = float((offsets * cfg.detectability[:, 0])[mask].sum())

    z = _rng(cfg.seed, _SAR, index).standard_normal((2, size, size))
    vv = VV_MEAN_DB + offset + PIXEL_STD_DB * z[0]
    vh = VH_MEAN_DB + offset + PIXEL_STD_DB * (rho * z[0] + np.sqrt(1.0 - rho * rho) * z[1])
    return Raster(vv), Raster(vh)


def complementary_preset(nom: Nomenclature, **overrides) -> SynthConfig:
    """Three equal groups of classes by index: SAR-favoured, optical-favoured
    but SAR-informative, and optical-only."""
    n = len(nom)
    if n < 6:
        raise ValueError("complementary preset needs at least 6 classes")
    det = np.empty((n, 2))
    for j in range(n):
        group = j * 3 // n
        det[j] = [(0.9, 0.3), (0.5, 0.9), (0.05, 0.9)][group]
    kw = {"detectability": det, "class_freqs": np.full(n, 0.15)}
    kw.update(overrides)
    return SynthConfig(nom, **kw)


def preset_group(j: int, n: int) -> int:
    return j * 3 // n + 1
