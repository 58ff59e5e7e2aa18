"""Sentinel-1 style channel preparation: saturation bounds, normalisation,
the VV-VH ratio channel and per-channel summary features.

Raster data is held as a ``(height, width, channels)`` float array, i.e. the
row-major, pixel-interleaved layout used by the ``.bin`` raster files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fileio import atomic_write_bytes, atomic_write_text

TWO_CH = "TWO_CH"
THREE_CH = "THREE_CH"
HIST_BINS = 4096
DEGENERATE_SPAN = 1e-6


@dataclass(frozen=True)
class Raster:
    data: np.ndarray
    units: str = "dB"

    def __post_init__(self):
        a = np.asarray(self.data, dtype=float)
        if a.ndim == 2:
            a = a[:, :, None]
        if a.ndim != 3 or min(a.shape) < 1:
            raise ValueError(f"raster data must be (height, width, channels), got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("raster contains non-finite values")
        object.__setattr__(self, "data", a)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def channel(self, k: int) -> "Raster":
        return Raster(self.data[:, :, k:k + 1], self.units)


@dataclass(frozen=True)
class SaturationBounds:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("lo and hi must have one entry per channel")
        if any(not lo < hi for lo, hi in zip(self.lo, self.hi)):
            raise ValueError("every channel needs lo < hi")

    def __len__(self) -> int:
        return len(self.lo)

    def subset(self, n: int) -> "SaturationBounds":
        return SaturationBounds(self.lo[:n], self.hi[:n])

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, doc) -> "SaturationBounds":
        return cls(tuple(float(v) for v in doc["lo"]), tuple(float(v) for v in doc["hi"]))


def _nearest_rank(n: int, q: float) -> int:
    """1-based nearest rank of quantile ``q`` among ``n`` sorted values."""
    return min(max(math.ceil(q * n), 1), n)


def compute_saturation_bounds(images, lower_q: float = 0.01, upper_q: float = 0.99) -> SaturationBounds:
    """Per-channel pooled quantiles over all images via a 4096-bin cumulative histogram.

    The lower bound is the left edge and the upper bound the right edge of
    the bin holding the nearest-rank quantile, so each bound is within one
    bin width of the exact value, and ``(0, 1)`` gives the exact min and max.
    """
    if not 0 <= lower_q < upper_q <= 1:
        raise ValueError("need 0 <= lower_q < upper_q <= 1")
    images = list(images)
    if not images:
        raise ValueError("no images to compute bounds from")
    n_ch = images[0].channels
    if any(im.channels != n_ch for im in images):
        raise ValueError("all images must have the same channel count")

    lo_out, hi_out = [], []
    for k in range(n_ch):
        mins = [im.data[:, :, k].min() for im in images]
        maxs = [im.data[:, :, k].max() for im in images]
        vmin, vmax = float(min(mins)), float(max(maxs))
        if vmin == vmax:
            lo_out.append(vmin)
            hi_out.append(vmin + DEGENERATE_SPAN)
            continue
        counts = np.zeros(HIST_BINS, dtype=np.int64)
        for im in images:
            c, _ = np.histogram(im.data[:, :, k], bins=HIST_BINS, range=(vmin, vmax))
            counts += c
        cum = np.cumsum(counts)
        total = int(cum[-1])
        width = (vmax - vmin) / HIST_BINS
        b_lo = int(np.searchsorted(cum, _nearest_rank(total, lower_q)))
        b_hi = int(np.searchsorted(cum, _nearest_rank(total, upper_q)))
        lo = vmin + b_lo * width
        hi = vmax if b_hi == HIST_BINS - 1 else vmin + (b_hi + 1) * width
        if hi <= lo:
            hi = lo + DEGENERATE_SPAN
        lo_out.append(lo)
        hi_out.append(hi)
    return SaturationBounds(tuple(lo_out), tuple(hi_out))


def normalize_channel(r: Raster, b: SaturationBounds) -> Raster:
    """Clip each channel to its bounds and map it affinely onto [0, 1]."""
    if len(b) != r.channels:
        raise ValueError(f"{len(b)} bounds for {r.channels} channels")
    lo = np.asarray(b.lo)
    hi = np.asarray(b.hi)
    out = (np.clip(r.data, lo, hi) - lo) / (hi - lo)
    return Raster(out, units="normalized")


def make_ratio_channel(vv: Raster, vh: Raster) -> Raster:
    # a ratio of linear backscatter is a difference in dB
    if vv.channels != 1 or vh.channels != 1:
        raise ValueError("ratio needs single-channel VV and VH rasters")
    if vv.data.shape != vh.data.shape:
        raise ValueError(f"VV {vv.data.shape} and VH {vh.data.shape} differ in shape")
    return Raster(vv.data - vh.data, units="dB")


def stack_raw(vv: Raster, vh: Raster) -> Raster:
    """Unnormalised ``[VV, VH, VV-VH]`` stack, the input to bounds estimation."""
    ratio = make_ratio_channel(vv, vh)
    return Raster(np.concatenate([vv.data, vh.data, ratio.data], axis=2), units="dB")


def assemble_sar_input(vv: Raster, vh: Raster, mode: str, bounds: SaturationBounds) -> Raster:
    """Normalised ``[VV, VH]`` (TWO_CH) or ``[VV, VH, VV-VH]`` (THREE_CH).

    ``bounds`` may carry three entries for TWO_CH, the ratio entry is then unused.
    """
    need = {TWO_CH: 2, THREE_CH: 3}.get(mode)
    if need is None:
        raise ValueError(f"unknown SAR mode {mode!r}")
    if not (len(bounds) == need or (mode == TWO_CH and len(bounds) == 3)):
        raise ValueError(f"{mode} needs {need} saturation bounds, got {len(bounds)}")
    raw = stack_raw(vv, vh)
    return normalize_channel(Raster(raw.data[:, :, :need]), bounds.subset(need))


def _nearest_rank_quantiles(sorted_vals: np.ndarray, quantiles) -> list[float]:
    n = sorted_vals.size
    return [float(sorted_vals[_nearest_rank(n, q) - 1]) for q in quantiles]


def summarize_features(r: Raster, quantiles=(0.1, 0.5, 0.9)) -> np.ndarray:
    """Per channel: mean, population std, then the nearest-rank quantiles."""
    qs = list(quantiles)
    if any(not 0 <= q <= 1 for q in qs) or qs != sorted(qs):
        raise ValueError("quantiles must be sorted values in [0, 1]")
    out = []
    for k in range(r.channels):
        v = np.sort(r.data[:, :, k].ravel())
        out.extend([float(v.mean()), float(v.std())])
        out.extend(_nearest_rank_quantiles(v, qs))
    return np.asarray(out)


def write_raster(r: Raster, path_base) -> None:
    """Write ``<base>.bin`` (little-endian float32) and its ``<base>.json`` sidecar."""
    base = Path(path_base)
    meta = {"width": r.width, "height": r.height, "channels": r.channels, "units": r.units}
    atomic_write_bytes(Path(f"{base}.bin"), r.data.astype("<f4").tobytes())
    atomic_write_text(Path(f"{base}.json"), json.dumps(meta, sort_keys=True))


def read_raster(path_base) -> Raster:
    base = Path(path_base)
    meta = json.loads(Path(f"{base}.json").read_text(encoding="utf-8"))
    h, w, c = int(meta["height"]), int(meta["width"]), int(meta["channels"])
    data = np.fromfile(Path(f"{base}.bin"), dtype="<f4")
    if data.size != h * w * c:
        raise ValueError(f"{base}.bin holds {data.size} values, sidecar promises {h * w * c}")
    return Raster(data.reshape(h, w, c).astype(float), units=meta.get("units", "dB"))
