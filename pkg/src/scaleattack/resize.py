"""Bilinear resizing: the vulnerable single-step path and two hardened paths.

Coordinates follow the pixel-center convention: output pixel ``i`` of an axis
with ``n_out`` pixels maps to source coordinate ``(i + 0.5) * n_in / n_out``
and source pixel ``k`` is centered at ``k + 0.5``.

The 8-bit paths are evaluated in exact rational arithmetic. Each axis is
described by integer tap weights over a common per-row denominator, so the
final rounding (nearest, ties away from zero) never depends on floating-point
accumulation order.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .image import Image, PixelCoord

# Largest integer numerator the float64 sparse products can hold exactly.
_EXACT_LIMIT = 2**53


@dataclass(frozen=True)
class ScaleSpec:
    out_width: int
    out_height: int

    def __post_init__(self):
        if self.out_width < 1 or self.out_height < 1:
            raise ValueError(f"scale must be at least 1x1, got {self.out_width}x{self.out_height}")

    @classmethod
    def parse(cls, text: str) -> ScaleSpec:
        """Parse the ``WxH`` syntax, e.g. ``"299x299"``."""
        m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
        if m is None:
            raise ValueError(f"expected WxH, got {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))

    @property
    def size(self) -> tuple[int, int]:
        return self.out_width, self.out_height

    def __str__(self):
        return f"{self.out_width}x{self.out_height}"


class Mode(enum.Enum):
    VULNERABLE = "vulnerable"
    ANTIALIASED = "antialias"
    MULTISTEP = "multistep"


@dataclass(frozen=True)
class ResizePolicy:
    mode: Mode = Mode.VULNERABLE
    step_shrink_limit: float = 2.0

    def __post_init__(self):
        if not isinstance(self.mode, Mode):
            object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode is Mode.MULTISTEP and not self.step_shrink_limit > 1:
            raise ValueError(f"step_shrink_limit must be > 1, got {self.step_shrink_limit}")

    @classmethod
    def parse(cls, name: str, step_shrink_limit: float = 2.0) -> ResizePolicy:
        return cls(Mode(name), step_shrink_limit)

    def __str__(self):
        return self.mode.value


VULNERABLE = ResizePolicy(Mode.VULNERABLE)
ANTIALIASED = ResizePolicy(Mode.ANTIALIASED)
MULTISTEP = ResizePolicy(Mode.MULTISTEP)


@dataclass(frozen=True)
class NeighborSet:
    n_l: int
    n_u: int
    m_l: int
    m_u: int
    x: float
    y: float


def map_coordinate(i: int, n_out: int, n_in: int) -> float:
    """Continuous source coordinate of the center of output pixel ``i``."""
    return (i + 0.5) * n_in / n_out


def neighbors(x: float, y: float, width: int, height: int) -> NeighborSet:
    """Lower/upper source columns and rows around ``(x, y)``, clamped to the raster."""
    n_l = min(max(math.floor(x - 0.5), 0), width - 1)
    n_u = min(max(math.ceil(x - 0.5), 0), width - 1)
    m_l = min(max(math.floor(y - 0.5), 0), height - 1)
    m_u = min(max(math.ceil(y - 0.5), 0), height - 1)
    return NeighborSet(n_l, n_u, m_l, m_u, x, y)


def _pair_weights(lo: int, hi: int, t: float) -> tuple[float, float]:
    # Collapses to a single tap when both neighbors coincide (integral or clamped).
    if hi == lo:
        return 1.0, 0.0
    return hi - t, t - lo


def bilinear_sample(img: Image, x: float, y: float) -> np.ndarray:
    """Interpolated per-channel intensity at continuous source position ``(x, y)``."""
    nb = neighbors(x, y, img.width, img.height)
    wx_l, wx_u = _pair_weights(nb.n_l, nb.n_u, x - 0.5)
    wy_l, wy_u = _pair_weights(nb.m_l, nb.m_u, y - 0.5)
    f = img.pixels.astype(np.float64)
    return (
        wx_l * (wy_l * f[nb.m_l, nb.n_l] + wy_u * f[nb.m_u, nb.n_l])
        + wx_u * (wy_l * f[nb.m_l, nb.n_u] + wy_u * f[nb.m_u, nb.n_u])
    )


# ---------------------------------------------------------------------------
# Per-axis taps


@dataclass(frozen=True)
class AxisNeighbors:
    """Clamped lower/upper source indices for every output index of one axis.

    ``frac`` / ``den`` is the exact fractional offset of ``coord - 0.5`` above
    the unclamped lower index.
    """

    lower: np.ndarray
    upper: np.ndarray
    frac: np.ndarray
    den: int


def axis_neighbors(n_out: int, n_in: int) -> AxisNeighbors:
    i = np.arange(n_out, dtype=np.int64)
    # coord - 0.5 == ((2i + 1) * n_in - n_out) / (2 * n_out)
    num = (2 * i + 1) * n_in - n_out
    den = 2 * n_out
    lo = num // den
    frac = num - lo * den
    hi = lo + (frac > 0)
    return AxisNeighbors(np.clip(lo, 0, n_in - 1), np.clip(hi, 0, n_in - 1), frac, den)


@dataclass(frozen=True)
class AxisTaps:
    """Integer weights ``weight[i, t]`` on source index ``index[i, t]``; row ``i``
    is normalized by ``norm[i]``."""

    index: np.ndarray
    weight: np.ndarray
    norm: np.ndarray

    def matrix(self, n_in: int, normalized: bool = False) -> sparse.csr_matrix:
        n_out, taps = self.index.shape
        rows = np.repeat(np.arange(n_out), taps)
        vals = self.weight.astype(np.float64)
        if normalized:
            vals = vals / self.norm[:, None]
        m = sparse.csr_matrix((vals.ravel(), (rows, self.index.ravel())), shape=(n_out, n_in))
        m.sum_duplicates()
        return m


def _bilinear_taps(n_out: int, n_in: int) -> AxisTaps:
    nb = axis_neighbors(n_out, n_in)
    index = np.stack([nb.lower, nb.upper], axis=1)
    weight = np.stack([nb.den - nb.frac, nb.frac], axis=1)
    return AxisTaps(index, weight, np.full(n_out, nb.den, dtype=np.int64))


def _tent_taps(n_out: int, n_in: int) -> AxisTaps:
    # Triangle filter of radius max(1, n_in / n_out) source pixels centered on
    # the mapped coordinate. For source pixel k the offset from the center is
    # e / (2 * n_out) with e = (2k + 1) * n_out - (2i + 1) * n_in, and the
    # weight 1 - |offset| / radius equals (2L - |e|) / 2L with L = max(n_in, n_out).
    big = max(n_in, n_out)
    i = np.arange(n_out, dtype=np.int64)[:, None]
    center2 = (2 * i + 1) * n_in
    first = (center2 - n_out - 2 * big) // (2 * n_out)
    ntaps = -(-2 * big // n_out) + 2
    k = first + np.arange(ntaps, dtype=np.int64)[None, :]
    e = (2 * k + 1) * n_out - center2
    weight = np.maximum(0, 2 * big - np.abs(e))
    # taps falling outside the raster are dropped and the rest renormalized
    weight[(k < 0) | (k >= n_in)] = 0
    return AxisTaps(np.clip(k, 0, n_in - 1), weight, weight.sum(axis=1))


def axis_taps(n_out: int, n_in: int, mode: Mode) -> AxisTaps:
    if mode is Mode.ANTIALIASED:
        return _tent_taps(n_out, n_in)
    return _bilinear_taps(n_out, n_in)


# ---------------------------------------------------------------------------
# Resizing


def _separable(arr: np.ndarray, rows: sparse.csr_matrix, cols: sparse.csr_matrix) -> np.ndarray:
    # arr: (H, W, K) float64 -> (J, I, K)
    h, w, k = arr.shape
    out = rows @ arr.reshape(h, w * k)
    j = rows.shape[0]
    out = out.reshape(j, w, k).transpose(1, 0, 2).reshape(w, j * k)
    out = cols @ out
    return out.reshape(cols.shape[0], j, k).transpose(1, 0, 2)


def _single_step(pixels: np.ndarray, width: int, height: int, mode: Mode) -> np.ndarray:
    h, w, _ = pixels.shape
    if (w, h) == (width, height):
        return pixels.copy()
    tx = axis_taps(width, w, mode)
    ty = axis_taps(height, h, mode)
    denom = ty.norm[:, None, None] * tx.norm[None, :, None]
    if 255 * int(denom.max()) < _EXACT_LIMIT:
        acc = _separable(pixels.astype(np.float64), ty.matrix(h), tx.matrix(w))
        acc = np.rint(acc).astype(np.int64)
        out = (2 * acc + denom) // (2 * denom)
    else:
        # Denominators too large for exact integer sums; fall back to float weights.
        acc = _separable(pixels.astype(np.float64), ty.matrix(h, True), tx.matrix(w, True))
        out = np.floor(acc + 0.5)
    return out.astype(np.uint8)


def multistep_plan(width: int, height: int, spec: ScaleSpec, step_shrink_limit: float = 2.0) -> list[ScaleSpec]:
    """Intermediate sizes visited by a multi-step resize, ending at ``spec``.

    Each pass shrinks an axis by at most ``step_shrink_limit``; enlarged axes
    jump to their target in the first pass. An identity resize has no passes.
    """
    if not step_shrink_limit > 1:
        raise ValueError(f"step_shrink_limit must be > 1, got {step_shrink_limit}")

    def step(cur, target):
        if target >= cur:
            return target
        return max(target, min(cur - 1, math.ceil(cur / step_shrink_limit)))

    plan = []
    w, h = width, height
    while (w, h) != spec.size:
        w, h = step(w, spec.out_width), step(h, spec.out_height)
        plan.append(ScaleSpec(w, h))
    return plan


def _passes(width: int, height: int, spec: ScaleSpec, policy: ResizePolicy) -> list[tuple[ScaleSpec, Mode]]:
    if policy.mode is Mode.MULTISTEP:
        plan = multistep_plan(width, height, spec, policy.step_shrink_limit)
        return [(s, Mode.VULNERABLE) for s in plan]
    return [(spec, policy.mode)]


def resize(img: Image, spec: ScaleSpec, policy: ResizePolicy = VULNERABLE) -> Image:
    """Resize ``img`` to ``spec`` with 8-bit output under ``policy``."""
    pixels = img.pixels
    for s, mode in _passes(img.width, img.height, spec, policy):
        pixels = _single_step(pixels, s.out_width, s.out_height, mode)
    return Image(pixels)


def resize_float(arr: np.ndarray, spec: ScaleSpec, policy: ResizePolicy = VULNERABLE) -> np.ndarray:
    """Unquantized resize of a ``(H, W)`` or ``(H, W, K)`` float array.

    Multi-step passes are chained without intermediate rounding, so the result
    is the exact linear operator applied to ``arr``.
    """
    a = np.asarray(arr, dtype=np.float64)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[:, :, None]
    h, w, _ = a.shape
    for s, mode in _passes(w, h, spec, policy):
        h, w, _ = a.shape
        tx = axis_taps(s.out_width, w, mode)
        ty = axis_taps(s.out_height, h, mode)
        a = _separable(a, ty.matrix(h, True), tx.matrix(w, True))
    return a[:, :, 0] if squeeze else a


# ---------------------------------------------------------------------------
# Footprint probing


@dataclass(frozen=True)
class ContributionMap:
    """Weight of every source pixel in one output pixel, shape ``(height, width)``."""

    weights: np.ndarray

    @property
    def support(self) -> int:
        return int(np.count_nonzero(np.abs(self.weights) > 1e-12))

    @property
    def max_weight(self) -> float:
        return float(self.weights.max())

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def to_image(self) -> Image:
        peak = self.weights.max()
        scaled = self.weights / peak if peak > 0 else self.weights
        return Image(np.floor(np.clip(scaled, 0, 1) * 255 + 0.5).astype(np.uint8))


MAX_PROBE_PIXELS = 128 * 128


def contribution_map(
    src_width: int,
    src_height: int,
    spec: ScaleSpec,
    probe: PixelCoord,
    policy: ResizePolicy = VULNERABLE,
) -> ContributionMap:
    """Measure each source pixel's weight in output pixel ``probe``.

    Every source pixel is switched on alone (value 1, all others 0), the image
    is resized without quantization, and the probe pixel is read back. Cost is
    quadratic in the source area, hence the ``MAX_PROBE_PIXELS`` cap.
    """
    if not (0 <= probe.col < spec.out_width and 0 <= probe.row < spec.out_height):
        raise ValueError(f"probe ({probe.col}, {probe.row}) outside output {spec}")
    n = src_width * src_height
    if n > MAX_PROBE_PIXELS:
        raise ValueError(f"source has {n} pixels; probing is limited to {MAX_PROBE_PIXELS}")
    weights = np.empty(n)
    batch = max(1, 4_000_000 // n)
    for start in range(0, n, batch):
        idx = np.arange(start, min(start + batch, n))
        impulses = np.zeros((src_height, src_width, idx.size))
        impulses[idx // src_width, idx % src_width, np.arange(idx.size)] = 1.0
        out = resize_float(impulses, spec, policy)
        weights[idx] = out[probe.row, probe.col, :]
    return ContributionMap(weights.reshape(src_height, src_width))
