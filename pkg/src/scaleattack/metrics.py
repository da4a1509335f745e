"""Pixel-level similarity between two images of identical shape."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import Image

PEAK = 255.0


@dataclass(frozen=True)
class SimilarityReport:
    exact: bool
    max_abs_diff: int
    psnr: float  # dB, inf when exact
    ncc: float

    def to_record(self) -> dict:
        return {
            "exact": self.exact,
            "max_abs_diff": self.max_abs_diff,
            # JSON has no infinity
            "psnr": None if math.isinf(self.psnr) else self.psnr,
            "ncc": self.ncc,
        }


def mse(a: Image, b: Image) -> float:
    d = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    return float(np.mean(d * d))


def psnr(a: Image, b: Image) -> float:
    err = mse(a, b)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / err)


def ncc(a: Image, b: Image) -> float:
    """Normalized cross-correlation of the mean-subtracted flattened samples.

    When either image is constant the correlation is undefined; it is taken as
    1.0 if both are the same constant and 0.0 otherwise.
    """
    x = a.pixels.astype(np.float64).ravel()
    y = b.pixels.astype(np.float64).ravel()
    x = x - x.mean()
    y = y - y.mean()
    sx = math.sqrt(float(np.dot(x, x)))
    sy = math.sqrt(float(np.dot(y, y)))
    if sx == 0 or sy == 0:
        return 1.0 if np.array_equal(a.pixels, b.pixels) else 0.0
    r = float(np.dot(x, y)) / (sx * sy)
    return max(-1.0, min(1.0, r))


def compare(a: Image, b: Image) -> SimilarityReport:
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(
            f"cannot compare {a.width}x{a.height}x{a.channels} with {b.width}x{b.height}x{b.channels}"
        )
    diff = np.abs(a.pixels.astype(np.int16) - b.pixels.astype(np.int16))
    max_diff = int(diff.max())
    return SimilarityReport(
        exact=max_diff == 0,
        max_abs_diff=max_diff,
        psnr=psnr(a, b),
        ncc=ncc(a, b),
    )
