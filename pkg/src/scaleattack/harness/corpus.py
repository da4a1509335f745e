"""Seeded synthetic corpus of natural-looking test images.

Images combine a 1/f amplitude-spectrum noise field (the spectral falloff of
natural photographs), a smooth illumination gradient and a handful of
soft-edged shapes. Nothing in them is periodic, so they serve as the clean
half of detector calibration.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..image import Image, save_image


def _pink_noise(rng: np.random.Generator, height: int, width: int, exponent: float) -> np.ndarray:
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.rfftfreq(width)[None, :]
    radius = np.hypot(fx, fy)
    radius[0, 0] = 1.0
    amplitude = radius ** (-exponent)
    amplitude[0, 0] = 0.0
    phase = rng.uniform(0, 2 * np.pi, amplitude.shape)
    field = np.fft.irfft2(amplitude * np.exp(1j * phase), s=(height, width))
    return field / (field.std() + 1e-12)


def _shapes(rng: np.random.Generator, height: int, width: int, canvas: np.ndarray) -> None:
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(rng.integers(2, 7)):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        rx = rng.uniform(0.05, 0.35) * width
        ry = rng.uniform(0.05, 0.35) * height
        theta = rng.uniform(0, np.pi)
        dx, dy = xx - cx, yy - cy
        u = (dx * np.cos(theta) + dy * np.sin(theta)) / rx
        v = (-dx * np.sin(theta) + dy * np.cos(theta)) / ry
        if rng.random() < 0.5:
            dist = np.hypot(u, v)
        else:
            dist = np.maximum(np.abs(u), np.abs(v))
        softness = rng.uniform(0.01, 0.2)
        alpha = np.clip((1.0 - dist) / softness, 0.0, 1.0)[:, :, None]
        colour = rng.uniform(0, 255, 3)
        canvas *= 1.0 - alpha
        canvas += alpha * colour


def synth_image(rng: np.random.Generator, width: int, height: int) -> Image:
    base = rng.uniform(40, 215, 3)
    lum = _pink_noise(rng, height, width, rng.uniform(0.9, 1.4))
    chroma = _pink_noise(rng, height, width, 1.2)
    mix = rng.normal(0, 1, 3)
    canvas = base + rng.uniform(15, 45) * lum[:, :, None] + 12 * chroma[:, :, None] * mix
    yy, xx = np.mgrid[0:height, 0:width]
    g = rng.normal(0, 40, 3)
    canvas = canvas + (xx / width - 0.5)[:, :, None] * g + (yy / height - 0.5)[:, :, None] * g[::-1]
    _shapes(rng, height, width, canvas)
    texture = _pink_noise(rng, height, width, 0.6)
    canvas += rng.uniform(2, 10) * texture[:, :, None]
    return Image(np.clip(np.rint(canvas), 0, 255).astype(np.uint8))


def synthesize_corpus(out_dir, count: int, seed: int, min_size: int = 256, max_size: int = 512) -> list[Path]:
    """Write ``count`` PNG images to ``out_dir`` and return their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(count):
        rng = np.random.default_rng([seed, k])
        w, h = (int(v) for v in rng.integers(min_size, max_size + 1, 2))
        path = out_dir / f"img_{k:04d}.png"
        save_image(synth_image(rng, w, h), path)
        paths.append(path)
    return paths
