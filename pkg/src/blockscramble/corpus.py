"""Deterministic test-image corpus.

Synthetic images follow natural-image statistics: per-channel 1/f^alpha
spectra with strongly correlated channel phases, plus a few soft-edged
color patches so solvers and codecs see real structure. Everything is a
pure function of the seed, so experiment results reproduce exactly.

When scikit-image is installed, its bundled photographs are available as a
real-photo corpus for demos and cross-checks.
"""

from __future__ import annotations

import numpy as np

from .core import RasterImage


def synthetic_image(width: int, height: int, seed: int) -> RasterImage:
    """One naturalistic RGB image, deterministic per (width, height, seed)."""
    rng = np.random.default_rng(np.random.SeedSequence([0x5CA1E, seed]))
    alpha = rng.uniform(1.4, 2.0)

    # Synthesize on a doubled canvas and crop: the raw inverse FFT is
    # torus-periodic, and a wrap-continuous image would gift jigsaw solvers
    # fake seams (and hide real ones).
    bh, bw = 2 * height, 2 * width
    fy = np.fft.fftfreq(bh)[:, None]
    fx = np.fft.fftfreq(bw)[None, :]
    radius = np.hypot(fy, fx)
    radius[0, 0] = 1.0
    amplitude = radius ** (-alpha / 2.0)
    amplitude[0, 0] = 0.0

    base_phase = rng.uniform(0.0, 2.0 * np.pi, (bh, bw))
    channels = []
    for _ in range(3):
        phase = base_phase + rng.normal(0.0, 0.55, (bh, bw))
        field = np.fft.ifft2(amplitude * np.exp(1j * phase)).real
        field = field[:height, :width]
        field = field - field.mean()
        field /= field.std() + 1e-12
        channels.append(field)
    img = np.stack(channels, axis=-1)

    # Soft-edged color patches give the image objects with real boundaries.
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(rng.integers(2, 5)):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        ry = rng.uniform(height / 8, height / 2)
        rx = rng.uniform(width / 8, width / 2)
        d = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        patch = np.clip(1.0 - d, 0.0, 1.0) ** 2
        img += patch[:, :, None] * rng.uniform(-1.6, 1.6, 3)

    mean = rng.uniform(96, 160)
    scale = rng.uniform(42, 58) / (img.std() + 1e-12)
    out = np.clip(img * scale + mean, 0, 255)
    return RasterImage(out.astype(np.uint8))


def synthetic_corpus(count: int, width: int, height: int, seed: int = 0
                     ) -> list[tuple[str, RasterImage]]:
    """(image_id, image) pairs; ids encode the seed for traceability."""
    return [
        (f"synth-{seed}-{i:03d}", synthetic_image(width, height, seed * 1000 + i))
        for i in range(count)
    ]


def photo_corpus(width: int, height: int) -> list[tuple[str, RasterImage]]:
    """Center crops of scikit-image's bundled color photographs.

    Returns an empty list when scikit-image is not installed. Photos smaller
    than the requested crop are skipped.
    """
    try:
        from skimage import data
    except ImportError:
        return []
    names = ("astronaut", "chelsea", "coffee", "rocket",
             "hubble_deep_field", "immunohistochemistry")
    out = []
    for name in names:
        try:
            arr = np.asarray(getattr(data, name)())
        except Exception:
            continue
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            continue
        h, w = arr.shape[:2]
        if h < height or w < width:
            continue
        top, left = (h - height) // 2, (w - width) // 2
        out.append((f"photo-{name}", RasterImage(arr[top:top + height, left:left + width])))
    return out
