#!/usr/bin/env python3
"""Regenerates the synthetic test images under tests/fixtures/.

Images mix 1/f noise (natural-image power spectrum), soft shapes and
gradients. Output is deterministic for a given seed.
"""
import argparse
import pathlib

import numpy as np
from PIL import Image


def pink_noise(rng, n, alpha=1.0):
    fy = np.fft.fftfreq(n)[:, None]
    fx = np.fft.fftfreq(n)[None, :]
    f = np.sqrt(fx * fx + fy * fy)
    f[0, 0] = 1.0
    spectrum = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / f**alpha
    spectrum[0, 0] = 0
    x = np.real(np.fft.ifft2(spectrum))
    return (x - x.mean()) / (x.std() + 1e-12)


def scene(rng, n):
    yy, xx = np.mgrid[0:n, 0:n] / n
    img = 0.5 + 0.12 * pink_noise(rng, n)
    angle = rng.uniform(0, 2 * np.pi)
    img += 0.25 * (np.cos(angle) * (xx - 0.5) + np.sin(angle) * (yy - 0.5))
    for _ in range(rng.integers(2, 5)):
        cx, cy = rng.uniform(0.15, 0.85, size=2)
        rad = rng.uniform(0.06, 0.22)
        d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        edge = 1.0 / (1.0 + np.exp((d - rad) * n / 1.5))
        img += rng.uniform(-0.35, 0.35) * edge
    return np.clip(img, 0.02, 0.98)


def save(path, img):
    Image.fromarray(np.round(img * 255).astype(np.uint8), mode="L").save(path, optimize=False)


def save_formats(out):
    """Tiny images with known samples for the decoder tests."""
    out.mkdir(parents=True, exist_ok=True)
    rgb = np.array([[[255, 0, 0], [0, 255, 0]], [[0, 0, 255], [51, 102, 153]]], dtype=np.uint8)
    Image.fromarray(rgb).save(out / "rgb2x2.png")
    Image.fromarray(np.dstack([rgb, np.full((2, 2), 128, np.uint8)])).save(out / "rgba2x2.png")
    Image.fromarray(rgb).quantize(colors=4, method=Image.Quantize.FASTOCTREE).save(out / "palette2x2.png")
    deep = np.array([[0, 65535], [32768, 1000]], dtype=np.uint16)
    Image.fromarray(deep).save(out / "gray16_2x2.png")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default=str(pathlib.Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    out = pathlib.Path(args.out_dir)
    (out / "train128").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for k in range(8):
        save(out / "train128" / f"scene{k}.png", scene(rng, 128))
    save(out / "target64.png", scene(rng, 64))
    save_formats(out / "formats")


if __name__ == "__main__":
    main()
