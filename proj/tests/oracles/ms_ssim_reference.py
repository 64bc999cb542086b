"""Reference MS-SSIM values for the deterministic fixtures in tests/support/fixtures.hpp.

Per-scale SSIM comes from tf.image.ssim (11x11 Gaussian, sigma 1.5, valid
filtering) in float64; scales are joined by 2x2 average pooling with floor and
combined as prod(max(ssim_i, 0) ** w_i).
"""
import numpy as np
import tensorflow as tf

WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
SHAPES = ((256, 256), (256, 256), (200, 230))


def noise(h, w, salt):
    y, x = np.meshgrid(np.arange(h, dtype=np.uint64), np.arange(w, dtype=np.uint64), indexing="ij")
    v = (y * np.uint64(7919) + x * np.uint64(104729) + np.uint64(salt * 31337)) * np.uint64(2654435761)
    v = v & np.uint64(0xFFFFFFFF)
    return v.astype(np.float64) / 4294967296.0 - 0.5


def fixture(k):
    h, w = SHAPES[k]
    y, x = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    a = 0.5 + 0.3 * np.sin(0.05 * (k + 1) * x + 0.031 * y) * np.cos(0.043 * y) + 0.15 * noise(h, w, 1 + k)
    b = a + (0.05 + 0.05 * k) * noise(h, w, 11 + k) + 0.02 * np.sin(0.2 * x)
    return a, b


def pool(img):
    h, w = img.shape[0] // 2, img.shape[1] // 2
    img = img[: 2 * h, : 2 * w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim(a, b):
    out = 1.0
    for i, w in enumerate(WEIGHTS):
        if i:
            a, b = pool(a), pool(b)
        s = float(tf.image.ssim(tf.constant(a[..., None]), tf.constant(b[..., None]), max_val=1.0,
                                filter_size=11, filter_sigma=1.5, k1=0.01, k2=0.03))
        out *= max(s, 0.0) ** w
    return out


if __name__ == "__main__":
    for k in range(len(SHAPES)):
        a, b = fixture(k)
        print(f"{k} {ms_ssim(a, b):.15g} {float(tf.image.ssim(tf.constant(a[..., None]), tf.constant(b[..., None]), max_val=1.0)):.15g}")
