"""Multi-scale structural similarity, differentiable and exactly symmetric.

Built from graph ops so it can sit inside a loss. Conventions follow the
common TF-style reference implementation: 11x11 gaussian window (sigma 1.5),
valid padding, stability constants (0.01)^2 and (0.03)^2 for unit dynamic
range, per-scale contrast-structure terms with the final scale contributing
full SSIM. The canonical 5-scale exponents are truncated to however many
scales the image supports and renormalized to sum to 1.

Every cross-image op is commutative in its (a, b) operands, so swapping the
inputs is bit-identical, and feeding the same image twice yields exactly 1.0.
Per-scale means are clamped at 0 before the fractional powers.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (Graph, ShapeError, add, affine, avgpool2x, clamp_min,
                       depthwise_blur, div, mean_all, mul, pow_const, square, sub)

WINDOW = 11
SIGMA = 1.5
WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def gaussian_kernel(size=WINDOW, sigma=SIGMA):
    """Normalized 2-D gaussian window."""
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def feasible_scales(h, w, window=WINDOW, max_scales=len(WEIGHTS)):
    """How many pyramid levels an HxW image supports.

    A level needs both dims >= window for the valid-padded blur; descending
    needs both dims even so 2x average pooling is exact.
    """
    m = 0
    while m < max_scales and min(h, w) >= window:
        m += 1
        if m == max_scales or h % 2 or w % 2:
            break
        h //= 2
        w //= 2
    return m


def _ssim_maps(a, b, kernel, c1, c2):
    """Per-pixel (ssim, cs) map nodes for one scale."""
    mu_a = depthwise_blur(a, kernel)
    mu_b = depthwise_blur(b, kernel)
    mu_aa = mul(mu_a, mu_a)
    mu_bb = mul(mu_b, mu_b)
    mu_ab = mul(mu_a, mu_b)
    var_a = sub(depthwise_blur(square(a), kernel), mu_aa)
    var_b = sub(depthwise_blur(square(b), kernel), mu_bb)
    cov = sub(depthwise_blur(mul(a, b), kernel), mu_ab)

    # 2xy + C over x^2 + y^2 + C; both sides commute bitwise under swap
    lum = div(affine(mu_ab, 2.0, c1), affine(add(mu_aa, mu_bb), 1.0, c1))
    cs = div(affine(cov, 2.0, c2), affine(add(var_a, var_b), 1.0, c2))
    return mul(lum, cs), cs


def ms_ssim_nodes(a, b, window=WINDOW, sigma=SIGMA, k1=0.01, k2=0.03,
                  max_scales=len(WEIGHTS)):
    """Scalar MS-SSIM node for two (H,W,C) image nodes on one graph."""
    if a.value.shape != b.value.shape or a.value.ndim != 3:
        raise ShapeError(f"ms_ssim: need matching (H,W,C) images, got "
                         f"{a.value.shape} vs {b.value.shape}")
    h, w, _ = a.value.shape
    m = feasible_scales(h, w, window, max_scales)
    if m == 0:
        raise ShapeError(f"ms_ssim: image {h}x{w} smaller than the {window}x{window} window")
    weights = np.asarray(WEIGHTS[:m], dtype=np.float64)
    weights = weights / weights.sum()
    kernel = gaussian_kernel(window, sigma)
    c1 = float(k1) ** 2
    c2 = float(k2) ** 2

    out = None
    for s in range(m):
        ssim_map, cs_map = _ssim_maps(a, b, kernel, c1, c2)
        level = mean_all(ssim_map if s == m - 1 else cs_map)
        term = pow_const(clamp_min(level, 0.0), float(weights[s]))
        out = term if out is None else mul(out, term)
        if s < m - 1:
            a = avgpool2x(a)
            b = avgpool2x(b)
    return out


def ms_ssim(a, b, **kwargs):
    """Float MS-SSIM of two arrays; no gradients, throwaway graph."""
    g = Graph()
    return float(ms_ssim_nodes(g.constant("a", a), g.constant("b", b), **kwargs).value)
