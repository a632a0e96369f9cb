"""Style-based image generator, desk scale.

A learned 4x4 constant is refined through log2(R)-1 stages of two styled
conv layers each (conv -> per-channel norm -> style scale/shift -> leaky
relu), with nearest-neighbour upsampling between stages and a 1x1 conv +
sigmoid head producing an RGB image in [0,1]. Each of the L = 2*(stages)
layers draws its style from its own row of an (L, d) latent stack, so rows
can be optimized independently.

Weights are random but carefully scaled, never trained. Two knobs shape the
latent geometry: mapped latents are shrunk by `latent_scale` so the L1
anchor in downstream losses stays small next to the image terms, and the
style affines are amplified by `style_gain` so those tiny latent offsets
still produce visually distinct outputs. The defaults were tuned by pilot
runs; the product latent_scale * style_gain is what sets visual diversity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .tensor import default_dtype


@dataclass(frozen=True)
class GeneratorConfig:
    resolution: int = 32
    latent_dim: int = 64
    num_layers: int = 8
    channels: tuple = (64, 64, 32, 16)
    style_gain: float = 200.0
    latent_scale: float = 0.002
    rgb_gain: float = 2.0
    mapping_hidden: int = 2

    @property
    def stages(self):
        return int(np.log2(self.resolution)) - 1

    def validate(self):
        r = self.resolution
        if r < 8 or (r & (r - 1)) != 0:
            raise ValueError(f"resolution must be a power of two >= 8, got {r}")
        if len(self.channels) != self.stages:
            raise ValueError(
                f"need {self.stages} channel counts for resolution {r}, got {len(self.channels)}")
        if self.num_layers != 2 * self.stages:
            raise ValueError(
                f"num_layers must be 2 per stage ({2 * self.stages}), got {self.num_layers}")
        if self.latent_dim < 1 or min(self.channels) < 1:
            raise ValueError("latent_dim and channels must be positive")


@dataclass(frozen=True)
class GeneratorParams:
    """Immutable weight set; tensors keyed by layer-qualified names."""

    config: GeneratorConfig
    tensors: dict


@dataclass(frozen=True)
class MappingParams:
    """MLP z -> w plus the output shrink factor shared with the generator."""

    latent_dim: int
    num_layers: int
    latent_scale: float
    tensors: dict


@dataclass(frozen=True)
class LatentStats:
    """Moments of the mapped latent distribution, estimated by sampling."""

    mean: np.ndarray
    std: np.ndarray
    n: int


def _layer_channels(config):
    """(in, out) channel pairs for each of the L styled conv layers."""
    pairs = []
    prev = config.channels[0]
    for ch in config.channels:
        pairs.append((prev, ch))
        pairs.append((ch, ch))
        prev = ch
    return pairs


def init_generator(seed, config=GeneratorConfig()):
    """Seeded fan-in-scaled weights; same seed gives bit-identical params."""
    config.validate()
    rng = np.random.default_rng(seed)
    dt = default_dtype()
    d = config.latent_dim
    t = {"const": rng.standard_normal((4, 4, config.channels[0])).astype(dt)}
    for l, (cin, cout) in enumerate(_layer_channels(config)):
        t[f"conv{l}_w"] = (rng.standard_normal((3, 3, cin, cout))
                           * np.sqrt(2.0 / (9 * cin))).astype(dt)
        t[f"conv{l}_b"] = np.zeros(cout, dtype=dt)
        # style affine: gain folded into the weight so synthesis is a plain linear map
        sg = config.style_gain / np.sqrt(d)
        t[f"style{l}_sw"] = (rng.standard_normal((d, cout)) * sg).astype(dt)
        t[f"style{l}_sb"] = np.ones(cout, dtype=dt)
        t[f"style{l}_tw"] = (rng.standard_normal((d, cout)) * sg).astype(dt)
        t[f"style{l}_tb"] = np.zeros(cout, dtype=dt)
    clast = config.channels[-1]
    t["rgb_w"] = (rng.standard_normal((1, 1, clast, 3))
                  * (config.rgb_gain / np.sqrt(clast))).astype(dt)
    t["rgb_b"] = np.zeros(3, dtype=dt)
    return GeneratorParams(config=config, tensors=t)


def init_mapping(seed, config=GeneratorConfig()):
    config.validate()
    rng = np.random.default_rng(seed)
    dt = default_dtype()
    d = config.latent_dim
    t = {}
    for i in range(config.mapping_hidden + 1):
        scale = np.sqrt(2.0 / d) if i < config.mapping_hidden else np.sqrt(1.0 / d)
        t[f"map{i}_w"] = (rng.standard_normal((d, d)) * scale).astype(dt)
        t[f"map{i}_b"] = np.zeros(d, dtype=dt)
    return MappingParams(latent_dim=d, num_layers=config.num_layers,
                         latent_scale=config.latent_scale, tensors=t)


def map_latent(mapping, z):
    """z (d,) or (n,d) -> w, plain numpy (no gradients ever flow through here)."""
    h = np.asarray(z, dtype=default_dtype())
    n_layers = len(mapping.tensors) // 2
    for i in range(n_layers):
        h = h @ mapping.tensors[f"map{i}_w"] + mapping.tensors[f"map{i}_b"]
        if i < n_layers - 1:
            h = np.where(h >= 0, h, 0.2 * h)
    return mapping.latent_scale * h


def map_and_average(mapping, n, seed):
    """LatentStats from n mapped standard-normal samples."""
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one sample, got {n}")
    rng = np.random.default_rng(seed)
    w = map_latent(mapping, rng.standard_normal((n, mapping.latent_dim)))
    dt = default_dtype()
    return LatentStats(mean=w.mean(axis=0).astype(dt), std=w.std(axis=0).astype(dt), n=n)


def broadcast_latent(w, num_layers):
    """Tie a single (d,) style vector across all L rows."""
    w = np.asarray(w, dtype=default_dtype())
    if w.ndim != 1:
        raise ValueError(f"expected a (d,) vector, got shape {w.shape}")
    return np.tile(w, (num_layers, 1))


def sample_identity(mapping, seed):
    """One z through the mapping net, broadcast to an (L, d) stack."""
    rng = np.random.default_rng(seed)
    w = map_latent(mapping, rng.standard_normal(mapping.latent_dim))
    return broadcast_latent(w, mapping.num_layers)


def check_latent(gen, latents):
    latents = np.asarray(latents, dtype=default_dtype())
    want = (gen.config.num_layers, gen.config.latent_dim)
    if latents.shape != want:
        raise ValueError(f"latent stack shape {latents.shape}, generator wants {want}")
    if not np.all(np.isfinite(latents)):
        raise ValueError("latent stack contains non-finite entries")
    return latents


def build_synthesis(g, gen, latents):
    """Append the synthesis graph to g; latents is an (L, d) Node. Returns image Node.

    Generator weights enter as constants: they are frozen after init, so no
    gradient work is ever spent on them.
    """
    cfg = gen.config
    t = gen.tensors
    if latents.value.shape != (cfg.num_layers, cfg.latent_dim):
        raise ad.ShapeError(f"latent stack shape {latents.value.shape}, generator wants "
                            f"{(cfg.num_layers, cfg.latent_dim)}")
    c = lambda name: g.constant(name, t[name])
    x = c("const")
    layer = 0
    for stage in range(cfg.stages):
        if stage > 0:
            x = ad.upsample2x(x)
        for _ in range(2):
            row = ad.take_row(latents, layer)
            s = ad.linear(row, c(f"style{layer}_sw"), c(f"style{layer}_sb"))
            sh = ad.linear(row, c(f"style{layer}_tw"), c(f"style{layer}_tb"))
            x = ad.conv2d(x, c(f"conv{layer}_w"), c(f"conv{layer}_b"))
            x = ad.channel_norm(x)
            x = ad.modulate(x, s, sh)
            x = ad.leaky_relu(x)
            layer += 1
    x = ad.conv2d(x, c("rgb_w"), c("rgb_b"))
    return ad.sigmoid(x)


def synthesize(gen, latents):
    """(L, d) stack -> (R, R, 3) image array in [0,1]. Pure and deterministic."""
    latents = check_latent(gen, latents)
    g = ad.Graph()
    return build_synthesis(g, gen, g.constant("w", latents)).value
