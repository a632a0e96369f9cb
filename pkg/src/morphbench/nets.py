"""Fixed feature nets around the generator.

Three small convnets share one trunk shape (stride-2 average pools down to
4x4, then one more conv, then flatten):

  * a frozen random perceptual net whose flat activations serve as the
    feature space for inversion losses,
  * a biometric embedder mapping images to unit vectors, trained with a
    margin contrastive objective so genuine/imposter cosine scores separate,
  * a one-shot encoder regressing an image back to the tied style vector
    that generated it, used to warm-start inversions.

The generator itself is never trained; these nets supply the measurement
and initialization structure the morphing experiments need.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .generator import broadcast_latent, map_latent, synthesize
from .optim import AdamState, adam_step
from .tensor import default_dtype


class NetTrainingError(RuntimeError):
    """Training diverged; carries the loss trace up to the failure."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class PerceptualParams:
    resolution: int
    feature_dim: int
    tensors: dict


@dataclass(frozen=True)
class BiometricParams:
    resolution: int
    embed_dim: int
    tensors: dict


@dataclass(frozen=True)
class EncoderParams:
    resolution: int
    latent_dim: int
    num_layers: int
    latent_scale: float
    tensors: dict


@dataclass(frozen=True)
class EmbedderTrainConfig:
    n_ids: int = 48
    imgs_per_id: int = 4
    sigma_id: float = 0.15
    margin: float = 0.5
    steps: int = 240
    batch_ids: int = 8
    lr: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class EncoderTrainConfig:
    pairs: int = 1024
    steps: int = 300
    batch: int = 24
    lr: float = 1e-3
    seed: int = 0


# ---------------------------------------------------------------------------
# shared trunk


def _trunk_plan(resolution):
    """(cin, cout, pool) per conv: pool to 4x4, then one non-pooled conv."""
    n_pool = int(np.log2(resolution)) - 2
    plan = []
    cin = 3
    for i in range(n_pool):
        cout = 16 if i == 0 else 32
        plan.append((cin, cout, True))
        cin = cout
    plan.append((cin, 32, False))
    return plan


def trunk_feature_dim(resolution):
    return 4 * 4 * _trunk_plan(resolution)[-1][1]


def _init_trunk(rng, resolution, dt):
    t = {}
    for i, (cin, cout, _) in enumerate(_trunk_plan(resolution)):
        t[f"c{i}_w"] = (rng.standard_normal((3, 3, cin, cout))
                        * np.sqrt(2.0 / (9 * cin))).astype(dt)
        t[f"c{i}_b"] = np.zeros(cout, dtype=dt)
    return t


def _build_trunk(x, weights, resolution):
    """x: (R,R,3) node; weights: name -> Node. Returns flat feature node."""
    if x.value.shape != (resolution, resolution, 3):
        raise ad.ShapeError(f"net expects {(resolution, resolution, 3)}, got {x.value.shape}")
    for i, (_, _, pool) in enumerate(_trunk_plan(resolution)):
        x = ad.leaky_relu(ad.conv2d(x, weights[f"c{i}_w"], weights[f"c{i}_b"]))
        if pool:
            x = ad.avgpool2x(x)
    return ad.reshape(x, (int(np.prod(x.value.shape)),))


def _const_weights(g, tensors):
    return {k: g.constant(k, v) for k, v in tensors.items()}


# ---------------------------------------------------------------------------
# perceptual net


def init_perceptual(seed, resolution=32):
    rng = np.random.default_rng(seed)
    return PerceptualParams(resolution=resolution,
                            feature_dim=trunk_feature_dim(resolution),
                            tensors=_init_trunk(rng, resolution, default_dtype()))


def build_features(g, p, x):
    """Feature node for an image node x, perceptual weights frozen."""
    return _build_trunk(x, _const_weights(g, p.tensors), p.resolution)


def perceptual_features(p, x):
    g = ad.Graph()
    return build_features(g, p, g.constant("x", x)).value


# ---------------------------------------------------------------------------
# biometric embedder


def init_embedder(seed, resolution=32, embed_dim=32):
    rng = np.random.default_rng(seed)
    dt = default_dtype()
    t = _init_trunk(rng, resolution, dt)
    fdim = trunk_feature_dim(resolution)
    t["head_w"] = (rng.standard_normal((fdim, embed_dim)) * np.sqrt(1.0 / fdim)).astype(dt)
    t["head_b"] = np.zeros(embed_dim, dtype=dt)
    return BiometricParams(resolution=resolution, embed_dim=embed_dim, tensors=t)


def _build_embedding(x, weights, resolution):
    feat = _build_trunk(x, weights, resolution)
    raw = ad.linear(feat, weights["head_w"], weights["head_b"])
    return ad.l2_normalize(raw)


def build_embedding(g, b, x):
    """Unit-norm embedding node for an image node, weights frozen."""
    return _build_embedding(x, _const_weights(g, b.tensors), b.resolution)


def embed(b, x):
    g = ad.Graph()
    return build_embedding(g, b, g.constant("x", x)).value


def match_score(u, v):
    """Cosine similarity of two unit embeddings, clipped into [-1, 1]."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"match_score: bad embedding shapes {u.shape}, {v.shape}")
    return float(np.clip(u @ v, -1.0, 1.0))


def train_embedder(gen, mapping, stats, config=EmbedderTrainConfig(), init=None):
    """Margin-contrastive training on synthetic identities.

    Pulls same-identity pairs toward cosine 1 and pushes different-identity
    pairs below the margin. Images are pre-rendered once; each step embeds
    two images for each of batch_ids identities.
    """
    b = init if init is not None else init_embedder(config.seed, gen.config.resolution)
    if config.steps == 0:
        return b, []
    rng = np.random.default_rng(config.seed + 1)
    cache = _identity_image_cache(gen, mapping, stats, config.n_ids,
                                  config.imgs_per_id, config.sigma_id, rng)
    params = dict(b.tensors)
    state = AdamState.init(params)
    trace = []
    for step in range(config.steps):
        ids = rng.choice(config.n_ids, size=config.batch_ids, replace=False)
        picks = [(i, *rng.choice(config.imgs_per_id, size=2, replace=False)) for i in ids]

        def build(g, lv):
            embs = []
            for k, (i, a, bidx) in enumerate(picks):
                embs.append((_build_embedding(g.constant(f"xa{k}", cache[i][a]), lv, b.resolution),
                             _build_embedding(g.constant(f"xb{k}", cache[i][bidx]), lv, b.resolution)))
            terms = []
            for ea, eb in embs:
                terms.append(ad.affine(ad.dot(ea, eb), -1.0, 1.0))  # 1 - cos, genuine pull
            n_gen = len(terms)
            imp = []
            for i in range(len(embs)):
                for j in range(i + 1, len(embs)):
                    imp.append(ad.clamp_min(ad.affine(ad.dot(embs[i][0], embs[j][0]),
                                                      1.0, -config.margin), 0.0))
            loss = ad.affine(_sum_nodes(terms), 1.0 / n_gen)
            return ad.add(loss, ad.affine(_sum_nodes(imp), 1.0 / len(imp)))

        try:
            loss, grads = ad.evaluate_and_backprop(build, params)
        except ad.NonFiniteError as e:
            raise NetTrainingError(f"embedder diverged at step {step}: {e}", trace) from e
        trace.append(loss)
        params, state = adam_step(params, grads, state, lr=config.lr)
    return replace(b, tensors=params), trace


def _identity_image_cache(gen, mapping, stats, n_ids, imgs_per_id, sigma_id, rng):
    cache = []
    L = gen.config.num_layers
    for _ in range(n_ids):
        w = map_latent(mapping, rng.standard_normal(mapping.latent_dim))
        imgs = []
        for _ in range(imgs_per_id):
            wi = w + sigma_id * stats.std * rng.standard_normal(w.shape[0])
            imgs.append(synthesize(gen, broadcast_latent(wi, L)))
        cache.append(imgs)
    return cache


def _sum_nodes(nodes):
    out = nodes[0]
    for n in nodes[1:]:
        out = ad.add(out, n)
    return out


# ---------------------------------------------------------------------------
# one-shot encoder


def init_encoder(seed, gen_config):
    rng = np.random.default_rng(seed)
    dt = default_dtype()
    res = gen_config.resolution
    t = _init_trunk(rng, res, dt)
    fdim = trunk_feature_dim(res)
    t["head_w"] = (rng.standard_normal((fdim, gen_config.latent_dim))
                   * np.sqrt(1.0 / fdim)).astype(dt)
    t["head_b"] = np.zeros(gen_config.latent_dim, dtype=dt)
    return EncoderParams(resolution=res, latent_dim=gen_config.latent_dim,
                         num_layers=gen_config.num_layers,
                         latent_scale=gen_config.latent_scale, tensors=t)


def train_encoder(gen, mapping, config=EncoderTrainConfig(), init=None):
    """Regression E(G(w)) -> w over tied latents, targets in unit scale.

    The head learns w / latent_scale (O(1) magnitudes); encode() multiplies
    the scale back in. Returns (params, per-step loss trace).
    """
    enc = init if init is not None else init_encoder(config.seed, gen.config)
    if config.steps == 0:
        return enc, []
    rng = np.random.default_rng(config.seed + 1)
    ws = map_latent(mapping, rng.standard_normal((config.pairs, mapping.latent_dim)))
    imgs = np.stack([synthesize(gen, broadcast_latent(w, gen.config.num_layers)) for w in ws])
    targets = (ws / enc.latent_scale).astype(default_dtype())

    params = dict(enc.tensors)
    state = AdamState.init(params)
    trace = []
    for step in range(config.steps):
        idx = rng.choice(config.pairs, size=min(config.batch, config.pairs), replace=False)

        def build(g, lv):
            preds = []
            for k, i in enumerate(idx):
                feat = _build_trunk(g.constant(f"x{k}", imgs[i]), lv, enc.resolution)
                pred = ad.linear(feat, lv["head_w"], lv["head_b"])
                preds.append(ad.sse_to_const(pred, targets[i]))
            return ad.affine(_sum_nodes(preds), 1.0 / (len(idx) * enc.latent_dim))

        try:
            loss, grads = ad.evaluate_and_backprop(build, params)
        except ad.NonFiniteError as e:
            raise NetTrainingError(f"encoder diverged at step {step}: {e}", trace) from e
        trace.append(loss)
        params, state = adam_step(params, grads, state, lr=config.lr)
    return replace(enc, tensors=params), trace


def encode(enc, x):
    """Image -> tied (L, d) latent stack, single forward pass."""
    g = ad.Graph()
    weights = _const_weights(g, enc.tensors)
    feat = _build_trunk(g.constant("x", x), weights, enc.resolution)
    pred = ad.linear(feat, weights["head_w"], weights["head_b"])
    return broadcast_latent(enc.latent_scale * pred.value, enc.num_layers)
