"""Latent inversion and the two morph constructions.

Inversion fits a per-layer style stack to a target image by minimizing

    perceptual + msssim + pixel + latent_l1

where the first two form the feature-space distance, the pixel term is a
weighted mean squared error, and the L1 term anchors the stack to the mean
latent. Midpoint morphing just synthesizes the elementwise mean of two
recovered stacks. The dual-embedding morph skips reconstruction entirely
and descends on the sum of squared embedding distances to both sources,
optionally plus a background-reconstruction term against a mask.

Every optimization records a per-step trace of each loss term; the reported
total is the float32 left-fold sum of the terms in the order above, so the
decomposition is exact, not approximate. Results keep the best-so-far
iterate, which makes final <= initial loss a guarantee rather than a hope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .generator import broadcast_latent, build_synthesis, check_latent, synthesize
from .msssim import ms_ssim_nodes
from .nets import build_embedding, build_features, embed, encode, perceptual_features
from .optim import AdamState, adam_step
from .tensor import default_dtype

MODES = ("full", "pixel_only", "tied_latent")
INITS = ("encoder", "mean_latent", "given")


class MorphError(RuntimeError):
    """Numeric failure mid-optimization; carries the step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class InversionConfig:
    lambda_r: float = 1.5
    lambda_w: float = 0.5
    lambda_v: float = 0.4
    lambda_m: float = 200.0
    steps: int = 500
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    mode: str = "full"
    init: str = "encoder"

    def validate(self):
        if min(self.lambda_r, self.lambda_w, self.lambda_v, self.lambda_m) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")


@dataclass(frozen=True)
class BioMorphConfig:
    lambda_w: float = 3.0
    lambda_bg: float = 1.5
    steps: int = 300
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    init: str = "encoder"

    def validate(self):
        if self.lambda_w < 0 or self.lambda_bg < 0:
            raise ValueError("loss weights must be non-negative")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")


@dataclass
class InversionResult:
    latents: np.ndarray
    image: np.ndarray
    trace: list
    init_kind: str
    term_names: tuple

    @property
    def initial_loss(self):
        return self.trace[0]["total"]

    @property
    def final_loss(self):
        return min(step["total"] for step in self.trace)


@dataclass(frozen=True)
class MorphRecord:
    """One attack instance: two subjects, their images, the morph, the scores."""

    subject_a: int
    subject_b: int
    score_a: float
    score_b: float
    mmmss: float
    morph: np.ndarray
    method: str

    @classmethod
    def make(cls, subject_a, subject_b, score_a, score_b, morph, method):
        return cls(subject_a=subject_a, subject_b=subject_b, score_a=score_a,
                   score_b=score_b, mmmss=min(score_a, score_b), morph=morph,
                   method=method)


def _check_image(x, resolution, what="image"):
    x = np.asarray(x, dtype=default_dtype())
    if x.shape != (resolution, resolution, 3):
        raise ad.ShapeError(f"{what} shape {x.shape}, expected {(resolution, resolution, 3)}")
    return x


def _check_stats(stats):
    if stats.n < 1000:
        raise ValueError(f"mean latent estimated from {stats.n} samples; need >= 1000")


def _resolve_init(cfg_init, encoder, x_images, stats, gen, init_latents):
    """Starting stack plus the name of what actually supplied it."""
    L = gen.config.num_layers
    if cfg_init == "given":
        if init_latents is None:
            raise ValueError("init 'given' needs explicit starting latents")
        return check_latent(gen, init_latents).copy(), "given"
    if cfg_init == "encoder" and encoder is not None:
        stacks = [encode(encoder, x) for x in x_images]
        return np.mean(stacks, axis=0, dtype=default_dtype()), "encoder"
    return broadcast_latent(stats.mean, L), "mean_latent"


def _fold_terms(terms):
    """Left-fold add of ordered (name, node) pairs; the float32 total."""
    total = terms[0][1]
    for _, node in terms[1:]:
        total = ad.add(total, node)
    return total


TERM_NAMES_EQ1 = ("perceptual", "msssim", "pixel", "latent_l1")
TERM_NAMES_EQ5 = ("bio_a", "bio_b", "background", "latent_l1")


def _run_descent(w0, step_fn, steps, lr, beta1, beta2, eps, term_names):
    """Adam over a latent array; keeps the best iterate seen.

    step_fn(latent) -> (term value dict, total, grad array). The trace has
    exactly one entry per step, evaluated before that step's update.
    """
    params = {"w": w0}
    state = AdamState.init(params)
    trace = []
    best_loss, best_w = np.inf, w0
    for step in range(steps):
        try:
            values, total, grad = step_fn(params["w"])
        except ad.NonFiniteError as e:
            raise MorphError(f"non-finite loss at step {step}: {e}", step=step) from e
        entry = {name: values.get(name, 0.0) for name in term_names}
        entry["total"] = total
        trace.append(entry)
        if total < best_loss:
            best_loss, best_w = total, params["w"]
        params, state = adam_step(params, {"w": grad}, state,
                                  lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    return best_w, trace


def invert(x, gen, perceptual, stats, encoder=None, config=InversionConfig(),
           init_latents=None):
    """Recover a style stack whose synthesis matches x."""
    config.validate()
    _check_stats(stats)
    res = gen.config.resolution
    x = _check_image(x, res, "target image")
    wbar = broadcast_latent(stats.mean, gen.config.num_layers)
    w0, init_kind = _resolve_init(config.init, encoder, [x], stats, gen, init_latents)

    tied = config.mode == "tied_latent"
    pixel_only = config.mode == "pixel_only"
    feats_x = None if pixel_only else perceptual_features(perceptual, x)

    def step_fn(w):
        g = ad.Graph()
        wnode = g.variable("w", w)
        stack = ad.broadcast_rows(wnode, gen.config.num_layers) if tied else wnode
        img = build_synthesis(g, gen, stack)
        xnode = g.constant("x", x)
        terms = []
        if not pixel_only:
            fg = build_features(g, perceptual, img)
            terms.append(("perceptual",
                          ad.affine(ad.mse(fg, g.constant("fx", feats_x)), config.lambda_v)))
            terms.append(("msssim",
                          ad.affine(ms_ssim_nodes(img, xnode), -config.lambda_m,
                                    config.lambda_m)))
        terms.append(("pixel", ad.affine(ad.mse(img, xnode), config.lambda_r)))
        if not pixel_only:
            terms.append(("latent_l1",
                          ad.affine(ad.l1_to_const(stack, wbar), config.lambda_w)))
        total = _fold_terms(terms)
        g.backward(total)
        values = {name: float(node.value) for name, node in terms}
        return values, float(total.value), wnode.grad

    w_start = w0.mean(axis=0) if tied else w0
    best_w, trace = _run_descent(w_start, step_fn, config.steps, config.lr,
                                 config.beta1, config.beta2, config.eps, TERM_NAMES_EQ1)
    best_stack = broadcast_latent(best_w, gen.config.num_layers) if tied else best_w
    return InversionResult(latents=best_stack, image=synthesize(gen, best_stack),
                           trace=trace, init_kind=init_kind, term_names=TERM_NAMES_EQ1)


def midpoint_latent(w1, w2):
    w1 = np.asarray(w1, dtype=default_dtype())
    w2 = np.asarray(w2, dtype=default_dtype())
    if w1.shape != w2.shape:
        raise ad.ShapeError(f"latent stacks disagree: {w1.shape} vs {w2.shape}")
    return (w1 + w2) / 2


def midpoint_morph(gen, w1, w2):
    """Synthesize the elementwise-mean stack. Symmetric bit-for-bit."""
    return synthesize(gen, midpoint_latent(w1, w2))


def bio_objective(gen, bio, stats, latents, x1, x2, config=BioMorphConfig(),
                  mask=None, x_ref=None):
    """Evaluate the dual-embedding objective at a fixed stack (no gradient)."""
    values, total, _ = _bio_step(gen, bio, stats, x1, x2, config, mask, x_ref,
                                 include_identity_terms=True)(
        check_latent(gen, latents), want_grad=False)
    return total, values


def _bio_step(gen, bio, stats, x1, x2, config, mask, x_ref, include_identity_terms):
    """Build the per-step evaluation closure shared by bio_morph and bio_objective."""
    res = gen.config.resolution
    e1 = embed(bio, x1)
    e2 = embed(bio, x2)
    wbar = broadcast_latent(stats.mean, gen.config.num_layers)
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != (res, res):
            raise ad.ShapeError(f"mask shape {mask.shape}, expected {(res, res)}")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask must be binary (0/1 entries)")
        n_bg = float(mask.sum()) * 3
        mask3 = np.repeat(mask[:, :, None], 3, axis=2).astype(default_dtype())
        ref = _check_image(x1 if x_ref is None else x_ref, res, "reference image")
        masked_ref = mask3 * ref
    else:
        n_bg = 0.0

    def step_fn(w, want_grad=True):
        g = ad.Graph()
        wnode = g.variable("w", w)
        img = build_synthesis(g, gen, wnode)
        terms = []
        if include_identity_terms:
            eg = build_embedding(g, bio, img)
            terms.append(("bio_a", ad.sse_to_const(eg, e1)))
            terms.append(("bio_b", ad.sse_to_const(eg, e2)))
        if mask is not None and n_bg > 0:
            masked_img = ad.mul(img, g.constant("mask", mask3))
            terms.append(("background",
                          ad.affine(ad.sse_to_const(masked_img, masked_ref),
                                    config.lambda_bg / n_bg)))
        terms.append(("latent_l1",
                      ad.affine(ad.l1_to_const(wnode, wbar), config.lambda_w)))
        total = _fold_terms(terms)
        if want_grad:
            g.backward(total)
        values = {name: float(node.value) for name, node in terms}
        return values, float(total.value), wnode.grad

    return step_fn


def bio_morph(x1, x2, gen, bio, stats, encoder=None, config=BioMorphConfig(),
              mask=None, x_ref=None, include_identity_terms=True):
    """Descend on embedding distance to both sources at once.

    The sources are never reconstructed; only their embeddings constrain the
    result. Returns (morph image, InversionResult).
    """
    config.validate()
    _check_stats(stats)
    res = gen.config.resolution
    x1 = _check_image(x1, res, "first image")
    x2 = _check_image(x2, res, "second image")
    w0, init_kind = _resolve_init(config.init, encoder, [x1, x2], stats, gen, None)
    step_fn = _bio_step(gen, bio, stats, x1, x2, config, mask, x_ref,
                        include_identity_terms)
    best_w, trace = _run_descent(w0, step_fn, config.steps, config.lr,
                                 config.beta1, config.beta2, config.eps, TERM_NAMES_EQ5)
    result = InversionResult(latents=best_w, image=synthesize(gen, best_w),
                             trace=trace, init_kind=init_kind, term_names=TERM_NAMES_EQ5)
    return result.image, result


def bio_morph_masked(x1, x2, mask, gen, bio, stats, encoder=None,
                     config=BioMorphConfig(), x_ref=None, include_identity_terms=True):
    """Dual-embedding morph plus background reconstruction against x_ref."""
    return bio_morph(x1, x2, gen, bio, stats, encoder=encoder, config=config,
                     mask=mask, x_ref=x_ref,
                     include_identity_terms=include_identity_terms)


def embedding_midpoint_deviation(bio, x_morph, x1, x2):
    """How far the morph's embedding sits from the average of the sources'.

    A measured statistic only: embeddings of morphs do not generally land on
    the embedding midpoint, and nothing here assumes they do.
    """
    em = embed(bio, x_morph)
    e1 = embed(bio, x1)
    e2 = embed(bio, x2)
    return float(np.linalg.norm(em - (e1 + e2) / 2))
