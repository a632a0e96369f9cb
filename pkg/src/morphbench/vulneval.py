"""Vulnerability evaluation: population, thresholds, match rates, campaigns.

A synthetic population stands in for a face dataset: each identity is a base
style vector plus per-image perturbations at a fixed fraction of the latent
std, embedded once at build time. Scores are cosine similarities of unit
embeddings, and the acceptance rule is `score >= t` everywhere, which keeps
the relative-match-rate identity (rmmr = mmpmr + frr) exact at any t.

Thresholds are empirical quantiles of the observed score lists, never fitted
distributions. All counting here is deliberately simple; the test suite pins
it against independent brute-force counts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .generator import broadcast_latent, map_latent
from .morpher import (BioMorphConfig, InversionConfig, MorphError, MorphRecord,
                      bio_morph, invert, midpoint_latent)
from .nets import embed
from .tensor import default_dtype


class EvalError(ValueError):
    """Degenerate inputs for a rate/threshold computation."""


@dataclass(frozen=True)
class PopulationConfig:
    n_ids: int = 200
    imgs_per_id: int = 4
    sigma_id: float = 0.15
    seed: int = 0

    def validate(self):
        if self.sigma_id <= 0:
            raise EvalError(f"sigma_id must be positive, got {self.sigma_id}")
        if self.n_ids < 1:
            raise EvalError(f"need at least one identity, got {self.n_ids}")
        if self.imgs_per_id < 2:
            raise EvalError(f"need >= 2 images per identity for genuine pairs, "
                            f"got {self.imgs_per_id}")


@dataclass
class Population:
    config: PopulationConfig
    base: np.ndarray          # (n, d) identity style vectors
    variants: np.ndarray      # (n, k, d) per-image style vectors
    images: np.ndarray        # (n, k, R, R, 3)
    embeddings: np.ndarray    # (n, k, e) unit rows
    representative: np.ndarray  # (n,) index of the variant nearest its base

    @property
    def n_ids(self):
        return self.base.shape[0]

    def rep_image(self, i):
        return self.images[i, self.representative[i]]

    def rep_embedding(self, i):
        return self.embeddings[i, self.representative[i]]


@dataclass
class ScoreSet:
    genuine: np.ndarray
    imposter: np.ndarray
    mmmss: np.ndarray
    genuine_ids: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))
    imposter_ids: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))
    mmmss_ids: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))


@dataclass
class RocCurve:
    thresholds: np.ndarray
    frr: np.ndarray
    mmpmr: np.ndarray
    far: np.ndarray  # empty when no imposter scores were supplied


def build_population(gen, mapping, bio, stats, config=PopulationConfig()):
    """Synthesize and embed the whole population. Deterministic per seed."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, k = config.n_ids, config.imgs_per_id
    d = mapping.latent_dim
    dt = default_dtype()
    from .generator import synthesize  # local import keeps module edges tidy

    base = np.empty((n, d), dtype=dt)
    variants = np.empty((n, k, d), dtype=dt)
    res = gen.config.resolution
    images = np.empty((n, k, res, res, 3), dtype=dt)
    embeddings = np.empty((n, k, bio.embed_dim), dtype=dt)
    for i in range(n):
        base[i] = map_latent(mapping, rng.standard_normal(d))
        for j in range(k):
            variants[i, j] = base[i] + config.sigma_id * stats.std * rng.standard_normal(d)
            images[i, j] = synthesize(gen, broadcast_latent(variants[i, j],
                                                            gen.config.num_layers))
            embeddings[i, j] = embed(bio, images[i, j])
    rep = np.argmin(np.linalg.norm(variants - base[:, None, :], axis=2), axis=1)
    return Population(config=config, base=base, variants=variants, images=images,
                      embeddings=embeddings, representative=rep)


def population_scores(pop):
    """All genuine and imposter cosine scores, with subject id pairs."""
    n, k, e = pop.embeddings.shape
    flat = pop.embeddings.reshape(n * k, e)
    gram = np.clip(flat @ flat.T, -1.0, 1.0)
    ids = np.repeat(np.arange(n), k)
    iu, ju = np.triu_indices(n * k, 1)
    same = ids[iu] == ids[ju]
    genuine = gram[iu[same], ju[same]]
    imposter = gram[iu[~same], ju[~same]]
    if n < 2:
        imposter = np.zeros(0, dtype=gram.dtype)
        imp_ids = np.zeros((0, 2), int)
    else:
        imp_ids = np.stack([ids[iu[~same]], ids[ju[~same]]], axis=1)
    gen_ids = np.stack([ids[iu[same]], ids[ju[same]]], axis=1)
    return ScoreSet(genuine=genuine, imposter=imposter, mmmss=np.zeros(0, genuine.dtype),
                    genuine_ids=gen_ids, imposter_ids=imp_ids)


def select_accomplices(pop, n_friends, seed):
    """For each identity, the strongest match among n_friends sampled others.

    Ties resolve to the lower identity index; the friend draw is seeded and
    the scan order is ascending index, so the outcome is reproducible.
    """
    n = pop.n_ids
    if not 1 <= n_friends <= n - 1:
        raise EvalError(f"n_friends must be in [1, {n - 1}], got {n_friends}")
    rng = np.random.default_rng(seed)
    reps = np.stack([pop.rep_embedding(i) for i in range(n)])
    pairs = []
    for i in range(n):
        others = np.delete(np.arange(n), i)
        friends = np.sort(rng.choice(others, size=n_friends, replace=False))
        scores = np.clip(reps[friends] @ reps[i], -1.0, 1.0)
        pairs.append((i, int(friends[np.argmax(scores)])))
    return pairs


# ---------------------------------------------------------------------------
# thresholds and rates


def _scores_1d(scores, what):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if s.size == 0:
        raise EvalError(f"cannot compute {what} from an empty score list")
    return s


def threshold_at_far(imposter, target_far):
    """Smallest observed score t with FAR(t) <= target; max+1 if none."""
    s = np.sort(_scores_1d(imposter, "a FAR-anchored threshold"))
    if not 0 < target_far <= 1:
        raise EvalError(f"target FAR must be in (0, 1], got {target_far}")
    uniq, first = np.unique(s, return_index=True)
    far = (s.size - first) / s.size
    ok = far <= target_far
    if not ok.any():
        return float(s[-1] + 1.0)
    return float(uniq[np.argmax(ok)])


def threshold_at_frr(genuine, target_frr):
    """Largest observed score t with FRR(t) <= target."""
    s = np.sort(_scores_1d(genuine, "an FRR-anchored threshold"))
    if not 0 <= target_frr <= 1:
        raise EvalError(f"target FRR must be in [0, 1], got {target_frr}")
    uniq, first = np.unique(s, return_index=True)
    frr = first / s.size
    ok = np.where(frr <= target_frr)[0]
    return float(uniq[ok[-1]])


def far_at(imposter, t):
    s = _scores_1d(imposter, "FAR")
    return float(np.count_nonzero(s >= t) / s.size)


def frr_at(genuine, t):
    s = _scores_1d(genuine, "FRR")
    return float(np.count_nonzero(s < t) / s.size)


def mmpmr_at(mmmss, t):
    s = _scores_1d(mmmss, "MMPMR")
    return float(np.count_nonzero(s >= t) / s.size)


def rates_at(scores, t):
    """All four rates at threshold t; requires every score list non-empty."""
    if not np.isfinite(t):
        raise EvalError(f"threshold must be finite, got {t}")
    far = far_at(scores.imposter, t)
    frr = frr_at(scores.genuine, t)
    mmpmr = mmpmr_at(scores.mmmss, t)
    return {"threshold": float(t), "far": far, "frr": frr,
            "mmpmr": mmpmr, "rmmr": mmpmr + frr}


def roc_mmpmr_frr(scores):
    """(FRR, MMPMR) staircase over the union of observed scores + sentinels."""
    genuine = np.sort(_scores_1d(scores.genuine, "a ROC sweep"))
    mmmss = np.sort(_scores_1d(scores.mmmss, "a ROC sweep"))
    pool = [genuine, mmmss]
    imposter = np.asarray(scores.imposter, dtype=np.float64).reshape(-1)
    if imposter.size:
        imposter = np.sort(imposter)
        pool.append(imposter)
    allscores = np.concatenate(pool)
    ts = np.unique(allscores)
    ts = np.concatenate([[ts[0] - 1.0], ts, [ts[-1] + 1.0]])
    frr = np.searchsorted(genuine, ts, side="left") / genuine.size
    mmpmr = (mmmss.size - np.searchsorted(mmmss, ts, side="left")) / mmmss.size
    if imposter.size:
        far = (imposter.size - np.searchsorted(imposter, ts, side="left")) / imposter.size
    else:
        far = np.zeros(0)
    return RocCurve(thresholds=ts, frr=frr, mmpmr=mmpmr, far=far)


# ---------------------------------------------------------------------------
# campaign


@dataclass(frozen=True)
class CampaignConfig:
    method: str = "midpoint"          # midpoint | bio
    n_friends: int = 50
    max_pairs: int = 12               # attack pairs actually morphed
    far_anchors: tuple = (1e-2, 1e-5)
    frr_anchors: tuple = (0.0073,)
    selection_seed: int = 1234

    def validate(self):
        if self.method not in ("midpoint", "bio"):
            raise EvalError(f"method must be 'midpoint' or 'bio', got {self.method!r}")
        if self.max_pairs < 0:
            raise EvalError("max_pairs must be >= 0")


@dataclass
class CampaignResult:
    records: list
    failures: list
    scores: ScoreSet
    report: dict
    roc: RocCurve
    histograms: dict


def _rates_partial(scores, t):
    """rates_at that tolerates missing imposter/morph lists (None, not error)."""
    out = {"threshold": float(t), "frr": frr_at(scores.genuine, t)}
    out["far"] = far_at(scores.imposter, t) if scores.imposter.size else None
    if scores.mmmss.size:
        out["mmpmr"] = mmpmr_at(scores.mmmss, t)
        out["rmmr"] = out["mmpmr"] + out["frr"]
    else:
        out["mmpmr"] = None
        out["rmmr"] = None
    return out


def _anchor_entries(scores, far_anchors, frr_anchors):
    """Threshold + rates per anchor; refuses FAR anchors finer than 1/N."""
    entries = []
    n_imp = scores.imposter.size
    for a in far_anchors:
        entry = {"kind": "far", "anchor": float(a)}
        if n_imp == 0 or a < 1.0 / n_imp:
            entry["refused"] = True
            entry["why"] = (f"anchor {a} below resolution 1/{n_imp} of the imposter set"
                            if n_imp else "no imposter scores")
        else:
            entry["refused"] = False
            entry.update(_rates_partial(scores, threshold_at_far(scores.imposter, a)))
        entries.append(entry)
    for a in frr_anchors:
        entry = {"kind": "frr", "anchor": float(a), "refused": False}
        entry.update(_rates_partial(scores, threshold_at_frr(scores.genuine, a)))
        entries.append(entry)
    return entries


def _one_morph(pair, pop, gen, perceptual, bio, stats, encoder, inv_config, bio_config,
               method):
    i, j = pair
    x1, x2 = pop.rep_image(i), pop.rep_image(j)
    if method == "midpoint":
        r1 = invert(x1, gen, perceptual, stats, encoder=encoder, config=inv_config)
        r2 = invert(x2, gen, perceptual, stats, encoder=encoder, config=inv_config)
        from .generator import synthesize
        morph = synthesize(gen, midpoint_latent(r1.latents, r2.latents))
    else:
        morph, _ = bio_morph(x1, x2, gen, bio, stats, encoder=encoder, config=bio_config)
    em = embed(bio, morph)
    sa = float(np.clip(em @ pop.rep_embedding(i), -1.0, 1.0))
    sb = float(np.clip(em @ pop.rep_embedding(j), -1.0, 1.0))
    return MorphRecord.make(i, j, sa, sb, morph, method)


_WORKER_CTX = {}


def _campaign_worker_init(ctx):
    _WORKER_CTX.update(ctx)


def _campaign_job(pair):
    c = _WORKER_CTX
    try:
        return ("ok", _one_morph(pair, c["pop"], c["gen"], c["perceptual"], c["bio"],
                                 c["stats"], c["encoder"], c["inv_config"],
                                 c["bio_config"], c["method"]))
    except MorphError as e:
        return ("failed", {"pair": list(pair), "step": e.step, "error": str(e)})


def run_attack_campaign(pop, pairs, gen, perceptual, bio, stats, encoder=None,
                        campaign=CampaignConfig(), inv_config=InversionConfig(),
                        bio_config=BioMorphConfig(), workers=1):
    """Morph the given pairs, score them, and assemble the full report.

    Per-pair failures are collected, not fatal. Results are deterministic
    for fixed seeds regardless of the worker count: jobs are independent and
    their order is preserved.
    """
    campaign.validate()
    pairs = list(pairs)[:campaign.max_pairs]
    ctx = {"pop": pop, "gen": gen, "perceptual": perceptual, "bio": bio,
           "stats": stats, "encoder": encoder, "inv_config": inv_config,
           "bio_config": bio_config, "method": campaign.method}
    if workers and workers > 1 and len(pairs) > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(workers, initializer=_campaign_worker_init,
                                          initargs=(ctx,)) as pool:
            outcomes = pool.map(_campaign_job, pairs)
    else:
        _campaign_worker_init(ctx)
        outcomes = [_campaign_job(p) for p in pairs]

    records = [r for kind, r in outcomes if kind == "ok"]
    failures = [r for kind, r in outcomes if kind == "failed"]

    scores = population_scores(pop)
    scores.mmmss = np.asarray([r.mmmss for r in records], dtype=np.float64)
    scores.mmmss_ids = (np.asarray([[r.subject_a, r.subject_b] for r in records], int)
                        if records else np.zeros((0, 2), int))

    report = {
        "method": campaign.method,
        "population": asdict(pop.config),
        "campaign": {**asdict(campaign), "far_anchors": list(campaign.far_anchors),
                     "frr_anchors": list(campaign.frr_anchors)},
        "inversion": asdict(inv_config),
        "bio": asdict(bio_config),
        "n_genuine": int(scores.genuine.size),
        "n_imposter": int(scores.imposter.size),
        "n_morphs": int(scores.mmmss.size),
        "n_failures": len(failures),
        "failures": failures,
        "separation": float(scores.genuine.mean() - scores.imposter.mean())
        if scores.imposter.size else None,
        "mmpmr_undefined": not records,
        "anchors": _anchor_entries(scores, campaign.far_anchors, campaign.frr_anchors),
    }
    roc = roc_mmpmr_frr(scores) if records else None
    histograms = score_histograms(scores)
    return CampaignResult(records=records, failures=failures, scores=scores,
                          report=report, roc=roc, histograms=histograms)


# ---------------------------------------------------------------------------
# artifact writers (plot-ready CSV, JSON report)

HIST_BINS = 100


def score_histograms(scores):
    edges = np.linspace(-1.0, 1.0, HIST_BINS + 1)
    out = {"edges": edges}
    for kind in ("genuine", "imposter", "mmmss"):
        vals = getattr(scores, kind)
        out[kind] = (np.histogram(vals, bins=edges)[0] if vals.size
                     else np.zeros(HIST_BINS, dtype=int))
    return out


def _fmt(x):
    if x is None:
        return ""
    return repr(float(x))


def write_scores_csv(path, scores):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["kind", "subject_a", "subject_b", "score"])
        for kind in ("genuine", "imposter", "mmmss"):
            vals = getattr(scores, kind)
            ids = getattr(scores, f"{kind}_ids")
            for (a, b), s in zip(ids, vals):
                w.writerow([kind, int(a), int(b), _fmt(s)])


def write_roc_csv(path, roc):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "frr", "mmpmr", "far"])
        have_far = roc.far.size > 0
        for i, t in enumerate(roc.thresholds):
            w.writerow([_fmt(t), _fmt(roc.frr[i]), _fmt(roc.mmpmr[i]),
                        _fmt(roc.far[i]) if have_far else ""])


def write_histogram_csv(path, histograms):
    edges = histograms["edges"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_left", "bin_right", "genuine", "imposter", "mmmss"])
        for i in range(len(edges) - 1):
            w.writerow([_fmt(edges[i]), _fmt(edges[i + 1]),
                        int(histograms["genuine"][i]), int(histograms["imposter"][i]),
                        int(histograms["mmmss"][i])])


def write_report_json(path, report):
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
