"""On-disk artifact layout: a directory per object, one MTEN file per tensor,
one manifest.json describing kind, dims, and provenance (seeds, configs).

Float32 tensors round-trip exactly, so artifacts reloaded from disk behave
bit-identically to freshly built ones; that is what makes rerun determinism
checkable at the byte level."""

from __future__ import annotations

import json
import os
from dataclasses import asdict

import numpy as np

from .generator import (GeneratorConfig, GeneratorParams, LatentStats, MappingParams)
from .nets import BiometricParams, EncoderParams, PerceptualParams
from .tensor import load_mten, save_mten
from .vulneval import Population, PopulationConfig


class ArtifactError(RuntimeError):
    """Missing or malformed artifact directory."""


def save_bundle(path, kind, tensors, meta):
    os.makedirs(path, exist_ok=True)
    manifest = {"kind": kind, "tensors": sorted(tensors), "meta": meta}
    for name, arr in tensors.items():
        save_mten(os.path.join(path, f"{name}.mten"), arr)
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_bundle(path, want_kind=None):
    mpath = os.path.join(path, "manifest.json")
    if not os.path.isfile(mpath):
        raise ArtifactError(f"no artifact at {path} (manifest.json missing)")
    with open(mpath) as f:
        manifest = json.load(f)
    if want_kind is not None and manifest.get("kind") != want_kind:
        raise ArtifactError(f"artifact at {path} is a {manifest.get('kind')!r}, "
                            f"expected {want_kind!r}")
    tensors = {name: load_mten(os.path.join(path, f"{name}.mten"))
               for name in manifest["tensors"]}
    return manifest["kind"], tensors, manifest["meta"]


def _gen_config_from_meta(meta):
    cfg = dict(meta["config"])
    cfg["channels"] = tuple(cfg["channels"])
    return GeneratorConfig(**cfg)


def save_generator(path, gen, seed=None):
    save_bundle(path, "generator", gen.tensors,
                {"config": asdict(gen.config), "seed": seed})


def load_generator(path):
    _, tensors, meta = load_bundle(path, "generator")
    return GeneratorParams(config=_gen_config_from_meta(meta), tensors=tensors)


def save_mapping(path, mapping, seed=None):
    save_bundle(path, "mapping", mapping.tensors,
                {"latent_dim": mapping.latent_dim, "num_layers": mapping.num_layers,
                 "latent_scale": mapping.latent_scale, "seed": seed})


def load_mapping(path):
    _, tensors, meta = load_bundle(path, "mapping")
    return MappingParams(latent_dim=meta["latent_dim"], num_layers=meta["num_layers"],
                         latent_scale=meta["latent_scale"], tensors=tensors)


def save_stats(path, stats, seed=None):
    save_bundle(path, "latent_stats", {"mean": stats.mean, "std": stats.std},
                {"n": stats.n, "seed": seed})


def load_stats(path):
    _, tensors, meta = load_bundle(path, "latent_stats")
    return LatentStats(mean=tensors["mean"], std=tensors["std"], n=meta["n"])


def save_perceptual(path, p, seed=None):
    save_bundle(path, "perceptual", p.tensors,
                {"resolution": p.resolution, "feature_dim": p.feature_dim, "seed": seed})


def load_perceptual(path):
    _, tensors, meta = load_bundle(path, "perceptual")
    return PerceptualParams(resolution=meta["resolution"],
                            feature_dim=meta["feature_dim"], tensors=tensors)


def save_embedder(path, b, train_meta=None):
    save_bundle(path, "embedder", b.tensors,
                {"resolution": b.resolution, "embed_dim": b.embed_dim,
                 "training": train_meta})


def load_embedder(path):
    _, tensors, meta = load_bundle(path, "embedder")
    return BiometricParams(resolution=meta["resolution"], embed_dim=meta["embed_dim"],
                           tensors=tensors)


def save_encoder(path, e, train_meta=None):
    save_bundle(path, "encoder", e.tensors,
                {"resolution": e.resolution, "latent_dim": e.latent_dim,
                 "num_layers": e.num_layers, "latent_scale": e.latent_scale,
                 "training": train_meta})


def load_encoder(path):
    _, tensors, meta = load_bundle(path, "encoder")
    return EncoderParams(resolution=meta["resolution"], latent_dim=meta["latent_dim"],
                         num_layers=meta["num_layers"], latent_scale=meta["latent_scale"],
                         tensors=tensors)


def save_population(path, pop):
    save_bundle(path, "population",
                {"base": pop.base, "variants": pop.variants, "images": pop.images,
                 "embeddings": pop.embeddings,
                 "representative": pop.representative.astype(np.float32)},
                {"config": asdict(pop.config)})


def load_population(path):
    _, tensors, meta = load_bundle(path, "population")
    return Population(config=PopulationConfig(**meta["config"]),
                      base=tensors["base"], variants=tensors["variants"],
                      images=tensors["images"], embeddings=tensors["embeddings"],
                      representative=tensors["representative"].astype(int))
