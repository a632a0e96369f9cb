"""Build one morph per method for a single pair of identities, entirely
through the Python API, and write a picture strip plus the match scores.

Run from the repo root: python3 demos/morph_pair.py
Takes ~40s: most of it is training the two small nets and the two inversions.
"""

import numpy as np

from morphbench import generator as sg
from morphbench import morpher, nets
from morphbench.tensor import save_png

print("building generator and training nets (one-time, ~20s)...")
gcfg = sg.GeneratorConfig()
gen = sg.init_generator(11, gcfg)
mapping = sg.init_mapping(12, gcfg)
stats = sg.map_and_average(mapping, 2000, 13)
perceptual = nets.init_perceptual(14, gcfg.resolution)
embedder, _ = nets.train_embedder(gen, mapping, stats,
                                  nets.EmbedderTrainConfig(seed=15))
encoder, _ = nets.train_encoder(gen, mapping, nets.EncoderTrainConfig(seed=16))

w1 = sg.sample_identity(mapping, 4001)
w2 = sg.sample_identity(mapping, 4002)
x1, x2 = sg.synthesize(gen, w1), sg.synthesize(gen, w2)

print("midpoint method: invert both images, average the style stacks...")
inv = morpher.InversionConfig(steps=250)
r1 = morpher.invert(x1, gen, perceptual, stats, encoder=encoder, config=inv)
r2 = morpher.invert(x2, gen, perceptual, stats, encoder=encoder, config=inv)
mid = sg.synthesize(gen, morpher.midpoint_latent(r1.latents, r2.latents))

print("dual-biometric method: descend on both embedding distances...")
bio_img, r = morpher.bio_morph(x1, x2, gen, embedder, stats, encoder=encoder)

e1, e2 = nets.embed(embedder, x1), nets.embed(embedder, x2)
for name, img in (("midpoint", mid), ("bio", bio_img)):
    em = nets.embed(embedder, img)
    sa, sb = float(em @ e1), float(em @ e2)
    print(f"  {name:8s} score vs A {sa:+.3f}  vs B {sb:+.3f}  mmmss {min(sa, sb):+.3f}")

dev = morpher.embedding_midpoint_deviation(embedder, bio_img, x1, x2)
print(f"  bio morph embedding vs average of source embeddings: {dev:.4f} apart")

strip = np.concatenate([x1, mid, bio_img, x2], axis=1)
save_png("morph_strip.png", strip)
print("wrote morph_strip.png  (source A | midpoint | bio | source B)")
