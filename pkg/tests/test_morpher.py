import numpy as np
import pytest

from morphbench import autodiff as ad
from morphbench import generator as sg
from morphbench import morpher, nets

QUICK = dict(steps=60)


def _target(gen, mapping, seed):
    w = sg.sample_identity(mapping, seed)
    return sg.synthesize(gen, w), w


def test_loss_weight_defaults():
    c = morpher.InversionConfig()
    assert (c.lambda_r, c.lambda_w, c.lambda_v, c.lambda_m) == (1.5, 0.5, 0.4, 200.0)
    assert morpher.BioMorphConfig().lambda_w == 3.0


def test_config_validation():
    for bad in [dict(lambda_r=-1), dict(steps=0), dict(mode="fancy"), dict(init="oracle")]:
        with pytest.raises(ValueError):
            morpher.InversionConfig(**bad).validate()
    with pytest.raises(ValueError):
        morpher.BioMorphConfig(lambda_bg=-0.1).validate()


def test_invert_rejects_thin_latent_stats(gen_default, mapping_default,
                                          perceptual_default):
    x, _ = _target(gen_default, mapping_default, 0)
    thin = sg.map_and_average(mapping_default, 10, 0)
    with pytest.raises(ValueError, match="1000"):
        morpher.invert(x, gen_default, perceptual_default, thin)


def test_invert_rejects_wrong_image_shape(gen_default, perceptual_default,
                                          stats_default):
    with pytest.raises(ad.ShapeError):
        morpher.invert(np.zeros((16, 16, 3), np.float32), gen_default,
                       perceptual_default, stats_default)


def test_invert_given_init_requires_latents(gen_default, mapping_default,
                                            perceptual_default, stats_default):
    x, _ = _target(gen_default, mapping_default, 0)
    with pytest.raises(ValueError, match="given"):
        morpher.invert(x, gen_default, perceptual_default, stats_default,
                       config=morpher.InversionConfig(init="given"))


def test_exact_solution_start_zeroes_image_terms(gen_default, mapping_default,
                                                 perceptual_default, stats_default):
    # starting exactly at the generating stack: every image-side term is 0
    # and the total is purely the L1 anchor
    x, w0 = _target(gen_default, mapping_default, 5)
    cfg = morpher.InversionConfig(init="given", steps=1)
    r = morpher.invert(x, gen_default, perceptual_default, stats_default,
                       config=cfg, init_latents=w0)
    first = r.trace[0]
    assert first["perceptual"] == 0.0
    assert first["msssim"] == 0.0
    assert first["pixel"] == 0.0
    wbar = sg.broadcast_latent(stats_default.mean, 8)
    l1 = np.float32(np.abs(w0 - wbar).sum()) * np.float32(0.5)
    assert first["latent_l1"] == float(l1)
    assert first["total"] == first["latent_l1"]
    assert r.init_kind == "given"


def test_trace_shape_and_exact_decomposition(gen_default, mapping_default,
                                             perceptual_default, stats_default,
                                             encoder_default):
    x, _ = _target(gen_default, mapping_default, 1)
    r = morpher.invert(x, gen_default, perceptual_default, stats_default,
                       encoder=encoder_default, config=morpher.InversionConfig(**QUICK))
    assert len(r.trace) == 60
    assert r.term_names == ("perceptual", "msssim", "pixel", "latent_l1")
    for entry in r.trace:
        total = np.float32(0.0)
        for name in r.term_names:
            total = np.float32(total + np.float32(entry[name]))
        assert float(total) == entry["total"]  # exact 32-bit left fold


def test_final_loss_never_exceeds_initial(gen_default, mapping_default,
                                          perceptual_default, stats_default,
                                          encoder_default):
    for seed in range(3):
        x, _ = _target(gen_default, mapping_default, 40 + seed)
        r = morpher.invert(x, gen_default, perceptual_default, stats_default,
                           encoder=encoder_default,
                           config=morpher.InversionConfig(**QUICK))
        assert r.final_loss <= r.initial_loss
        assert r.final_loss == min(e["total"] for e in r.trace)


def test_invert_falls_back_to_mean_latent_without_encoder(
        gen_default, mapping_default, perceptual_default, stats_default):
    x, _ = _target(gen_default, mapping_default, 2)
    r = morpher.invert(x, gen_default, perceptual_default, stats_default,
                       encoder=None, config=morpher.InversionConfig(steps=1))
    assert r.init_kind == "mean_latent"


def test_encoder_init_reported(gen_default, mapping_default, perceptual_default,
                               stats_default, encoder_default):
    x, _ = _target(gen_default, mapping_default, 2)
    r = morpher.invert(x, gen_default, perceptual_default, stats_default,
                       encoder=encoder_default, config=morpher.InversionConfig(steps=1))
    assert r.init_kind == "encoder"


def test_pixel_only_mode_drops_other_terms(gen_default, mapping_default,
                                           perceptual_default, stats_default):
    x, _ = _target(gen_default, mapping_default, 3)
    cfg = morpher.InversionConfig(mode="pixel_only", init="mean_latent", steps=20)
    r = morpher.invert(x, gen_default, perceptual_default, stats_default, config=cfg)
    for entry in r.trace:
        assert entry["perceptual"] == 0.0
        assert entry["msssim"] == 0.0
        assert entry["latent_l1"] == 0.0
        assert entry["total"] == entry["pixel"]


def test_tied_mode_keeps_rows_identical(gen_default, mapping_default,
                                        perceptual_default, stats_default):
    x, _ = _target(gen_default, mapping_default, 4)
    cfg = morpher.InversionConfig(mode="tied_latent", init="mean_latent", steps=20)
    r = morpher.invert(x, gen_default, perceptual_default, stats_default, config=cfg)
    for row in r.latents:
        np.testing.assert_array_equal(row, r.latents[0])


def test_nan_target_aborts_with_step_index(gen_default, perceptual_default,
                                           stats_default):
    bad = np.full((32, 32, 3), np.nan, np.float32)
    cfg = morpher.InversionConfig(mode="pixel_only", init="mean_latent", steps=5)
    with pytest.raises(morpher.MorphError) as err:
        morpher.invert(bad, gen_default, perceptual_default, stats_default, config=cfg)
    assert err.value.step == 0


def test_midpoint_of_identical_stacks_is_reconstruction(gen_default, mapping_default):
    _, w = _target(gen_default, mapping_default, 6)
    np.testing.assert_array_equal(morpher.midpoint_morph(gen_default, w, w),
                                  sg.synthesize(gen_default, w))


def test_midpoint_is_symmetric(gen_default, mapping_default):
    _, w1 = _target(gen_default, mapping_default, 7)
    _, w2 = _target(gen_default, mapping_default, 8)
    np.testing.assert_array_equal(morpher.midpoint_morph(gen_default, w1, w2),
                                  morpher.midpoint_morph(gen_default, w2, w1))


def test_midpoint_rejects_mismatched_stacks(gen_default):
    with pytest.raises(ad.ShapeError):
        morpher.midpoint_latent(np.zeros((8, 64)), np.zeros((4, 64)))


def test_midpoint_sits_between_endpoints(gen_default, mapping_default):
    # morph closer to both endpoints than they are to each other
    wins = 0
    for pair in range(50):
        _, w1 = _target(gen_default, mapping_default, 100 + 2 * pair)
        _, w2 = _target(gen_default, mapping_default, 101 + 2 * pair)
        a = sg.synthesize(gen_default, w1)
        b = sg.synthesize(gen_default, w2)
        m = morpher.midpoint_morph(gen_default, w1, w2)
        gap = float(np.mean((a - b) ** 2))
        wins += (float(np.mean((m - a) ** 2)) < gap
                 and float(np.mean((m - b) ** 2)) < gap)
    assert wins >= 45  # >= 90% of 50


def test_bio_degenerate_pair_moves_toward_the_identity(
        gen_default, mapping_default, embedder_default, stats_default):
    x, _ = _target(gen_default, mapping_default, 9)
    cfg = morpher.BioMorphConfig(steps=60, init="mean_latent")
    morph, r = morpher.bio_morph(x, x, gen_default, embedder_default, stats_default,
                                 config=cfg)
    assert r.init_kind == "mean_latent"
    for entry in r.trace:
        assert entry["bio_a"] == entry["bio_b"]  # same source twice
        assert entry["background"] == 0.0
    # mean-latent start has L1 exactly 0, so total_final <= total_initial
    # forces the embedding distance itself not to grow
    best = min(r.trace, key=lambda e: e["total"])
    assert best["bio_a"] <= r.trace[0]["bio_a"]
    e1 = nets.embed(embedder_default, x)
    em = nets.embed(embedder_default, morph)
    assert float(np.linalg.norm(em - e1)) ** 2 <= r.trace[0]["bio_a"] + 1e-6


def test_bio_morph_improves_objective(gen_default, mapping_default, embedder_default,
                                      stats_default, encoder_default):
    x1, _ = _target(gen_default, mapping_default, 10)
    x2, _ = _target(gen_default, mapping_default, 11)
    cfg = morpher.BioMorphConfig(steps=60)
    morph, r = morpher.bio_morph(x1, x2, gen_default, embedder_default, stats_default,
                                 encoder=encoder_default, config=cfg)
    assert r.init_kind == "encoder"
    assert len(r.trace) == 60
    assert r.final_loss < r.initial_loss
    assert morph.shape == (32, 32, 3)


def test_bio_objective_matches_trace(gen_default, mapping_default, embedder_default,
                                     stats_default):
    x1, _ = _target(gen_default, mapping_default, 12)
    x2, _ = _target(gen_default, mapping_default, 13)
    cfg = morpher.BioMorphConfig(steps=1, init="mean_latent")
    _, r = morpher.bio_morph(x1, x2, gen_default, embedder_default, stats_default,
                             config=cfg)
    total, values = morpher.bio_objective(gen_default, embedder_default, stats_default,
                                          r.latents, x1, x2, config=cfg)
    assert total == r.trace[0]["total"]
    assert values["bio_a"] == r.trace[0]["bio_a"]


def test_mask_validation(gen_default, mapping_default, embedder_default, stats_default):
    x1, _ = _target(gen_default, mapping_default, 14)
    x2, _ = _target(gen_default, mapping_default, 15)
    with pytest.raises(ad.ShapeError):
        morpher.bio_morph_masked(x1, x2, np.ones((16, 16), np.float32), gen_default,
                                 embedder_default, stats_default)
    with pytest.raises(ValueError, match="binary"):
        morpher.bio_morph_masked(x1, x2, np.full((32, 32), 0.5, np.float32),
                                 gen_default, embedder_default, stats_default)


def test_zero_mask_equals_unmasked(gen_default, mapping_default, embedder_default,
                                   stats_default):
    x1, _ = _target(gen_default, mapping_default, 16)
    x2, _ = _target(gen_default, mapping_default, 17)
    cfg = morpher.BioMorphConfig(steps=10, init="mean_latent")
    _, plain = morpher.bio_morph(x1, x2, gen_default, embedder_default, stats_default,
                                 config=cfg)
    _, masked = morpher.bio_morph_masked(x1, x2, np.zeros((32, 32), np.float32),
                                         gen_default, embedder_default, stats_default,
                                         config=cfg)
    assert [e["total"] for e in masked.trace] == [e["total"] for e in plain.trace]


def test_full_mask_without_identity_terms_is_pixel_inversion(
        gen_default, mapping_default, embedder_default, perceptual_default,
        stats_default):
    # limiting case: background term over every pixel with the bio terms and
    # the L1 anchor off is the same objective as a pixel-only inversion
    x1, _ = _target(gen_default, mapping_default, 18)
    x2, _ = _target(gen_default, mapping_default, 19)
    steps = 15
    bio_cfg = morpher.BioMorphConfig(lambda_w=0.0, lambda_bg=1.5, steps=steps,
                                     init="mean_latent")
    _, masked = morpher.bio_morph_masked(x1, x2, np.ones((32, 32), np.float32),
                                         gen_default, embedder_default, stats_default,
                                         config=bio_cfg, x_ref=x1,
                                         include_identity_terms=False)
    inv_cfg = morpher.InversionConfig(lambda_r=1.5, mode="pixel_only",
                                      init="mean_latent", steps=steps,
                                      lr=bio_cfg.lr, beta2=bio_cfg.beta2)
    pix = morpher.invert(x1, gen_default, perceptual_default, stats_default,
                         config=inv_cfg)
    got = np.array([e["total"] for e in masked.trace])
    want = np.array([e["total"] for e in pix.trace])
    np.testing.assert_allclose(got, want, rtol=1e-4)


def test_masked_background_beats_unmasked(gen_default, mapping_default,
                                          embedder_default, stats_default,
                                          encoder_default):
    # fixed pair: constraining the border pixels to x1 must reduce the
    # border-region error relative to the unconstrained morph
    x1, _ = _target(gen_default, mapping_default, 24)
    x2, _ = _target(gen_default, mapping_default, 25)
    mask = np.zeros((32, 32), np.float32)
    mask[:6, :] = 1  # top band plays the background
    cfg = morpher.BioMorphConfig(steps=120)
    plain, _ = morpher.bio_morph(x1, x2, gen_default, embedder_default, stats_default,
                                 encoder=encoder_default, config=cfg)
    shaped, _ = morpher.bio_morph_masked(x1, x2, mask, gen_default, embedder_default,
                                         stats_default, encoder=encoder_default,
                                         config=cfg, x_ref=x1)
    m3 = mask[:, :, None]
    err_plain = float(np.sum((m3 * (plain - x1)) ** 2))
    err_shaped = float(np.sum((m3 * (shaped - x1)) ** 2))
    assert err_shaped < err_plain


def test_embedding_midpoint_deviation(gen_default, mapping_default, embedder_default):
    x1, _ = _target(gen_default, mapping_default, 20)
    x2, _ = _target(gen_default, mapping_default, 21)
    assert morpher.embedding_midpoint_deviation(embedder_default, x1, x1, x1) == 0.0
    d = morpher.embedding_midpoint_deviation(embedder_default, x1, x1, x2)
    assert d >= 0.0


def test_morph_record_mmmss_is_min():
    r = morpher.MorphRecord.make(1, 2, 0.8, 0.6, np.zeros((2, 2, 3)), "midpoint")
    assert r.mmmss == 0.6
    r2 = morpher.MorphRecord.make(1, 2, -0.3, 0.9, np.zeros((2, 2, 3)), "bio")
    assert r2.mmmss == -0.3
