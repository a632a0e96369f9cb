import numpy as np
import pytest

from morphbench import autodiff as ad
from morphbench import generator as sg

SMALL = sg.GeneratorConfig(resolution=8, latent_dim=8, num_layers=4, channels=(8, 8))


def test_same_seed_bit_identical():
    a, b = sg.init_generator(5), sg.init_generator(5)
    assert a.tensors.keys() == b.tensors.keys()
    for k in a.tensors:
        np.testing.assert_array_equal(a.tensors[k], b.tensors[k])


def test_stage_and_layer_arithmetic():
    cfg = sg.GeneratorConfig()
    assert cfg.stages == 4 and cfg.num_layers == 8
    gen = sg.init_generator(0)
    styled = [k for k in gen.tensors if k.startswith("conv") and k.endswith("_w")]
    assert len(styled) == 8
    img = sg.synthesize(gen, np.zeros((8, 64), np.float32))
    assert img.shape == (32, 32, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        sg.GeneratorConfig(resolution=24).validate()          # not a power of two
    with pytest.raises(ValueError):
        sg.GeneratorConfig(resolution=4).validate()           # too small
    with pytest.raises(ValueError):
        sg.GeneratorConfig(channels=(64, 64)).validate()      # wrong stage count
    with pytest.raises(ValueError):
        sg.GeneratorConfig(num_layers=7).validate()           # must be 2 per stage


def test_different_seeds_give_different_images(mapping_default):
    w = sg.sample_identity(mapping_default, 0)
    a = sg.synthesize(sg.init_generator(1), w)
    b = sg.synthesize(sg.init_generator(2), w)
    assert float(np.mean((a - b) ** 2)) > 0


def test_output_range_for_100_random_latents(gen_default, mapping_default):
    lo, hi = 1.0, 0.0
    for seed in range(100):
        img = sg.synthesize(gen_default, sg.sample_identity(mapping_default, seed))
        lo, hi = min(lo, float(img.min())), max(hi, float(img.max()))
    assert lo >= 0.0 and hi <= 1.0


def test_synthesize_is_deterministic(gen_default, mapping_default):
    w = sg.sample_identity(mapping_default, 3)
    np.testing.assert_array_equal(sg.synthesize(gen_default, w),
                                  sg.synthesize(gen_default, w))


def test_tied_stack_is_broadcast_of_single_vector(mapping_default):
    w = sg.map_latent(mapping_default, np.random.default_rng(0).standard_normal(64))
    stack = sg.broadcast_latent(w, 8)
    assert stack.shape == (8, 64)
    for row in stack:
        np.testing.assert_array_equal(row, stack[0])


def test_early_rows_control_larger_scale_than_late_rows(
        gen_default, mapping_default, stats_default):
    # same perturbation applied to the first vs the last style row; early
    # layers act on coarse features so they should move the image more
    mse_first, mse_last = [], []
    scale = float(np.linalg.norm(stats_default.std))
    for seed in range(20):
        w = sg.sample_identity(mapping_default, seed)
        rng = np.random.default_rng(1000 + seed)
        delta = rng.standard_normal(64).astype(np.float32)
        delta *= scale / np.linalg.norm(delta)
        base = sg.synthesize(gen_default, w)
        for row, out in ((0, mse_first), (7, mse_last)):
            wp = w.copy()
            wp[row] += delta
            out.append(float(np.mean((sg.synthesize(gen_default, wp) - base) ** 2)))
    ratio = np.mean(mse_first) / np.mean(mse_last)
    print(f"\nfirst-row vs last-row perturbation MSE ratio over 20 seeds: {ratio:.2f}")
    assert ratio > 1.0


def test_linear_path_continuity(gen_default, mapping_default):
    w1 = sg.sample_identity(mapping_default, 21)
    w2 = sg.sample_identity(mapping_default, 22)
    ts = np.arange(0.0, 1.0 + 1e-9, 0.05)
    imgs = [sg.synthesize(gen_default, (1 - t) * w1 + t * w2) for t in ts]
    step_mse = np.array([float(np.mean((imgs[i + 1] - imgs[i]) ** 2))
                         for i in range(len(imgs) - 1)])
    assert step_mse.max() <= 10.0 * np.median(step_mse)


def test_gradient_through_synthesis_matches_finite_differences():
    gen = sg.init_generator(9, SMALL)
    target = sg.synthesize(gen, np.full((4, 8), 0.001, np.float32))
    w0 = 0.002 * np.random.default_rng(0).standard_normal((4, 8))

    def build(g, lv):
        return ad.mse(sg.build_synthesis(g, gen, lv["w"]), g.constant("t", target))

    _, got = ad.evaluate_and_backprop(build, {"w": w0}, dtype=np.float64)
    fd = ad.finite_difference_grad(build, {"w": w0}, h=1e-6)
    denom = np.maximum(np.abs(fd["w"]), 1e-4)
    assert float(np.max(np.abs(got["w"] - fd["w"]) / denom)) < 1e-3


def test_check_latent_rejects_bad_stacks(gen_default):
    with pytest.raises(ValueError):
        sg.check_latent(gen_default, np.zeros((7, 64), np.float32))
    bad = np.zeros((8, 64), np.float32)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        sg.check_latent(gen_default, bad)


def test_map_and_average_single_sample(mapping_default):
    stats = sg.map_and_average(mapping_default, 1, 77)
    z = np.random.default_rng(77).standard_normal((1, 64))
    np.testing.assert_array_equal(stats.mean, sg.map_latent(mapping_default, z)[0])
    np.testing.assert_array_equal(stats.std, np.zeros(64, np.float32))
    assert stats.n == 1


def test_map_and_average_rejects_zero_samples(mapping_default):
    with pytest.raises(ValueError):
        sg.map_and_average(mapping_default, 0, 0)


def test_map_and_average_deterministic(mapping_default):
    a = sg.map_and_average(mapping_default, 500, 3)
    b = sg.map_and_average(mapping_default, 500, 3)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.std, b.std)


def test_mean_estimate_tightens_like_sqrt_n(mapping_default):
    # same seed stream: successive doublings shrink the estimate shift ~1/sqrt(n)
    d1 = np.linalg.norm(sg.map_and_average(mapping_default, 1000, 5).mean
                        - sg.map_and_average(mapping_default, 2000, 5).mean)
    d2 = np.linalg.norm(sg.map_and_average(mapping_default, 4000, 5).mean
                        - sg.map_and_average(mapping_default, 8000, 5).mean)
    assert 1.3 < d1 / d2 < 3.1


def test_sample_identity_properties(mapping_default):
    stacks = [sg.sample_identity(mapping_default, s) for s in range(3)]
    for s in stacks:
        assert s.shape == (8, 64)
        for row in s:
            np.testing.assert_array_equal(row, s[0])
    assert not np.array_equal(stacks[0], stacks[1])
    assert not np.array_equal(stacks[1], stacks[2])
    np.testing.assert_array_equal(sg.sample_identity(mapping_default, 0), stacks[0])
