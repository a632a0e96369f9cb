import json

import numpy as np
import pytest

from morphbench import artifacts, generator as sg, nets, vulneval


def _tensors_equal(a, b):
    assert sorted(a) == sorted(b)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k], err_msg=k)


def test_generator_round_trip(tmp_path, gen_default):
    p = tmp_path / "gen"
    artifacts.save_generator(p, gen_default, seed=11)
    back = artifacts.load_generator(p)
    assert back.config == gen_default.config
    assert isinstance(back.config.channels, tuple)
    _tensors_equal(back.tensors, gen_default.tensors)


def test_reloaded_generator_synthesizes_identically(tmp_path, gen_default,
                                                    mapping_default):
    p = tmp_path / "gen"
    artifacts.save_generator(p, gen_default, seed=11)
    back = artifacts.load_generator(p)
    w = sg.sample_identity(mapping_default, 123)
    np.testing.assert_array_equal(sg.synthesize(back, w),
                                  sg.synthesize(gen_default, w))


def test_mapping_round_trip(tmp_path, mapping_default):
    p = tmp_path / "map"
    artifacts.save_mapping(p, mapping_default, seed=12)
    back = artifacts.load_mapping(p)
    assert back.latent_dim == mapping_default.latent_dim
    assert back.num_layers == mapping_default.num_layers
    assert back.latent_scale == mapping_default.latent_scale
    _tensors_equal(back.tensors, mapping_default.tensors)


def test_stats_round_trip(tmp_path, stats_default):
    p = tmp_path / "stats"
    artifacts.save_stats(p, stats_default, seed=13)
    back = artifacts.load_stats(p)
    assert back.n == stats_default.n
    np.testing.assert_array_equal(back.mean, stats_default.mean)
    np.testing.assert_array_equal(back.std, stats_default.std)


def test_perceptual_round_trip(tmp_path, perceptual_default):
    p = tmp_path / "per"
    artifacts.save_perceptual(p, perceptual_default, seed=14)
    back = artifacts.load_perceptual(p)
    assert back.resolution == perceptual_default.resolution
    assert back.feature_dim == perceptual_default.feature_dim
    _tensors_equal(back.tensors, perceptual_default.tensors)


def test_embedder_round_trip_keeps_scores(tmp_path, embedder_default, gen_default,
                                          mapping_default):
    p = tmp_path / "emb"
    artifacts.save_embedder(p, embedder_default, train_meta={"steps": 240})
    back = artifacts.load_embedder(p)
    x = sg.synthesize(gen_default, sg.sample_identity(mapping_default, 7))
    np.testing.assert_array_equal(nets.embed(back, x), nets.embed(embedder_default, x))
    meta = json.loads((p / "manifest.json").read_text())["meta"]
    assert meta["training"] == {"steps": 240}


def test_encoder_round_trip(tmp_path, encoder_default, gen_default, mapping_default):
    p = tmp_path / "enc"
    artifacts.save_encoder(p, encoder_default)
    back = artifacts.load_encoder(p)
    assert back.latent_scale == encoder_default.latent_scale
    x = sg.synthesize(gen_default, sg.sample_identity(mapping_default, 9))
    np.testing.assert_array_equal(nets.encode(back, x),
                                  nets.encode(encoder_default, x))


def test_population_round_trip(tmp_path, population_small):
    p = tmp_path / "pop"
    artifacts.save_population(p, population_small)
    back = artifacts.load_population(p)
    assert back.config == population_small.config
    assert back.representative.dtype.kind == "i"
    np.testing.assert_array_equal(back.representative, population_small.representative)
    np.testing.assert_array_equal(back.embeddings, population_small.embeddings)
    s1 = vulneval.population_scores(population_small)
    s2 = vulneval.population_scores(back)
    np.testing.assert_array_equal(s1.genuine, s2.genuine)


def test_missing_artifact(tmp_path):
    with pytest.raises(artifacts.ArtifactError, match="manifest.json missing"):
        artifacts.load_bundle(tmp_path / "nope")


def test_kind_mismatch(tmp_path, stats_default):
    p = tmp_path / "stats"
    artifacts.save_stats(p, stats_default)
    with pytest.raises(artifacts.ArtifactError, match="expected 'generator'"):
        artifacts.load_generator(p)


def test_manifest_lists_tensors_sorted(tmp_path):
    p = tmp_path / "b"
    artifacts.save_bundle(p, "blob", {"zz": np.zeros(2, np.float32),
                                      "aa": np.ones(3, np.float32)}, {"note": 1})
    manifest = json.loads((p / "manifest.json").read_text())
    assert manifest["tensors"] == ["aa", "zz"]
    kind, tensors, meta = artifacts.load_bundle(p, "blob")
    assert kind == "blob" and meta == {"note": 1}
    np.testing.assert_array_equal(tensors["aa"], np.ones(3))
