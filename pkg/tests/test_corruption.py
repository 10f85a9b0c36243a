import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snrlab.corpus import cyclic_dataset, make_circle_embeddings
from snrlab.corruption import CorruptionConfig, corrupt, sample_gamma_vector, sample_roar_set
from snrlab.errors import ConfigError, InvalidSnrError


def test_config_defaults_match_training_recipe():
    cfg = CorruptionConfig()
    assert cfg.k == 10.0
    assert cfg.mu == 1.65
    assert cfg.sigma == 0.9
    assert cfg.gamma_max == 50.0
    assert cfg.clip_lognormal is False


def test_config_validation():
    with pytest.raises(ConfigError):
        CorruptionConfig(k=0.5)
    with pytest.raises(ConfigError):
        CorruptionConfig(gamma_min=5.0, gamma_max=2.0)
    with pytest.raises(ConfigError):
        CorruptionConfig(c=1.5)
    with pytest.raises(ConfigError):
        CorruptionConfig(mode="other")


def test_roar_fraction_near_inverse_k():
    mask = sample_roar_set(100000, 10.0, seed=1)
    frac = mask.mean()
    assert abs(frac - 0.1) <= 3 * np.sqrt(0.1 * 0.9 / 100000)


def test_smoothed_endpoints_stay_in_ranges():
    # k = 1 makes every position an endpoint draw
    cfg = CorruptionConfig(mode="smoothed", k=1.0)
    gamma = sample_gamma_vector(100000, cfg, seed=2)
    low = gamma < cfg.gamma_min
    high = gamma >= cfg.c * cfg.gamma_max
    assert np.all(low | high)
    assert low.sum() > 0 and high.sum() > 0
    assert gamma.min() >= 0.0
    assert gamma.max() <= cfg.gamma_max


def test_atomic_mode_emits_exact_endpoints():
    cfg = CorruptionConfig(mode="atomic", k=1.0)
    gamma = sample_gamma_vector(50000, cfg, seed=3)
    assert set(np.unique(gamma)) == {0.0, 50.0}


def test_lognormal_median_matches_parameters():
    cfg = CorruptionConfig(k=1e12)  # endpoint branch effectively off
    gamma = sample_gamma_vector(200000, cfg, seed=4)
    assert abs(np.median(gamma) / np.exp(1.65) - 1.0) <= 0.05


def test_lognormal_unclipped_by_default_but_clippable():
    free = sample_gamma_vector(200000, CorruptionConfig(k=1e12), seed=5)
    assert free.max() > 50.0  # heavy tail escapes gamma_max without clipping
    clipped = sample_gamma_vector(
        200000, CorruptionConfig(k=1e12, clip_lognormal=True), seed=5
    )
    assert clipped.max() <= 50.0
    assert clipped.min() >= 0.5


@given(st.integers(0, 30))
@settings(max_examples=10, deadline=None)
def test_gamma_vector_non_negative(seed):
    gamma = sample_gamma_vector(500, CorruptionConfig(), seed)
    assert np.all(gamma >= 0)


def test_corrupt_zero_gamma_gives_zero_rows():
    data = cyclic_dataset(5)
    emb = make_circle_embeddings(5)
    x = data.sequences[0]
    gamma = np.array([0.0, 1.0, 0.0, 4.0, 0.0])
    z = corrupt(x, gamma, emb, seed=6)
    assert np.all(z[gamma == 0.0] == 0.0)
    assert np.all(z[gamma > 0.0] != 0.0)


def test_corrupt_mean_scales_with_gamma():
    emb = make_circle_embeddings(5)
    x = np.zeros(4, dtype=int)
    gamma = np.full(4, 16.0)
    draws = np.stack([corrupt(x, gamma, emb, seed=s) for s in range(600)])
    mean = draws.mean(axis=0)
    stderr = np.sqrt(16.0 / 600)
    assert np.max(np.abs(mean - 16.0 * emb.vectors[0])) <= 4 * stderr


def test_corrupt_rejects_negative_gamma():
    emb = make_circle_embeddings(5)
    with pytest.raises(InvalidSnrError):
        corrupt(np.array([0]), np.array([-1.0]), emb, seed=0)
