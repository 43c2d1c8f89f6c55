import math

import numpy as np
import pytest

from coadapt.errors import InsufficientSamples, SingularCovariance
from coadapt.generator import Vocabulary, generate, image_embedding
from coadapt.prompts import prompt_embedding, tokenize
from coadapt.reward import CovarianceEstimate, clip_score, covariance, empirical_mi, gaussian_mi
from coadapt.session import WORDS


def closed_form_mi(rho: float) -> float:
    return -0.5 * math.log(1.0 - rho * rho)


def test_clip_score_matches_cosine(gen_cfg, vocab):
    p = tokenize("a tranquil garden", vocab)
    img, _ = generate(p, gen_cfg)
    expected = float(image_embedding(img, gen_cfg) @ prompt_embedding(p))
    assert clip_score(img, p, gen_cfg) == pytest.approx(expected, abs=1e-12)


def test_clip_score_bounded(gen_cfg, vocab):
    rng = np.random.default_rng(7)
    for _ in range(20):
        words = rng.choice(WORDS, size=4, replace=False)
        p = tokenize(" ".join(words), vocab)
        img, _ = generate(p, gen_cfg)
        s = clip_score(img, p, gen_cfg)
        assert -1.0 <= s <= 1.0


def test_clip_score_informative(gen_cfg):
    """Matched prompt scores beat mismatched prompt scores on average."""
    vocab = Vocabulary(gen_cfg)
    rng = np.random.default_rng(3)
    prompts = []
    for _ in range(100):
        n = int(rng.integers(3, 7))
        prompts.append(tokenize(" ".join(rng.choice(WORDS, size=n, replace=False)), vocab))
    matched, mismatched = [], []
    for i, p in enumerate(prompts):
        img, _ = generate(p, gen_cfg)
        q = prompts[(i + 31) % len(prompts)]
        matched.append(clip_score(img, p, gen_cfg))
        mismatched.append(clip_score(img, q, gen_cfg))
    assert np.mean(matched) > np.mean(mismatched)


def test_covariance_constant_samples():
    assert np.array_equal(covariance(np.full((5, 2), 3.0)), np.zeros((2, 2)))


def test_covariance_hand_case():
    samples = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert np.allclose(covariance(samples), [[0.5, 0.5], [0.5, 0.5]])


def test_covariance_symmetry(rng):
    samples = rng.normal(size=(40, 3))
    cov = covariance(samples)
    assert np.array_equal(cov, cov.T)


def test_covariance_insufficient():
    with pytest.raises(InsufficientSamples):
        covariance(np.ones((1, 2)))


def _est(sx, sy, sz, ridge=0.0):
    return CovarianceEstimate(
        sigma_x=np.atleast_2d(sx), sigma_y=np.atleast_2d(sy),
        sigma_z=np.asarray(sz, dtype=float), n=100, ridge=ridge,
    )


def test_gaussian_mi_independence_zero():
    est = _est([[1.0]], [[1.0]], np.eye(2))
    assert gaussian_mi(est) == pytest.approx(0.0, abs=1e-12)


def test_gaussian_mi_rho_half():
    est = _est([[1.0]], [[1.0]], [[1.0, 0.5], [0.5, 1.0]])
    assert gaussian_mi(est) == pytest.approx(closed_form_mi(0.5), abs=1e-9)
    assert gaussian_mi(est) == pytest.approx(0.14384103622589045, abs=1e-9)


def test_gaussian_mi_rho_nine_tenths():
    est = _est([[1.0]], [[1.0]], [[1.0, 0.9], [0.9, 1.0]])
    assert gaussian_mi(est) == pytest.approx(closed_form_mi(0.9), abs=1e-9)
    assert gaussian_mi(est) == pytest.approx(0.8303656034108254, abs=1e-9)


def test_gaussian_mi_singular_raises():
    est = _est([[1.0]], [[1.0]], [[1.0, 1.0], [1.0, 1.0]], ridge=0.0)
    with pytest.raises(SingularCovariance):
        gaussian_mi(est)


def test_covariance_estimate_validation():
    with pytest.raises(SingularCovariance):
        CovarianceEstimate(
            sigma_x=np.array([[1.0, 0.5], [0.0, 1.0]]),
            sigma_y=np.eye(2), sigma_z=np.eye(4), n=10,
        )
    with pytest.raises(SingularCovariance):
        CovarianceEstimate(sigma_x=np.eye(2), sigma_y=np.eye(2), sigma_z=np.eye(3), n=10)


def test_empirical_mi_independent_near_zero():
    rng = np.random.default_rng(0)
    xs = rng.normal(size=10000)
    ys = rng.normal(size=10000)
    assert abs(empirical_mi(xs, ys)) <= 0.01


def test_empirical_mi_correlated_matches_closed_form():
    rng = np.random.default_rng(1)
    rho = 0.5
    xs = rng.normal(size=10000)
    ys = rho * xs + math.sqrt(1 - rho * rho) * rng.normal(size=10000)
    assert empirical_mi(xs, ys) == pytest.approx(closed_form_mi(rho), abs=0.02)


def test_empirical_mi_identical_large():
    rng = np.random.default_rng(2)
    xs = rng.normal(size=500)
    assert empirical_mi(xs, xs, ridge=1e-6) >= 3.0


def test_empirical_mi_symmetry():
    rng = np.random.default_rng(3)
    xs = rng.normal(size=(400, 2))
    ys = 0.5 * xs + rng.normal(size=(400, 2))
    assert empirical_mi(xs, ys) == pytest.approx(empirical_mi(ys, xs), abs=1e-9)


def test_empirical_mi_nonnegative():
    rng = np.random.default_rng(4)
    for d in (1, 2, 4):
        xs = rng.normal(size=(10000, d))
        ys = rng.normal(size=(10000, d))
        assert empirical_mi(xs, ys) >= -0.01


def test_empirical_mi_insufficient_samples():
    rng = np.random.default_rng(5)
    with pytest.raises(InsufficientSamples):
        empirical_mi(rng.normal(size=(5, 4)), rng.normal(size=(5, 4)))
    with pytest.raises(InsufficientSamples):
        empirical_mi(rng.normal(size=10), rng.normal(size=11))
