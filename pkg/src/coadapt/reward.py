"""Alignment reward and Gaussian mutual-information estimation.

The reward is the cosine between image and prompt embeddings. Mutual
information uses the Gaussian closed form: half the log ratio of marginal
covariance determinants to the joint determinant, in nats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSamples, SingularCovariance
from .generator import GeneratorConfig, ToyImage, image_embedding
from .prompts import Prompt, prompt_embedding

DEFAULT_RIDGE = 1e-6


def clip_score(img: ToyImage, p: Prompt, cfg: GeneratorConfig) -> float:
    """Cosine similarity of the image and prompt embeddings, in [-1, 1]."""
    score = float(image_embedding(img, cfg) @ prompt_embedding(p))
    # both embeddings are unit vectors; guard rounding drift at the ends
    return min(1.0, max(-1.0, score))


def covariance(samples: np.ndarray) -> np.ndarray:
    """Unbiased sample covariance (divisor N-1), symmetrized."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise InsufficientSamples(f"need at least 2 samples, got {x.shape[0]}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    return (cov + cov.T) / 2.0


@dataclass(frozen=True)
class CovarianceEstimate:
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    sigma_z: np.ndarray
    n: int
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        for name in ("sigma_x", "sigma_y", "sigma_z"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise SingularCovariance(f"{name} must be square")
            if not np.allclose(m, m.T, atol=1e-9):
                raise SingularCovariance(f"{name} is not symmetric")
            object.__setattr__(self, name, m)
        dx = self.sigma_x.shape[0]
        dy = self.sigma_y.shape[0]
        if self.sigma_z.shape[0] != dx + dy:
            raise SingularCovariance("joint covariance must cover both blocks")
        if self.ridge < 0:
            raise SingularCovariance("ridge must be nonnegative")


def _logdet_pd(m: np.ndarray, label: str) -> float:
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(f"{label} not positive definite after ridge") from exc
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def gaussian_mi(est: CovarianceEstimate) -> float:
    """0.5 * log(det(Sx) * det(Sy) / det(Sz)) in nats, with ridge applied."""
    rx = est.sigma_x + est.ridge * np.eye(est.sigma_x.shape[0])
    ry = est.sigma_y + est.ridge * np.eye(est.sigma_y.shape[0])
    rz = est.sigma_z + est.ridge * np.eye(est.sigma_z.shape[0])
    return 0.5 * (_logdet_pd(rx, "sigma_x") + _logdet_pd(ry, "sigma_y") - _logdet_pd(rz, "sigma_z"))


def empirical_mi(xs: np.ndarray, ys: np.ndarray, ridge: float = DEFAULT_RIDGE) -> float:
    """Gaussian MI of paired samples; xs and ys are (N, D) arrays."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] != y.shape[0]:
        raise InsufficientSamples("xs and ys must pair up sample for sample")
    d = max(x.shape[1], y.shape[1])
    if x.shape[0] < d + 2:
        raise InsufficientSamples(f"need at least D+2={d + 2} samples, got {x.shape[0]}")
    est = CovarianceEstimate(
        sigma_x=covariance(x),
        sigma_y=covariance(y),
        sigma_z=covariance(np.concatenate([x, y], axis=1)),
        n=x.shape[0],
        ridge=ridge,
    )
    return gaussian_mi(est)
