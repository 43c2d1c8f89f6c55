"""Attention-map edit operators and derivative-free refinement.

The three operators are pure array transforms. Refinement of edit
parameters (a scale, a map, a soft alignment) climbs a caller-supplied
reward with central finite differences, since the renderer is a black box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimError, OutOfRange, RewardError
from .prompts import WEIGHT_MAX, WEIGHT_MIN, AlignmentMap
from .seeding import child_rng

SCALE_FD_STEP = 1e-3
MAP_FD_STEP = 1e-2

MODES = ("word_swap", "add_phrase", "reweight")


@dataclass(frozen=True)
class EditController:
    """Parameters steering one regeneration.

    tau_inj bounds the injection window for word swaps; alignment routes
    columns for phrase additions; (j_star, c) scale one column for
    re-weighting. The eta_* step sizes and ascent_steps configure optional
    reward-climbing refinement before the controller is applied.
    """

    mode: str
    tau_inj: int = 0
    alignment: Optional[AlignmentMap] = None
    j_star: Optional[int] = None
    c: float = 1.0
    eta_map: float = 0.05
    eta_align: float = 0.05
    eta_c: float = 0.2
    ascent_steps: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DimError(f"unknown controller mode {self.mode!r}")
        if self.tau_inj < 0:
            raise OutOfRange("tau_inj must be nonnegative")
        if not (WEIGHT_MIN <= self.c <= WEIGHT_MAX):
            raise OutOfRange(f"scale {self.c} outside [{WEIGHT_MIN}, {WEIGHT_MAX}]")
        if min(self.eta_map, self.eta_align, self.eta_c) <= 0:
            raise OutOfRange("ascent step sizes must be positive")
        if self.ascent_steps < 0:
            raise OutOfRange("ascent_steps must be nonnegative")

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "tau_inj": self.tau_inj,
            "alignment": self.alignment.to_json() if self.alignment else None,
            "j_star": self.j_star,
            "c": self.c,
            "ascent_steps": self.ascent_steps,
        }


def edit_word_swap(current: np.ndarray, injected: np.ndarray, step: int, tau_inj: int) -> np.ndarray:
    """Inject the carried-over map for steps below tau_inj, else keep the fresh one."""
    if current.shape != injected.shape:
        raise DimError(f"map shapes differ: {current.shape} vs {injected.shape}")
    return injected.copy() if step < tau_inj else current.copy()


def edit_add_phrase(source: np.ndarray, fresh: np.ndarray, alignment: AlignmentMap) -> np.ndarray:
    """Route columns after an insertion.

    Columns of surviving tokens are copied from the source map at their old
    index; columns of new tokens keep the freshly computed values.
    """
    if source.ndim != 2 or fresh.ndim != 2 or source.shape[0] != fresh.shape[0]:
        raise DimError("source and fresh maps must share the row dimension")
    if alignment.n_old != source.shape[1]:
        raise DimError(
            f"alignment maps {alignment.n_old} old columns, source has {source.shape[1]}"
        )
    if len(alignment) != fresh.shape[1]:
        raise DimError(
            f"alignment covers {len(alignment)} new columns, fresh map has {fresh.shape[1]}"
        )
    out = fresh.copy()
    for j, a in enumerate(alignment.entries):
        if a is not None:
            out[:, j] = source[:, a]
    return out


def edit_reweight(m: np.ndarray, j_star: int, c: float) -> np.ndarray:
    """Scale one column by c, leaving the rest untouched. No renormalization."""
    if not (WEIGHT_MIN <= c <= WEIGHT_MAX):
        raise OutOfRange(f"scale {c} outside [{WEIGHT_MIN}, {WEIGHT_MAX}]")
    if m.ndim != 2 or not (0 <= j_star < m.shape[1]):
        raise DimError(f"column {j_star} out of bounds for map with {m.shape[-1]} columns")
    out = m.copy()
    out[:, j_star] *= c
    return out


def _checked(value: float) -> float:
    if not math.isfinite(value):
        raise RewardError(f"reward function returned {value!r}")
    return float(value)


def ascend_scale(
    c0: float,
    reward_fn: Callable[[float], float],
    eta_c: float,
    steps: int,
    fd_step: float = SCALE_FD_STEP,
) -> float:
    """Finite-difference ascent of a scalar scale, clamped to the legal range."""
    c = min(max(float(c0), WEIGHT_MIN), WEIGHT_MAX)
    for _ in range(steps):
        hi = min(c + fd_step, WEIGHT_MAX)
        lo = max(c - fd_step, WEIGHT_MIN)
        if hi <= lo:
            break
        grad = (_checked(reward_fn(hi)) - _checked(reward_fn(lo))) / (hi - lo)
        c = min(max(c + eta_c * grad, WEIGHT_MIN), WEIGHT_MAX)
    return c


def project_rows_to_simplex(matrix: np.ndarray) -> np.ndarray:
    """Euclidean projection of every row onto the probability simplex."""
    v = np.asarray(matrix, dtype=np.float64)
    n = v.shape[1]
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1)
    ks = np.arange(1, n + 1)
    cond = u + (1.0 - css) / ks > 0.0
    rho = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = (css[np.arange(len(v)), rho] - 1.0) / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def _ascend_rows(
    matrix: np.ndarray,
    reward_fn: Callable[[np.ndarray], float],
    eta: float,
    steps: int,
    k_coords: int,
    seed: int,
    fd_step: float,
) -> np.ndarray:
    m = np.array(matrix, dtype=np.float64)
    if steps == 0:
        return m
    _checked(reward_fn(m))
    rng = child_rng(seed, "coord-ascent", m.shape)
    flat_size = m.size
    for _ in range(steps):
        coords = rng.choice(flat_size, size=min(k_coords, flat_size), replace=False)
        grad = np.zeros(flat_size)
        flat = m.reshape(-1)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + fd_step
            up = _checked(reward_fn(m))
            flat[idx] = orig - fd_step
            down = _checked(reward_fn(m))
            flat[idx] = orig
            grad[idx] = (up - down) / (2.0 * fd_step)
        m = m + eta * grad.reshape(m.shape)
        m = project_rows_to_simplex(m)
    return m


def ascend_map(
    m_star: np.ndarray,
    reward_fn: Callable[[np.ndarray], float],
    eta_map: float,
    steps: int,
    k_coords: int = 8,
    seed: int = 0,
    fd_step: float = MAP_FD_STEP,
) -> np.ndarray:
    """Coordinate-sampled finite-difference ascent, rows kept on the simplex."""
    return _ascend_rows(m_star, reward_fn, eta_map, steps, k_coords, seed, fd_step)


@dataclass(frozen=True)
class SoftAlignment:
    """Relaxed alignment: each new-token row is a distribution over old
    columns plus a trailing "none" slot, so gradient ascent is well defined."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] < 2:
            raise DimError("soft alignment needs shape (n_new, n_old + 1)")
        if np.any(m < -1e-9) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise DimError("soft alignment rows must lie on the simplex")
        object.__setattr__(self, "matrix", m)

    @property
    def n_old(self) -> int:
        return self.matrix.shape[1] - 1

    @staticmethod
    def from_hard(alignment: AlignmentMap) -> "SoftAlignment":
        m = np.zeros((len(alignment), alignment.n_old + 1))
        for j, a in enumerate(alignment.entries):
            m[j, alignment.n_old if a is None else a] = 1.0
        return SoftAlignment(m)

    def decode(self) -> AlignmentMap:
        """Per-row argmax, with later rows demoted to None where a hard match
        would break injectivity or ordering."""
        none_col = self.n_old
        entries: list[Optional[int]] = []
        cursor = -1
        for row in self.matrix:
            pick = int(np.argmax(row))
            if pick == none_col or pick <= cursor:
                entries.append(None)
            else:
                entries.append(pick)
                cursor = pick
        return AlignmentMap(tuple(entries), n_old=self.n_old)


def ascend_alignment(
    soft: SoftAlignment,
    reward_fn: Callable[[np.ndarray], float],
    eta_align: float,
    steps: int,
    k_coords: int = 8,
    seed: int = 0,
    fd_step: float = MAP_FD_STEP,
) -> SoftAlignment:
    out = _ascend_rows(soft.matrix, reward_fn, eta_align, steps, k_coords, seed, fd_step)
    return SoftAlignment(out)
