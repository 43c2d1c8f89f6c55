"""Evaluation metrics: SSIM, round statistics, paired policy comparisons."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels, rl
from .errors import DimError, EmptyInput
from .generator import ToyImage
from .seeding import child_rng
from .session import SessionConfig, SessionLog, SimulatedUser, Task, run_session

SSIM_WINDOW = 8
SSIM_STRIDE = 4
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0


def ssim(a: ToyImage, b: ToyImage, win: int = SSIM_WINDOW, stride: int = SSIM_STRIDE) -> float:
    """Mean structural similarity over sliding windows, averaged across
    channels. Uniform windows, population moments, dynamic range 1."""
    if a.pixels.shape != b.pixels.shape:
        raise DimError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    h, w, c = a.pixels.shape
    if h < win or w < win:
        raise DimError(f"images smaller than the {win}x{win} SSIM window")
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    total = 0.0
    for ch in range(c):
        total += kernels.ssim_windows(
            np.ascontiguousarray(a.pixels[:, :, ch]),
            np.ascontiguousarray(b.pixels[:, :, ch]),
            win,
            stride,
            c1,
            c2,
        )
    return total / c


def rounds_stats(logs: Sequence[SessionLog]) -> tuple[float, float]:
    """Mean and sample standard deviation of terminal round indices."""
    if not logs:
        raise EmptyInput("no session logs to evaluate")
    rounds = np.array([log.terminal_round for log in logs], dtype=np.float64)
    mean = float(rounds.mean())
    sd = float(rounds.std(ddof=1)) if len(rounds) > 1 else 0.0
    return mean, sd


def paired_sign_test(xs: Sequence[float], ys: Sequence[float]) -> float:
    """One-sided exact sign test for the hypothesis median(x) < median(y).

    Ties are dropped; returns the probability of at least the observed number
    of x-wins under a fair coin.
    """
    if len(xs) != len(ys):
        raise DimError("paired samples must have equal length")
    wins = sum(1 for x, y in zip(xs, ys) if x < y)
    losses = sum(1 for x, y in zip(xs, ys) if x > y)
    n = wins + losses
    if n == 0:
        return 1.0
    return sum(math.comb(n, i) for i in range(wins, n + 1)) / 2.0**n


@dataclass
class SessionRow:
    session_id: str
    task_index: int
    seed: int
    rounds: int
    final_reward: float
    ssim_to_target: float
    status: str


@dataclass
class EvalReport:
    rows: list[SessionRow] = field(default_factory=list)

    @property
    def mean_rounds(self) -> float:
        return float(np.mean([r.rounds for r in self.rows]))

    @property
    def sd_rounds(self) -> float:
        vals = [r.rounds for r in self.rows]
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

    @property
    def mean_final_reward(self) -> float:
        return float(np.mean([r.final_reward for r in self.rows]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim_to_target for r in self.rows]))

    def rounds_list(self) -> list[int]:
        return [r.rounds for r in self.rows]

    def summary(self) -> dict:
        return {
            "sessions": len(self.rows),
            "mean_rounds": self.mean_rounds,
            "sd_rounds": self.sd_rounds,
            "mean_final_reward": self.mean_final_reward,
            "mean_ssim_to_target": self.mean_ssim,
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["session_id", "task_index", "seed", "rounds", "final_reward",
                 "ssim_to_target", "status"]
            )
            for r in self.rows:
                writer.writerow(
                    [r.session_id, r.task_index, r.seed, r.rounds,
                     f"{r.final_reward:.6f}", f"{r.ssim_to_target:.6f}", r.status]
                )

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def evaluate_sessions(
    tasks: Sequence[Task],
    policy: Optional[rl.PolicyParams],
    cfg: SessionConfig,
    eval_seed: int = 0,
    greedy_policy: bool = False,
) -> EvalReport:
    """Run one session per task and collect rounds, reward, and target SSIM.

    The per-task rng is derived from (eval_seed, task index), so two arms
    evaluated with the same eval_seed see identical random streams.
    """
    report = EvalReport()
    for i, task in enumerate(tasks):
        rng = child_rng(eval_seed, "paired-eval", i)
        log = run_session(task, policy, cfg, rng, greedy_policy=greedy_policy)
        target_img = SimulatedUser.from_text(task.target_text, cfg).target_image
        report.rows.append(
            SessionRow(
                session_id=log.id,
                task_index=i,
                seed=task.seed,
                rounds=log.terminal_round,
                final_reward=log.final_score,
                ssim_to_target=ssim(log.images[-1], target_img),
                status=log.status,
            )
        )
    return report


def compare_policies(
    policy_a: Optional[rl.PolicyParams],
    policy_b: Optional[rl.PolicyParams],
    tasks: Sequence[Task],
    cfg: SessionConfig,
    eval_seed: int = 0,
    cfg_b: Optional[SessionConfig] = None,
) -> tuple[EvalReport, EvalReport]:
    """Paired evaluation: both arms see the same tasks and the same seeds.

    cfg_b lets the second arm run under a different session configuration
    (for instance with attention carry-over disabled) while everything else
    stays paired.
    """
    report_a = evaluate_sessions(tasks, policy_a, cfg, eval_seed=eval_seed)
    report_b = evaluate_sessions(tasks, policy_b, cfg_b or cfg, eval_seed=eval_seed)
    return report_a, report_b
