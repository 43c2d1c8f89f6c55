"""Deterministic procedural image generator with explicit cross-attention.

Every token owns a Gaussian blob signature (center, spread, color) derived
from its id. Generation computes one pixel-by-token attention map per step
from positional plus step encodings against token embeddings, then mixes
blob signatures through those maps. Token embeddings are defined as the
image encoder's view of the token's own blob, so the cosine between image
and prompt embeddings genuinely measures how faithfully the attention
rendered the prompt.
"""

from __future__ import annotations

import base64
import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .editing import EditController, edit_add_phrase, edit_reweight, edit_word_swap
from .errors import ControllerMismatch, DegenerateEmbedding, WriteError
from .prompts import Prompt, Token

POOL_BLOCK = 4


@dataclass(frozen=True)
class GeneratorConfig:
    h: int = 32
    w: int = 32
    c: int = 3
    t_gen: int = 10
    d: int = 16
    seed: int = 0
    temperature: float = 16.0

    def __post_init__(self):
        if min(self.h, self.w, self.t_gen, self.d) < 1 or self.c < 1:
            raise ValueError("h, w, c, t_gen, d must all be at least 1")
        if not (self.temperature > 0):
            raise ValueError("temperature must be positive")

    def to_json(self) -> dict:
        return {
            "h": self.h, "w": self.w, "c": self.c, "t_gen": self.t_gen,
            "d": self.d, "seed": self.seed, "temperature": self.temperature,
        }

    @staticmethod
    def from_json(data: dict) -> "GeneratorConfig":
        return GeneratorConfig(**{k: data[k] for k in data})


@dataclass(frozen=True)
class ToyImage:
    pixels: np.ndarray  # (h, w, c), clamped to [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3:
            raise ValueError("image pixels must be (h, w, c)")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("image pixels must be finite and lie in [0, 1]")
        object.__setattr__(self, "pixels", px)
        px.setflags(write=False)

    @property
    def flat(self) -> np.ndarray:
        h, w, c = self.pixels.shape
        return self.pixels.reshape(h * w, c)


@dataclass(frozen=True)
class AttentionStack:
    maps: np.ndarray  # (t_gen, h*w, n)

    def __post_init__(self):
        m = np.asarray(self.maps, dtype=np.float64)
        if m.ndim != 3:
            raise ValueError("attention stack must be (t_gen, rows, n)")
        if not np.all(np.isfinite(m)):
            raise ValueError("attention entries must be finite")
        object.__setattr__(self, "maps", m)
        m.setflags(write=False)

    @property
    def n_tokens(self) -> int:
        return self.maps.shape[2]

    def token_heatmaps(self) -> np.ndarray:
        """Per-token step-averaged map, shape (n, rows)."""
        return self.maps.mean(axis=0).T

    def to_json(self) -> dict:
        t, rows, n = self.maps.shape
        return {
            "steps": t,
            "rows": rows,
            "cols": n,
            "maps": [step.reshape(-1).tolist() for step in self.maps],
        }


STEP_SCALE = 0.6


class _World:
    """Derived arrays for one generator config: positional encodings, the
    image projection, and a blob cache keyed by token id."""

    def __init__(self, cfg: GeneratorConfig):
        self.cfg = cfg
        rows = cfg.h * cfg.w
        ys, xs = np.divmod(np.arange(rows), cfg.w)
        fx = xs / cfg.w
        fy = ys / cfg.h
        pos = np.empty((rows, cfg.d))
        for i in range(cfg.d):
            axis = fx if i % 2 == 0 else fy
            k = 1 + i // 4
            phase = (i // 2) % 2
            wave = np.sin if phase == 0 else np.cos
            pos[:, i] = wave(2.0 * math.pi * k * axis)
        self.positional = pos
        self.pool_y = np.arange(0, cfg.h, POOL_BLOCK)
        self.pool_x = np.arange(0, cfg.w, POOL_BLOCK)
        pooled_size = len(self.pool_y) * len(self.pool_x) * cfg.c
        proj_rng = _rng(cfg.seed, "proj")
        gauss = proj_rng.normal(0.0, 1.0, (cfg.d, pooled_size)) / math.sqrt(pooled_size)
        # fold mean-centering into the projection so a flat brightness shift
        # carries no embedding signal (keeps random images near-orthogonal)
        self.projection = gauss - gauss.mean(axis=1, keepdims=True)
        self._blobs: dict[int, np.ndarray] = {}
        self._grid_x = fx
        self._grid_y = fy

    def queries_for(self, token_ids: tuple[int, ...]) -> np.ndarray:
        """Per-step query encodings. The step offsets are drawn from a stream
        keyed by the token-id sequence, so changing any token re-rolls the
        whole generation trajectory, the way new conditioning re-rolls a real
        sampler. Carried-over attention maps are what shield a session from
        that re-roll."""
        cfg = self.cfg
        rng = _rng(cfg.seed, "steps", token_ids)
        steps = rng.normal(0.0, 1.0, (cfg.t_gen, cfg.d)) / math.sqrt(cfg.d)
        return np.ascontiguousarray(
            self.positional[None, :, :] + STEP_SCALE * steps[:, None, :]
        )

    def blob(self, token_id: int) -> np.ndarray:
        """Gaussian blob signature of a token, shape (rows, c)."""
        cached = self._blobs.get(token_id)
        if cached is not None:
            return cached
        cfg = self.cfg
        rng = _rng(cfg.seed, "blob", token_id)
        cx, cy = rng.uniform(0.2, 0.8, 2)
        sigma = rng.uniform(0.10, 0.22)
        color = rng.uniform(0.25, 1.0, cfg.c)
        amp = rng.uniform(0.8, 1.0)
        d2 = (self._grid_x - cx) ** 2 + (self._grid_y - cy) ** 2
        shape = amp * np.exp(-d2 / (2.0 * sigma * sigma))
        field = np.ascontiguousarray(shape[:, None] * color[None, :])
        self._blobs[token_id] = field
        return field

    def pooled(self, flat_pixels: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        img = flat_pixels.reshape(cfg.h, cfg.w, cfg.c)
        sums = np.add.reduceat(np.add.reduceat(img, self.pool_y, axis=0), self.pool_x, axis=1)
        counts = np.multiply.outer(
            np.diff(np.append(self.pool_y, cfg.h)), np.diff(np.append(self.pool_x, cfg.w))
        )
        return (sums / counts[:, :, None]).reshape(-1)


def _rng(seed: int, *tags) -> np.random.Generator:
    from .seeding import child_rng

    return child_rng(seed, "generator", *tags)


@lru_cache(maxsize=8)
def _world(cfg: GeneratorConfig) -> _World:
    return _World(cfg)


def token_embedding(surface_id: int, cfg: GeneratorConfig) -> np.ndarray:
    """Unit embedding of a token: the image encoder applied to its blob."""
    world = _world(cfg)
    phi = world.projection @ world.pooled(world.blob(surface_id))
    norm = np.linalg.norm(phi)
    if norm < 1e-12:
        raise DegenerateEmbedding(f"token id {surface_id} projects to zero")
    return phi / norm


class Vocabulary:
    """Seed-derived vocabulary: surfaces hash to ids, ids to embeddings."""

    def __init__(self, cfg: GeneratorConfig):
        self.cfg = cfg
        self._cache: dict[str, Token] = {}

    def token(self, surface: str) -> Token:
        tok = self._cache.get(surface)
        if tok is None:
            from .seeding import stable_hash

            tid = stable_hash("token-id", self.cfg.seed, surface, bits=32)
            tok = Token(tid, surface, token_embedding(tid, self.cfg))
            self._cache[surface] = tok
        return tok


def _keys_and_blobs(p: Prompt, world: _World) -> tuple[np.ndarray, np.ndarray]:
    keys = np.ascontiguousarray(np.stack([t.embedding for t in p.tokens]))
    blobs = np.ascontiguousarray(np.stack([world.blob(t.id) for t in p.tokens]))
    return keys, blobs


def _fresh_maps(p: Prompt, world: _World) -> np.ndarray:
    cfg = world.cfg
    keys, _ = _keys_and_blobs(p, world)
    queries = world.queries_for(tuple(t.id for t in p.tokens))
    renorm = bool(np.all(p.weights >= 0.0))
    scale = cfg.temperature / math.sqrt(cfg.d)
    return kernels.attention_maps(queries, keys, scale, p.weights, renorm)


def image_from_maps(maps: np.ndarray, p: Prompt, cfg: GeneratorConfig) -> ToyImage:
    """Mix token blob signatures through an attention stack; pure in both args."""
    world = _world(cfg)
    _, blobs = _keys_and_blobs(p, world)
    flat = kernels.mix_pixels(maps, blobs)
    return ToyImage(flat.reshape(cfg.h, cfg.w, cfg.c))


def generate(p: Prompt, cfg: GeneratorConfig) -> tuple[ToyImage, AttentionStack]:
    world = _world(cfg)
    maps = _fresh_maps(p, world)
    return image_from_maps(maps, p, cfg), AttentionStack(maps)


def regenerate_with_controller(
    p_new: Prompt,
    source: AttentionStack,
    ctrl: EditController,
    cfg: GeneratorConfig,
) -> tuple[ToyImage, AttentionStack]:
    """Regenerate for an edited prompt, combining fresh and carried-over maps
    per the controller's mode."""
    world = _world(cfg)
    src = source.maps
    if src.shape[0] != cfg.t_gen or src.shape[1] != cfg.h * cfg.w:
        raise ControllerMismatch("source stack does not match generator config")
    n_new = len(p_new)
    edited = np.empty((cfg.t_gen, src.shape[1], n_new))

    if ctrl.mode == "word_swap":
        if src.shape[2] != n_new:
            raise ControllerMismatch("word swap requires matching token counts")
        if ctrl.tau_inj > cfg.t_gen:
            raise ControllerMismatch("tau_inj exceeds the number of generation steps")
        fresh = _fresh_maps(p_new, world)
        for t in range(cfg.t_gen):
            edited[t] = edit_word_swap(fresh[t], src[t], t, ctrl.tau_inj)
    elif ctrl.mode == "add_phrase":
        if ctrl.alignment is None:
            raise ControllerMismatch("add_phrase controller needs an alignment")
        if ctrl.alignment.n_old != src.shape[2] or len(ctrl.alignment) != n_new:
            raise ControllerMismatch("alignment does not match map dimensions")
        fresh = _fresh_maps(p_new, world)
        for t in range(cfg.t_gen):
            edited[t] = edit_add_phrase(src[t], fresh[t], ctrl.alignment)
    elif ctrl.mode == "reweight":
        if ctrl.j_star is None:
            raise ControllerMismatch("reweight controller needs j_star")
        if src.shape[2] != n_new or not (0 <= ctrl.j_star < n_new):
            raise ControllerMismatch("reweight column out of range")
        for t in range(cfg.t_gen):
            edited[t] = edit_reweight(src[t], ctrl.j_star, ctrl.c)
    else:  # pragma: no cover - EditController validates mode
        raise ControllerMismatch(f"unknown mode {ctrl.mode!r}")

    return image_from_maps(edited, p_new, cfg), AttentionStack(edited)


def image_embedding(img: ToyImage, cfg: GeneratorConfig) -> np.ndarray:
    """Unit embedding: seeded linear projection of 4x4 block-averaged pixels."""
    world = _world(cfg)
    phi = world.projection @ world.pooled(img.flat)
    norm = np.linalg.norm(phi)
    if norm < 1e-12:
        raise DegenerateEmbedding("image projects to zero")
    return phi / norm


def render_png(img: ToyImage, path) -> None:
    from PIL import Image

    if img.pixels.shape[2] != 3:
        raise WriteError("PNG export requires a 3-channel image")
    try:
        Image.fromarray(quantize(img), mode="RGB").save(path, format="PNG")
    except OSError as exc:
        raise WriteError(f"cannot write PNG to {path}: {exc}") from exc


def quantize(img: ToyImage) -> np.ndarray:
    return np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)


def load_png(path) -> ToyImage:
    from PIL import Image

    with Image.open(path) as handle:
        arr = np.asarray(handle, dtype=np.float64) / 255.0
    return ToyImage(arr)


def png_data_uri(img: ToyImage) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(quantize(img), mode="RGB").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")
