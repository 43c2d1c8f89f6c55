"""Multi-round co-adaptation sessions.

A session holds the current prompt, image, and attention stack. Each round
applies one edit (chosen by a policy or by the simulated user's ranking),
regenerates (with or without attention carry-over), scores the result, and
stops at the first threshold crossing or after n_max rounds. Training runs
many sessions, feeding transitions into the prioritized replay pool and
updating the linear PPO heads.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import rl
from .editing import EditController, ascend_scale
from .errors import (
    CollisionError,
    DegenerateEmbedding,
    InsufficientSamples,
    ParseError,
    SessionClosed,
    SingularCovariance,
)
from .generator import (
    AttentionStack,
    GeneratorConfig,
    ToyImage,
    Vocabulary,
    generate,
    image_embedding,
    load_png,
    regenerate_with_controller,
    render_png,
)
from .prompts import (
    AddPhrase,
    EditOp,
    Prompt,
    Reweight,
    WordSwap,
    apply_edit,
    compute_alignment,
    edit_from_json,
    prompt_embedding,
    tokenize,
)
from .reward import clip_score, empirical_mi
from .seeding import child_rng, stable_hash

STATUS_ACTIVE = "active"
STATUS_THRESHOLD = "accepted_by_threshold"
STATUS_EXHAUSTED = "exhausted_rounds"
STATUS_USER = "accepted_by_user"
TERMINAL_STATUSES = (STATUS_THRESHOLD, STATUS_EXHAUSTED, STATUS_USER)

WORDS = (
    "a", "tranquil", "garden", "serene", "blue", "lake", "vibrant", "green",
    "forest", "sunflower", "mountain", "river", "glowing", "crimson", "meadow",
    "ancient", "castle", "misty", "valley", "golden", "desert", "stormy",
    "ocean", "quiet", "village", "bright", "coral", "reef", "frozen", "tundra",
    "blooming", "flowers", "with", "under", "twilight", "sky", "amber",
    "canyon", "silver", "stream", "mossy", "stone", "bridge", "scarlet",
    "maple", "grove", "lavender", "field", "distant", "lighthouse", "hidden",
    "waterfall", "emerald", "hills", "moonlit", "harbor",
)


@dataclass(frozen=True)
class SessionConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    tau_stop: float = 0.92
    n_max: int = 10
    tau_inj: int = 5
    use_injection: bool = True
    ascent_steps: int = 0
    eta_c: float = 0.2
    c_grid: tuple[float, ...] = (-2.0, -1.0, -0.5, 0.5, 1.0, 1.5, 2.0)

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not (0 <= self.tau_inj <= self.generator.t_gen):
            raise ValueError("tau_inj must lie in [0, t_gen]")

    def to_json(self) -> dict:
        return {
            "generator": self.generator.to_json(),
            "tau_stop": self.tau_stop,
            "n_max": self.n_max,
            "tau_inj": self.tau_inj,
            "use_injection": self.use_injection,
            "ascent_steps": self.ascent_steps,
            "eta_c": self.eta_c,
            "c_grid": list(self.c_grid),
        }

    @staticmethod
    def from_json(data: dict) -> "SessionConfig":
        data = dict(data)
        gen = GeneratorConfig.from_json(data.pop("generator", {}))
        if "c_grid" in data:
            data["c_grid"] = tuple(data["c_grid"])
        return SessionConfig(generator=gen, **data)


@dataclass(frozen=True)
class SessionState:
    session_id: str
    round: int
    prompt: Prompt
    image: ToyImage
    stack: AttentionStack
    rewards: tuple[float, ...]
    status: str
    seed: int
    last_edit: Optional[EditOp] = None

    @property
    def last_reward(self) -> float:
        return self.rewards[-1]

    @property
    def terminal(self) -> bool:
        return self.status != STATUS_ACTIVE


def _safe_score(img: ToyImage, p: Prompt, cfg: GeneratorConfig) -> float:
    # an all-flat image carries no signal; score it at the floor
    try:
        return clip_score(img, p, cfg)
    except DegenerateEmbedding:
        return -1.0


def new_session(text: str, seed: int, cfg: SessionConfig) -> SessionState:
    vocab = Vocabulary(cfg.generator)
    prompt = tokenize(text, vocab)
    img, stack = generate(prompt, cfg.generator)
    score = _safe_score(img, prompt, cfg.generator)
    sid = f"sess-{stable_hash('session-id', seed, text, bits=48):012x}"
    return SessionState(
        session_id=sid,
        round=0,
        prompt=prompt,
        image=img,
        stack=stack,
        rewards=(score,),
        status=STATUS_ACTIVE,
        seed=seed,
    )


def _controller_for(edit: EditOp, old_prompt: Prompt, new_prompt: Prompt, cfg: SessionConfig) -> EditController:
    if isinstance(edit, WordSwap):
        return EditController(mode="word_swap", tau_inj=cfg.tau_inj)
    if isinstance(edit, AddPhrase):
        return EditController(
            mode="add_phrase", alignment=compute_alignment(old_prompt, new_prompt)
        )
    return EditController(mode="reweight", j_star=edit.index, c=edit.scale)


def _regenerate(
    state: SessionState, edit: EditOp, use_injection: bool, cfg: SessionConfig
) -> tuple[Prompt, ToyImage, AttentionStack]:
    p_new = apply_edit(state.prompt, edit)
    if use_injection:
        ctrl = _controller_for(edit, state.prompt, p_new, cfg)
        img, stack = regenerate_with_controller(p_new, state.stack, ctrl, cfg.generator)
    else:
        img, stack = generate(p_new, cfg.generator)
    return p_new, img, stack


def _refine_edit(state: SessionState, edit: EditOp, use_injection: bool, cfg: SessionConfig) -> EditOp:
    """Inner reward ascent of the re-weighting scale, when configured."""
    if cfg.ascent_steps <= 0 or not isinstance(edit, Reweight):
        return edit

    def reward_fn(c: float) -> float:
        _, img, _ = _regenerate(state, Reweight(edit.index, c), use_injection, cfg)
        return _safe_score(img, apply_edit(state.prompt, Reweight(edit.index, c)), cfg.generator)

    c_star = ascend_scale(edit.scale, reward_fn, cfg.eta_c, cfg.ascent_steps)
    return Reweight(edit.index, c_star)


def step_round(
    state: SessionState, edit: EditOp, use_injection: bool, cfg: SessionConfig
) -> SessionState:
    """Apply one edit, regenerate, score, and update the session status."""
    if state.terminal:
        raise SessionClosed(f"session {state.session_id} is {state.status}")
    edit = _refine_edit(state, edit, use_injection, cfg)
    p_new, img, stack = _regenerate(state, edit, use_injection, cfg)
    score = _safe_score(img, p_new, cfg.generator)
    rnd = state.round + 1
    if score >= cfg.tau_stop:
        status = STATUS_THRESHOLD
    elif rnd >= cfg.n_max:
        status = STATUS_EXHAUSTED
    else:
        status = STATUS_ACTIVE
    return replace(
        state,
        round=rnd,
        prompt=p_new,
        image=img,
        stack=stack,
        rewards=state.rewards + (score,),
        status=status,
        last_edit=edit,
    )


def accept_session(state: SessionState) -> SessionState:
    if state.terminal:
        raise SessionClosed(f"session {state.session_id} is {state.status}")
    return replace(state, status=STATUS_USER)


# ------------------------------------------------------------ simulated user


@dataclass(frozen=True)
class SimulatedUser:
    """Deterministic stand-in for the human: owns a hidden target prompt and
    proposes the edit moving the session toward it."""

    target: Prompt
    target_image: ToyImage
    target_stack: AttentionStack

    @staticmethod
    def from_text(text: str, cfg: SessionConfig) -> "SimulatedUser":
        vocab = Vocabulary(cfg.generator)
        target = tokenize(text, vocab)
        img, stack = generate(target, cfg.generator)
        return SimulatedUser(target, img, stack)


@dataclass(frozen=True)
class Proposal:
    strategy: str  # one of rl.ACTIONS
    edit: EditOp
    feedback: str


def _token_masses(stack: AttentionStack) -> np.ndarray:
    return stack.maps.mean(axis=(0, 1))


def _swap_candidate(user: SimulatedUser, state: SessionState) -> Optional[Proposal]:
    cur, tgt = state.prompt, user.target
    for i in range(min(len(cur), len(tgt))):
        if cur.tokens[i].id != tgt.tokens[i].id:
            return Proposal(
                "word_swap",
                WordSwap(i, tgt.tokens[i]),
                f"replace '{cur.tokens[i].surface}' with '{tgt.tokens[i].surface}'",
            )
    return None


def _add_candidate(user: SimulatedUser, state: SessionState) -> Optional[Proposal]:
    cur, tgt = state.prompt, user.target
    align = compute_alignment(cur, tgt)  # target index -> current index
    start = None
    for j, a in enumerate(align.entries):
        if a is None and start is None:
            start = j
        elif a is not None and start is not None:
            break
    if start is None:
        return None
    end = start
    while end + 1 < len(align.entries) and align.entries[end + 1] is None:
        end += 1
    pos = 0
    for j in range(start - 1, -1, -1):
        if align.entries[j] is not None:
            pos = align.entries[j] + 1
            break
    tokens = tgt.tokens[start : end + 1]
    phrase = " ".join(t.surface for t in tokens)
    return Proposal("add_phrase", AddPhrase(pos, tokens), f"add '{phrase}'")


def _best_scale(
    state: SessionState, j: int, use_injection: bool, cfg: SessionConfig
) -> Optional[float]:
    """Scan the scale grid for column j, previewing the regenerated score."""
    best_c, best_s = None, -np.inf
    for c in cfg.c_grid:
        try:
            p_new, img, _ = _regenerate(state, Reweight(j, float(c)), use_injection, cfg)
        except Exception:
            continue
        s = _safe_score(img, p_new, cfg.generator)
        if s > best_s:
            best_c, best_s = float(c), s
    return best_c


def _reweight_proposal(state: SessionState, j: int, use_injection: bool, cfg: SessionConfig) -> Optional[Proposal]:
    c = _best_scale(state, j, use_injection, cfg)
    if c is None:
        return None
    verb = "more" if c > float(state.prompt.weights[j]) else "less"
    return Proposal(
        "reweight",
        Reweight(j, c),
        f"make '{state.prompt.tokens[j].surface}' {verb} prominent",
    )


def _reweight_candidate(
    user: SimulatedUser, state: SessionState, use_injection: bool, cfg: SessionConfig
) -> Optional[Proposal]:
    cur, tgt = state.prompt, user.target
    cur_mass = _token_masses(state.stack)
    tgt_mass = _token_masses(user.target_stack)
    tgt_index = {t.id: j for j, t in reversed(list(enumerate(tgt.tokens)))}
    best_j, best_gap = None, -1.0
    for j, tok in enumerate(cur.tokens):
        jt = tgt_index.get(tok.id)
        if jt is None:
            continue
        gap = abs(float(cur_mass[j]) - float(tgt_mass[jt]))
        if gap > best_gap:
            best_j, best_gap = j, gap
    if best_j is None:
        # no shared token; fall back to the heaviest column
        best_j = int(np.argmax(cur_mass))
    return _reweight_proposal(state, best_j, use_injection, cfg)


def heuristic_proposals(
    state: SessionState, cfg: SessionConfig, use_injection: bool = True
) -> list[Proposal]:
    """Target-free suggestions: tune the most imbalanced attention column."""
    cur_mass = _token_masses(state.stack)
    j = int(np.argmax(np.abs(cur_mass - cur_mass.mean())))
    prop = _reweight_proposal(state, j, use_injection, cfg)
    return [prop] if prop is not None else []


def propose_edits(
    user: SimulatedUser,
    state: SessionState,
    cfg: SessionConfig,
    use_injection: Optional[bool] = None,
) -> list[Proposal]:
    """Ranked candidates, one per strategy: content fixes first (swap, then
    add), prominence tuning last. Strategies with nothing to offer are absent;
    when the prompt already matches the target only re-weighting remains."""
    if use_injection is None:
        use_injection = cfg.use_injection
    ranked = []
    swap = _swap_candidate(user, state)
    if swap is not None:
        ranked.append(swap)
    add = _add_candidate(user, state)
    if add is not None:
        ranked.append(add)
    rew = _reweight_candidate(user, state, use_injection, cfg)
    if rew is not None:
        ranked.append(rew)
    return ranked


# ----------------------------------------------------------------- task set


@dataclass(frozen=True)
class Task:
    initial_text: str
    target_text: str
    seed: int


class TaskSampler:
    """Deterministic stream of (corrupted prompt, target prompt) tasks.

    The target is a short word sequence; the initial prompt removes interior
    runs and usually corrupts one word, so the three editing strategies can
    always reconstruct it.
    """

    def __init__(self, seed: int, target_len: tuple[int, int] = (6, 8), words=WORDS):
        self.seed = seed
        self.target_len = target_len
        self.words = list(words)

    def task(self, index: int) -> Task:
        rng = child_rng(self.seed, "task", index)
        lo, hi = self.target_len
        n = int(rng.integers(lo, hi + 1))
        target = list(rng.choice(self.words, size=n, replace=False))
        initial = list(target)
        n_drops = int(rng.integers(2, 4))
        for _ in range(n_drops):
            if len(initial) <= 3:
                break
            run = min(int(rng.integers(1, 3)), len(initial) - 3)
            at = int(rng.integers(1, len(initial) - run + 1))
            del initial[at : at + run]
        if rng.random() < 0.7:
            # corrupt one word with an off-target replacement
            pool = [w for w in self.words if w not in target]
            at = int(rng.integers(0, len(initial)))
            initial[at] = pool[int(rng.integers(0, len(pool)))]
        return Task(" ".join(initial), " ".join(target), int(rng.integers(0, 2**48)))


# -------------------------------------------------------------- session log


@dataclass
class RoundRecord:
    round: int
    feedback: str
    edit: Optional[dict]
    clip_score: float
    image_path: str


@dataclass
class SessionLog:
    id: str
    initial_prompt: str
    rounds: list[RoundRecord]
    status: str
    ratings: Optional[dict] = None
    images: list[ToyImage] = field(default_factory=list, repr=False)
    source_dir: Optional[Path] = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "initial_prompt": self.initial_prompt,
            "rounds": [
                {
                    "round": r.round,
                    "feedback": r.feedback,
                    "edit": r.edit,
                    "clip_score": r.clip_score,
                    "image_path": r.image_path,
                }
                for r in self.rounds
            ],
            "status": self.status,
            "ratings": self.ratings,
        }

    @property
    def terminal_round(self) -> int:
        return self.rounds[-1].round

    @property
    def final_score(self) -> float:
        return self.rounds[-1].clip_score


def _require(data: dict, field_name: str, path) -> object:
    if field_name not in data:
        raise ParseError(f"{path}: missing required field '{field_name}'")
    return data[field_name]


def save_log(log: SessionLog, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{log.id}.json"
    if path.exists():
        raise CollisionError(f"session log {path} already exists")
    if log.images:
        img_dir = directory / "images"
        img_dir.mkdir(exist_ok=True)
        for record, img in zip(log.rounds, log.images):
            render_png(img, directory / record.image_path)
    with open(path, "w") as fh:
        json.dump(log.to_json(), fh, indent=2)
        fh.write("\n")
    return path


def load_log(path) -> SessionLog:
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    rounds = []
    for entry in _require(data, "rounds", path):
        rounds.append(
            RoundRecord(
                round=int(_require(entry, "round", path)),
                feedback=str(_require(entry, "feedback", path)),
                edit=_require(entry, "edit", path),
                clip_score=float(_require(entry, "clip_score", path)),
                image_path=str(_require(entry, "image_path", path)),
            )
        )
    return SessionLog(
        id=str(_require(data, "id", path)),
        initial_prompt=str(_require(data, "initial_prompt", path)),
        rounds=rounds,
        status=str(_require(data, "status", path)),
        ratings=data.get("ratings"),
        source_dir=path.parent,
    )


# -------------------------------------------------------------- run loops


def state_features(state: SessionState, cfg: SessionConfig) -> np.ndarray:
    """Policy features: prompt embedding, image embedding, last reward, and
    the fraction of rounds used."""
    d = cfg.generator.d
    try:
        img_emb = image_embedding(state.image, cfg.generator)
    except DegenerateEmbedding:
        img_emb = np.zeros(d)
    return np.concatenate(
        [
            prompt_embedding(state.prompt),
            img_emb,
            [state.last_reward, state.round / cfg.n_max],
        ]
    )


def feature_dim(cfg: SessionConfig) -> int:
    return 2 * cfg.generator.d + 2


def _image_name(session_id: str, rnd: int) -> str:
    return os.path.join("images", f"{session_id}_r{rnd}.png")


def run_session(
    task: Task,
    policy: Optional[rl.PolicyParams],
    cfg: SessionConfig,
    rng: np.random.Generator,
    pool: Optional[rl.ReplayPool] = None,
    value: Optional[rl.ValueParams] = None,
    train_cfg: Optional[rl.TrainConfig] = None,
    greedy_policy: bool = False,
    keep_images: bool = True,
) -> SessionLog:
    """Run one session to termination.

    With policy=None the top-ranked proposal is taken every round (the
    no-learning oracle loop). With a pool, each round's transition is stored
    with its TD error for later PPO updates.
    """
    user = SimulatedUser.from_text(task.target_text, cfg)
    state = new_session(task.initial_text, task.seed, cfg)
    records = [
        RoundRecord(0, "", None, state.last_reward, _image_name(state.session_id, 0))
    ]
    images = [state.image] if keep_images else []
    while not state.terminal:
        feats = state_features(state, cfg)
        proposals = propose_edits(user, state, cfg)
        if not proposals:
            break
        if policy is None:
            chosen = proposals[0]
            logprob = 0.0
        else:
            action, logprob = rl.policy_action(policy, feats, rng, greedy=greedy_policy)
            by_strategy = {p.strategy: p for p in proposals}
            chosen = by_strategy.get(rl.ACTIONS[action], proposals[0])
        prev_score = state.last_reward
        state = step_round(state, chosen.edit, cfg.use_injection, cfg)
        if pool is not None and value is not None and train_cfg is not None:
            feats_next = state_features(state, cfg)
            # improvement-shaped transition reward (optionally taxed per round)
            # keeps "maximize return" aligned with "terminate in few rounds"
            r = float(
                np.clip(state.last_reward - prev_score - train_cfg.round_penalty, -1.0, 1.0)
            )
            v_s = rl.value_of(value, feats)
            v_next = 0.0 if state.terminal else rl.value_of(value, feats_next)
            delta = rl.td_error(r, train_cfg.gamma, v_s, v_next)
            pool.insert(
                rl.Transition(
                    s=feats,
                    a=rl.ACTIONS.index(chosen.strategy),
                    r=r,
                    s_next=feats_next,
                    delta=delta,
                    inserted_at=pool.global_step,
                    old_logprob=logprob,
                    terminal=state.terminal,
                )
            )
        applied = state.last_edit
        records.append(
            RoundRecord(
                state.round,
                chosen.feedback,
                applied.to_json() if applied is not None else None,
                state.last_reward,
                _image_name(state.session_id, state.round),
            )
        )
        if keep_images:
            images.append(state.image)
    return SessionLog(
        id=state.session_id,
        initial_prompt=task.initial_text,
        rounds=records,
        status=state.status,
        images=images,
    )


def train_policy(
    train_cfg: rl.TrainConfig,
    sampler: TaskSampler,
    session_cfg: SessionConfig,
) -> tuple[rl.PolicyParams, rl.ValueParams, dict]:
    """PPO training over simulated sessions with prioritized replay."""
    fdim = feature_dim(session_cfg)
    policy = rl.PolicyParams.init(fdim)
    value = rl.ValueParams.init(fdim)
    ref = policy.copy()
    pool = rl.ReplayPool(train_cfg.capacity, train_cfg.lambda_forget, train_cfg.epsilon_priority)
    report: dict = {
        "episodes": train_cfg.episodes,
        "rounds": [],
        "final_scores": [],
        "mean_rewards": [],
        "objectives": [],
        "value_losses": [],
        "config_hash": train_cfg.config_hash(),
    }
    cfg = replace(session_cfg, tau_stop=train_cfg.tau_stop, n_max=train_cfg.n_max)
    for ep in range(train_cfg.episodes):
        rng = child_rng(train_cfg.seed, "episode", ep)
        task = sampler.task(ep)
        log = run_session(
            task, policy, cfg, rng, pool=pool, value=value, train_cfg=train_cfg,
            keep_images=False,
        )
        scores = [r.clip_score for r in log.rounds]
        report["rounds"].append(log.terminal_round)
        report["final_scores"].append(log.final_score)
        report["mean_rewards"].append(float(np.mean(scores)))
        if len(pool) >= train_cfg.batch and (ep + 1) % train_cfg.update_every == 0:
            beta = rl.anneal_beta(ep, max(train_cfg.episodes - 1, 1), train_cfg.beta0)
            batch_rng = child_rng(train_cfg.seed, "batch", ep)
            batch, weights = rl.sample_batch(pool, train_cfg.batch, beta, batch_rng)
            policy, objective = rl.update_policy(policy, batch, weights, train_cfg, ref)
            value, loss = rl.update_value(value, batch, train_cfg)
            report["objectives"].append(objective)
            report["value_losses"].append(loss)
    return policy, value, report


def mi_report(logs: list[SessionLog], cfg: SessionConfig, ridge: float = 1e-6) -> dict:
    """Mutual information between prompt and image embeddings across rounds.

    Prompts are replayed from the logged edits; images are read back from the
    rendered files (or taken in-memory when present).
    """
    vocab = Vocabulary(cfg.generator)
    xs, ys = [], []
    for log in logs:
        prompt = tokenize(log.initial_prompt, vocab)
        for i, record in enumerate(log.rounds):
            if record.edit is not None:
                prompt = apply_edit(prompt, edit_from_json(record.edit, vocab))
            if log.images:
                img = log.images[i]
            elif log.source_dir is not None:
                img = load_png(log.source_dir / record.image_path)
            else:
                continue
            try:
                xs.append(prompt_embedding(prompt))
                ys.append(image_embedding(img, cfg.generator))
            except DegenerateEmbedding:
                continue
    d = cfg.generator.d
    if len(xs) < d + 2:
        raise InsufficientSamples(
            f"need at least D+2={d + 2} embedding pairs, got {len(xs)}"
        )
    xs_arr, ys_arr = np.array(xs), np.array(ys)
    if np.allclose(xs_arr.var(axis=0), 0.0) or np.allclose(ys_arr.var(axis=0), 0.0):
        raise SingularCovariance("embedding pairs are all identical; MI undefined")
    mi = empirical_mi(xs_arr, ys_arr, ridge=ridge)
    return {"pairs": len(xs), "mi_nats": mi, "ridge": ridge}
