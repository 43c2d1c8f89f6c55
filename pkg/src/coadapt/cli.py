"""Command-line entry points: generate, simulate, train, eval, mi, serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import rl
from .errors import CoadaptError, EmptyInput
from .generator import GeneratorConfig, Vocabulary, generate, render_png
from .metrics import EvalReport, SessionRow, rounds_stats, ssim
from .prompts import tokenize
from .reward import clip_score
from .seeding import child_rng
from .session import (
    SessionConfig,
    SimulatedUser,
    TaskSampler,
    load_log,
    mi_report,
    run_session,
    save_log,
    train_policy,
)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _session_config(config: dict, seed: int | None = None) -> SessionConfig:
    gen_data = dict(config.get("generator", {}))
    if seed is not None:
        gen_data["seed"] = seed
    gen = GeneratorConfig.from_json(gen_data) if gen_data else GeneratorConfig()
    sess_data = dict(config.get("session", {}))
    sess_data["generator"] = gen.to_json()
    return SessionConfig.from_json(sess_data)


def _train_config(config: dict, **overrides) -> rl.TrainConfig:
    data = dict(config.get("train", {}))
    data.update({k: v for k, v in overrides.items() if v is not None})
    return rl.TrainConfig(**data)


@click.group()
def cli():
    """Iterative prompt-and-attention image refinement toolkit."""


@cli.command("generate")
@click.option("--prompt", "prompt_text", required=True, help="Prompt text.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default="out.png", show_default=True, type=click.Path())
@click.option("--attention-out", default=None, type=click.Path(), help="Dump the attention stack as JSON.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def cmd_generate(prompt_text, seed, out, attention_out, config_path):
    """Render one prompt to a PNG (optionally dumping attention maps)."""
    cfg = _session_config(_load_config_file(config_path), seed=seed)
    vocab = Vocabulary(cfg.generator)
    prompt = tokenize(prompt_text, vocab)
    img, stack = generate(prompt, cfg.generator)
    render_png(img, out)
    if attention_out:
        payload = stack.to_json()
        payload["tokens"] = list(prompt.surfaces)
        with open(attention_out, "w") as fh:
            json.dump(payload, fh)
    click.echo(f"wrote {out} (clip score {clip_score(img, prompt, cfg.generator):.4f})")


@cli.command("simulate")
@click.option("--n", "n_sessions", default=5, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", default="runs", show_default=True, type=click.Path())
@click.option("--policy", "policy_path", default=None, type=click.Path(exists=True))
@click.option("--no-injection", is_flag=True, help="Regenerate from scratch instead of carrying attention over.")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def cmd_simulate(n_sessions, seed, out_dir, policy_path, no_injection, config_path):
    """Run simulated sessions; write logs, images, and an evaluation report."""
    cfg = _session_config(_load_config_file(config_path))
    if no_injection:
        from dataclasses import replace

        cfg = replace(cfg, use_injection=False)
    policy = None
    if policy_path:
        policy, _, _ = rl.load_checkpoint(policy_path)
    sampler = TaskSampler(seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = EvalReport()
    for i in range(n_sessions):
        task = sampler.task(i)
        rng = child_rng(seed, "simulate", i)
        log = run_session(task, policy, cfg, rng)
        save_log(log, out)
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
    report.write_csv(out / "report.csv")
    report.write_summary(out / "summary.json")
    click.echo(
        f"{n_sessions} sessions -> {out} | mean rounds {report.mean_rounds:.2f}, "
        f"mean final reward {report.mean_final_reward:.4f}"
    )


@cli.command("train")
@click.option("--episodes", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--out", "ckpt_path", default="policy.json", show_default=True, type=click.Path())
@click.option("--report", "report_path", default=None, type=click.Path())
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def cmd_train(episodes, seed, ckpt_path, report_path, config_path):
    """Train the strategy policy with PPO and prioritized replay."""
    config = _load_config_file(config_path)
    cfg = _session_config(config)
    tcfg = _train_config(config, episodes=episodes, seed=seed)
    sampler = TaskSampler(seed=tcfg.seed)
    policy, value, report = train_policy(tcfg, sampler, cfg)
    rl.save_checkpoint(ckpt_path, policy, value, tcfg)
    if report_path:
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=1)
    rounds = report["rounds"]
    mean_rounds = float(np.mean(rounds)) if rounds else float("nan")
    click.echo(f"trained {tcfg.episodes} episodes -> {ckpt_path} (mean rounds {mean_rounds:.2f})")


@cli.command("eval")
@click.option("--logs", "logs_dir", required=True, type=click.Path(exists=True))
@click.option("--out-csv", default=None, type=click.Path())
@click.option("--out-json", default=None, type=click.Path())
def cmd_eval(logs_dir, out_csv, out_json):
    """Summarize a directory of session logs."""
    paths = sorted(Path(logs_dir).glob("*.json"))
    logs = [load_log(p) for p in paths if p.name not in ("summary.json",)]
    if not logs:
        raise EmptyInput(f"no session logs found in {logs_dir}")
    mean, sd = rounds_stats(logs)
    summary = {
        "sessions": len(logs),
        "mean_rounds": mean,
        "sd_rounds": sd,
        "mean_final_reward": float(np.mean([log.final_score for log in logs])),
        "accepted_by_threshold": sum(1 for l in logs if l.status == "accepted_by_threshold"),
    }
    if out_csv:
        with open(out_csv, "w") as fh:
            fh.write("session_id,rounds,final_reward,status\n")
            for log in logs:
                fh.write(f"{log.id},{log.terminal_round},{log.final_score:.6f},{log.status}\n")
    if out_json:
        with open(out_json, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@cli.command("mi")
@click.option("--logs", "logs_dir", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def cmd_mi(logs_dir, config_path):
    """Mutual information between prompt and image embeddings across logs."""
    cfg = _session_config(_load_config_file(config_path))
    paths = sorted(Path(logs_dir).glob("*.json"))
    logs = [load_log(p) for p in paths if p.name not in ("summary.json",)]
    if not logs:
        raise EmptyInput(f"no session logs found in {logs_dir}")
    click.echo(json.dumps(mi_report(logs, cfg), indent=2, sort_keys=True))


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--policy", "policy_path", default=None, type=click.Path(exists=True))
@click.option("--logs-dir", default=None, type=click.Path())
@click.option("--static", "static_dir", default=None, type=click.Path(exists=True))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
def cmd_serve(host, port, policy_path, logs_dir, static_dir, config_path):
    """Serve the live-session HTTP API (and optionally the web UI)."""
    import os

    import uvicorn

    from .service import create_app

    # COADAPT_PORT wins over the flag so deployments can pin the port
    port = int(os.environ.get("COADAPT_PORT", port))
    cfg = _session_config(_load_config_file(config_path))
    policy = None
    if policy_path:
        policy, _, _ = rl.load_checkpoint(policy_path)
    app = create_app(cfg, policy=policy, logs_dir=logs_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


def main(argv=None) -> int:
    """Entry point with the documented exit codes: 0 ok, 1 runtime, 2 usage."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.UsageError as exc:
        exc.show(file=sys.stderr)
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except CoadaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
