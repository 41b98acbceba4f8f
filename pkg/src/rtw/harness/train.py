"""The outer training loop, checkpoints and evaluation suites."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from rtw.baselines import er_weights, rr_weights
from rtw.harness.config import ConfigError, ExperimentConfig, derive_rng
from rtw.harness.metrics import METRIC_FIELDS, MetricsRecord, compute_metrics, fmt
from rtw.harness.tasks import VecRunner, build_pool, eval_worlds, make_task, run_episode
from rtw.nn import NonFiniteError
from rtw.ppo import ActorCritic, PpoConfig, ppo_update
from rtw.teacher import Teacher, TeacherRecord, teacher_reward

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "rtw-checkpoint/1"


class TrainingAborted(RuntimeError):
    """Training stopped on a non-finite signal; earlier checkpoints are kept."""


def student_ppo_config(cfg: ExperimentConfig) -> PpoConfig:
    s = cfg.student
    return PpoConfig(s.clip_epsilon, s.gamma, s.gae_lambda, s.epochs, s.minibatch_size,
                     s.value_coef, s.entropy_coef, s.learning_rate, s.max_grad_norm)


def teacher_ppo_config(cfg: ExperimentConfig) -> PpoConfig:
    t = cfg.teacher
    return PpoConfig(t.clip_epsilon, t.gamma, t.gae_lambda, t.epochs, t.episodes_per_update,
                     t.value_coef, t.entropy_coef, t.learning_rate, t.max_grad_norm)


def make_teacher(cfg: ExperimentConfig, task, rng) -> Teacher:
    t = cfg.teacher
    return Teacher(task.k, t.horizon,
                   primary_scale=t.primary_scale or task.primary_scale,
                   aux_scale=t.aux_scale or task.default_aux_scale,
                   config=teacher_ppo_config(cfg), episodes_per_update=t.episodes_per_update,
                   hidden=tuple(t.hidden), rng=rng)


# --- checkpoints ------------------------------------------------------------

def save_checkpoint(path, cfg: ExperimentConfig, iteration, student: ActorCritic, teacher: Teacher | None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "task": cfg.task,
        "method": cfg.method,
        "iteration": iteration,
        "obs_dim": student.obs_dim,
        "act_dim": student.act_dim,
        "config": cfg.to_dict(),
        "student": student.to_dict(),
        "teacher": None if teacher is None else teacher.to_dict(),
    }
    path.write_text(json.dumps(payload))
    return path


def resolve_checkpoint(path) -> Path:
    """Accept a checkpoint file, a ``checkpoints/`` directory or a run directory."""
    p = Path(path)
    if p.is_file():
        return p
    for d in (p / "checkpoints", p):
        files = sorted(d.glob("iter_*.json"), key=lambda f: int(f.stem.split("_")[1])) if d.is_dir() else []
        if files:
            return files[-1]
    raise FileNotFoundError(f"no checkpoint found at {path}")


def load_checkpoint(path):
    """Returns ``(config, student, payload)``."""
    p = resolve_checkpoint(path)
    payload = json.loads(p.read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{p} is not an rtw checkpoint")
    cfg = ExperimentConfig.from_dict(payload["config"])
    student = ActorCritic.from_dict(payload["student"])
    return cfg, student, payload


# --- evaluation -------------------------------------------------------------

def policy_controller(task, student: ActorCritic):
    def act(env, obs, rng):
        return task.command(student.act(obs, None, deterministic=True)[0])
    return act


def planner_controller(task, mppi_params):
    planner = task.planner(mppi_params)

    def act(env, obs, rng):
        if env.state.steps_elapsed == 0:
            planner.reset()
        return planner.act(env, rng)
    return act


def evaluate_controller(task, controller, worlds, rng=None, iteration=0) -> MetricsRecord:
    env = task.make_env()
    episodes = [run_episode(task, env, controller, w, rng) for w in worlds]
    return compute_metrics(episodes, task.name, task.k, iteration)


def run_evaluation(checkpoint, task=None, n_trials=30, seed=None) -> MetricsRecord:
    """Deterministic-policy evaluation of a checkpoint over a fixed seeded suite."""
    cfg, student, payload = load_checkpoint(checkpoint)
    task_name = task or cfg.task
    if task_name != cfg.task:
        raise ConfigError(f"checkpoint was trained on {cfg.task!r}, not {task_name!r}")
    t = make_task(cfg.task, cfg.env)
    if student.obs_dim != t.obs_dim or student.act_dim != t.act_dim:
        raise ConfigError(f"checkpoint dims ({student.obs_dim}, {student.act_dim}) do not match "
                          f"task dims ({t.obs_dim}, {t.act_dim})")
    worlds = eval_worlds(t, cfg.eval_seed if seed is None else seed, n_trials)
    return evaluate_controller(t, policy_controller(t, student), worlds, iteration=payload["iteration"])


def run_mppi_evaluation(cfg: ExperimentConfig, n_trials, seed=None, eval_seed=None) -> MetricsRecord:
    t = make_task(cfg.task, cfg.env)
    worlds = eval_worlds(t, cfg.eval_seed if eval_seed is None else eval_seed, n_trials)
    rng = derive_rng(cfg.seeds[0] if seed is None else seed, "mppi")
    return evaluate_controller(t, planner_controller(t, cfg.mppi), worlds, rng)


# --- CSV logs ---------------------------------------------------------------

def metrics_header(k):
    return (["iter", "env_steps", "episodes", *METRIC_FIELDS, "mean_primary", "teacher_reward"]
            + [f"aux_{i + 1}" for i in range(k)] + ["loss", "clip_frac", "entropy", "value_err"])


def weights_header(k):
    return ["iter"] + [f"w_{i + 1}" for i in range(k)] + ["teacher_reward"]


def eval_header():
    return ["iter", "env_steps", "trials", *METRIC_FIELDS]


def _row(values):
    return ",".join(fmt(v) for v in values) + "\n"


def _metrics_row(it, env_steps, m: MetricsRecord, stats, k):
    mean_primary = float(np.mean(m.episode_primary)) if m.episode_primary else None
    aux = m.mean_aux if m.mean_aux is not None else [None] * k
    return _row([it, env_steps, m.episodes, *m.metric_values().values(), mean_primary, m.teacher_reward,
                 *aux, stats.loss, stats.clip_frac, stats.entropy, stats.value_err])


def _eval_row(it, env_steps, m: MetricsRecord):
    return _row([it, env_steps, m.episodes, *m.metric_values().values()])


# --- training ---------------------------------------------------------------

def run_dir_for(cfg: ExperimentConfig, seed, out_dir=None) -> Path:
    base = Path(out_dir) if out_dir is not None else Path(cfg.output_dir)
    return base / f"{cfg.task}_{cfg.method}_seed{seed}"


def run_training(cfg: ExperimentConfig, seed=None, out_dir=None, run_dir=None) -> Path:
    """Train one (task, method, seed) and write metrics.csv, weights.csv, eval.csv,
    checkpoints/iter_<n>.json and summary.json into the run directory."""
    cfg.validate()
    seed = cfg.seeds[0] if seed is None else int(seed)
    run = Path(run_dir) if run_dir is not None else run_dir_for(cfg, seed, out_dir)
    run.mkdir(parents=True, exist_ok=True)
    (run / "config.json").write_text(cfg.to_json() + "\n")
    task = make_task(cfg.task, cfg.env)
    k = task.k

    if cfg.method == "mppi":
        return _mppi_run(cfg, task, seed, run)

    student = ActorCritic(task.obs_dim, task.act_dim, cfg.student.policy_hidden, cfg.student.value_hidden,
                          rng=derive_rng(seed, "student-init"), learning_rate=cfg.student.learning_rate)
    teacher = make_teacher(cfg, task, derive_rng(seed, "teacher-init")) if cfg.method == "rtw" else None
    act_rng = derive_rng(seed, "student-actions")
    shuffle_rng = derive_rng(seed, "student-shuffle")
    teacher_rng = derive_rng(seed, "teacher-actions")
    rr_rng = derive_rng(seed, "random-weights")
    pool = build_pool(task, cfg.map_pool_size, derive_rng(seed, "world-pool"))
    runner = VecRunner(task, cfg.num_envs, derive_rng(seed, "world-resets"), pool)
    suite = eval_worlds(task, cfg.eval_seed, cfg.eval_trials) if cfg.eval_every > 0 else []
    ppo_cfg = student_ppo_config(cfg)
    ckpt_dir = run / "checkpoints"
    save_checkpoint(ckpt_dir / "iter_0.json", cfg, 0, student, teacher)

    steps_per_env = cfg.steps_per_env
    env_steps = 0
    status = "completed"
    with open(run / "metrics.csv", "w") as mf, open(run / "weights.csv", "w") as wf, \
            open(run / "eval.csv", "w") as ef:
        mf.write(",".join(metrics_header(k)) + "\n")
        wf.write(",".join(weights_header(k)) + "\n")
        ef.write(",".join(eval_header()) + "\n")
        try:
            for it in range(cfg.iterations):
                draw = None
                if cfg.method == "rtw":
                    if it == 0:
                        weights = np.full(k, 0.5)  # w_0: midpoint of the box, before any teacher action
                    else:
                        draw = teacher.act(teacher_rng)
                        weights = draw.weights
                elif cfg.method == "er":
                    weights = er_weights(cfg.task)
                else:
                    weights = rr_weights(cfg.task, rr_rng)

                batch, adv, ret, episodes = runner.collect(student, steps_per_env, weights, act_rng,
                                                           ppo_cfg.gamma, ppo_cfg.gae_lambda)
                env_steps += len(batch)
                m = compute_metrics(episodes, task.name, k, it + 1)
                m.weights = weights
                m.teacher_reward = teacher_reward(m)
                stats = ppo_update(student, batch, ppo_cfg, shuffle_rng, adv, ret)
                if teacher is not None:
                    record = TeacherRecord(weights, m.teacher_reward, m.mean_aux)
                    teacher.observe(draw, m.teacher_reward, record, teacher_rng)

                mf.write(_metrics_row(it + 1, env_steps, m, stats, k))
                wf.write(_row([it + 1, *weights, m.teacher_reward]))
                if cfg.eval_every > 0 and (it + 1) % cfg.eval_every == 0:
                    em = evaluate_controller(task, policy_controller(task, student), suite, iteration=it + 1)
                    ef.write(_eval_row(it + 1, env_steps, em))
                if cfg.checkpoint_every > 0 and (it + 1) % cfg.checkpoint_every == 0:
                    save_checkpoint(ckpt_dir / f"iter_{it + 1}.json", cfg, it + 1, student, teacher)
                if (it + 1) % 10 == 0:
                    log.info("%s/%s seed %d iter %d: success %s, w=%s", cfg.task, cfg.method, seed, it + 1,
                             fmt(m.success_rate), np.round(weights, 3).tolist())
        except NonFiniteError as exc:
            status = f"aborted: {exc}"
            log.error("training aborted at iteration %d: %s", it + 1, exc)

    if status == "completed" and cfg.iterations > 0:
        save_checkpoint(ckpt_dir / f"iter_{cfg.iterations}.json", cfg, cfg.iterations, student, teacher)
    final = None
    if status == "completed" and cfg.final_eval_trials > 0:
        worlds = eval_worlds(task, cfg.eval_seed, cfg.final_eval_trials)
        final = evaluate_controller(task, policy_controller(task, student), worlds, iteration=cfg.iterations)
    _write_summary(run, cfg, seed, status, env_steps, final)
    if status != "completed":
        raise TrainingAborted(status)
    return run


def _mppi_run(cfg, task, seed, run):
    k = task.k
    final = run_mppi_evaluation(cfg, cfg.final_eval_trials, seed)
    with open(run / "metrics.csv", "w") as mf:
        mf.write(",".join(metrics_header(k)) + "\n")
        mf.write(_row([0, 0, final.episodes, *final.metric_values().values(), None, None,
                       *final.mean_aux, None, None, None, None]))
    _write_summary(run, cfg, seed, "completed", 0, final)
    return run


def _write_summary(run, cfg, seed, status, env_steps, final: MetricsRecord | None):
    summary = {
        "task": cfg.task,
        "method": cfg.method,
        "seed": seed,
        "iterations": cfg.iterations,
        "env_steps": env_steps,
        "status": status,
        "final_eval": None if final is None else {"trials": final.episodes, **final.metric_values()},
    }
    (run / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
