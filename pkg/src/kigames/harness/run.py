"""Training, evaluation, comparison and reward curves for any configured agent."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..agents.common import EnvBatch, build_vocab
from ..agents.drrn import DrrnAgent
from ..agents.kga2c import Kga2cAgent
from ..agents.scorer import ScorerAgent, train_scorer
from ..autodiff.checkpoint import load_checkpoint, save_checkpoint
from ..autodiff.nn import ParamStore
from ..knowledge.affordances import load_affordances
from ..world import TextWorldEnv, load_bundled_world, load_world
from ..world.chain import ChainEnv
from .config import ConfigError, ExperimentConfig

CHAIN_TEXTS = ("You are in room 0 1 2 .", "Reach the goal room.", "go left", "go right")
EPISODE_FIELDS = ("task", "variation", "seed", "steps", "score", "perfect")
LOG_FIELDS = {
    "drrn": ("update", "loss", "mean_q"),
    "kga2c": ("update", "pg", "vl", "L_T", "L_O", "L_E", "score"),
    "scorer": ("epoch", "loss"),
}


# -- resources ------------------------------------------------------------------

@dataclass
class Resources:
    spec: object
    store: object
    vocab: object


def load_resources(config):
    spec = load_world(config.world) if config.world else load_bundled_world()
    store = load_affordances(config.affordances)
    extra = CHAIN_TEXTS if "chain" in config.tasks else ()
    return Resources(spec, store, build_vocab(spec, store, extra))


def is_chain(config):
    return config.tasks == ["chain"]


def env_factory(config, res):
    if is_chain(config):
        return ChainEnv
    if "chain" in config.tasks:
        raise ConfigError("the chain task cannot be mixed with world tasks")
    return lambda: TextWorldEnv(res.spec)


def episodes(config, res, which):
    """(task, variation) pairs for ``which`` in {"train", "eval"}."""
    chosen = config.train_variations if which == "train" else config.eval_variations
    out = []
    for task in config.tasks:
        if task == "chain":
            out.append(("chain", 0))
            continue
        if task not in res.spec.tasks:
            raise ConfigError(f"unknown task {task!r}; known: {sorted(res.spec.tasks)}")
        known = sorted(res.spec.tasks[task].variations)
        vs = known if chosen is None else list(chosen)
        missing = [v for v in vs if v not in known]
        if missing:
            raise ConfigError(f"task {task} has no variations {missing}")
        out.extend((task, v) for v in vs)
    return out


# -- pseudo agents ----------------------------------------------------------------

class RandomAgent:
    """Uniform choice among the valid actions."""

    kind = "random"

    def __init__(self):
        self.params = ParamStore()
        self.log = []

    def new_context(self):
        return None

    def choose_batch(self, contexts, results, rng, mode="eval"):
        return [r.valid_actions[int(rng.integers(len(r.valid_actions)))] for r in results]

    def after_step(self, context, action, result):
        pass

    def config_dict(self):
        return {}


class GoldenAgent(RandomAgent):
    """Follows the golden pointer; falls back to a random valid action when it has nothing to say."""

    kind = "golden"

    def choose_batch(self, contexts, results, rng, mode="eval"):
        fallback = super().choose_batch(contexts, results, rng, mode)
        return [r.golden_next if r.golden_next is not None else f for r, f in zip(results, fallback)]


def build_agent(config, res, seed):
    cfg = config.agent_config()
    if config.agent == "drrn":
        store = res.store if cfg.use_aff else None
        return DrrnAgent(res.vocab, cfg, seed=seed, store=store, object_names=list(res.spec.objects))
    if config.agent == "kga2c":
        return Kga2cAgent(res.vocab, res.spec, cfg, seed=seed, store=res.store)
    if config.agent == "scorer":
        return ScorerAgent(res.vocab, cfg, seed=seed)
    if config.agent == "random":
        return RandomAgent()
    return GoldenAgent()


# -- training ---------------------------------------------------------------------

def checkpoint_meta(config, agent, seed):
    return {"agent": config.agent, "variant": config.variant, "seed": seed,
            "agent_config": agent.config_dict(), "experiment": config.to_dict()}


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return f"{x:.6g}" if isinstance(x, float) else x


@dataclass
class TrainResult:
    seed: int
    checkpoint: Path
    log: list
    episodes: list = field(default_factory=list)


def train_one(config, res, seed):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agent = build_agent(config, res, seed)
    finished = []
    ckpt = out / f"checkpoint-seed{seed}.npz"

    def on_episode(r):
        finished.append((len(finished), r.step, r.score))
        every = config.checkpoint_every
        if every and sum(f[1] for f in finished) // every > sum(f[1] for f in finished[:-1]) // every:
            save_checkpoint(ckpt, agent.params, checkpoint_meta(config, agent, seed))

    if config.agent in ("drrn", "kga2c") and config.steps > 0:
        batch = EnvBatch(env_factory(config, res), episodes(config, res, "train"), config.n_envs, seed)
        agent.train(batch, config.steps, on_episode=on_episode)
    elif config.agent == "scorer" and config.epochs > 0:
        train_scorer(agent, TextWorldEnv(res.spec), episodes(config, res, "train"), res.store,
                     np.random.default_rng(seed), dump=out / f"scorer_examples-seed{seed}.jsonl")
    save_checkpoint(ckpt, agent.params, checkpoint_meta(config, agent, seed))
    if config.agent in LOG_FIELDS:
        rows = [row if isinstance(row, tuple) else (i, row) for i, row in enumerate(agent.log)]
        _write_csv(out / f"train_log-seed{seed}.csv", LOG_FIELDS[config.agent], [[_fmt(x) for x in r] for r in rows])
    _write_csv(out / f"train_episodes-seed{seed}.csv", ("episode", "steps", "score"),
               [(e, s, f"{sc:.2f}") for e, s, sc in finished])
    return TrainResult(seed, ckpt, list(agent.log), finished)


def train(config, res=None):
    """Train one agent per configured seed; returns a TrainResult per seed."""
    res = res or load_resources(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    return [train_one(config, res, s) for s in config.seeds]


def load_agent(path, config, res):
    state, meta = load_checkpoint(path)
    if meta.get("agent") != config.agent:
        raise ConfigError(f"{path}: checkpoint holds a {meta.get('agent')} agent, config asks for {config.agent}")
    if meta.get("variant") != config.variant:
        raise ConfigError(f"{path}: checkpoint variant {meta.get('variant')} != config variant {config.variant}")
    agent = build_agent(config, res, meta.get("seed", 0))
    agent.params.load_state_dict(state)
    if hasattr(agent, "target"):
        agent.target.load_state_dict(state)
    return agent


# -- evaluation -------------------------------------------------------------------

@dataclass
class RunReport:
    label: str
    rows: list
    trajectories: list

    @property
    def mean_score(self):
        return float(np.mean([r["score"] for r in self.rows])) if self.rows else 0.0

    def aggregate(self):
        tasks = {}
        for r in self.rows:
            tasks.setdefault(r["task"], []).append(r)
        seeds = sorted({r["seed"] for r in self.rows})
        return {
            "label": self.label,
            "episodes": len(self.rows),
            "mean_score": round(self.mean_score, 6),
            "perfect": sum(r["perfect"] for r in self.rows),
            "runs": {str(s): round(float(np.mean([r["score"] for r in self.rows if r["seed"] == s])), 6)
                     for s in seeds},
            "tasks": {t: {"mean_score": round(float(np.mean([r["score"] for r in rs])), 6),
                          "perfect": sum(r["perfect"] for r in rs), "episodes": len(rs)}
                      for t, rs in sorted(tasks.items())},
        }

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "episodes.csv", EPISODE_FIELDS,
                   [(r["task"], r["variation"], r["seed"], r["steps"], f"{r['score']:.2f}", int(r["perfect"]))
                    for r in self.rows])
        (out / "aggregate.json").write_text(json.dumps(self.aggregate(), indent=2, sort_keys=True) + "\n")
        (out / "trajectories.json").write_text(json.dumps({"label": self.label, "trajectories": self.trajectories}))
        write_curves(out / "curves.csv", reward_curves({self.label: self.trajectories}))
        return out


def run_episodes(agent, make_env, eps, seed, max_steps, ends_on_invalid=False):
    """Play every (task, variation) once in lockstep; returns (rows, score trajectories)."""
    rng = np.random.default_rng(seed)
    envs = [make_env() for _ in eps]
    results = [env.reset(t, v, seed) for env, (t, v) in zip(envs, eps)]
    contexts = [agent.new_context() for _ in eps]
    trajs = [[] for _ in eps]
    active = [i for i, r in enumerate(results) if not r.done]
    while active:
        actions = agent.choose_batch([contexts[i] for i in active], [results[i] for i in active], rng, mode="eval")
        still = []
        for i, a in zip(active, actions):
            invalid = ends_on_invalid and a not in results[i].valid_actions
            r = envs[i].step(a)
            agent.after_step(contexts[i], a, r)
            results[i] = r
            trajs[i].append(r.score)
            if not (r.done or invalid or r.step >= max_steps):
                still.append(i)
        active = still
    rows = [{"task": t, "variation": v, "seed": seed, "steps": results[i].step, "score": results[i].score,
             "perfect": results[i].score >= 100.0}
            for i, (t, v) in enumerate(eps)]
    return rows, trajs


def evaluate(checkpoint, config, res=None, label=None):
    """Three (or ``eval_seeds``) seeded passes over every evaluation variation, 100-step cap."""
    res = res or load_resources(config)
    agent = load_agent(checkpoint, config, res)
    eps = episodes(config, res, "eval")
    make_env = env_factory(config, res)
    ends = bool(getattr(agent, "ends_on_invalid", False))
    rows, trajs = [], []
    for s in config.eval_seeds:
        r, t = run_episodes(agent, make_env, eps, s, config.max_steps, ends)
        rows += r
        trajs += t
    default = config.variant if config.agent in LOG_FIELDS else config.agent
    return RunReport(label or default, rows, trajs)


def run_trials(config, res=None, label=None):
    """Train then evaluate. With ``retrain_trials`` each evaluation seed gets its own freshly trained
    model and a single pass; otherwise the first training seed's checkpoint is evaluated on every seed."""
    res = res or load_resources(config)
    if not config.retrain_trials:
        (first, *_) = train(config.replace(seeds=config.seeds[:1]), res)
        return evaluate(first.checkpoint, config, res, label)
    rows, trajs = [], []
    for s in config.eval_seeds:
        trial = config.replace(seeds=[s], eval_seeds=[s], out_dir=str(Path(config.out_dir) / f"trial-{s}"))
        (result,) = train(trial, res)
        rep = evaluate(result.checkpoint, trial, res, label)
        rows += rep.rows
        trajs += rep.trajectories
    return RunReport(rep.label, rows, trajs)


# -- comparison and curves ----------------------------------------------------------

@dataclass
class Comparison:
    labels: list
    tasks: list
    means: dict
    perfect: dict
    best: dict
    deltas: dict

    def render(self):
        w = max([len(t) for t in self.tasks] + [4])
        cols = [max(len(lab), 12) for lab in self.labels]
        lines = ["task".ljust(w) + "  " + "  ".join(lab.rjust(c) for lab, c in zip(self.labels, cols))]
        for t in self.tasks:
            cells = []
            for lab, c in zip(self.labels, cols):
                mark = "*" if lab in self.best[t] else " "
                cells.append(f"{self.means[t][lab]:.2f} ({self.perfect[t][lab]}){mark}".rjust(c))
            lines.append(t.ljust(w) + "  " + "  ".join(cells))
        avg = [np.mean([self.means[t][lab] for t in self.tasks]) for lab in self.labels]
        lines.append("-" * len(lines[0]))
        lines.append("mean".ljust(w) + "  " + "  ".join(f"{a:.2f}".rjust(c) for a, c in zip(avg, cols)))
        lines.append("* best on the reported mean score; (n) counts episodes scoring 100")
        return "\n".join(lines)


def compare(aggregates):
    """Side-by-side per-task means, perfect counts, best marks and deltas against the first report."""
    if not aggregates:
        raise ValueError("nothing to compare")
    task_sets = [sorted(a["tasks"]) for a in aggregates]
    if any(ts != task_sets[0] for ts in task_sets):
        raise ValueError(f"reports cover different task sets: {task_sets}")
    labels = []
    for i, a in enumerate(aggregates):
        lab = a.get("label", f"run{i}")
        labels.append(lab if lab not in labels else f"{lab}#{i}")
    tasks = task_sets[0]
    means = {t: {lab: a["tasks"][t]["mean_score"] for lab, a in zip(labels, aggregates)} for t in tasks}
    perfect = {t: {lab: a["tasks"][t]["perfect"] for lab, a in zip(labels, aggregates)} for t in tasks}
    best = {t: [lab for lab in labels if means[t][lab] == max(means[t].values())] for t in tasks}
    deltas = {t: {lab: means[t][lab] - means[t][labels[0]] for lab in labels} for t in tasks}
    return Comparison(labels, tasks, means, perfect, best, deltas)


def reward_curves(trajectory_sets, length=None):
    """Per-step mean and std of score across trajectories, one series per mode.

    Step 0 is the reset (score 0); finished trajectories hold their final score
    up to the common length, so the last point is the mean final score.
    """
    longest = max((len(t) for ts in trajectory_sets.values() for t in ts), default=0)
    n = longest if length is None else length
    rows = []
    for mode, ts in trajectory_sets.items():
        if not ts:
            continue
        grid = np.array([[0.0] + list(t) + [t[-1] if t else 0.0] * (n - len(t)) for t in ts])[:, : n + 1]
        for step in range(grid.shape[1]):
            rows.append((step, float(grid[:, step].mean()), float(grid[:, step].std()), mode))
    return rows


def write_curves(path, rows):
    _write_csv(path, ("step", "mean", "std", "mode"), [(s, f"{m:.6f}", f"{sd:.6f}", mode) for s, m, sd, mode in rows])


def final_means(rows):
    """Mean at the last step of each mode's curve."""
    last = {}
    for step, mean, _, mode in rows:
        if step >= last.get(mode, (-1, 0))[0]:
            last[mode] = (step, mean)
    return {m: v for m, (_, v) in last.items()}
