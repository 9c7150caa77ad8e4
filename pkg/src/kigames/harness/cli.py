"""Command line: kigames {train,eval,compare,curves,play,inspect-kg}."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..autodiff.checkpoint import CheckpointError
from ..autodiff.tensor import ShapeError
from ..knowledge import KnowledgeGraph, extract_triples, load_affordances
from ..world import TextWorldEnv, WorldFileError, load_bundled_world, load_world
from .config import ConfigError, ExperimentConfig
from .run import compare, evaluate, reward_curves, run_trials, train, write_curves


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        if key.startswith("hyper."):
            changes.setdefault("hyper", dict(cfg.hyper))[key[6:]] = _parse_value(value)
        else:
            changes[key] = _parse_value(value)
    for name in ("agent", "variant", "steps", "epochs", "out_dir"):
        if getattr(args, name, None) is not None:
            changes[name] = getattr(args, name)
    if getattr(args, "tasks", None):
        changes["tasks"] = args.tasks.split(",")
    if getattr(args, "seeds", None):
        changes["seeds"] = [int(s) for s in args.seeds.split(",")]
    return cfg.replace(**changes) if changes else cfg


def _config_flags(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--agent")
    p.add_argument("--variant")
    p.add_argument("--tasks", help="comma-separated task ids")
    p.add_argument("--seeds", help="comma-separated training seeds")
    p.add_argument("--steps", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key; hyper.NAME=VALUE sets an agent hyperparameter")


def cmd_train(args, out):
    cfg = build_config(args)
    if cfg.retrain_trials:
        report = run_trials(cfg)
        report.write(cfg.out_dir)
        agg = report.aggregate()
        print(f"{agg['label']}: mean score {agg['mean_score']:.2f} over {len(cfg.eval_seeds)} retrained trials; "
              f"reports in {cfg.out_dir}", file=out)
        return 0
    for r in train(cfg):
        print(f"seed {r.seed}: {len(r.episodes)} training episodes, checkpoint {r.checkpoint}", file=out)
    return 0


def cmd_eval(args, out):
    cfg = build_config(args)
    report = evaluate(args.checkpoint, cfg, label=args.label)
    target = Path(args.report_dir or cfg.out_dir)
    report.write(target)
    agg = report.aggregate()
    print(f"{agg['label']}: mean score {agg['mean_score']:.2f} over {agg['episodes']} episodes "
          f"({agg['perfect']} perfect); reports in {target}", file=out)
    return 0


def cmd_compare(args, out):
    aggs = []
    for path in args.reports:
        p = Path(path)
        aggs.append(json.loads((p / "aggregate.json" if p.is_dir() else p).read_text()))
    table = compare(aggs).render()
    print(table, file=out)
    if args.output:
        Path(args.output).write_text(table + "\n")
    return 0


def cmd_curves(args, out):
    sets = {}
    for path in args.runs:
        p = Path(path)
        d = json.loads((p / "trajectories.json" if p.is_dir() else p).read_text())
        sets.setdefault(d["label"], []).extend(d["trajectories"])
    rows = reward_curves(sets)
    write_curves(args.output, rows)
    for mode in sets:
        last = [r for r in rows if r[3] == mode][-1]
        print(f"{mode}: final mean {last[1]:.2f} (std {last[2]:.2f}) at step {last[0]}", file=out)
    return 0


def _world(args):
    return load_world(args.world) if args.world else load_bundled_world()


def _show(r, out):
    print(r.obv, file=out)
    if r.reward:
        print(f"Score: {r.score:.2f}", file=out)
    if r.done:
        print(f"Episode finished. Final score: {r.score:.2f}", file=out)


def cmd_play(args, out, inp):
    spec = _world(args)
    env = TextWorldEnv(spec)
    r = env.reset(args.task, args.variation, args.seed)
    print(r.desc, file=out)
    print(r.obv, file=out)
    scripted = [a.strip() for a in args.actions.split(";")] if args.actions else None
    if args.script:
        scripted = [ln.strip() for ln in Path(args.script).read_text().splitlines() if ln.strip()]
    source = iter(scripted) if scripted is not None else (ln.strip() for ln in inp)
    for action in source:
        if r.done:
            break
        if action in ("quit", "exit"):
            break
        if action == "valid":
            print(", ".join(r.valid_actions), file=out)
            continue
        print(f"> {action}", file=out)
        r = env.step(action)
        _show(r, out)
    return 0


def cmd_inspect_kg(args, out):
    spec = _world(args)
    env = TextWorldEnv(spec)
    r = env.reset(args.task, args.variation, args.seed)
    kg = KnowledgeGraph()
    kg.update(extract_triples(f"{r.obv} {r.look} {r.inv}"))
    for action in [a.strip() for a in args.actions.split(";")] if args.actions else []:
        r = env.step(action)
        kg.update(extract_triples(f"{r.obv} {r.look} {r.inv}"))
        if r.done:
            break
    if args.aff:
        kg.augment(load_affordances(args.affordances))
    if len(kg):
        print(kg.dump(), file=out)
    print(f"{len(kg.entity_names)} entities, {len(kg)} triples", file=out)
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="kigames", description="Knowledge-injected agents for a miniature text world.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent per seed and write checkpoints")
    _config_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint: 3 seeded passes, 100-step cap")
    _config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--label", help="name for this run in reports (default: the variant)")
    p.add_argument("--report-dir", help="where to write episodes.csv, aggregate.json and curves.csv")

    p = sub.add_parser("compare", help="side-by-side table of aggregate reports")
    p.add_argument("reports", nargs="+", help="aggregate.json files or run directories")
    p.add_argument("--output", help="also write the table to this file")

    p = sub.add_parser("curves", help="reward curves (mean and std of score per step) from evaluation runs")
    p.add_argument("runs", nargs="+", help="trajectories.json files or run directories")
    p.add_argument("--output", default="curves.csv")

    for name, helptext in (("play", "play an episode by hand or from a script"),
                           ("inspect-kg", "replay actions and print the extracted knowledge graph")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--task", required=True)
        p.add_argument("--variation", type=int, default=0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--world", help="world file (default: the bundled one)")
        p.add_argument("--actions", help="semicolon-separated actions to replay")
        if name == "play":
            p.add_argument("--script", help="file with one action per line")
        else:
            p.add_argument("--aff", action="store_true", help="add affordance triples for graph entities")
            p.add_argument("--affordances", help="affordance TSV (default: the bundled one)")
    return parser


def main(argv=None, out=None, inp=None):
    out = out or sys.stdout
    inp = inp or sys.stdin
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    handlers = {
        "train": lambda: cmd_train(args, out),
        "eval": lambda: cmd_eval(args, out),
        "compare": lambda: cmd_compare(args, out),
        "curves": lambda: cmd_curves(args, out),
        "play": lambda: cmd_play(args, out, inp),
        "inspect-kg": lambda: cmd_inspect_kg(args, out),
    }
    try:
        return handlers[args.command]()
    except (ConfigError, WorldFileError) as e:
        print(f"kigames: error: {e}", file=sys.stderr)
        return 2
    except (CheckpointError, ShapeError, KeyError, ValueError, OSError, RuntimeError) as e:
        print(f"kigames: {args.command} failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
