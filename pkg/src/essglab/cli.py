"""Command-line entry points.

Subcommands: gen-scenes, gen-expert, pretrain-il, train, eval, score,
export-traj. Every command accepts --seed, --config <file> and --out; bad
configs or missing files exit nonzero with a message on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import expert, harness, trainer
from .config import ConfigError, load_kv_config, load_scenario, scenario_from_dict
from .env import EnvConfig
from .features import ObsConfig
from .ssg import VisibilityParams
from .world import SceneGenConfig, generate_scene, load_scene, save_scene


def _gen_scenes(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    cfg = SceneGenConfig()
    for i in range(args.count):
        seed = args.seed + i
        scene = generate_scene(seed, cfg)
        save_scene(scene, os.path.join(args.out, f"{scene.scene_id}.json"))
    print(f"wrote {args.count} scene(s) to {args.out}")
    return 0


def _gen_expert(args) -> int:
    seeds = [int(s) for s in args.scene_seeds.split(",")]
    rng = np.random.default_rng(args.seed)
    cfg = expert.ExpertConfig()
    vis = VisibilityParams()
    demos = []
    for s in seeds:
        scene = generate_scene(s)
        demos.extend(expert.generate_demonstrations(scene, args.starts_per_scene, rng, cfg, vis))
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    expert.save_demonstrations(demos, args.out)
    print(f"wrote {len(demos)} demonstration(s) to {args.out}")
    return 0


def _pretrain_il(args) -> int:
    from .policynet import make_policy, save_checkpoint

    demos = expert.load_demonstrations(args.data)
    if not demos:
        print("error: demonstration dataset is empty", file=sys.stderr)
        return 1
    obs_cfg = ObsConfig(depth=args.depth)
    env_cfg = EnvConfig(obs=obs_cfg)
    rng = np.random.default_rng(args.seed)
    policy = make_policy("sh16", obs_cfg, rng)
    scenes = {}
    seqs = []
    for demo in demos:
        if demo.scene_id not in scenes:
            scenes[demo.scene_id] = generate_scene(int(demo.scene_id.rsplit("_", 1)[1]))
        seqs.append(trainer.replay_demo_features(demo, scenes[demo.scene_id],
                                                 policy.action_spec, env_cfg))
    stats = trainer.il_pretrain(policy, seqs, args.epochs, args.lr, rng)
    save_checkpoint(args.out, policy)
    print(f"pretrained on {len(seqs)} trajectories: "
          f"accuracy={stats['accuracy']:.4f} cross_entropy={stats['cross_entropy']:.4f}")
    return 0


def _train(args) -> int:
    scenario = load_scenario(args.config)
    if args.seed is not None:
        scenario.seed = args.seed
    result = trainer.train_loop(scenario, args.out)
    print(f"training complete: log={result['train_log']} checkpoints={len(result['checkpoints'])}")
    return 0


def _eval(args) -> int:
    from .policynet import load_checkpoint

    policy = load_checkpoint(args.checkpoint)
    seeds = [int(s) for s in args.scene_seeds.split(",")]
    scenes = [generate_scene(s) for s in seeds]
    env_cfg = EnvConfig(obs=policy.obs)
    report = harness.evaluate(policy, scenes, env_cfg,
                              episodes_per_scene=args.episodes, seed=args.seed)
    harness.save_report(report, args.out)
    agg = report.aggregate
    print(f"node_recall={agg['node_recall_mean']:.4f}±{agg['node_recall_std']:.4f} "
          f"over {agg['episodes']} episodes -> {args.out}")
    return 0


def _score(args) -> int:
    stats = harness.window_stats_from_log(args.log, window=args.window)
    j = harness.objective_J(stats)
    print(f"{j:.6f}")
    return 0


def _export_traj(args) -> int:
    report = harness.load_report(args.report)
    os.makedirs(args.out, exist_ok=True)
    for i, ep in enumerate(report["episodes"]):
        path = os.path.join(args.out, f"episode_{i:03d}_{ep['scene_id']}.json")
        with open(path, "w") as f:
            json.dump(ep["trajectory"], f, indent=2)
            f.write("\n")
    print(f"wrote {len(report['episodes'])} trajectory file(s) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="essglab",
                                     description="Embodied scene-graph exploration lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenes", help="write procedurally generated scene JSON files")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="scenes")
    p.set_defaults(func=_gen_scenes)

    p = sub.add_parser("gen-expert", help="generate an expert demonstration JSONL dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scene-seeds", default="1,2,3,4,5,6,7,8")
    p.add_argument("--starts-per-scene", type=int, default=3)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="expert.jsonl")
    p.set_defaults(func=_gen_expert)

    p = sub.add_parser("pretrain-il", help="behavior-clone a policy from demonstrations")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--depth", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="il_checkpoint.npz")
    p.set_defaults(func=_pretrain_il)

    p = sub.add_parser("train", help="run a training scenario from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="run")
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on held-out scenes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene-seeds", default="28,29,30")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="eval_report.json")
    p.set_defaults(func=_eval)

    p = sub.add_parser("score", help="print the composite objective J from a training log")
    p.add_argument("--log", required=True)
    p.add_argument("--window", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_score)

    p = sub.add_parser("export-traj", help="split an eval report into per-episode pose JSON")
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="trajectories")
    p.set_defaults(func=_export_traj)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
