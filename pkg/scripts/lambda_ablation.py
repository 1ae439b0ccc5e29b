#!/usr/bin/env python3
"""Dynamic coefficient agent versus fixed lambda grid, trainable experts.

Trains the same two-expert mixture under each arm (four fixed lambdas and
the learned agent) across several seeds, then prints mean test accuracy
per arm.  The claim under test is weak dominance: the agent should match
or beat the best fixed value without being told which one that is.
"""

import argparse
import sys

import numpy as np

from meshmoe.experts import build_experts
from meshmoe.gate import GateConfig
from meshmoe.rng import derive
from meshmoe.sac import SACConfig, SacLambdaAgent, StaticLambdaAgent
from meshmoe.synth import generate_classification_set
from meshmoe.trainer import build_system, evaluate_classification, train_run

STATIC_GRID = (-1.0, 0.0, 0.1, 1.0)


def run_arm(arm, seed: int, epochs: int, per_class: int) -> float:
    dataset = generate_classification_set(classes=2, per_class=per_class,
                                          seed=derive(seed, "data"))
    experts = build_experts(["face_mlp", "face_mlp"], num_classes=2,
                            seed=derive(seed, "experts"), hidden=16)
    config = GateConfig(num_experts=2, encoder_layers=1, decoder_layers=1,
                        d_model=16, heads=2, ff_width=32, num_classes=2)
    system = build_system(experts, task="classification", gate_config=config,
                          seed=derive(seed, "gate"))
    system.walks_train = 4
    system.walks_infer = 8
    if arm == "dynamic":
        agent = SacLambdaAgent(SACConfig(state_dim=2, batch_size=8),
                               seed=derive(seed, "agent"))
    else:
        agent = StaticLambdaAgent(float(arm))
    train_run(system, dataset, agent, epochs=epochs, batch_size=8,
              gate_lr=1e-3, expert_lr=1e-3, seed=derive(seed, "train"))
    result = evaluate_classification(system, dataset.test_meshes,
                                     seed=derive(seed, "eval"))
    return result["accuracy"]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=15)
    ap.add_argument("--per-class", type=int, default=20)
    args = ap.parse_args()

    arms = [str(v) for v in STATIC_GRID] + ["dynamic"]
    table = {}
    for arm in arms:
        scores = []
        for seed in args.seeds:
            acc = run_arm(arm, seed, args.epochs, args.per_class)
            scores.append(acc)
            print(f"arm {arm:>8}  seed {seed}  test accuracy {acc:.3f}")
        table[arm] = scores

    print("\narm        mean    per-seed")
    for arm in arms:
        scores = table[arm]
        row = " ".join(f"{s:.3f}" for s in scores)
        print(f"{arm:>8}   {np.mean(scores):.3f}   {row}")
    best_static = max(np.mean(table[str(v)]) for v in STATIC_GRID)
    dyn = float(np.mean(table["dynamic"]))
    print(f"\nbest static {best_static:.3f} vs dynamic {dyn:.3f} "
          f"(margin {dyn - best_static:+.3f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
