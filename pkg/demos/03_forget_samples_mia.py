"""Forget 100 random training samples and audit with a membership attack.

A model that has truly forgotten the samples should treat them like any
other unseen point: their accuracy should match test accuracy, and a
membership-inference attack should call them non-members at the same
rate as genuinely held-out data. The gradient-ascent baseline shows why
accuracy alone is not enough; it damages the samples without hiding them.
"""

import argparse

import unlearnlab as ul

SAMPLE_COUNT = 100


def sample_config(seed: int) -> ul.EngineConfig:
    return ul.EngineConfig(
        seed=seed,
        batch_size=32,
        learning_rate=0.05,
        remaining_resamples=1,
        loss=ul.LossConfig(variant="sample", unlearn_weight=1.0 / 32.0, ce_weight=1.0),
    )


def describe(name: str, params, task: ul.UnlearnTask, seed: int) -> None:
    acc_u = ul.accuracy(params, task.unlearn_train)
    acc_t = ul.accuracy(params, task.test)
    mia = ul.run_mia(params, task, split_seed=seed)
    gap = mia.member_rate_heldout_members - mia.member_rate_unlearn
    print(f"{name:12s}  acc(forgotten) {acc_u:.3f}  acc(test) {acc_t:.3f}  "
          f"member rate {mia.member_rate_unlearn:.3f} vs held-out "
          f"{mia.member_rate_heldout_members:.3f}  (gap {gap:+.3f})")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    train_data, test_data = ul.generate_synthetic(
        num_classes=4, dim=8, per_class_train=500, per_class_test=100,
        spread=0.7, seed=args.seed,
    )
    arch = ul.ModelArchitecture(
        input_dim=8, hidden=(32, 32), embedding_dim=16, num_classes=4
    )
    train_cfg = ul.EngineConfig(
        seed=args.seed, max_epochs=400, learning_rate=0.15, batch_size=32
    )

    print(f"training base model (seed {args.seed})...")
    base, _ = ul.train(arch, train_data, train_cfg)

    task = ul.make_task(
        train_data, test_data,
        ul.TaskSpec(kind="sample", sample_count=SAMPLE_COUNT, seed=args.seed),
    )
    cfg = sample_config(args.seed)

    print(f"unlearning {SAMPLE_COUNT} samples with each method...\n")
    contrastive, _ = ul.unlearn_contrastive(base, task, cfg)
    neggrad, _ = ul.unlearn_neggrad(base, task, cfg)
    retrained, _ = ul.retrain(arch, task, train_cfg)

    describe("base", base, task, args.seed)
    describe("contrastive", contrastive, task, args.seed)
    describe("neggrad", neggrad, task, args.seed)
    describe("retrain", retrained, task, args.seed)

    print("\nA positive gap means the attack sees the forgotten samples as")
    print("less member-like than samples the model still trains on.")


if __name__ == "__main__":
    main()
