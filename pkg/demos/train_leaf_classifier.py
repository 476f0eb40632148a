"""Grow a synthetic leaf dataset, train the classifier, read the report.

Small numbers by default so the whole story runs in under a minute;
--full uses the counts a real training run would.
"""

import argparse
import time

from aerogreen.vision import (
    ConvNet,
    TrainConfig,
    augment,
    evaluate,
    render_report,
    save_model,
    split,
    synthetic_dataset,
    train,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--full", action="store_true",
                    help="1200 images and 10 epochs instead of 300 and 4")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="leaf_model.npz")
    args = ap.parse_args()

    n_images = 1200 if args.full else 300
    epochs = 10 if args.full else 4

    t0 = time.perf_counter()
    images = synthetic_dataset(n_images, seed=args.seed)
    print(f"generated {len(images)} leaves in {time.perf_counter() - t0:.1f} s")

    parts = split(images, seed=args.seed)
    grown = augment(parts.train, 2 * len(parts.train), seed=args.seed)
    parts = type(parts)(train=grown, val=parts.val, test=parts.test)
    print(f"split {len(grown)}/{len(parts.val)}/{len(parts.test)}"
          f" after doubling the training pool")

    model = ConvNet(seed=args.seed)
    cfg = TrainConfig(epochs=epochs, seed=args.seed)
    model, train_curve, val_curve = train(model, parts, cfg)
    for e, (ta, va) in enumerate(zip(train_curve, val_curve)):
        print(f"  epoch {e}: train {ta:.3f}  val {va:.3f}")

    report = evaluate(model, parts.test, train_curve, val_curve)
    print()
    print(render_report(report))

    save_model(model, args.out)
    print(f"\nmodel saved to {args.out}")


if __name__ == "__main__":
    main()
