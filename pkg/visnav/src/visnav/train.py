"""Training loop and checkpoint I/O.

Plain Adam regression on shuffled mini-batches. The loss curve (one mean
loss per epoch) is returned alongside the model so callers can assert
convergence; a non-finite loss aborts immediately with the recent
history in the message rather than silently training on garbage.

Checkpoints are self-describing: the architecture hyperparameters, the
image size, and (when known) the generation parameters of the world the
samples were rendered from all travel with the weights, so `serve` can
rebuild the exact view pipeline from the file alone.

CLI:
    visnav-train --telemetry LOG [--telemetry LOG ...] --out ckpt.pt
                 [--epochs N] [--lr F] [--seed N] [--image-size N]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from .dataset import TrainingSample, samples_from_telemetry
from .loss import seven_value_loss
from .model import TwoBranchPolicyNet

CHECKPOINT_SCHEMA = "visnav-checkpoint/1"
MIN_SAMPLES = 500


class TrainingDiverged(RuntimeError):
    """Loss left the finite floats; carries the recent loss history."""


def _batches(count: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(count, generator=generator)
    for lo in range(0, count, batch_size):
        yield order[lo:lo + batch_size]


def train(
    samples: list[TrainingSample],
    epochs: int,
    lr: float = 1e-4,
    *,
    betas: tuple[float, float] = (0.9, 0.999),
    batch_size: int = 32,
    seed: int = 0,
    dense2_width: int = 100,
    rotation_scale: float | None = 0.1,
    min_samples: int = MIN_SAMPLES,
    model: TwoBranchPolicyNet | None = None,
) -> tuple[TwoBranchPolicyNet, list[float]]:
    """Fit a TwoBranchPolicyNet to the samples; returns (model, loss curve).

    min_samples guards against accidentally training on a sliver of a
    log; capacity checks that intentionally overfit a handful of samples
    lower it explicitly.
    """
    if len(samples) < min_samples:
        raise ValueError(
            f"{len(samples)} samples < the {min_samples}-sample minimum"
        )
    if epochs < 1:
        raise ValueError("epochs must be at least 1")

    image_size = samples[0].image.shape[0]
    images = torch.from_numpy(
        np.stack([s.image for s in samples]).transpose(0, 3, 1, 2)
    )
    targets = torch.from_numpy(np.stack([s.target for s in samples]))

    torch.manual_seed(seed)
    if model is None:
        model = TwoBranchPolicyNet(image_size=image_size, dense2_width=dense2_width)
    optimizer = torch.optim.Adam(
        (p for p in model.parameters() if p.requires_grad), lr=lr, betas=betas
    )
    shuffler = torch.Generator().manual_seed(seed)

    curve: list[float] = []
    model.train()
    for epoch in range(epochs):
        epoch_losses = []
        for idx in _batches(len(samples), batch_size, shuffler):
            optimizer.zero_grad()
            value = seven_value_loss(
                model.predict(images[idx]), targets[idx], rotation_scale
            )
            if not torch.isfinite(value):
                raise TrainingDiverged(
                    f"loss became {value.item()} in epoch {epoch}; "
                    f"per-epoch curve so far: {[round(v, 4) for v in curve]}"
                )
            value.backward()
            optimizer.step()
            epoch_losses.append(value.item())
        curve.append(sum(epoch_losses) / len(epoch_losses))
    model.eval()
    return model, curve


def evaluate(
    model: TwoBranchPolicyNet,
    samples: list[TrainingSample],
    rotation_scale: float | None = 0.1,
) -> float:
    """Mean loss over the samples with dropout disabled."""
    images = torch.from_numpy(
        np.stack([s.image for s in samples]).transpose(0, 3, 1, 2)
    )
    targets = torch.from_numpy(np.stack([s.target for s in samples]))
    model.eval()
    with torch.no_grad():
        return seven_value_loss(model.predict(images), targets,
                                rotation_scale).item()


def save_checkpoint(
    model: TwoBranchPolicyNet,
    path: str | Path,
    *,
    loss_curve: list[float] | None = None,
    world_params: dict | None = None,
) -> None:
    torch.save(
        {
            "schema": CHECKPOINT_SCHEMA,
            "image_size": model.image_size,
            "dense2_width": model.dense2_width,
            "state_dict": model.state_dict(),
            "loss_curve": list(loss_curve or []),
            "world_params": world_params,
        },
        path,
    )


def load_checkpoint(path: str | Path) -> tuple[TwoBranchPolicyNet, dict]:
    payload = torch.load(path, weights_only=False)
    if payload.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(
            f"{path}: not a {CHECKPOINT_SCHEMA} checkpoint "
            f"(schema {payload.get('schema')!r})"
        )
    model = TwoBranchPolicyNet(
        image_size=payload["image_size"], dense2_width=payload["dense2_width"]
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    meta = {k: v for k, v in payload.items() if k != "state_dict"}
    return model, meta


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--telemetry", action="append", required=True,
                        help="telemetry JSONL to train on (repeatable)")
    parser.add_argument("--out", required=True, help="checkpoint path")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--image-size", type=int, default=112)
    parser.add_argument("--batch-size", type=int, default=32)
    args = parser.parse_args(argv)

    samples: list[TrainingSample] = []
    world_params = None
    for log in args.telemetry:
        from quadsitl.mission import read_telemetry

        header, _ = read_telemetry(log)
        if world_params is None:
            world_params = {
                "name": header["world"],
                "seed": int(header["seed"]) + 2,
                "center": list(header["start"]),
                "size": 200.0,
            }
        samples.extend(samples_from_telemetry(log, image_size=args.image_size))
    print(f"{len(samples)} samples from {len(args.telemetry)} log(s)")

    try:
        model, curve = train(
            samples, epochs=args.epochs, lr=args.lr, seed=args.seed,
            batch_size=args.batch_size,
        )
    except TrainingDiverged as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"cannot train: {exc}", file=sys.stderr)
        return 1
    save_checkpoint(model, args.out, loss_curve=curve, world_params=world_params)
    print(f"epoch losses: first {curve[0]:.4f} last {curve[-1]:.4f}")
    print(f"saved {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
