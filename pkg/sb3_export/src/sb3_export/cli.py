"""Command-line entry point for the export bridge."""

from __future__ import annotations

import argparse
import sys

from .export import ExportManifest, export_dataset, export_weights
from .loader import ExportError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sb3-export",
        description="Export a stable-baselines3 TD3 checkpoint into vqdistill formats",
    )
    ap.add_argument("--model", required=True, help="SB3 .zip checkpoint")
    ap.add_argument("--env", required=True, help="environment id, e.g. MountainCarContinuous-v0")
    ap.add_argument("--episodes", type=int, default=100)
    ap.add_argument("--out-weights", default="weights.json")
    ap.add_argument("--out-dataset", default=None,
                    help="write a rollout dataset here (omit to export weights only)")
    ap.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    manifest = ExportManifest(
        model_path=args.model,
        env_id=args.env,
        n_episodes=args.episodes,
        out_weights=args.out_weights,
        out_dataset=args.out_dataset or "dataset.jsonl",
        seed=args.seed,
    )
    try:
        export_weights(manifest)
        print(f"wrote weights to {manifest.out_weights}")
        if args.out_dataset:
            returns = export_dataset(manifest)
            for i, r in enumerate(returns):
                print(f"episode {i}: return {r:.3f}")
            print(f"wrote {len(returns)} episodes to {manifest.out_dataset}")
        return 0
    except (ExportError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
