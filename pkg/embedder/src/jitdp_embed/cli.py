"""Command-line front end: one flag per EmbeddingRequest field.

Errors leave a one-line JSON object on stderr and a nonzero exit code,
matching the pipeline's convention.
"""

import argparse
import json
import sys

from .exporter import POOLING_MODES, EmbeddingRequest, ModelLoadError, export


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jitdp-embed",
        description="Export frozen-encoder commit-message embeddings as JSONL.",
    )
    parser.add_argument("--commits", required=True, help="mined commits JSONL to read")
    parser.add_argument(
        "--model", required=True, help="pre-trained encoder name or local path"
    )
    parser.add_argument(
        "--pooling",
        choices=POOLING_MODES,
        default="mean_tokens",
        help="how to collapse token states into one vector (default mean_tokens)",
    )
    parser.add_argument("--out", required=True, help="embedding JSONL to write")
    parser.add_argument(
        "--batch-size", type=int, default=32, help="messages per forward pass"
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    request = EmbeddingRequest(
        commits_path=args.commits,
        model_name=args.model,
        output_path=args.out,
        pooling=args.pooling,
        batch_size=args.batch_size,
    )
    try:
        report = export(request)
    except (ModelLoadError, OSError, ValueError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    print(
        "wrote %d vectors of dim %d (%d truncated)"
        % (report.count, report.dim, report.truncated),
        file=sys.stderr,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
