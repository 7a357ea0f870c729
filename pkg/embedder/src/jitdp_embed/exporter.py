"""Batch export of commit-message embeddings from a frozen encoder.

Reads mined commits as JSONL, runs each message through a pre-trained
language model in inference mode, pools the token states into one
fixed-width vector per commit, and writes the embedding file consumed by
the prediction pipeline: one line per commit, `{"hash", "dim", "vector"}`,
dim equal to the encoder's hidden size. The encoder is never updated;
determinism comes from eval mode (no dropout) plus stable batching.
"""

import dataclasses
import json
import warnings

import torch
from transformers import AutoModel, AutoTokenizer

POOLING_MODES = ("cls_token", "mean_tokens")


class ModelLoadError(Exception):
    """The named encoder or its tokenizer could not be loaded."""


class TruncationWarning(UserWarning):
    """Some commit messages were longer than the encoder can consume."""


@dataclasses.dataclass(frozen=True)
class EmbeddingRequest:
    """One export job: which commits, which encoder, how to pool."""

    commits_path: str
    model_name: str
    output_path: str
    pooling: str = "mean_tokens"
    batch_size: int = 32

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise ValueError(
                "pooling must be one of %s, got %r"
                % ("/".join(POOLING_MODES), self.pooling)
            )
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive, got %d" % self.batch_size)


@dataclasses.dataclass(frozen=True)
class ExportReport:
    count: int
    dim: int
    truncated: int


def read_commit_messages(path):
    """Pull (hash, message) pairs out of a commits JSONL file.

    Only those two keys matter here; the miner writes many more per line.
    """
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError("line %d: %s" % (line_number, exc)) from exc
            if not isinstance(row, dict) or "hash" not in row or "message" not in row:
                raise ValueError(
                    "line %d: expected keys hash and message" % line_number
                )
            pairs.append((str(row["hash"]), str(row["message"])))
    return pairs


def load_encoder(model_name):
    try:
        tokenizer = AutoTokenizer.from_pretrained(model_name)
        model = AutoModel.from_pretrained(model_name)
    except Exception as exc:
        raise ModelLoadError("cannot load %r: %s" % (model_name, exc)) from exc
    model.eval()
    return tokenizer, model


def token_limit(tokenizer, model):
    # tokenizers without a configured limit report a huge sentinel; the
    # position table is the hard ceiling either way
    limit = int(tokenizer.model_max_length)
    max_positions = getattr(model.config, "max_position_embeddings", None)
    if max_positions is not None:
        limit = min(limit, int(max_positions))
    return limit


def _pool(hidden, attention_mask, mode):
    if mode == "cls_token":
        return hidden[:, 0, :]
    mask = attention_mask.unsqueeze(-1).to(hidden.dtype)
    return (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1.0)


def export(request):
    """Embed every commit message and write one JSONL line per commit.

    Returns an ExportReport with the line count, the vector dimension, and
    how many commits had their message cut to the encoder's token limit.
    Raises ModelLoadError if the encoder cannot be resolved; emits one
    aggregated TruncationWarning when any message was cut.
    """
    pairs = read_commit_messages(request.commits_path)
    tokenizer, model = load_encoder(request.model_name)
    limit = token_limit(tokenizer, model)
    dim = int(model.config.hidden_size)

    # identical messages share one forward pass, so equal text yields an
    # equal vector no matter how the batches fall
    order = {}
    for _, message in pairs:
        order.setdefault(message, len(order))
    unique = list(order)

    vectors = []
    over_limit = []
    with torch.inference_mode():
        for start in range(0, len(unique), request.batch_size):
            batch = unique[start : start + request.batch_size]
            raw = tokenizer(batch, truncation=False, verbose=False)
            over_limit.extend(len(ids) > limit for ids in raw["input_ids"])
            encoded = tokenizer(
                batch,
                padding=True,
                truncation=True,
                max_length=limit,
                return_tensors="pt",
            )
            hidden = model(**encoded).last_hidden_state
            pooled = _pool(hidden, encoded["attention_mask"], request.pooling)
            vectors.extend(pooled.tolist())

    truncated = sum(1 for _, message in pairs if over_limit[order[message]])
    with open(request.output_path, "w", encoding="utf-8") as fh:
        for sha, message in pairs:
            row = {"hash": sha, "dim": dim, "vector": vectors[order[message]]}
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False))
            fh.write("\n")

    if truncated:
        warnings.warn(
            "%d of %d messages exceed the %d-token limit and were cut off"
            % (truncated, len(pairs), limit),
            TruncationWarning,
            stacklevel=2,
        )
    return ExportReport(count=len(pairs), dim=dim, truncated=truncated)
