"""Turn mined commits, metrics, and labels into model-ready instances.

Cleaning joins the three inputs, drops commits with no source files or an
empty message, and imputes absent numeric metrics with the training-split
median. Text becomes a dense vector either from the seeded hashing
featurizer or from an external embedding file. Numeric columns are
z-scored with statistics taken from the training split only.
"""

import hashlib
import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import (
    DimMismatch,
    DuplicateHash,
    JoinMismatch,
    MalformedLine,
    TooFewInstances,
)
from .mining import ChangeMetrics
from .storage import read_jsonl

NUMERIC_FIELDS = ChangeMetrics.NUMERIC_FIELDS
CAT_DIM = 13  # fix(2) + weekday(7) + change-kind mix(4)
DEFAULT_HASH_DIM = 256
DEFAULT_EMBEDDING_DIM = 768

_TOKEN_RE = re.compile(r"[0-9a-z]+")


@dataclass(frozen=True)
class TextVector:
    dim: int
    values: tuple
    source: str  # hash_featurizer | external_embedding


@dataclass(frozen=True)
class RawInstance:
    """Joined commit before vectorization; numerics may still be imputed."""

    hash: str
    message: str
    author_time: int
    fix: bool
    change_kinds: tuple
    numerics: dict  # field -> float, all 13 present after clean()
    label: int


@dataclass(frozen=True)
class LabeledInstance:
    hash: str
    text: TextVector
    cat: tuple  # 13 ints, one bit per group
    num: tuple  # 13 z-scored floats
    label: int


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple = (8, 1, 1)
    seed: int = 0
    chronological: bool = False


def clean(records, metrics, labels, train_hashes=None):
    """Join the three keyed inputs into RawInstances, imputing gaps.

    metrics values may be ChangeMetrics or plain dicts (as read from
    disk); a dict may omit numeric fields, which are imputed with the
    median over the training rows. When train_hashes is None the median
    is taken over every surviving row instead; callers that split must
    pass the training hashes to avoid leakage.
    """
    survivors = []
    for record in records:
        if record.is_merge or not record.files:
            continue
        if not record.message.strip():
            continue
        if record.hash not in metrics:
            raise JoinMismatch("no metrics for commit %s" % record.hash)
        if record.hash not in labels:
            raise JoinMismatch("no label for commit %s" % record.hash)
        survivors.append(record)

    def metric_dict(m):
        return m.as_dict() if isinstance(m, ChangeMetrics) else dict(m)

    def label_value(lab):
        return int(lab.buggy) if hasattr(lab, "buggy") else int(lab)

    # pass 1: find the training medians for any absent numeric field
    pool = (
        [r for r in survivors if r.hash in train_hashes]
        if train_hashes is not None
        else survivors
    )
    medians = {}
    for field in NUMERIC_FIELDS:
        known = sorted(
            metric_dict(metrics[r.hash])[field]
            for r in pool
            if field in metric_dict(metrics[r.hash])
        )
        if known:
            mid = len(known) // 2
            medians[field] = (
                known[mid]
                if len(known) % 2
                else (known[mid - 1] + known[mid]) / 2.0
            )

    # pass 2: emit the join, filling gaps
    out = []
    for record in survivors:
        m = metric_dict(metrics[record.hash])
        numerics = {}
        for field in NUMERIC_FIELDS:
            if field in m:
                numerics[field] = float(m[field])
            elif field in medians:
                numerics[field] = float(medians[field])
            else:
                raise JoinMismatch(
                    "metric %s missing everywhere in the training rows" % field
                )
        out.append(
            RawInstance(
                hash=record.hash,
                message=record.message,
                author_time=record.author_time,
                fix=bool(m.get("fix", False)),
                change_kinds=tuple(fc.change_kind for fc in record.files),
                numerics=numerics,
                label=label_value(labels[record.hash]),
            )
        )
    return out


def hash_featurize(message, dim=DEFAULT_HASH_DIM, seed=0):
    """Seeded feature hashing of the message into a unit-norm vector.

    Tokens are lowercase alphanumeric runs. Bucket and sign come from two
    keyed hashes so they are independent; the zero vector (no tokens) is
    returned unnormalized.
    """
    if dim < 2:
        raise ValueError("text dim must be at least 2")
    key = int(seed).to_bytes(8, "little", signed=False)
    vec = np.zeros(dim, dtype=np.float64)
    for token in _TOKEN_RE.findall(message.lower()):
        data = token.encode("utf-8")
        bucket = int.from_bytes(
            hashlib.blake2b(data, digest_size=8, key=key, person=b"bucket").digest(),
            "little",
        ) % dim
        sign_bit = hashlib.blake2b(
            data, digest_size=8, key=key, person=b"sign"
        ).digest()[0] & 1
        vec[bucket] += 1.0 if sign_bit else -1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec = vec / norm
    return TextVector(dim=dim, values=tuple(float(v) for v in vec), source="hash_featurizer")


def load_embeddings(path, expected_dim=DEFAULT_EMBEDDING_DIM):
    """Read the embedding JSONL contract into {hash: TextVector}."""
    table = {}
    for line_number, row in read_jsonl(path):
        if not isinstance(row, dict) or not {"hash", "dim", "vector"} <= set(row):
            raise MalformedLine(
                "expected keys hash, dim, vector", line_number=line_number
            )
        sha = row["hash"]
        vector = row["vector"]
        if row["dim"] != expected_dim or len(vector) != expected_dim:
            raise DimMismatch(
                "embedding for %s has dim %s, expected %d"
                % (sha, row["dim"], expected_dim)
            )
        if sha in table:
            raise DuplicateHash(sha)
        values = tuple(float(v) for v in vector)
        if not all(math.isfinite(v) for v in values):
            raise MalformedLine(
                "non-finite embedding for %s" % sha, line_number=line_number
            )
        table[sha] = TextVector(
            dim=expected_dim, values=values, source="external_embedding"
        )
    return table


def encode_categorical(fix, author_time, change_kinds):
    """13-bit one-hot triple: fix flag, UTC weekday, change-kind mix."""
    bits = [0] * CAT_DIM
    bits[1 if fix else 0] = 1
    weekday = datetime.fromtimestamp(author_time, tz=timezone.utc).weekday()
    bits[2 + weekday] = 1
    kinds = set(change_kinds)
    if kinds == {"add"}:
        mix = 0
    elif kinds == {"modify"}:
        mix = 1
    elif kinds == {"delete"}:
        mix = 2
    else:
        mix = 3  # renames and mixtures
    bits[9 + mix] = 1
    return tuple(bits)


def split_indices(n, spec):
    """Deterministic (train, val, test) index lists for n instances."""
    if n < 10:
        raise TooFewInstances("need at least 10 instances, got %d" % n)
    r1, r2, r3 = spec.ratios
    if min(r1, r2, r3) <= 0:
        raise ValueError("split ratios must be positive")
    total = r1 + r2 + r3
    n_train = n * r1 // total
    n_val = n * r2 // total
    if spec.chronological:
        order = list(range(n))
    else:
        order = [int(i) for i in np.random.RandomState(spec.seed).permutation(n)]
    return (
        order[:n_train],
        order[n_train : n_train + n_val],
        order[n_train + n_val :],
    )


def split(instances, spec):
    train_idx, val_idx, test_idx = split_indices(len(instances), spec)
    pick = lambda idx: [instances[i] for i in idx]
    return pick(train_idx), pick(val_idx), pick(test_idx)


def numeric_stats(raws):
    """Per-field mean and population std over a training pool."""
    stats = {}
    for field in NUMERIC_FIELDS:
        col = np.array([r.numerics[field] for r in raws], dtype=np.float64)
        stats[field] = (float(col.mean()), float(col.std()))
    return stats


def zscore(numerics, stats):
    out = []
    for field in NUMERIC_FIELDS:
        mean, std = stats[field]
        value = numerics[field]
        out.append((value - mean) / std if std > 0.0 else 0.0)
    return tuple(out)


def vectorize(raws, stats, text_dim=DEFAULT_HASH_DIM, text_seed=0, embeddings=None):
    """RawInstances -> LabeledInstances with a fixed text source.

    embeddings=None selects the hash featurizer; otherwise every hash
    must be present in the embedding table.
    """
    instances = []
    for raw in raws:
        if embeddings is None:
            text = hash_featurize(raw.message, dim=text_dim, seed=text_seed)
        else:
            text = embeddings.get(raw.hash)
            if text is None:
                raise JoinMismatch("no embedding for commit %s" % raw.hash)
        instances.append(
            LabeledInstance(
                hash=raw.hash,
                text=text,
                cat=encode_categorical(raw.fix, raw.author_time, raw.change_kinds),
                num=zscore(raw.numerics, stats),
                label=int(raw.label),
            )
        )
    return instances


def instance_to_dict(inst):
    return {
        "hash": inst.hash,
        "label": inst.label,
        "text": {
            "dim": inst.text.dim,
            "source": inst.text.source,
            "values": list(inst.text.values),
        },
        "cat": list(inst.cat),
        "num": list(inst.num),
    }


def instance_from_dict(d):
    from .errors import CorruptFile

    try:
        text = d["text"]
        return LabeledInstance(
            hash=d["hash"],
            text=TextVector(
                dim=int(text["dim"]),
                values=tuple(float(v) for v in text["values"]),
                source=text["source"],
            ),
            cat=tuple(int(v) for v in d["cat"]),
            num=tuple(float(v) for v in d["num"]),
            label=int(d["label"]),
        )
    except (KeyError, TypeError) as exc:
        raise CorruptFile("bad instance record: %s" % exc) from exc


def to_matrices(instances):
    """Stack instances into (text, cat, num, label) float64 arrays."""
    if not instances:
        raise TooFewInstances("empty instance list")
    text_dim = instances[0].text.dim
    for inst in instances:
        if inst.text.dim != text_dim:
            raise DimMismatch(
                "text dim %d for %s, expected %d" % (inst.text.dim, inst.hash, text_dim)
            )
    text = np.array([inst.text.values for inst in instances], dtype=np.float64)
    cat = np.array([inst.cat for inst in instances], dtype=np.float64)
    num = np.array([inst.num for inst in instances], dtype=np.float64)
    labels = np.array([inst.label for inst in instances], dtype=np.float64)
    return text, cat, num, labels
