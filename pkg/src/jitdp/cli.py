"""Command-line pipeline: mine, label, featurize, split, train, evaluate.

Each stage reads the previous stage's files from the output directory and
writes its own under stable names, so any prefix of the pipeline can be
rerun in isolation. `all` chains every stage. Errors leave a one-line
JSON object on stderr and a nonzero exit code.
"""

import argparse
import json
import logging
import os
import sys

from . import dataset as ds
from . import fusion, szz
from .config import COMBINE_ALIASES, STAGE_KEYS, resolve
from .errors import JitdpError, StageInputMissing
from .evaluation import evaluate as evaluate_scores
from .evaluation import write_report
from .mining import SourceFilter, compute_all_metrics, mine_history
from .storage import (
    label_from_dict,
    label_to_dict,
    metrics_from_dict,
    metrics_to_dict,
    read_json,
    read_jsonl,
    record_from_dict,
    record_to_dict,
    write_json,
    write_jsonl,
)

logger = logging.getLogger(__name__)

COMMITS = "commits.jsonl"
METRICS = "metrics.jsonl"
LABELS = "labels.jsonl"
LABEL_WARNINGS = "labels_warnings.jsonl"
DATASET = "dataset.jsonl"
DATASET_STATS = "dataset_stats.json"
SPLITS = "splits.json"
MODEL = "model.json"
TRAIN_REPORT = "train_report.json"
REPORT = "report.json"
REPORT_CSV = "report.csv"


def _out_path(cfg, name):
    return os.path.join(cfg.out, name)


def _require(cfg, name):
    path = _out_path(cfg, name)
    if not os.path.exists(path):
        raise StageInputMissing(path)
    return path


def _load_records(cfg):
    return [record_from_dict(obj) for _, obj in read_jsonl(_require(cfg, COMMITS))]


def _load_instances(cfg):
    return [
        ds.instance_from_dict(obj) for _, obj in read_jsonl(_require(cfg, DATASET))
    ]


def _split_spec(cfg):
    return ds.SplitSpec(
        ratios=cfg.ratios, seed=cfg.seed, chronological=bool(cfg.chronological)
    )


def stage_mine(cfg):
    src_filter = SourceFilter(
        extensions=cfg.extensions, exclude_patterns=cfg.exclude
    )
    records = list(
        mine_history(cfg.repo, src_filter, rename_threshold=cfg.rename_threshold)
    )
    metrics = compute_all_metrics(records, cfg.fix_pattern)
    os.makedirs(cfg.out, exist_ok=True)
    write_jsonl(_out_path(cfg, COMMITS), (record_to_dict(r) for r in records))
    write_jsonl(
        _out_path(cfg, METRICS),
        (
            metrics_to_dict(r.hash, metrics[r.hash])
            for r in records
            if r.hash in metrics
        ),
    )
    logger.info("mined %d commits, %d with metrics", len(records), len(metrics))


def stage_label(cfg):
    records = _load_records(cfg)
    repo = szz.Repo(cfg.repo)
    warnings = []
    traces = szz.trace_all(
        repo, records, fix_pattern=cfg.fix_pattern, jobs=cfg.jobs,
        warn=warnings.append,
    )
    labels = szz.label_dataset(records, traces)
    write_jsonl(
        _out_path(cfg, LABELS), (label_to_dict(labels[r.hash]) for r in records)
    )
    write_jsonl(_out_path(cfg, LABEL_WARNINGS), warnings)
    buggy = sum(1 for lab in labels.values() if lab.buggy)
    logger.info("traced %d fixes, labeled %d commits buggy", len(traces), buggy)


def stage_featurize(cfg):
    records = _load_records(cfg)
    metrics = dict(
        metrics_from_dict(obj) for _, obj in read_jsonl(_require(cfg, METRICS))
    )
    labels = {}
    for _, obj in read_jsonl(_require(cfg, LABELS)):
        label = label_from_dict(obj)
        labels[label.hash] = label

    spec = _split_spec(cfg)
    # clean twice: the first pass only fixes the survivor set so the
    # training rows (and their imputation medians) can be identified
    survivors = ds.clean(records, metrics, labels)
    train_idx, _, _ = ds.split_indices(len(survivors), spec)
    train_hashes = {survivors[i].hash for i in train_idx}
    raws = ds.clean(records, metrics, labels, train_hashes=train_hashes)
    stats = ds.numeric_stats([raws[i] for i in train_idx])

    embeddings = None
    if cfg.text == "embeddings":
        embeddings = ds.load_embeddings(cfg.embeddings, cfg.resolved_text_dim)
    instances = ds.vectorize(
        raws,
        stats,
        text_dim=cfg.resolved_text_dim,
        text_seed=cfg.seed,
        embeddings=embeddings,
    )
    write_jsonl(_out_path(cfg, DATASET), (ds.instance_to_dict(i) for i in instances))
    write_json(
        _out_path(cfg, DATASET_STATS),
        {field: {"mean": mean, "std": std} for field, (mean, std) in stats.items()},
    )
    logger.info("featurized %d instances", len(instances))


def stage_split(cfg):
    instances = _load_instances(cfg)
    spec = _split_spec(cfg)
    train_idx, val_idx, test_idx = ds.split_indices(len(instances), spec)
    hashes = [inst.hash for inst in instances]
    write_json(
        _out_path(cfg, SPLITS),
        {
            "ratios": "%d:%d:%d" % spec.ratios,
            "seed": spec.seed,
            "chronological": spec.chronological,
            "train": [hashes[i] for i in train_idx],
            "val": [hashes[i] for i in val_idx],
            "test": [hashes[i] for i in test_idx],
        },
    )


def _split_matrices(cfg, instances):
    splits = read_json(_require(cfg, SPLITS))
    by_hash = {inst.hash: inst for inst in instances}
    out = {}
    for part in ("train", "val", "test"):
        try:
            picked = [by_hash[h] for h in splits[part]]
        except KeyError as exc:
            raise StageInputMissing(
                "%s (split references unknown hash %s)" % (_out_path(cfg, SPLITS), exc)
            ) from exc
        out[part] = ds.to_matrices(picked)
    return out


def stage_train(cfg):
    instances = _load_instances(cfg)
    parts = _split_matrices(cfg, instances)
    model = fusion.init_model(
        cfg.combine,
        text_dim=instances[0].text.dim,
        cat_dim=ds.CAT_DIM,
        num_dim=len(ds.NUMERIC_FIELDS),
        d=cfg.d,
        hidden=cfg.hidden,
        beta=cfg.beta,
        lr=cfg.lr,
        epochs=cfg.epochs,
        batch=cfg.batch,
        seed=cfg.seed,
        threshold=cfg.threshold,
    )
    report = fusion.train(model, parts["train"], parts["val"])
    fusion.save_model(model, _out_path(cfg, MODEL))
    write_json(
        _out_path(cfg, TRAIN_REPORT),
        {
            "train_loss": list(report.train_loss),
            "val_f1": list(report.val_f1),
            "best_epoch": report.best_epoch,
        },
    )
    logger.info(
        "trained %s, best epoch %d", model.combine_method, report.best_epoch
    )


def stage_evaluate(cfg):
    instances = _load_instances(cfg)
    model = fusion.load_model(_require(cfg, MODEL))
    parts = _split_matrices(cfg, instances)
    text, cat, num, labels = parts["test"]
    scores = fusion.predict_proba(model, text, cat, num)
    report = evaluate_scores(
        list(scores), [int(y) for y in labels], threshold=model.hyper["threshold"]
    )
    write_report(
        report,
        _out_path(cfg, REPORT),
        _out_path(cfg, REPORT_CSV),
        extra={
            "model": {
                "combine_method": model.combine_method,
                "seed": model.hyper["seed"],
                "threshold": model.hyper["threshold"],
            },
            "split": "test",
            "instances": int(len(labels)),
        },
    )
    logger.info("evaluated %d test instances, F1 %.3f", len(labels), report.f1)


STAGES = {
    "mine": stage_mine,
    "label": stage_label,
    "featurize": stage_featurize,
    "split": stage_split,
    "train": stage_train,
    "evaluate": stage_evaluate,
}
STAGE_ORDER = ("mine", "label", "featurize", "split", "train", "evaluate")


def stage_all(cfg):
    for name in STAGE_ORDER:
        STAGES[name](cfg)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jitdp",
        description="Defect prediction pipeline over a git repository.",
    )
    sub = parser.add_subparsers(dest="stage", required=True)

    def add_stage(name, help_text, flags):
        keys = ", ".join(STAGE_KEYS[name])
        p = sub.add_parser(
            name,
            help=help_text,
            description="%s Config keys read by this stage: %s." % (help_text, keys),
        )
        p.add_argument("--out", help="output directory for stage files")
        p.add_argument("--config", help="INI config file")
        if "repo" in flags:
            p.add_argument("--repo", help="path to the git repository")
        if "seed" in flags:
            p.add_argument("--seed", type=int, help="seed for splits and training")
        if "jobs" in flags:
            p.add_argument("--jobs", type=int, help="parallel trace workers")
        if "ratios" in flags:
            p.add_argument("--ratios", help="train:val:test, e.g. 8:1:1")
            p.add_argument(
                "--chronological",
                action="store_true",
                default=None,
                help="split by time order instead of shuffling",
            )
        if "text" in flags:
            p.add_argument("--text", choices=["hash", "embeddings"],
                           help="text vector source")
            p.add_argument("--embeddings", help="embedding JSONL path")
            p.add_argument("--text-dim", dest="text_dim", type=int,
                           help="text vector dimension")
        if "combine" in flags:
            p.add_argument("--combine", choices=sorted(COMBINE_ALIASES),
                           help="fusion method")
            p.add_argument("--epochs", type=int, help="training epochs")
            p.add_argument("--lr", type=float, help="learning rate")
            p.add_argument("--batch", type=int, help="batch size")
        if "fix" in flags:
            p.add_argument("--fix-pattern", dest="fix_pattern",
                           help="regex marking fix commits")
        return p

    add_stage("mine", "Mine commits and change metrics from a repository.",
              ["repo", "fix"])
    add_stage("label", "Trace fixes to the commits that introduced the defects.",
              ["repo", "jobs", "fix"])
    add_stage("featurize", "Vectorize the labeled corpus into instances.",
              ["seed", "ratios", "text"])
    add_stage("split", "Write the train/val/test partition.",
              ["seed", "ratios"])
    add_stage("train", "Train a fusion model on the train/val splits.",
              ["seed", "combine"])
    add_stage("evaluate", "Score the test split with the trained model.", [])
    add_stage("all", "Run every stage in order.",
              ["repo", "seed", "jobs", "ratios", "text", "combine", "fix"])
    return parser


def main(argv=None):
    logging.basicConfig(
        level=os.environ.get("JITDP_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        if not cfg.out:
            raise ValueError("no output directory; pass --out or set [pipeline] out")
        if args.stage in ("mine", "label", "all") and not cfg.repo:
            raise ValueError("no repository; pass --repo or set [pipeline] repo")
        if args.stage == "all":
            stage_all(cfg)
        else:
            STAGES[args.stage](cfg)
        return 0
    except (JitdpError, OSError, ValueError) as exc:
        payload = {
            "error": type(exc).__name__,
            "stage": args.stage,
            "message": str(exc),
        }
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
