"""Pipeline configuration: INI file keys overridden by command-line flags."""

import configparser
from dataclasses import dataclass

from .mining import DEFAULT_EXCLUDES, DEFAULT_EXTENSIONS

COMBINE_ALIASES = {
    "concat": "unimodal_concat",
    "attention": "attention_sum",
    "gating": "gating_sum",
}

# config keys each stage reads, shown in that stage's --help
STAGE_KEYS = {
    "mine": ["pipeline.repo", "pipeline.out", "mine.extensions", "mine.exclude",
             "mine.rename_threshold", "szz.fix_pattern"],
    "label": ["pipeline.repo", "pipeline.out", "pipeline.jobs",
              "mine.rename_threshold", "szz.fix_pattern"],
    "featurize": ["pipeline.out", "pipeline.seed", "dataset.text",
                  "dataset.embeddings", "dataset.text_dim", "dataset.ratios",
                  "dataset.chronological"],
    "split": ["pipeline.out", "pipeline.seed", "dataset.ratios",
              "dataset.chronological"],
    "train": ["pipeline.out", "train.combine", "train.d", "train.hidden",
              "train.beta", "train.lr", "train.epochs", "train.batch",
              "train.threshold"],
    "evaluate": ["pipeline.out"],
}
STAGE_KEYS["all"] = sorted({key for keys in STAGE_KEYS.values() for key in keys})


@dataclass
class PipelineConfig:
    repo: str = None
    out: str = None
    seed: int = 0
    jobs: int = 1
    extensions: tuple = DEFAULT_EXTENSIONS
    exclude: tuple = DEFAULT_EXCLUDES
    rename_threshold: int = None
    fix_pattern: str = None
    text: str = "hash"
    embeddings: str = None
    text_dim: int = None
    ratios: tuple = (8, 1, 1)
    chronological: bool = False
    combine: str = "unimodal_concat"
    d: int = 64
    hidden: int = 32
    beta: float = 1.0
    lr: float = 1e-3
    epochs: int = 50
    batch: int = 32
    threshold: float = 0.5

    @property
    def resolved_text_dim(self):
        if self.text_dim is not None:
            return self.text_dim
        return 768 if self.text == "embeddings" else 256


def parse_ratios(raw):
    parts = raw.split(":")
    if len(parts) != 3:
        raise ValueError("ratios must look like 8:1:1, got %r" % raw)
    ratios = tuple(int(p) for p in parts)
    if min(ratios) <= 0:
        raise ValueError("split ratios must be positive, got %r" % raw)
    return ratios


def _parse_list(raw):
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def _parse_bool(raw):
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: %r" % raw)


# (section, key) -> (config attribute, parser)
_FILE_KEYS = {
    ("pipeline", "repo"): ("repo", str),
    ("pipeline", "out"): ("out", str),
    ("pipeline", "seed"): ("seed", int),
    ("pipeline", "jobs"): ("jobs", int),
    ("mine", "extensions"): ("extensions", _parse_list),
    ("mine", "exclude"): ("exclude", _parse_list),
    ("mine", "rename_threshold"): ("rename_threshold", int),
    ("szz", "fix_pattern"): ("fix_pattern", str),
    ("dataset", "text"): ("text", str),
    ("dataset", "embeddings"): ("embeddings", str),
    ("dataset", "text_dim"): ("text_dim", int),
    ("dataset", "ratios"): ("ratios", parse_ratios),
    ("dataset", "chronological"): ("chronological", _parse_bool),
    ("train", "combine"): ("combine", lambda raw: COMBINE_ALIASES.get(raw, raw)),
    ("train", "d"): ("d", int),
    ("train", "hidden"): ("hidden", int),
    ("train", "beta"): ("beta", float),
    ("train", "lr"): ("lr", float),
    ("train", "epochs"): ("epochs", int),
    ("train", "batch"): ("batch", int),
    ("train", "threshold"): ("threshold", float),
}


def load_config_file(path):
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            spec = _FILE_KEYS.get((section, key))
            if spec is None:
                raise ValueError("unknown config key [%s] %s" % (section, key))
            attr, convert = spec
            values[attr] = convert(raw)
    return values


def resolve(args):
    """PipelineConfig from defaults, then the config file, then flags."""
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        for attr, value in load_config_file(args.config).items():
            setattr(cfg, attr, value)
    flag_map = {
        "repo": "repo",
        "out": "out",
        "seed": "seed",
        "jobs": "jobs",
        "ratios": "ratios",
        "chronological": "chronological",
        "combine": "combine",
        "text": "text",
        "embeddings": "embeddings",
        "text_dim": "text_dim",
        "fix_pattern": "fix_pattern",
        "rename_threshold": "rename_threshold",
        "d": "d",
        "hidden": "hidden",
        "beta": "beta",
        "lr": "lr",
        "epochs": "epochs",
        "batch": "batch",
        "threshold": "threshold",
    }
    for flag, attr in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            if flag == "ratios" and isinstance(value, str):
                value = parse_ratios(value)
            if flag == "combine":
                value = COMBINE_ALIASES.get(value, value)
            setattr(cfg, attr, value)
    if cfg.text not in ("hash", "embeddings"):
        raise ValueError("text source must be hash or embeddings, got %r" % cfg.text)
    if cfg.text == "embeddings" and not cfg.embeddings:
        raise ValueError("--text embeddings needs --embeddings PATH")
    return cfg
