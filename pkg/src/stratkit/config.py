"""Run configuration: a sectioned key=value file, overridable by CLI flags.

Precedence is flag > file > default. Unknown sections or keys are a hard
error so typos cannot silently fall back to defaults. The fully resolved
configuration (and its hash) is embedded in every artifact the pipeline
writes.
"""

import configparser
import hashlib

from .errors import ValidationError


def _parse_bool(raw):
    low = str(raw).strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValidationError(f"expected a boolean, got {raw!r}")


def _parse_int_list(raw):
    return [int(p) for p in str(raw).split(",") if p.strip() != ""]


def _parse_float_list(raw):
    return [float(p) for p in str(raw).split(",") if p.strip() != ""]


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "threads": (int, 0),  # 0 = number of cores; recorded, all stages are serial
    },
    "cohort": {
        "max_hours": (int, 72),
        "train_ratio": (float, 0.70),
        "val_ratio": (float, 0.15),
        "test_ratio": (float, 0.15),
        "top_codes": (int, 0),  # 0 = keep every code
        "resample": (_parse_bool, False),
    },
    "synth": {
        "branching": (_parse_int_list, [3, 3, 3, 2]),
        "n_stays": (int, 2000),
        "n_features": (int, 12),
        "n_statics": (int, 4),
        "hours": (int, 48),
        "signal_strengths": (_parse_float_list, [2.0, 1.0, 0.5, 0.25]),
        "noise_std": (float, 1.0),
        "ar_coefficient": (float, 0.8),
        "missing_rate": (float, 0.1),
        "zipf_exponent": (float, 1.1),
    },
    "preprocess": {
        # comma list of name:onehot or name:ordinal entries
        "categorical": (str, ""),
    },
    "embed": {
        "cell": (str, "gru"),
        "hidden_size": (int, 64),
        "per_feature": (_parse_bool, False),
        "per_feature_hidden": (int, 8),
        "epochs": (int, 20),
        "batch_size": (int, 32),
        "learning_rate": (float, 1e-4),
        "weight_decay": (float, 0.01),
        "beta1": (float, 0.9),
        "beta2": (float, 0.999),
        "eps": (float, 1e-8),
        "grad_clip_norm": (float, 1.0),
        "stat_windows": (int, 4),
        "include_statics": (_parse_bool, True),
    },
    "tsne": {
        "out_dims": (int, 2),
        "perplexity": (float, 30.0),
        "iterations": (int, 1000),
        "learning_rate": (float, 200.0),
        "early_exaggeration": (float, 12.0),
    },
    "kmeans": {
        "max_iter": (int, 300),
        "tol": (float, 1e-6),
        "n_init": (int, 10),
    },
    "stratify": {
        "min_cluster_size": (int, 10),
    },
    "hpo": {
        "n_trials": (int, 50),
        "k_min": (int, 2),
        "k_max": (int, 64),
        "perplexity_min": (float, 5.0),
        "perplexity_max": (float, 50.0),
    },
}


class RunConfig:
    def __init__(self, values=None):
        self.values = {
            section: {key: default for key, (_, default) in keys.items()}
            for section, keys in SCHEMA.items()
        }
        for (section, key), value in (values or {}).items():
            self.set(section, key, value)

    def set(self, section, key, value):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ValidationError(f"unknown config key [{section}] {key}")
        parser, _ = SCHEMA[section][key]
        self.values[section][key] = parser(value) if isinstance(value, str) else value

    def get(self, section, key):
        return self.values[section][key]

    @property
    def seed(self):
        return self.values["run"]["seed"]

    def ratios(self):
        c = self.values["cohort"]
        return (c["train_ratio"], c["val_ratio"], c["test_ratio"])

    def categorical_statics(self):
        raw = self.values["preprocess"]["categorical"].strip()
        out = {}
        if not raw:
            return out
        for entry in raw.split(","):
            if ":" not in entry:
                raise ValidationError(f"bad categorical entry {entry!r}, expected name:mode")
            name, mode = entry.split(":", 1)
            out[name.strip()] = mode.strip()
        return out

    def canonical_lines(self):
        lines = []
        for section in sorted(self.values):
            for key in sorted(self.values[section]):
                lines.append(f"{section}.{key}={self.values[section][key]!r}")
        return lines

    def hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.canonical_lines()).encode("utf-8"))
        return digest.hexdigest()[:12]

    def to_dict(self):
        return {section: dict(keys) for section, keys in self.values.items()}


def load_config(path=None, overrides=None) -> RunConfig:
    """Read the config file (if given), then apply flag overrides on top."""
    config = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        read = parser.read(path)
        if not read:
            raise ValidationError(f"config file {path} not found")
        for section in parser.sections():
            if section not in SCHEMA:
                raise ValidationError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                config.set(section, key, raw)
    for (section, key), value in (overrides or {}).items():
        config.set(section, key, value)
    return config
