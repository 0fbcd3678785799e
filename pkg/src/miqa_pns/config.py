"""Flat ``key = value`` run configuration.

Keys are grouped by a section prefix (``generator.``, ``model.``, ``train.``,
``run.``) plus the top-level ``seed``. Unknown keys are rejected. Blank lines
and ``#`` comments are ignored. ``dump_config`` writes every key, so a saved
config reproduces a run on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

from .compare import GeneratorConfig
from .errors import ConfigError
from .objective import MODES
from .synthetic import DEFAULT_PROPORTIONS, SCENARIOS, format_proportions, normalize_proportions, parse_proportions
from .training import TrainConfig

CONFIG_FORMAT_VERSION = 1


def _int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(int(t) for t in text.split(","))


def _int(text: str) -> int:
    return int(text)


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


@dataclass(frozen=True)
class _Key:
    parse: object
    default: str
    doc: str


KEYS: dict[str, _Key] = {
    "seed": _Key(_int, "0", "master seed for data generation, splitting, init and shuffling"),
    "generator.n": _Key(_int, "2825", "number of images"),
    "generator.proportions": _Key(parse_proportions, format_proportions(DEFAULT_PROPORTIONS), "grade proportions, must sum to 1"),
    "generator.height": _Key(_int, "32", "image height in pixels"),
    "generator.width": _Key(_int, "32", "image width in pixels"),
    "generator.limited_artifact_fraction": _Key(float, "0.5", "share of Limited images drawn with a mild eyelash"),
    "model.extractor_hidden": _Key(_int_list, "128", "hidden widths of E and E^c"),
    "model.feature_dim": _Key(_int, "64", "width of the extracted features"),
    "model.predictor_hidden": _Key(_int_list, "256,64", "hidden widths of F"),
    "train.mode": _Key(_choice(MODES), "miqa-pns", "baseline or miqa-pns"),
    "train.lambda": _Key(float, "1.0", "weight of the monotonicity loss"),
    "train.lr": _Key(float, "0.0001", "Adam learning rate"),
    "train.batch_size": _Key(_int, "32", "mini-batch size"),
    "train.max_epochs": _Key(_int, "200", "epoch cap"),
    "train.patience": _Key(_int, "15", "early-stopping patience in epochs"),
    "run.scenario": _Key(_choice(SCENARIOS), "iid", "iid, limited-holdout or poor-holdout"),
    "run.n_seeds": _Key(_int, "5", "seeds used by compare"),
    "run.workers": _Key(_int, "1", "parallel processes used by compare"),
    "run.dataset": _Key(str, "", "dataset file (default: <out>/dataset.pnsa)"),
    "run.checkpoint": _Key(str, "", "checkpoint for eval (default: <out>/inference.pnsm)"),
    "run.out": _Key(str, "runs", "output directory"),
}


class RunConfig:
    """Resolved configuration; ``values`` maps every key to its parsed value."""

    def __init__(self, raw: dict[str, str] | None = None):
        self.raw = {k: spec.default for k, spec in KEYS.items()}
        self.values = {}
        self.update(raw or {})

    def update(self, raw: dict[str, str]) -> None:
        for key, text in raw.items():
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                self.values[key] = KEYS[key].parse(text.strip())
            except ValueError as e:
                raise ConfigError(f"bad value for {key}: {text!r} ({e})") from None
            self.raw[key] = text.strip()
        for key in KEYS:
            if key not in self.values:
                self.values[key] = KEYS[key].parse(self.raw[key])

    def __getitem__(self, key: str):
        return self.values[key]

    def proportions(self):
        try:
            return normalize_proportions(self["generator.proportions"])
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def generator(self) -> GeneratorConfig:
        return GeneratorConfig(
            n=self["generator.n"],
            proportions=self.proportions(),
            height=self["generator.height"],
            width=self["generator.width"],
            limited_artifact_fraction=self["generator.limited_artifact_fraction"],
        )

    def train_config(self, mode: str | None = None) -> TrainConfig:
        try:
            return TrainConfig(
                mode=mode or self["train.mode"],
                lam=self["train.lambda"],
                lr=self["train.lr"],
                batch_size=self["train.batch_size"],
                max_epochs=self["train.max_epochs"],
                patience=self["train.patience"],
                seed=self["seed"],
                extractor_hidden=self["model.extractor_hidden"],
                feature_dim=self["model.feature_dim"],
                predictor_hidden=self["model.predictor_hidden"],
            )
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def as_dict(self) -> dict[str, str]:
        return dict(self.raw)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}: expected key = value, got {line!r}")
        key = key.strip()
        if key == "format_version":
            if value.strip() != str(CONFIG_FORMAT_VERSION):
                raise ConfigError(f"unsupported config format_version {value.strip()}")
            continue
        out[key] = value
    return out


def load_config(path) -> RunConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return RunConfig(parse_config_text(text))


def dump_config(cfg: RunConfig) -> str:
    lines = [f"format_version = {CONFIG_FORMAT_VERSION}"]
    lines += [f"{k} = {v}" for k, v in cfg.raw.items()]
    return "\n".join(lines) + "\n"
