"""Flat ``key = value`` configuration.

One key per line; ``#`` starts a comment; blank lines are ignored. Every
key has a default (``DEFAULTS``) and a type; unknown keys and values that
do not parse are config errors. CLI flags override file keys.
"""

import math

from ..errors import ConfigError

MODALITIES = ("camera", "lidar", "fused")
STAGES = ("synth", "ingest", "mine", "train", "extract", "eval", "report")

# key: (type, default)
DEFAULTS = {
    "seed": (int, 0),
    "modality": (str, "camera"),
    "out": (str, "mmloop_out"),
    "stages": (list, list(STAGES)),
    # synthetic world
    "n_places": (int, 60),
    "loop_length": (float, 300.0),
    "appearance_dim": (int, 8),
    "lidar_cols": (int, 180),
    "code_sigma": (float, 1.0),
    "alias_count": (int, 0),
    "alias_len": (int, 3),
    "clutter": (float, 0.3),
    "lidar_clutter": (float, 0.41),
    "runs": (list, ["clean:0", "sun_glare:0.8", "after_rain:0.6", "clean:0"]),
    "samples_per_place": (int, 4),
    # ingest (empty paths: use the synth stage outputs)
    "trajectory_manifest": (str, ""),
    "sample_manifest": (str, ""),
    "run_manifest": (str, ""),
    "d_p": (float, 5.0),
    "heading_gate": (float, math.pi / 2),
    "train_fraction": (float, 0.6),
    "buffer_radius": (float, 10.0),
    "n_segments": (int, 2),
    # mining
    "d_w": (float, 10.0),
    "t_n": (float, 50.0),
    "hard_radius": (float, 25.0),
    # network and training
    "conv_stages": (str, "8x4s4p2,16x3s1p2,32x3s1p2,32x3s1p2"),
    "activation": (str, "relu"),
    "descriptor_dim": (int, 128),
    "margin": (float, 1.0),
    "lr": (float, 0.01),
    "momentum": (float, 0.9),
    "epochs": (int, 12),
    "finetune_epochs": (int, 12),
    "batch_size": (int, 16),
    "triplets_per_epoch": (int, 480),
    "val_fraction": (float, 0.1),
    "val_max": (int, 256),
    "plateau_window": (int, 3),
    "plateau_epsilon": (float, 0.2),
    # evaluation
    "judge_radius": (float, 10.0),
    "judge_heading_gate": (bool, True),
    "report_formats": (list, ["csv", "json"]),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(key, kind, text):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if kind is list:
            return [t.strip() for t in text.split(",") if t.strip()]
        return kind(text)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {text!r} as {kind.__name__}") from None


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class Config(dict):
    """A dict of resolved settings that can echo itself in the file format."""

    def __getattr__(self, name):
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name) from None

    def set(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        kind = DEFAULTS[key][0]
        self[key] = _convert(key, kind, value) if isinstance(value, str) and kind is not str else value
        return self

    def validate(self):
        if self["modality"] not in MODALITIES:
            raise ConfigError(f"modality must be one of {MODALITIES}, got {self['modality']!r}")
        bad = [s for s in self["stages"] if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stage(s) {bad}; expected a subset of {STAGES}")
        if not 0 < self["train_fraction"] < 1:
            raise ConfigError("train_fraction must be in (0, 1)")
        if self["d_p"] <= 0 or self["d_w"] < self["d_p"]:
            raise ConfigError("need 0 < d_p <= d_w")
        if self["buffer_radius"] and self["buffer_radius"] < self["d_p"]:
            raise ConfigError("buffer_radius must be 0 or >= d_p")
        if self["samples_per_place"] < 1:
            raise ConfigError("samples_per_place must be >= 1")
        for fmt in self["report_formats"]:
            if fmt not in ("csv", "json"):
                raise ConfigError(f"unknown report format {fmt!r}")
        return self

    def dumps(self):
        return "".join(f"{k} = {_format(self[k])}\n" for k in DEFAULTS)


def default_config():
    return Config({k: (list(v) if isinstance(v, list) else v) for k, (_, v) in DEFAULTS.items()})


def parse_config(text, base=None):
    cfg = base if base is not None else default_config()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        cfg.set(key, value)
    return cfg


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides`` (already typed or strings)."""
    cfg = default_config()
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        parse_config(text, cfg)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg.set(key, value)
    return cfg.validate()


def parse_runs(entries):
    """``["clean:0", "sun_glare:0.8", ...]`` -> [(kind, severity), ...]."""
    out = []
    for e in entries:
        kind, _, sev = e.partition(":")
        try:
            out.append((kind.strip(), float(sev) if sev else 0.0))
        except ValueError:
            raise ConfigError(f"bad run entry {e!r}; expected kind:severity") from None
    if len(out) < 2:
        raise ConfigError("need at least two runs")
    return out
