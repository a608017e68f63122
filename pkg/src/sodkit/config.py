"""Run configuration: a small sectioned key=value file format.

Grammar per line: blank, ``# comment``, ``[section]``, or ``key = value``.
UTF-8 text.  Unknown sections or keys are rejected by name rather than
ignored, so a typo cannot silently fall back to a default.
"""

import configparser
import io
from dataclasses import dataclass

from . import dataio
from . import trainer


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Merged view of everything one invocation needs."""
    train: trainer.TrainConfig
    data: dataio.SyntheticSpec
    data_dir: str = ""
    val_dir: str = ""
    out_dir: str = ""

    def validate(self):
        self.train.validate()
        self.data.validate()
        return self


def _parse_bool(s):
    if s == "true":
        return True
    if s == "false":
        return False
    raise ConfigError(f"expected true or false, got {s!r}")


def _parse_int_tuple(s):
    try:
        return tuple(int(tok.strip()) for tok in s.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {s!r}") from None


STR_TUPLE = "str_tuple"


def _convert(kind, raw):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"expected {kind.__name__}, got {raw!r}") from None
    if kind is bool:
        return _parse_bool(raw)
    if kind is tuple:
        return _parse_int_tuple(raw)
    if kind is STR_TUPLE:
        return tuple(tok.strip() for tok in raw.split(","))
    return raw


# section -> (target object selector, {key: python type})
def _schema(run):
    return {
        "train": (run.train, {
            "epochs": int, "batch_size": int, "lr": float,
            "lr_decay_factor": float, "seed": int, "eval_every": int,
            "psg_refresh": str,
        }),
        "loss": (run.train.loss, {
            "main_kind": str, "use_psg": bool, "alpha": float,
            "psg_kernel": int, "epsilon": float,
        }),
        "model": (run.train.model, {
            "input_size": int, "encoder_channels": tuple,
            "msfam_in_encoder": bool, "msfam_in_decoder": bool,
        }),
        "msfam": (run.train.model.msfam, {
            "feature_dim": int, "dilation_rates": tuple,
            "use_bam": bool, "degrade_to_1x1": bool,
        }),
        "data": (run.data, {
            "count": int, "size": int, "seed": int,
            "hole_fraction": float, "shape_kinds": STR_TUPLE,
        }),
        "paths": (run, {"data_dir": str, "val_dir": str, "out_dir": str}),
    }


def parse_config(text):
    """Parse config text into a RunConfig; raises ConfigError on anything
    outside the schema."""
    cp = configparser.ConfigParser(
        comment_prefixes=("#",), inline_comment_prefixes=None,
        delimiters=("=",), strict=True, interpolation=None,
    )
    cp.optionxform = str    # keys are case-sensitive
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    run = RunConfig(train=trainer.TrainConfig(), data=dataio.SyntheticSpec())
    schema = _schema(run)
    for section in cp.sections():
        if section not in schema:
            raise ConfigError(f"unknown section [{section}]")
        target, keys = schema[section]
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            try:
                value = _convert(keys[key], raw.strip())
            except ConfigError as e:
                raise ConfigError(f"[{section}] {key}: {e}") from None
            setattr(target, key, value)
    return run


def parse_config_file(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"config {path} is not valid UTF-8") from None
    return parse_config(text)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_train_config(cfg):
    """Serialize a TrainConfig (with nested loss/model parts) back into the
    file grammar; parse_config(render_train_config(c)) reproduces c."""
    run = RunConfig(train=cfg, data=dataio.SyntheticSpec())
    out = io.StringIO()
    for section, (target, keys) in _schema(run).items():
        if section in ("data", "paths"):
            continue
        out.write(f"[{section}]\n")
        for key in keys:
            out.write(f"{key} = {_fmt(getattr(target, key))}\n")
        out.write("\n")
    return out.getvalue()
