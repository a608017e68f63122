"""Config grammar: sections, typed keys, strict rejection of anything
outside the schema."""

import pytest

from sodkit import config
from sodkit import trainer


FULL = """\
# full example touching every section
[train]
epochs = 7
batch_size = 2
lr = 0.0005
lr_decay_factor = 0.5
seed = 99
eval_every = 2
psg_refresh = epoch

[loss]
main_kind = dice
use_psg = false
alpha = 0.25
psg_kernel = 5
epsilon = 1e-06

[model]
input_size = 32
encoder_channels = 8, 16, 24, 32, 32
msfam_in_encoder = true
msfam_in_decoder = true

[msfam]
feature_dim = 32
dilation_rates = 1, 3, 5
use_bam = false
degrade_to_1x1 = false

[data]
count = 11
size = 32
seed = 4
hole_fraction = 0.3
shape_kinds = ellipse, annulus

[paths]
data_dir = /tmp/in
val_dir = /tmp/val
out_dir = /tmp/out
"""


def test_full_parse():
    run = config.parse_config(FULL)
    t = run.train
    assert (t.epochs, t.batch_size, t.lr, t.seed) == (7, 2, 0.0005, 99)
    assert t.psg_refresh == "epoch"
    assert t.loss.main_kind == "dice" and t.loss.use_psg is False
    assert t.loss.psg_kernel == 5
    assert t.model.encoder_channels == (8, 16, 24, 32, 32)
    assert t.model.msfam.feature_dim == 32
    assert t.model.msfam.use_bam is False
    assert run.data.shape_kinds == ("ellipse", "annulus")
    assert run.data_dir == "/tmp/in" and run.out_dir == "/tmp/out"
    run.validate()


def test_render_round_trip():
    cfg = trainer.TrainConfig(epochs=13, lr=3e-4, seed=8)
    cfg.loss.main_kind = "kld"
    cfg.model.msfam_in_encoder = True
    back = config.parse_config(config.render_train_config(cfg))
    assert back.train == cfg


def test_unknown_key_named():
    with pytest.raises(config.ConfigError, match="epochz"):
        config.parse_config("[train]\nepochz = 3\n")


def test_unknown_section_named():
    with pytest.raises(config.ConfigError, match="optimizer"):
        config.parse_config("[optimizer]\nlr = 1\n")


def test_bad_value_types():
    with pytest.raises(config.ConfigError):
        config.parse_config("[train]\nepochs = many\n")
    with pytest.raises(config.ConfigError):
        config.parse_config("[train]\nlr = fast\n")
    with pytest.raises(config.ConfigError):
        config.parse_config("[loss]\nuse_psg = yes\n")
    with pytest.raises(config.ConfigError):
        config.parse_config("[model]\nencoder_channels = 8, sixteen\n")


def test_duplicate_key_rejected():
    with pytest.raises(config.ConfigError):
        config.parse_config("[train]\nepochs = 1\nepochs = 2\n")


def test_comments_and_blanks_ignored():
    run = config.parse_config("\n# leading comment\n\n[train]\n# inner\nepochs = 3\n\n")
    assert run.train.epochs == 3


def test_defaults_when_empty():
    run = config.parse_config("")
    assert run.train == trainer.TrainConfig()


def test_key_without_section_rejected():
    with pytest.raises(config.ConfigError):
        config.parse_config("epochs = 3\n")


def test_file_errors(tmp_path):
    with pytest.raises(config.ConfigError):
        config.parse_config_file(str(tmp_path / "missing.cfg"))
    bad = tmp_path / "bad.cfg"
    bad.write_bytes(b"[train]\nepochs = 3\n\xff\xfe\n")
    with pytest.raises(config.ConfigError):
        config.parse_config_file(str(bad))
