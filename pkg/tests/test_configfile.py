"""
Unit tests for key=value experiment configuration files.
"""

import pytest

from app.config import settings
from app.configfile import build_config, dump_config, load_config, parse_text
from app.errors import ConfigurationError
from app.models import WeightKind

BASE = """
# scalar walk
loss.mu=0.1
loss.L=0.1
walk.c_max=100
walk.sigma2=100
tracker.eta=2.85
tracker.E=20

scheme.kind=discounted
scheme.gamma=0.7
"""


def test_parse_skips_comments_and_blanks():
    """Test comments and empty lines are ignored and values are stripped."""
    values = parse_text("# header\n\n loss.mu = 0.1 \nexperiment.name=a=b\n")

    assert values == {"loss.mu": "0.1", "experiment.name": "a=b"}


def test_parse_rejects_lines_without_assignment():
    """Test a bare word names its source line."""
    with pytest.raises(ConfigurationError) as excinfo:
        parse_text("loss.mu=0.1\nnonsense\n", source="exp.cfg")

    assert "exp.cfg:2" in str(excinfo.value)


def test_load_config_from_file(tmp_path):
    """Test a file builds a validated config with lists and defaults."""
    path = tmp_path / "exp.cfg"
    path.write_text(BASE + "experiment.E_values=5, 10,20\n")
    cfg = load_config(path)

    assert cfg.scheme.kind == WeightKind.DISCOUNTED
    assert cfg.scheme.gamma == 0.7
    assert cfg.E_values == [5, 10, 20]
    assert cfg.horizon == 1000
    assert cfg.constants().C == pytest.approx(100.0)


def test_overrides_apply_after_file(tmp_path):
    """Test --set values win over file values and the seed flag wins over both."""
    path = tmp_path / "exp.cfg"
    path.write_text(BASE + "walk.seed=3\n")
    cfg = load_config(path, ["tracker.E=5", "walk.seed=4"])

    assert cfg.tracker.E == 5
    assert cfg.walk.seed == 4
    assert load_config(path, ["walk.seed=4"], seed=9).walk.seed == 9


def test_seed_defaults_to_settings(tmp_path):
    """Test a config without walk.seed uses the process base seed."""
    cfg = build_config(parse_text(BASE))

    assert cfg.walk.seed == settings.base_seed


def test_unknown_key_rejected():
    """Test misspelled keys are named in the error."""
    with pytest.raises(ConfigurationError) as excinfo:
        build_config(parse_text(BASE + "tracker.budget=3\n"))

    assert excinfo.value.key == "tracker.budget"


@pytest.mark.parametrize("line,key", [
    ("scheme.gamma=1.5", "scheme"),
    ("tracker.E=0", "tracker.E"),
    ("walk.sigma2=-1", "walk.sigma2"),
    ("experiment.E_values=5,x", "experiment.E_values"),
    ("experiment.window_fraction=0", "experiment.window_fraction"),
])
def test_invalid_values_name_their_key(line, key):
    """Test validation errors carry the offending dotted key."""
    with pytest.raises(ConfigurationError) as excinfo:
        build_config(parse_text(BASE + line + "\n"))

    assert excinfo.value.key == key
    assert str(excinfo.value).startswith(key)


def test_uniform_scheme_rejects_gamma():
    """Test a discount factor is refused unless the scheme is discounted."""
    with pytest.raises(ConfigurationError) as excinfo:
        build_config(parse_text(BASE + "scheme.kind=uniform\n"))

    assert excinfo.value.key == "scheme"
    assert "gamma=0.7" in str(excinfo.value)


def test_missing_file_is_a_configuration_error(tmp_path):
    """Test unreadable config paths raise ConfigurationError."""
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.cfg")


def test_dump_reloads_to_equal_config(tmp_path):
    """Test dump_config output loads back to the same config."""
    overrides = [f"{k}={v}" for k, v in parse_text(BASE).items()]
    overrides += ["walk.dim=2", "walk.c0=1.5,-2", "loss.curvature=0.1", "experiment.record_every=4"]
    cfg = load_config(overrides=overrides)
    path = tmp_path / "dumped.cfg"
    path.write_text(dump_config(cfg))

    assert load_config(path) == cfg
    assert "walk.c0=1.5,-2.0" in dump_config(cfg)
    assert "theory.epsilon" not in dump_config(cfg)


def test_empty_values_fall_back_to_defaults():
    """Test `key=` leaves the field at its default."""
    cfg = build_config(parse_text(BASE + "loss.C=\n"))

    assert cfg.loss.C is None
