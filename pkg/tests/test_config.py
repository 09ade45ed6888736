import pytest

from actioncast.config import ConfigError, ServiceConfig, load_config, parse_config_text


SAMPLE = """
# prediction service
checkpoint = /data/model.acf
vocab = "/data/vocab.json"
port = 9000
ncc_threshold = 0.95
field_dead_zone = off
topk = 7
custom_flag = hello
"""


def test_parse_values_and_extras():
    config = ServiceConfig.from_mapping(parse_config_text(SAMPLE))
    assert config.checkpoint == "/data/model.acf"
    assert config.vocab == "/data/vocab.json"  # quotes stripped
    assert config.port == 9000
    assert config.ncc_threshold == 0.95
    assert config.field_dead_zone is False
    assert config.topk == 7
    assert config.extras == {"custom_flag": "hello"}


def test_field_config_mapping():
    config = ServiceConfig.from_mapping(
        parse_config_text("field_gain = 55\nfield_softening_px = 10\nfield_max_pull_px = 3")
    )
    field = config.field_config()
    assert (field.gain, field.softening_px, field.max_pull_px) == (55, 10, 3)
    assert field.dead_zone is True


def test_malformed_line_rejected():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("not a key value pair")


def test_defaults_without_file():
    config = load_config(None)
    assert config.port == 8314
    assert config.ncc_threshold == pytest.approx(0.97)


def test_env_var_overrides_path(tmp_path, monkeypatch):
    given = tmp_path / "given.conf"
    given.write_text("port = 1111\n", encoding="utf-8")
    override = tmp_path / "override.conf"
    override.write_text("port = 2222\n", encoding="utf-8")
    monkeypatch.setenv("ACF_CONFIG", str(override))
    assert load_config(given).port == 2222
    monkeypatch.delenv("ACF_CONFIG")
    assert load_config(given).port == 1111
