"""Run-configuration schema, file parsing and precedence tests."""

import pytest

from mpu_rnn.errors import ConfigError
from mpu_rnn.runconfig import (
    SCHEMA,
    SEED_ENV_VAR,
    parse_config_file,
    parse_value,
    resolve,
)


class TestDefaults:
    def test_schema_defaults(self):
        rc = resolve()
        assert rc.cell == "mpu_c"
        assert rc.arch == "general"
        assert rc.layers == 2
        assert rc.hidden == 32
        assert rc.classes == 10
        assert rc.dropout_keep == 0.6
        assert rc.lr == 1e-3
        assert rc.threads == 1
        assert rc.out_dir == "runs"

    def test_network_and_train_configs_validate(self):
        rc = resolve()
        ncfg = rc.network_config()
        assert ncfg.cell == "mpu_c" and ncfg.hidden_size == 32
        tcfg = rc.train_config()
        assert tcfg.batch_size == 256 and tcfg.seed == 12345


class TestFileParsing:
    def test_values_comments_and_blanks(self, tmp_path):
        p = tmp_path / "run.conf"
        p.write_text(
            "# experiment configuration\n"
            "\n"
            "cell = gru          # inline comment\n"
            "hidden=64\n"
            "  lr  =  0.01  \n"
        )
        values = parse_config_file(p)
        assert values == {"cell": "gru", "hidden": "64", "lr": "0.01"}

    def test_unknown_key_names_line(self, tmp_path):
        p = tmp_path / "run.conf"
        p.write_text("cell = gru\nlayrs = 3\n")
        with pytest.raises(ConfigError, match=r":2: unknown key 'layrs'"):
            parse_config_file(p)

    def test_missing_equals_names_line(self, tmp_path):
        p = tmp_path / "run.conf"
        p.write_text("just some words\n")
        with pytest.raises(ConfigError, match=":1:"):
            parse_config_file(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config_file(tmp_path / "absent.conf")


class TestValues:
    def test_enum_normalization(self):
        assert parse_value("cell", "MPU-C") == "mpu_c"
        assert parse_value("readout", "Last-Sum") == "last_sum"
        assert parse_value("arch", "HYBRID") == "hybrid"

    def test_bool_spellings(self):
        for text, want in (
            ("true", True), ("1", True), ("Yes", True), ("on", True),
            ("false", False), ("0", False), ("No", False), ("off", False),
        ):
            assert parse_value("skip", text) is want

    @pytest.mark.parametrize(
        "key,text",
        [
            ("cell", "rnn"),
            ("layers", "0"),
            ("layers", "two"),
            ("lr", "-0.1"),
            ("patience", "-1"),
            ("skip", "maybe"),
            ("clip_norm", "-5"),
        ],
    )
    def test_bad_values(self, key, text):
        with pytest.raises(ConfigError, match=key):
            parse_value(key, text)

    def test_zero_lr_accepted(self):
        assert parse_value("lr", "0") == 0.0


class TestPrecedence:
    def test_flag_beats_file_beats_default(self, tmp_path):
        p = tmp_path / "run.conf"
        p.write_text("hidden = 64\nepochs = 9\n")
        file_values = parse_config_file(p)
        rc = resolve(file_values, {"hidden": "128"})
        assert rc.hidden == 128  # flag wins
        assert rc.epochs == 9    # file beats default
        assert rc.layers == 2    # untouched default

    def test_already_parsed_flag_values_pass_through(self):
        rc = resolve(None, {"hidden": 48, "skip": False})
        assert rc.hidden == 48 and rc.skip is False

    def test_unknown_flag_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            resolve(None, {"hiden": "32"})

    def test_none_flag_values_are_skipped(self):
        rc = resolve(None, {"hidden": None})
        assert rc.hidden == 32


class TestSeedEnvironment:
    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "777")
        assert resolve().seed == 777

    def test_explicit_seed_beats_env(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "777")
        assert resolve(None, {"seed": "42"}).seed == 42
        assert resolve({"seed": "43"}, None).seed == 43

    def test_bad_env_seed(self, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "not-a-number")
        with pytest.raises(ConfigError, match="seed"):
            resolve()

    def test_no_env_uses_default(self, monkeypatch):
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        assert resolve().seed == 12345


class TestSchemaShape:
    def test_every_key_has_help(self):
        for key, (parser, default, help_text) in SCHEMA.items():
            assert callable(parser)
            assert isinstance(help_text, str) and help_text
            # every default must survive its own parser when stringified,
            # except free-form strings which are passed through anyway
            if parser is not str:
                parse_value(key, str(default))
