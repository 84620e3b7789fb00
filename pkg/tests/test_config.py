import pytest

from ufda.config import ConfigError, RunConfig, load_run_config, parse_config_text


class TestParse:
    def test_basic_keys(self):
        values = parse_config_text("eta = 1.5\nseed = 9\nvariant = glc\n")
        assert values == {"eta": 1.5, "seed": 9, "variant": "glc"}

    def test_comments_and_blanks(self):
        values = parse_config_text("# a comment\n\nrho = 0.5  # inline\n")
        assert values == {"rho": 0.5}

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("bogus = 1\n")

    def test_bad_value_rejected_with_location(self):
        with pytest.raises(ConfigError, match=":2:"):
            parse_config_text("eta = 0.5\nepochs = soon\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("just some text\n")


class TestLoad:
    def test_defaults_when_no_file(self):
        cfg = load_run_config(None)
        assert cfg.rho == 0.75
        assert cfg.omega == 0.55
        assert cfg.k_neighbors == 4
        assert cfg.momentum == 0.9
        assert cfg.alpha == 0.1

    def test_file_then_cli_precedence(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("eta = 1.5\nseed = 3\n")
        cfg = load_run_config(str(path), {"seed": 9, "omega": None})
        assert cfg.eta == 1.5
        assert cfg.seed == 9       # CLI override wins
        assert cfg.omega == 0.55   # None override ignored

    def test_missing_file_rejected(self):
        with pytest.raises(ConfigError, match="cannot read"):
            load_run_config("/nonexistent/path.cfg")

    def test_resolved_round_trips(self, tmp_path):
        cfg = load_run_config(None, {"eta": 2.5, "variant": "glc", "n_shared": 5})
        path = tmp_path / "resolved.cfg"
        cfg.save(path)
        reparsed = load_run_config(str(path))
        assert reparsed == cfg

    def test_builders(self):
        cfg = load_run_config(None, {"regime": "CLDA", "n_source_private": 0, "n_target_private": 0})
        spec = cfg.scenario()
        assert spec.regime == "CLDA"
        ac = cfg.adapt_config()
        assert ac.rho == cfg.rho
        dims = cfg.model_dims(d_in=12, n_classes=4)
        assert (dims.d_in, dims.d_hidden, dims.d_feat, dims.n_classes) == (12, 64, 32, 4)
