"""Config layering, validation, and the settings digest."""

import pytest

from relscore.config import ProviderSettings, ToolConfig, load_config
from relscore.errors import InputError


def _write(tmp_path, text):
    path = tmp_path / "config.yaml"
    path.write_text(text, encoding="utf-8")
    return path


class TestDefaults:
    def test_no_path_gives_defaults(self):
        config = load_config(None)
        assert config == ToolConfig()
        assert config.metric.alpha == 1e-5
        assert config.metric.denominator_floor == 1.0
        assert config.metric.log_base is None
        assert config.metric.report_scale == 100.0
        assert config.generation.pair_cap == 50
        assert config.generation.sampling_fraction == 0.5
        assert config.provider.endpoint is None
        assert config.provider.retry_budget == 2

    def test_empty_file_gives_defaults(self, tmp_path):
        assert load_config(_write(tmp_path, "")) == ToolConfig()

    def test_provider_defaults(self):
        settings = ProviderSettings()
        assert settings.timeout == 30.0
        assert settings.max_in_flight == 4
        assert settings.token is None


class TestOverrides:
    def test_partial_override_keeps_other_defaults(self, tmp_path):
        path = _write(
            tmp_path,
            "metric:\n  alpha: 0.001\n"
            "generation:\n  pair_cap: 10\n"
            "provider:\n  endpoint: http://localhost:9000\n  timeout: 5.0\n",
        )
        config = load_config(path)
        assert config.metric.alpha == 0.001
        assert config.metric.denominator_floor == 1.0
        assert config.generation.pair_cap == 10
        assert config.generation.sampling_fraction == 0.5
        assert config.provider.endpoint == "http://localhost:9000"
        assert config.provider.timeout == 5.0
        assert config.provider.retry_budget == 2

    def test_sequences_coerced_to_tuples(self, tmp_path):
        path = _write(
            tmp_path,
            "generation:\n  blocklist: [near, beside]\n  no_relation_phrases: [nothing]\n",
        )
        config = load_config(path)
        assert config.generation.blocklist == ("near", "beside")
        assert config.generation.no_relation_phrases == ("nothing",)

    def test_overlay_mapping(self, tmp_path):
        path = _write(
            tmp_path,
            "generation:\n"
            "  overlay:\n"
            "    subject_color: [0, 128, 0, 255]\n"
            "    alpha: 0.3\n",
        )
        overlay = load_config(path).generation.overlay
        assert overlay.subject_color == (0, 128, 0, 255)
        assert overlay.object_color == (255, 0, 0, 255)
        assert overlay.alpha == 0.3

    def test_metric_log_base_override(self, tmp_path):
        config = load_config(_write(tmp_path, "metric:\n  log_base: 10\n"))
        assert config.metric.log_base == 10


class TestRejection:
    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            load_config(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, tmp_path):
        with pytest.raises(InputError, match="valid YAML"):
            load_config(_write(tmp_path, "metric: [unclosed\n"))

    def test_top_level_must_be_mapping(self, tmp_path):
        with pytest.raises(InputError, match="mapping at top level"):
            load_config(_write(tmp_path, "- just\n- a list\n"))

    def test_unknown_section(self, tmp_path):
        with pytest.raises(InputError, match="unknown config section.*metrix"):
            load_config(_write(tmp_path, "metrix:\n  alpha: 0.1\n"))

    def test_section_must_be_mapping(self, tmp_path):
        with pytest.raises(InputError, match="'metric' must be a mapping"):
            load_config(_write(tmp_path, "metric: 3\n"))

    def test_unknown_metric_key_names_known_ones(self, tmp_path):
        with pytest.raises(InputError, match="unknown metric config key.*alhpa.*alpha"):
            load_config(_write(tmp_path, "metric:\n  alhpa: 0.1\n"))

    def test_unknown_generation_key(self, tmp_path):
        with pytest.raises(InputError, match="unknown generation config key"):
            load_config(_write(tmp_path, "generation:\n  par_cap: 4\n"))

    def test_unknown_overlay_key(self, tmp_path):
        with pytest.raises(InputError, match="generation.overlay"):
            load_config(
                _write(tmp_path, "generation:\n  overlay:\n    halo_color: [1, 2, 3, 4]\n")
            )

    def test_blocklist_must_be_string_list(self, tmp_path):
        with pytest.raises(InputError, match="blocklist must be a list of strings"):
            load_config(_write(tmp_path, "generation:\n  blocklist: near\n"))

    def test_color_needs_four_components(self, tmp_path):
        with pytest.raises(InputError, match="4-element RGBA"):
            load_config(
                _write(tmp_path, "generation:\n  overlay:\n    subject_color: [0, 0, 255]\n")
            )

    def test_overlay_must_be_mapping(self, tmp_path):
        with pytest.raises(InputError, match="overlay must be a mapping"):
            load_config(_write(tmp_path, "generation:\n  overlay: blue\n"))

    def test_value_validation_still_applies(self, tmp_path):
        with pytest.raises(InputError, match="sampling_fraction"):
            load_config(_write(tmp_path, "generation:\n  sampling_fraction: 0\n"))
        with pytest.raises(InputError, match="alpha"):
            load_config(_write(tmp_path, "metric:\n  alpha: -1\n"))


class TestDigest:
    def test_stable_across_instances(self):
        assert ToolConfig().digest() == ToolConfig().digest()

    def test_default_file_matches_default_object(self, tmp_path):
        assert load_config(_write(tmp_path, "")).digest() == ToolConfig().digest()

    def test_sensitive_to_any_setting(self, tmp_path):
        base = ToolConfig().digest()
        tweaked = load_config(_write(tmp_path, "metric:\n  alpha: 0.001\n"))
        assert tweaked.digest() != base

    def test_equal_settings_from_different_sources_agree(self, tmp_path):
        explicit = load_config(
            _write(tmp_path, "metric:\n  alpha: 0.00001\n")  # the default, spelled out
        )
        assert explicit.digest() == ToolConfig().digest()

    def test_shape(self):
        digest = ToolConfig().digest()
        assert len(digest) == 64
        assert set(digest) <= set("0123456789abcdef")
