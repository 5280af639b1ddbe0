import pytest

from aspectsum.config import PipelineConfig, load_config, parse_config_text
from aspectsum.errors import ConfigError


def test_defaults():
    cfg = PipelineConfig()
    assert (cfg.eps_aspect, cfg.eps_evidence, cfg.min_samples, cfg.top_n) == (0.5, 0.21, 1, 8)
    assert (cfg.damping, cfg.tolerance, cfg.max_iter) == (0.85, 1e-6, 200)
    assert cfg.backend == "mock" and cfg.embedder == "hashed-local"


def test_parse_file_text():
    text = """
    # comment line
    top-n = 5
    eps_evidence = 0.3   # trailing comment
    backend = remote
    cache_dir = none
    """
    assert parse_config_text(text) == {"top_n": 5, "eps_evidence": 0.3, "backend": "remote", "cache_dir": None}


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("top_n = 5\neps_aspect = 0.4\n")
    cfg = load_config(path, {"top_n": 3, "eps_aspect": None})
    assert cfg.top_n == 3 and cfg.eps_aspect == 0.4
    assert cfg.eps_evidence == 0.21


def test_string_overrides_coerced():
    assert load_config(None, {"min_samples": "2"}).min_samples == 2


@pytest.mark.parametrize(
    "text",
    [
        "top_n = 0",
        "eps_aspect = -1",
        "damping = 1.0",
        "skip_threshold = 1.5",
        "backend = openai",
        "embedder = magic",
        "colour = blue",
        "top_n = many",
        "just a line",
    ],
)
def test_invalid_values(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text + "\n")
    with pytest.raises(ConfigError) as info:
        load_config(path)
    assert info.value.exit_code == 1


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg")


def test_replace_validates():
    with pytest.raises(ConfigError):
        PipelineConfig().replace(min_samples=0)
    assert PipelineConfig().replace(top_n=4).top_n == 4
