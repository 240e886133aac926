import pytest

from hardypot.config import ConfigError, RunConfig, load_config, parse_config


def test_parse_full():
    cfg = parse_config(
        """
        # comment
        domain.N = 4
        domain.k = 1
        domain.mu = 1.0
        cloud.resolution = 2000   # trailing comment
        cloud.seed = 7
        scenario.p = 1.5
        scenario.p_grid = 1.2, 1.4 1.6
        output.dir = /tmp/x
        """
    )
    assert (cfg.N, cfg.k, cfg.mu, cfg.resolution, cfg.seed) == (4, 1, 1.0, 2000, 7)
    assert cfg.scenario == {"p": 1.5, "p_grid": [1.2, 1.4, 1.6]}
    assert cfg.out_dir == "/tmp/x"
    assert cfg.params().alpha_minus == pytest.approx(1.5 - (1.25) ** 0.5)


def test_defaults_valid():
    cfg = RunConfig().validate()
    assert cfg.domain().N == 3
    assert list(cfg.as_dict()) == ["domain", "cloud", "scenario"]


@pytest.mark.parametrize(
    "text",
    [
        "domain.dim = 3",
        "scenario.unknown = 1",
        "nonsense",
        "domain.N = three",
        "domain.k = 3",
        "domain.mu = 5.0",
        "cloud.resolution = 10",
        "cloud.q = 0.5",
        "cloud.uniform_fraction = 1.0",
    ],
)
def test_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_missing(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_load_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("domain.mu = 2.0\n")
    assert load_config(f).mu == 2.0
