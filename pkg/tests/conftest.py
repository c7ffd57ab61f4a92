import pytest

from simenhance.config import loads

TINY_INI = """
[signal]
components = 48:1.0:0.0, 12:0.35:0.0
num_samples = 240

[quantizer]
levels = 8

[enhancer]
window_len = 40
hidden_width = 16
epochs = 2
batch_size = 4

[gan]
latent_dim = 4
generator_hidden = 8
sample_len = 40
iterations = 4
batch_size = 8
metric_interval = 2

[dataset]
n_pairs = 20
n_noise_windows = 20

[seeds]
master = 5
"""


@pytest.fixture
def tiny_cfg_text():
    return TINY_INI


@pytest.fixture
def tiny_pipeline_cfg(tmp_path):
    return loads(TINY_INI).with_overrides(out=str(tmp_path / "runs"))


# ------------------------------------------------------------ acceptance report

ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
