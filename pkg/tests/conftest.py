import numpy as np
import pytest
import torch

from tcnfont.config import toy_config
from tcnfont.glyphdata import make_toy_dataset
from tcnfont.networks import ModelBundle, NetConfig

# narrow networks keep unit tests fast; acceptance runs use the defaults
TINY_WIDTHS = dict(backbone_widths=(4, 4, 8, 8, 8, 8), generator_widths=(8, 8, 4, 4), latent_dim=32, embed_dim=32)


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory):
    return make_toy_dataset(6, 10, seed=1, out_dir=tmp_path_factory.mktemp("toy"))


@pytest.fixture(scope="session")
def toy_train(toy_manifest):
    return toy_manifest.load_split("train")


@pytest.fixture
def tiny_config():
    return NetConfig(n_contents=10, n_typefaces=6, **TINY_WIDTHS)


@pytest.fixture
def tiny_bundle(tiny_config):
    return ModelBundle.build(tiny_config, seed=0)


@pytest.fixture
def tiny_train_config():
    # embed_dim/widths must match TINY_WIDTHS; latent_dim is fixed at 256 in TrainConfig.net_config
    return toy_config(
        batch_size=4,
        backbone_widths=(4, 4, 8, 8, 8, 8),
        generator_widths=(8, 8, 4, 4),
        pretrain_epochs=1,
        pretrain_steps_per_epoch=3,
        main_epochs=2,
        steps_per_epoch=3,
        classifier_steps=5,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
