import pytest

from bridgeqa.config import load_config
from bridgeqa.pipeline import run_all
from bridgeqa.tinywiki import fixture_config, write_fixture


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("tinywiki")
    write_fixture(directory, seed=7)
    return directory


@pytest.fixture(scope="session")
def mini_run(tmp_path_factory, fixture_dir):
    """A complete but barely-trained pipeline run (2 epochs everywhere), for
    structural tests that need every artifact present."""
    out = tmp_path_factory.mktemp("mini_run")
    cfg = load_config(None, fixture_config(fixture_dir, out, bridge_epochs=2, reader_epochs=2))
    run_all(cfg)
    return cfg
