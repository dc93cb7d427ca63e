"""Fixtures over the synthetic run-directory builders."""
from pathlib import Path

import pytest

from runmaker import make_run


@pytest.fixture
def run_dir(tmp_path) -> Path:
    return make_run(tmp_path)


@pytest.fixture
def equal_grid_run(tmp_path) -> Path:
    return make_run(tmp_path, equal_grids=True)
