import functools
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@functools.lru_cache(maxsize=None)
def bundled_run(name: str, degree: int = 2):
    """Full pipeline on a bundled scenario, computed once per session."""
    from occuplan.pipeline import run_scenario
    from occuplan.scenario import bundled, load

    path = next(p for p in bundled() if p.stem == name)
    return run_scenario(load(path), degree=degree, seed=0)


def bundled_names():
    from occuplan.scenario import bundled

    return [p.stem for p in bundled()]


@pytest.fixture(scope="session")
def run_bundled():
    return bundled_run
