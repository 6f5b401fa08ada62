"""
Shared pytest configuration and fixtures.

This file is automatically discovered by pytest and provides
configuration and fixtures available to all tests.
"""

import json
import logging
import sys
import tempfile
from collections.abc import Generator
from pathlib import Path

import pytest

# Add project root to Python path for imports
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.core.models.measure import DiscreteMeasure  # noqa: E402


@pytest.fixture(scope="session")
def project_root_path() -> Path:
    """Provide path to project root directory."""
    return Path(__file__).parent.parent


@pytest.fixture
def temp_directory() -> Generator[Path, None, None]:
    """Provide a clean temporary directory for each test."""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield Path(temp_dir)


@pytest.fixture
def pair_a() -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """(d_-1 + d_1)/2 against d_0: matching order 1."""
    return (
        DiscreteMeasure.from_atoms([(-1.0, 0.5), (1.0, 0.5)]),
        DiscreteMeasure.dirac(0.0),
    )


@pytest.fixture
def pair_b() -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """{-1: 2/3, 2: 1/3} against {1: 2/3, -2: 1/3}: matching order 2."""
    return (
        DiscreteMeasure.from_atoms([(-1.0, 2 / 3), (2.0, 1 / 3)]),
        DiscreteMeasure.from_atoms([(1.0, 2 / 3), (-2.0, 1 / 3)]),
    )


@pytest.fixture
def pair_c() -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """d_0 against d_1: a pure translation, matching order 0."""
    return DiscreteMeasure.dirac(0.0), DiscreteMeasure.dirac(1.0)


@pytest.fixture
def pair_2d() -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """(d_(-1,0) + d_(1,0))/2 against d_(0,0): matching order 1 in the plane."""
    return (
        DiscreteMeasure.from_atoms([((-1.0, 0.0), 0.5), ((1.0, 0.0), 0.5)]),
        DiscreteMeasure.dirac((0.0, 0.0)),
    )


@pytest.fixture
def measure_files(temp_directory: Path, pair_a) -> tuple[Path, Path]:
    """Pair A written as measure JSON files."""
    paths = []
    for name, measure in zip(("mu.json", "nu.json"), pair_a, strict=True):
        path = temp_directory / name
        path.write_text(json.dumps(measure.to_dict()))
        paths.append(path)
    return paths[0], paths[1]


@pytest.fixture(autouse=True)
def clean_environment():
    """Ensure clean settings and services for each test."""
    from src.config.settings import reload_settings
    from src.core.services.service_factory import reset_service_factory

    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    reload_settings()
    reset_service_factory()

    yield

    # configure_logging replaces root handlers
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)
    reload_settings()
    reset_service_factory()


# Configure pytest markers
def pytest_configure(config):
    """Configure custom pytest markers."""
    config.addinivalue_line("markers", "unit: mark test as a unit test")
    config.addinivalue_line("markers", "integration: mark test as an integration test")
    config.addinivalue_line("markers", "slow: mark test as slow running")


# Test collection configuration
def pytest_collection_modifyitems(config, items):
    """Modify test collection to add markers automatically."""
    for item in items:
        # Auto-mark tests based on their location
        if "unit" in str(item.fspath):
            item.add_marker(pytest.mark.unit)
        elif "integration" in str(item.fspath):
            item.add_marker(pytest.mark.integration)
