"""
Shared pytest fixtures for kernel approximation tests.
"""
import json
import pytest
from dataclasses import dataclass

import sys
from pathlib import Path

import numpy as np

# Add krn to path for imports
krn_dir = Path(__file__).parent.parent
sys.path.insert(0, str(krn_dir))


@dataclass
class MockConfig:
    """Test configuration that doesn't read environment variables."""
    QUAD_NODES: int = 16
    TAIL_CUTOFF: float = 12.0
    TAIL_TOLERANCE: float = 1e-9
    MAX_PANEL_WIDTH: float = 1.0
    STATE_BUDGET: int = 10000
    PAIR_BUDGET: int = 100000
    RESIDUAL_MASS: float = 1e-12
    SELFTEST_SEED: int = 0
    SELFTEST_CASES: int = 20
    LOG_LEVEL: str = "WARNING"


@pytest.fixture
def mock_config():
    """Provide a test configuration."""
    return MockConfig()


@pytest.fixture
def toolkit(mock_config):
    """Provide a toolkit wired to the test configuration."""
    from pipeline import KernelToolkit
    return KernelToolkit(mock_config)


@pytest.fixture
def quadrature(mock_config):
    """Default quadrature settings."""
    from models import QuadratureConfig
    return QuadratureConfig.from_config(mock_config)


@pytest.fixture
def two_cells():
    """A two-cell space with equal weights."""
    from measure_core import MeasuredSpace
    return MeasuredSpace.uniform(["a", "b"])


@pytest.fixture
def symmetric_kernel(two_cells):
    """The 2x2 symmetric kernel [[0.9, 0.1], [0.1, 0.9]] on uniform weights."""
    from measure_core import KernelMorphism
    return KernelMorphism.from_matrix(two_cells, ["a", "b"], [[0.9, 0.1], [0.1, 0.9]])


@pytest.fixture
def skewed_kernel():
    """A 3x2 kernel with non-uniform source weights."""
    from measure_core import KernelMorphism, MeasuredSpace
    source = MeasuredSpace(("x", "y", "z"), [0.25, 0.25, 0.5])
    return KernelMorphism.from_matrix(
        source, ("u", "v"), [[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]]
    )


@pytest.fixture
def rng():
    """Seeded generator for property checks."""
    return np.random.default_rng(20240607)


@pytest.fixture
def kernel_file(tmp_path):
    """Write the symmetric kernel as a JSON document and return its path."""
    path = tmp_path / "kernel.json"
    path.write_text(
        json.dumps(
            {
                "labels_in": ["a", "b"],
                "labels_out": ["a", "b"],
                "mu": [0.5, 0.5],
                "matrix": [[0.9, 0.1], [0.1, 0.9]],
            }
        )
    )
    return path


@pytest.fixture
def cantor_text():
    """Program building the first stages of the Cantor distribution."""
    return "(p0! +[0.5] p1!) ; ((dup ; (p0! +[0.5] p1!)))*"
