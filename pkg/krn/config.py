import os
from dataclasses import dataclass
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


@dataclass
class Config:
    """Configuration settings for kernel approximation and inversion"""

    # Quadrature settings
    QUAD_NODES: int = int(os.getenv("KRN_QUAD_NODES", "16"))  # Gauss-Legendre order
    TAIL_CUTOFF: float = float(os.getenv("KRN_TAIL_CUTOFF", "12.0"))
    TAIL_TOLERANCE: float = float(os.getenv("KRN_TAIL_TOLERANCE", "1e-9"))
    MAX_PANEL_WIDTH: float = float(os.getenv("KRN_MAX_PANEL_WIDTH", "1.0"))

    # ProbNetKAT budgets
    STATE_BUDGET: int = int(os.getenv("KRN_STATE_BUDGET", "100000"))
    PAIR_BUDGET: int = int(os.getenv("KRN_PAIR_BUDGET", "1000000"))
    RESIDUAL_MASS: float = 1e-12  # Transient mass left when enumeration stops

    # Self-test settings
    SELFTEST_SEED: int = int(os.getenv("KRN_SELFTEST_SEED", "0"))
    SELFTEST_CASES: int = int(os.getenv("KRN_SELFTEST_CASES", "500"))

    LOG_LEVEL: str = os.getenv("KRN_LOG_LEVEL", "WARNING")


config = Config()
