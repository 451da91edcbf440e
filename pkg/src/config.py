import os
from dotenv import load_dotenv

# ------------------------------------------
# always load .env from project root
# ------------------------------------------
CURRENT_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.dirname(CURRENT_DIR)
ENV_PATH = os.path.join(PROJECT_ROOT, ".env")

load_dotenv(dotenv_path=ENV_PATH)


def _int(name: str, default: int) -> int:
    return int(float(os.getenv(name, default)))


def _float(name: str, default: float) -> float:
    return float(os.getenv(name, default))


class Config:
    # Solver tolerances
    TOLERANCE = _float("THERMO_TOLERANCE", 1e-9)
    NEWTON_MAX_ITER = _int("THERMO_NEWTON_MAX_ITER", 60)

    # Truncation of the countable alphabet
    MIN_TRUNCATION = _int("THERMO_MIN_TRUNCATION", 1024)
    TRUNCATION_CAP = _int("THERMO_TRUNCATION_CAP", 262144)

    # Cylinder sums
    DEPTH = _int("THERMO_DEPTH", 2)
    CYLINDER_TRUNCATION = _int("THERMO_CYLINDER_TRUNCATION", 200)
    WORD_CAP = _int("THERMO_WORD_CAP", 10_000_000)

    # Parallel reductions
    WORKERS = _int("THERMO_WORKERS", 1)
    CHUNK_SIZE = _int("THERMO_CHUNK_SIZE", 65536)

    # Output
    OUTPUT_DIR = os.getenv("THERMO_OUTPUT_DIR", "results")
