import logging
import os
import sys

LOG_FORMAT = "[%(asctime)s] [%(levelname)s] %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


# -----------------------------
# Colored stderr output
# -----------------------------
class ColorFormatter(logging.Formatter):
    """Colors the whole line by level; plain text when stderr is not a terminal."""

    COLORS = {
        "DEBUG": "\033[90m",
        "INFO": "\033[94m",
        "WARNING": "\033[93m",
        "ERROR": "\033[91m",
        "CRITICAL": "\033[1;91m",
    }
    RESET = "\033[0m"

    def __init__(self, use_color: bool = True):
        super().__init__(LOG_FORMAT, datefmt=DATE_FORMAT)
        self.use_color = use_color

    def format(self, record):
        message = super().format(record)
        color = self.COLORS.get(record.levelname) if self.use_color else None
        return f"{color}{message}{self.RESET}" if color else message


# -----------------------------
# Toolkit logger
# -----------------------------
# stdout carries the key=value results, so every log line goes to stderr
logger = logging.getLogger("thermoformal")
logger.setLevel(os.getenv("THERMO_LOG_LEVEL", "INFO").upper())
logger.propagate = False

if not logger.handlers:
    stderr_handler = logging.StreamHandler(sys.stderr)
    stderr_handler.setFormatter(ColorFormatter(use_color=sys.stderr.isatty()))
    logger.addHandler(stderr_handler)

# Optional copy of the run log, uncolored
if os.getenv("LOG_TO_FILE", "false").lower() == "true":
    log_path = os.getenv("THERMO_LOG_FILE", os.path.join("logs", "thermoformal.log"))
    os.makedirs(os.path.dirname(log_path) or ".", exist_ok=True)
    run_log = logging.FileHandler(log_path)
    run_log.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
    logger.addHandler(run_log)


# -----------------------------
# Structured key=value events
# -----------------------------
def format_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(format_value(v) for v in value) + "]"
    return str(value).replace(" ", "_")


def log_event(event: str, level: int = logging.INFO, **fields):
    """
    Emits one diagnostic line: event=<name> key=value key=value ...

    Floats are printed with 17 significant digits so that a log line can be
    replayed exactly.
    """
    if not logger.isEnabledFor(level):
        return
    parts = [f"event={event}"]
    parts.extend(f"{key}={format_value(value)}" for key, value in fields.items())
    logger.log(level, " ".join(parts))
