"""Network psychometrics for Likert questionnaires."""

__version__ = "0.1.0"

from .dataset import DataError, LikertMatrix, LoadOptions, load_csv  # noqa: E402
from .ega import EgaConfig, run_ega  # noqa: E402

__all__ = ["DataError", "EgaConfig", "LikertMatrix", "LoadOptions", "__version__", "load_csv", "run_ega"]
