"""patientrag: retrieval-augmented engine for patient-centric medical Q&A."""

__version__ = "0.1.0"

from .config import EngineConfig, load_config
from .engine import Engine

__all__ = ["Engine", "EngineConfig", "load_config", "__version__"]
