"""Multi-target vital-sign estimation from FMCW radar micro-Doppler energy."""

from .config import DataCube, DerivedQuantities, RadarConfig, SlowTimeSeries, derive_quantities, load_config
from .sim import MotionArtifact, SceneSpec, SubjectSpec, simulate

__version__ = "0.1.0"

__all__ = [
    "DataCube",
    "DerivedQuantities",
    "MotionArtifact",
    "RadarConfig",
    "SceneSpec",
    "SlowTimeSeries",
    "SubjectSpec",
    "derive_quantities",
    "load_config",
    "simulate",
]
