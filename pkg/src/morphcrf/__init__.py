"""Contextual morphological analysis toolkit.

A hierarchical neural tagger with one linear-chain CRF decoder per coarse
morphological feature, built on a self-contained reverse-mode autodiff core,
with multilingual cluster training and typology-vector language factoring.
"""

from .encoder import EncoderConfig
from .errors import TaggerError
from .metrics import EvalReport, evaluate_assignments
from .model import MorphTagger
from .schema import FeatureSchema, build_schema, compose_prediction, decompose_tagset
from .training import TrainConfig, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "EncoderConfig",
    "EvalReport",
    "FeatureSchema",
    "MorphTagger",
    "TaggerError",
    "TrainConfig",
    "build_schema",
    "compose_prediction",
    "decompose_tagset",
    "evaluate_assignments",
    "load_checkpoint",
    "save_checkpoint",
    "__version__",
]
