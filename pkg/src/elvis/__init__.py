"""ELViS: optimal-transport refined local-descriptor similarity for image re-ranking."""

from .descriptors import (
    DatasetFormatError,
    DescriptorDataset,
    ProjectedDescriptorSet,
    ProjectionParams,
    RawDescriptorSet,
    project,
    select_top_m,
    write_dataset,
)
from .model import Ablation, ModelParams
from .retrieval import RankedList, mean_average_precision, rerank
from .scoring import ChamferOTScorer, ChamferScorer, ElvisScorer, pair_similarity
from .transport import NumericError, OtConfig, sinkhorn

__version__ = "0.1.0"

__all__ = [
    "Ablation", "ChamferOTScorer", "ChamferScorer", "DatasetFormatError",
    "DescriptorDataset", "ElvisScorer", "ModelParams", "NumericError", "OtConfig",
    "ProjectedDescriptorSet", "ProjectionParams", "RankedList", "RawDescriptorSet",
    "mean_average_precision", "pair_similarity", "project", "rerank",
    "select_top_m", "sinkhorn", "write_dataset",
]
