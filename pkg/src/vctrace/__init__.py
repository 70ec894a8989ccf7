"""Structured mechanistic reasoning traces for virtual cells.

A toolkit for parsing and validating action-DAG explanation traces,
verifying them against biological ground truth, filtering out
contradicted claims, computing corpus quality metrics, and building the
perturbation-QA labeling dataset (pseudobulk NB GLM differential
expression, labeling, splits, and statistical baselines).
"""

__version__ = "0.1.0"

from vctrace.model import ActionNode, ReasoningTrace, StructuralReport
from vctrace.schema import SchemaRegistry, default_registry

__all__ = [
    "ActionNode",
    "ReasoningTrace",
    "StructuralReport",
    "SchemaRegistry",
    "default_registry",
    "__version__",
]
