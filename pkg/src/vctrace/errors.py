"""Exception hierarchy shared across the package."""


class VCTraceError(Exception):
    """Base class for all package errors."""


class CatalogMissError(VCTraceError):
    """An action primitive name is not in the 20-primitive catalog."""


class CycleError(VCTraceError):
    """A trace DAG contains a cycle; carries the node ids of one cycle."""

    def __init__(self, cycle_nodes):
        self.cycle_nodes = list(cycle_nodes)
        super().__init__(f"cycle involving nodes: {', '.join(self.cycle_nodes)}")


class RenderError(VCTraceError):
    """A trace failed validation and cannot be rendered canonically."""


class TableFormatError(VCTraceError):
    """A TSV/JSONL data file has a bad header or malformed row."""


class NormalizationError(VCTraceError):
    """Size-factor computation is impossible (no all-positive gene)."""


class PipelineError(VCTraceError):
    """A generation-pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class ScorerError(VCTraceError):
    """External DTI scorer transport failure (distinct from 'unknown')."""


class ConfigError(VCTraceError):
    """Unusable configuration: missing path, out-of-range threshold, etc."""
