"""Exception types shared across the package."""


class DsmLabError(Exception):
    """Base class for all package errors."""


class InfeasibleSpec(DsmLabError):
    """Graph specification violates a feasibility constraint."""


class DisconnectedGraph(DsmLabError):
    """A sampled graph candidate is not strongly connected."""


class GenerationFailure(DsmLabError):
    """Random graph generation exceeded its retry budget."""


class NotNormal(DsmLabError):
    """Matrix fails the normality check required for the decomposition."""


class DegenerateSpectrum(DsmLabError):
    """Eigensolver output violates the expected spectral structure."""


class InfeasibleReplication(DsmLabError):
    """Replication factor incompatible with node count or dataset size."""


class LabelImbalance(DsmLabError):
    """Targets do not form exactly M equally sized label groups."""


class BatchTooLarge(DsmLabError):
    """Requested minibatch exceeds the local shard size."""


class DegeneratePoint(DsmLabError):
    """Toy construction hit a zero feature (u + zeta vanishes)."""


class NonFiniteModel(DsmLabError):
    """NaN or Inf appeared in the parameter matrix during training."""


class NoDecrease(DsmLabError):
    """Learning-rate sweep never reduced the one-step loss."""


class InvalidInputs(DsmLabError):
    """Bound inputs outside the admissible domain."""


class EmptyCurve(DsmLabError):
    """An experimental curve required by the predictor is empty."""


class NonPositiveDecrease(DsmLabError):
    """Experimental loss curve shows no overall decrease."""


class InfeasibleBatch(DsmLabError):
    """Batch size exceeds the per-node shard implied by (S, M, C)."""


class EmptyTrace(DsmLabError):
    """Computation-time trace contains no samples."""


class NonPositiveSample(DsmLabError):
    """Computation-time trace contains a non-positive entry."""


class LengthMismatch(DsmLabError):
    """Metrics log and completion schedule cover different iteration counts."""


class ConfigError(DsmLabError):
    """Invalid experiment configuration; carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class MissingArtifacts(DsmLabError):
    """Artifact directory lacks files required by the report."""
