"""Exception hierarchy.

Domain errors all derive from InsituError so CLI entry points can map them
to exit code 1 uniformly.
"""

from __future__ import annotations


class InsituError(Exception):
    """Base class for all domain errors raised by this package."""


# task graphs
class StructuralRegression(InsituError):
    """Final state removes or rewrites an element of the initial state."""


class SearchBudgetExceeded(InsituError):
    """Graph matching attempted above the configured node limit."""


class UnboundSlot(InsituError):
    """Grounding left an attribute slot unbound."""


class MissingEntity(InsituError):
    """Binding refers to an entity id absent from the scene."""


# scene / simulator
class PoseOutOfBounds(InsituError):
    """Camera pose outside the scene bounds."""


class PlacementFailure(InsituError):
    """Procedural placement failed after bounded retries."""


# generators
class EmptyDataSet(InsituError):
    """Task generation requires at least one observation record."""


class NoEligibleLabel(InsituError):
    """View contains no countable category."""


class NoVisibleEntity(InsituError):
    """View contains no usable entity."""


class NoEntityPair(InsituError):
    """View contains no entity pair for relationship tasks."""


class NoDistantTarget(InsituError):
    """No entity far enough away to make a navigation target."""


class SolverFailure(InsituError):
    """A solver raised or returned garbage during task execution."""


# filter
class ZeroVector(InsituError):
    """An encoder emitted an all-zero vector for a nonempty input."""


class DegenerateAffinity(InsituError):
    """A task has zero affinity to every other task."""


# metrics
class EmptyTaskSet(InsituError):
    """Ratio metrics are undefined on an empty task set."""


class EmptyEvolvedSet(InsituError):
    """Evolution gain is undefined when the evolved set has an empty MIS."""


class NoSpatialBinding(InsituError):
    """Spatial statistics need at least one instance bound to a 3D box."""


class ZeroVariance(InsituError):
    """All paired differences are identical."""


# evolution
class NoExchangeableVertices(InsituError):
    """No vertex pair of equal semantic type with differing attribute slots."""


class BudgetExceeded(InsituError):
    """Evolution instance budget exhausted; partial results available."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


# harness / remote
class SolverTimeout(InsituError):
    """Solver failed to respond within the configured timeout."""


class Unreachable(InsituError):
    """Remote endpoint unreachable after retries."""


class MalformedResponse(InsituError):
    """Remote endpoint returned unparseable or schema-violating JSON."""


# persistence
class MissingArtifact(InsituError):
    """Expected run artifact not found."""


class SchemaVersionError(InsituError):
    """Artifact carries an unknown schema version."""
