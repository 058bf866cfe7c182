"""Error types shared across the package.

Everything raised on purpose derives from AgentError so the turn loop can
convert recoverable failures into clarification actions while letting real
bugs propagate.
"""


class AgentError(Exception):
    """Base class for recoverable, domain-level failures."""


class UnknownEntity(AgentError):
    """An entity id is not present (or not visible) in the scene."""


class DuplicateId(AgentError):
    """An appear event re-used an existing entity id."""


class SelfRelation(AgentError):
    """A spatial relation was queried with both operands equal."""


class InvalidBBox(AgentError):
    """A bounding box violates the normalized-coordinate invariants."""


class InvalidRegion(AgentError):
    """A tool was invoked with a malformed region of interest."""


class UnknownTool(AgentError):
    """A tool name is not registered."""


class UnresolvedReference(AgentError):
    """A referring expression has no resolvable antecedent or match."""


class DepthExceeded(AgentError):
    """A nested entity query exceeded the supported reasoning depth."""


class MalformedActionReply(AgentError):
    """A backend reply that looks like an action directive fails to parse."""


class BackendFailure(AgentError):
    """The language backend is unreachable or persistently failing."""


class ConfigError(AgentError):
    """A configuration file or value is invalid."""


class ScenarioFormatError(AgentError):
    """A scenario file violates the scenario schema."""
