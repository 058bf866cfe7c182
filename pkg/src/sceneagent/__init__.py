"""Scene-grounded dialogue agent with a memory-perception-plan-execute
turn cycle, plus the benchmark harness that scores it.

The runtime pieces are small and composable:

    SceneWorld / WorldEvent     2D scene state and its transitions
    MemoryState                 two-tier dialogue memory with salience
    perceive / attend           focus selection and percept rendering
    parse_instruction / Plan    instruction grammar and sub-task planning
    Executor                    directive parsing, verification, retries
    Session                     one dialogue loop over all of the above
    harness                     scenario files, generation, runs, scoring
"""

from .agent_loop import Session, TraceEvent, TurnRecord, stable_seed
from .backend import (
    CompletionParams,
    ModelBackend,
    Phase,
    PromptBundle,
    RemoteBackend,
    RemoteBackendConfig,
    ScriptedBackend,
    ScriptedRule,
)
from .config import AblationFlags, AgentConfig
from .errors import (
    AgentError,
    BackendFailure,
    ConfigError,
    DepthExceeded,
    DuplicateId,
    InvalidBBox,
    InvalidRegion,
    MalformedActionReply,
    ScenarioFormatError,
    SelfRelation,
    UnknownEntity,
    UnknownTool,
    UnresolvedReference,
)
from .executor import (
    ActionKind,
    AgentAction,
    CorrectionPolicy,
    Executor,
    Expectation,
    ExpectationKind,
    Verdict,
    parse_action_reply,
    verify,
)
from .memory import (
    EntryKind,
    MemoryConfig,
    MemoryEntry,
    MemoryState,
    Tier,
    extract_mentions,
    render_context,
    retrieve,
    salience_of,
    tokenize,
    update_memory,
)
from .oracle import GroundTruthBackend, place_for_relation
from .perception import (
    Detection,
    NoiseProfile,
    Percept,
    RelationFact,
    ToolCapability,
    ToolOutput,
    ToolRegistry,
    VisualTool,
    attend,
    default_registry,
    invoke_tool,
    parse_rendered,
    perceive,
    relation_facts,
    render_percept,
)
from .planner import (
    Answer,
    Instruction,
    Intent,
    Plan,
    RelationRef,
    Subtask,
    SubtaskStatus,
    TargetSpec,
    Verb,
    clarify_intent,
    make_plan,
    order_subtasks,
    parse_instruction,
    passthrough_plan,
    reason,
    resolve_reference,
    resolve_single,
    resolve_target_ids,
)
from .world import (
    BBox,
    DEFAULT_MARGIN,
    Entity,
    EntityQuery,
    EventKind,
    SceneWorld,
    SpatialRelation,
    WorldEvent,
    apply_event,
    category_matches,
    find_entities,
    relation_holds,
)

__version__ = "0.1.0"
