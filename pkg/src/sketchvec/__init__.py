"""sketchvec: converts a target sketch plus a text instruction into an
editable vector diagram by iterating a critic/candidates/judge loop over a
small shape-grammar program."""

__version__ = "0.1.0"

from .grammar import (
    Canvas,
    Diagram,
    DiagramDelta,
    GrammarError,
    NamedColor,
    Shape,
    ShapeType,
    apply_delta,
    diff_diagrams,
    make_shape,
    normalize_shape,
    parse_diagram,
    serialize_diagram,
)
from .geometry import (
    QualitativeRelation,
    RelationKind,
    StructuralDistance,
    bounding_box,
    extract_relations,
    structural_distance,
)
from .loop import (
    DEFAULT_INSTRUCTION,
    LoopState,
    Outcome,
    Phase,
    SessionConfig,
    StepRecord,
    apply_override,
    initialize,
    run_step,
    run_to_completion,
)

__all__ = [
    "__version__",
    "Canvas",
    "Diagram",
    "DiagramDelta",
    "GrammarError",
    "NamedColor",
    "Shape",
    "ShapeType",
    "apply_delta",
    "diff_diagrams",
    "make_shape",
    "normalize_shape",
    "parse_diagram",
    "serialize_diagram",
    "QualitativeRelation",
    "RelationKind",
    "StructuralDistance",
    "bounding_box",
    "extract_relations",
    "structural_distance",
    "DEFAULT_INSTRUCTION",
    "LoopState",
    "Outcome",
    "Phase",
    "SessionConfig",
    "StepRecord",
    "apply_override",
    "initialize",
    "run_step",
    "run_to_completion",
]
