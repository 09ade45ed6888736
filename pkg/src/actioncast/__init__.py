"""actioncast: real-time forecasting of keyboard and mouse actions.

Converts raw input-event logs into discrete user actions (identifying
clicked widgets by image-patch matching), trains a recurrent forecaster
over them, and serves live top-k predictions plus a cursor-attraction
field derived from them.
"""

from .events import InputEvent, MalformedLogError, read_sessions, write_log
from .field import AttractionTarget, FieldConfig, apply_motion, pull_at, sample_grid
from .model import (
    Checkpoint,
    EncodedCorpus,
    EncodedSession,
    FilterEmptyError,
    NextActionForecaster,
    Predictor,
    TrainingConfig,
    encode_corpus,
    evaluate,
    filter_renormalize,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .patches import (
    DetectorBox,
    ImagePatch,
    PatchDb,
    PatchFeatures,
    locate_on_screen,
    match_correlation,
    ncc,
    normalize_dpi,
    prefilter_compatible,
    select_clicked_region,
)
from .synth import (
    OracleResult,
    SyntheticScene,
    WorkflowProfile,
    generate_session,
    geometry_resolver,
    load_profile,
    oracle_accuracy,
    render_scene,
)
from .tokenizer import (
    ActionVocabulary,
    ContextFeatures,
    TakenAction,
    UserAction,
    action_from_label,
    build_app_vocab,
    build_vocabulary,
    contexts_for,
    encode_action,
    encode_context,
    tokenize_events,
    tokenize_taken,
)

__version__ = "0.1.0"

__all__ = [
    "ActionVocabulary",
    "AttractionTarget",
    "Checkpoint",
    "ContextFeatures",
    "DetectorBox",
    "EncodedCorpus",
    "EncodedSession",
    "FieldConfig",
    "FilterEmptyError",
    "ImagePatch",
    "InputEvent",
    "MalformedLogError",
    "NextActionForecaster",
    "OracleResult",
    "PatchDb",
    "PatchFeatures",
    "Predictor",
    "SyntheticScene",
    "TakenAction",
    "TrainingConfig",
    "UserAction",
    "WorkflowProfile",
    "action_from_label",
    "apply_motion",
    "build_app_vocab",
    "build_vocabulary",
    "contexts_for",
    "encode_action",
    "encode_context",
    "encode_corpus",
    "evaluate",
    "filter_renormalize",
    "generate_session",
    "geometry_resolver",
    "load_checkpoint",
    "load_profile",
    "locate_on_screen",
    "match_correlation",
    "ncc",
    "normalize_dpi",
    "oracle_accuracy",
    "prefilter_compatible",
    "pull_at",
    "read_sessions",
    "render_scene",
    "sample_grid",
    "save_checkpoint",
    "select_clicked_region",
    "tokenize_events",
    "tokenize_taken",
    "train",
    "write_log",
]
