"""Model gateway: one interface, three backends (remote, scripted, oracle)."""

from .base import (
    MAX_DISCREPANCIES,
    STRATEGY_ORDER,
    BackendUnavailable,
    CandidateProgram,
    CritiqueReport,
    FailureFeedback,
    GatewayCallLog,
    GatewayError,
    JudgeVerdict,
    MalformedModelOutput,
    ModelGateway,
    ModelRole,
    Strategy,
)
from .oracle import OracleGateway
from .prompts import NO_DIFFERENCES_MARKER, grammar_reference
from .remote import RemoteConfig, RemoteGateway
from .scripted import ScriptedGateway, TraceExhausted

__all__ = [
    "MAX_DISCREPANCIES",
    "STRATEGY_ORDER",
    "BackendUnavailable",
    "CandidateProgram",
    "CritiqueReport",
    "FailureFeedback",
    "GatewayCallLog",
    "GatewayError",
    "JudgeVerdict",
    "MalformedModelOutput",
    "ModelGateway",
    "ModelRole",
    "NO_DIFFERENCES_MARKER",
    "OracleGateway",
    "RemoteConfig",
    "RemoteGateway",
    "ScriptedGateway",
    "Strategy",
    "TraceExhausted",
    "grammar_reference",
]
