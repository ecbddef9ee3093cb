"""proofscan: black box web app security scans with deterministic confirmation.

Parallel per-family test agents generate and execute HTTP cases through
named authenticated sessions; a versioned rule table turns the collected
evidence into confirmed findings (or honestly reports that it could not).
"""

from .config import ScanConfig, SessionSpec, Thresholds, Budgets, load_config
from .confirm import Verdict, VerdictStatus, confirm, load_rules
from .errors import (
    ConfigError,
    CredentialError,
    ScanError,
    ScopeViolation,
    SpecParseError,
)
from .evidence import EvidenceBundle, CaseRef, NormalizationProfile, body_distance
from .findings import Finding, FindingSet, finding_from_verdict
from .graph import FAMILY_REGISTRY, AgentGraph, RunResult, build_graph, run, run_scan
from .inventory import Endpoint, EndpointInventory, ParamSpec, parse_api_spec
from .payloads import BuiltinLadderBackend, PayloadBackend
from .plans import TestCase
from .report import export_traces, render_score_report, write_run_artifacts
from .sessions import SessionContext, establish_context, mint_canary
from .tokens import ForgeTechnique, decode_token, forge_token
from .transport import HttpEngine, Redactor, ResponseRecord, TraceLog
from .triage import (
    GroundTruthEntry,
    ScoreReport,
    TriageLabel,
    compute_metrics,
    load_ground_truth,
    score_findings,
)

__version__ = "0.1.0"

__all__ = [
    "AgentGraph",
    "Budgets",
    "BuiltinLadderBackend",
    "CaseRef",
    "ConfigError",
    "CredentialError",
    "Endpoint",
    "EndpointInventory",
    "EvidenceBundle",
    "FAMILY_REGISTRY",
    "Finding",
    "FindingSet",
    "ForgeTechnique",
    "GroundTruthEntry",
    "HttpEngine",
    "NormalizationProfile",
    "ParamSpec",
    "PayloadBackend",
    "Redactor",
    "ResponseRecord",
    "RunResult",
    "ScanConfig",
    "ScanError",
    "ScopeViolation",
    "ScoreReport",
    "SessionContext",
    "SessionSpec",
    "SpecParseError",
    "TestCase",
    "Thresholds",
    "TraceLog",
    "TriageLabel",
    "Verdict",
    "VerdictStatus",
    "body_distance",
    "build_graph",
    "compute_metrics",
    "confirm",
    "decode_token",
    "establish_context",
    "export_traces",
    "finding_from_verdict",
    "forge_token",
    "load_config",
    "load_ground_truth",
    "load_rules",
    "mint_canary",
    "parse_api_spec",
    "render_score_report",
    "run",
    "run_scan",
    "score_findings",
    "write_run_artifacts",
]
