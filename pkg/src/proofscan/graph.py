"""Agent graph: one node per vulnerability family, run in parallel.

Every family node has the same five-stage shape: recon (shared), plan,
execute, collect, confirm. Plan may consult the payload backend; execute,
collect, and confirm are deterministic. The graph validates its family
names and backend before any traffic is sent.

Families that assert state invariants over snapshots run in a serial
phase after the parallel phase drains, so no other agent's traffic can
move the measured state inside a snapshot window.
"""

from __future__ import annotations

import logging
import random
import secrets
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .callback import CallbackListener
from .config import ScanConfig
from .confirm import load_rules
from .errors import (
    CanarySeedError,
    ConfigError,
    CredentialError,
    ScanError,
    TokenNotHonoredError,
)
from .evidence import NormalizationProfile, ShellProfile
from .executor import RunEnv, execute_case
from .findings import Finding, FindingSet, finding_from_verdict
from .inventory import EndpointInventory, apply_mutation_overrides, parse_api_spec
from .payloads import BuiltinLadderBackend, PayloadBackend
from .plans import (
    TestCase,
    apply_budgets,
    plan_authn_bypass,
    plan_bac,
    plan_business_logic,
    plan_cors,
    plan_idor,
    plan_injection,
    plan_race,
    plan_ssrf,
)
from .report import write_run_artifacts
from .sessions import CanaryLedger, SessionContext, establish_context, seed_canaries
from .transport import HttpEngine, Redactor, TraceLog

log = logging.getLogger(__name__)

STAGES = ("recon", "plan", "execute", "collect", "confirm")
# Stages whose behavior must be a pure function of their inputs.
DETERMINISTIC_STAGES = ("execute", "collect", "confirm")


@dataclass(frozen=True)
class FamilyNode:
    """One family agent in the graph."""

    family: str
    needs: frozenset[str] = frozenset()

    @property
    def stages(self) -> tuple[str, ...]:
        return STAGES


def _injection_planner(family: str):
    def planner(inventory, contexts, ledger, config):
        return plan_injection(family, inventory, contexts, config)

    return planner


_PLANNERS = {
    "idor": lambda inv, ctxs, ledger, cfg: plan_idor(inv, ctxs, ledger, cfg),
    "authn_bypass": lambda inv, ctxs, ledger, cfg: plan_authn_bypass(inv, ctxs, ledger, cfg),
    "broken_access_control": lambda inv, ctxs, ledger, cfg: plan_bac(inv, ctxs, cfg),
    "sqli": _injection_planner("sqli"),
    "ssti": _injection_planner("ssti"),
    "csti": _injection_planner("csti"),
    "cmdi": _injection_planner("cmdi"),
    "path_traversal": _injection_planner("path_traversal"),
    "ldap_injection": _injection_planner("ldap_injection"),
    "xss": _injection_planner("xss"),
    "html_injection": _injection_planner("html_injection"),
    "business_logic": lambda inv, ctxs, ledger, cfg: plan_business_logic(inv, ctxs, cfg),
    "race_condition": lambda inv, ctxs, ledger, cfg: plan_race(inv, ctxs, cfg),
    "ssrf": lambda inv, ctxs, ledger, cfg: plan_ssrf(inv, ctxs, cfg),
    "cors": lambda inv, ctxs, ledger, cfg: plan_cors(inv, ctxs, cfg),
}

_NEEDS = {
    "idor": frozenset({"two_users", "canaries"}),
    "authn_bypass": frozenset({"user_token"}),
    "broken_access_control": frozenset({"user_token", "admin"}),
    "business_logic": frozenset({"user_token", "state_probes"}),
    "race_condition": frozenset({"user_token", "state_probes"}),
    "ssrf": frozenset({"callback"}),
}

FAMILY_REGISTRY: dict[str, FamilyNode] = {
    name: FamilyNode(family=name, needs=_NEEDS.get(name, frozenset()))
    for name in _PLANNERS
}


@dataclass
class AgentGraph:
    nodes: list[FamilyNode]
    backend: PayloadBackend
    config: ScanConfig
    inventory: EndpointInventory

    def validate(self) -> None:
        names = [n.family for n in self.nodes]
        if len(names) != len(set(names)):
            raise ConfigError("graph has duplicate family nodes")
        unknown = [n for n in names if n not in FAMILY_REGISTRY]
        if unknown:
            raise ConfigError(f"unknown families: {unknown}; known: {sorted(FAMILY_REGISTRY)}")
        if not isinstance(self.backend, PayloadBackend):
            raise ConfigError("backend does not implement the PayloadBackend protocol")
        for node in self.nodes:
            if node.stages != STAGES:
                raise ConfigError(f"family {node.family} has a malformed stage list")


def build_graph(
    config: ScanConfig,
    inventory: EndpointInventory,
    backend: PayloadBackend | None = None,
) -> AgentGraph:
    """Assemble the graph; family selection defaults to the full registry."""
    families = config.families if config.families is not None else sorted(FAMILY_REGISTRY)
    nodes = []
    for name in families:
        if name not in FAMILY_REGISTRY:
            raise ConfigError(f"unknown family {name!r}; known: {sorted(FAMILY_REGISTRY)}")
        nodes.append(FAMILY_REGISTRY[name])
    graph = AgentGraph(
        nodes=nodes,
        backend=backend if backend is not None else BuiltinLadderBackend(),
        config=config,
        inventory=inventory,
    )
    graph.validate()
    return graph


@dataclass
class FamilyOutcome:
    family: str
    cases: int = 0
    executed: int = 0
    confirmed: int = 0
    inconclusive: int = 0
    not_confirmed: int = 0
    dropped_by_budget: int = 0
    findings: list[Finding] = field(default_factory=list)
    note: str = ""


@dataclass
class RunResult:
    finding_set: FindingSet
    outcomes: dict[str, FamilyOutcome]
    out_dir: Path
    artifact_paths: dict[str, Path]


def _unmet_needs(node: FamilyNode, env: RunEnv) -> list[str]:
    unmet = []
    users = [c for c in env.contexts.values() if c.verified and c.role == "user"]
    if "two_users" in node.needs and len(users) < 2:
        unmet.append("needs two verified user sessions")
    if "user_token" in node.needs and not any(c.token for c in users):
        unmet.append("needs an authenticated user token")
    if "admin" in node.needs and not any(
        c.role == "admin" and c.verified for c in env.contexts.values()
    ):
        unmet.append("needs an admin session")
    if "canaries" in node.needs and not env.ledger.entries:
        unmet.append("needs seeded canaries")
    if "state_probes" in node.needs and not env.config.state_probes:
        unmet.append("needs configured state probes")
    if "callback" in node.needs and env.callback is None:
        unmet.append("needs the out-of-band callback listener")
    return unmet


def _run_family(node: FamilyNode, env: RunEnv) -> FamilyOutcome:
    outcome = FamilyOutcome(family=node.family)
    unmet = _unmet_needs(node, env)
    if unmet:
        outcome.note = "prerequisite failure: " + "; ".join(unmet)
        env.note(f"{node.family}: {outcome.note}")
        return outcome

    planner = _PLANNERS[node.family]
    cases: list[TestCase] = planner(env.inventory, env.contexts, env.ledger, env.config)
    cases, dropped = apply_budgets(
        cases, env.config.budgets.per_endpoint, env.config.budgets.per_family
    )
    outcome.cases = len(cases)
    outcome.dropped_by_budget = dropped
    if dropped:
        env.note(f"{node.family}: budget dropped {dropped} planned cases")

    confirmed_keys: set[tuple[str, str]] = set()
    for case in cases:
        if (case.endpoint, case.parameter) in confirmed_keys:
            continue  # already proven at this surface; spend budget elsewhere
        results = execute_case(case, env)
        outcome.executed += 1
        for bundle, verdict in results:
            if verdict.confirmed:
                outcome.confirmed += 1
                outcome.findings.append(finding_from_verdict(bundle, verdict))
                confirmed_keys.add((case.endpoint, case.parameter))
            elif verdict.status.value == "inconclusive":
                outcome.inconclusive += 1
            else:
                outcome.not_confirmed += 1
    return outcome


def run(
    graph: AgentGraph,
    out_dir: str | Path | None = None,
    bundle_sink: list | None = None,
) -> RunResult:
    """Execute the whole scan: sessions, recon, family agents, artifacts."""
    config = graph.config
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc)
    t0 = time.monotonic()

    redactor = Redactor(config.secret_values())
    trace_sink = (out / "trace.jsonl").open("w")
    trace = TraceLog(redactor=redactor, sink=trace_sink)
    engine = HttpEngine(
        config.base_url,
        timeout_s=config.timeout_s,
        retries=config.transport_retries,
        trace=trace,
        allow_origins=config.scope_extra,
        exclude_paths=config.scope_exclude_paths,
    )
    trace.append(
        {
            "type": "meta",
            "target": config.base_url,
            "started_at": started.isoformat(),
            "rule_version": load_rules().version,
            "families": [n.family for n in graph.nodes],
        }
    )

    diagnostics: list[str] = []
    try:
        # Reachability gate: a dead target is a fatal error, not a clean scan.
        probe = engine.execute("GET", "/", role="recon", case_id="recon:reachability")
        if probe.status == 0:
            raise ScanError(f"target {config.base_url} unreachable: {probe.error}")

        contexts: dict[str, SessionContext] = {}
        specs = list(config.sessions)
        if not any(s.role == "anonymous" for s in specs):
            from .config import SessionSpec

            specs.append(SessionSpec(name="anonymous", role="anonymous"))
        for spec in specs:
            try:
                contexts[spec.name] = establish_context(engine, spec, config.login, redactor)
            except (CredentialError, TokenNotHonoredError) as exc:
                diagnostics.append(f"session {spec.name!r} unavailable: {exc}")
                log.warning("session %s failed: %s", spec.name, exc)

        ledger = CanaryLedger()
        for ctx in contexts.values():
            if ctx.is_anonymous or not ctx.verified:
                continue
            try:
                seed_canaries(engine, ctx, graph.inventory, config.canaries_per_resource, ledger)
            except CanarySeedError as exc:
                diagnostics.append(str(exc))

        shell_profile = None
        norm_values = tuple(
            v for v in ([c.token for c in contexts.values() if c.token]) if v
        ) + tuple(ledger.entries)
        normalization = NormalizationProfile(volatile_values=norm_values)
        miss = engine.execute(
            "GET", f"/__proofscan_missing_{secrets.token_hex(8)}", role="recon",
            case_id="recon:shell_profile",
        )
        if miss.status > 0:
            shell_profile = ShellProfile(
                normalized_text=normalization.normalize(miss), status=miss.status
            )
        else:
            diagnostics.append("shell profile unavailable: probe failed at transport")

        listener = None
        if config.callback is not None:
            listener = CallbackListener(config.callback.host, config.callback.port)
            listener.start()

        env = RunEnv(
            engine=engine,
            config=config,
            inventory=graph.inventory,
            contexts=contexts,
            ledger=ledger,
            normalization=normalization,
            shell_profile=shell_profile,
            callback=listener,
            backend=graph.backend,
            rng=random.Random(config.rng_seed),
            diagnostics=diagnostics,
            bundle_sink=bundle_sink,
        )

        outcomes: dict[str, FamilyOutcome] = {}
        # Families that measure cross-request state invariants (the
        # "state_probes" need) run alone after everything else: a concurrent
        # agent placing real orders moves the tracked balances inside a
        # snapshot window and fakes a conservation violation.
        loud = [n for n in graph.nodes if "state_probes" not in n.needs]
        quiet = [n for n in graph.nodes if "state_probes" in n.needs]
        try:
            with ThreadPoolExecutor(max_workers=max(1, config.parallel_families)) as pool:
                futures = {pool.submit(_run_family, node, env): node for node in loud}
                for future, node in futures.items():
                    outcomes[node.family] = future.result()
            for node in quiet:
                outcomes[node.family] = _run_family(node, env)
        finally:
            if listener is not None:
                listener.stop()

        findings = [f for node in graph.nodes for f in outcomes[node.family].findings]
        fs = FindingSet(
            target=config.base_url,
            started_at=started.isoformat(),
            duration_s=time.monotonic() - t0,
            rule_version=load_rules().version,
            findings=findings,
            diagnostics=diagnostics,
            family_stats={
                name: {
                    "cases": o.cases,
                    "executed": o.executed,
                    "confirmed": o.confirmed,
                    "inconclusive": o.inconclusive,
                    "not_confirmed": o.not_confirmed,
                    "dropped_by_budget": o.dropped_by_budget,
                    "note": o.note,
                }
                for name, o in outcomes.items()
            },
        )
        paths = write_run_artifacts(out, fs)
        paths["trace"] = out / "trace.jsonl"
        return RunResult(finding_set=fs, outcomes=outcomes, out_dir=out, artifact_paths=paths)
    finally:
        trace_sink.close()


def run_scan(
    config: ScanConfig,
    backend: PayloadBackend | None = None,
    out_dir: str | Path | None = None,
    bundle_sink: list | None = None,
) -> RunResult:
    """Convenience wrapper: fetch the API description, build, and run."""
    inventory = load_inventory(config)
    graph = build_graph(config, inventory, backend)
    return run(graph, out_dir, bundle_sink=bundle_sink)


def load_inventory(config: ScanConfig) -> EndpointInventory:
    """API description from a local file or a path on the target itself."""
    import json as _json

    import requests as _requests

    src = config.api_spec
    if src.startswith("/") and not Path(src).is_file():
        url = config.base_url.rstrip("/") + src
        resp = _requests.get(url, timeout=config.timeout_s)
        resp.raise_for_status()
        doc = resp.json()
    elif src.startswith(("http://", "https://")):
        resp = _requests.get(src, timeout=config.timeout_s)
        resp.raise_for_status()
        doc = resp.json()
    else:
        doc = _json.loads(Path(src).read_text())
    inv = parse_api_spec(doc, base_url=config.base_url)
    if config.mutates_state_overrides:
        inv = apply_mutation_overrides(inv, config.mutates_state_overrides)
    return inv
