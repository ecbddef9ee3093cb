"""Case execution: turn planned TestCases into evidence bundles and verdicts.

Each execution shape (`kind` on the case) collects exactly the evidence its
family's confirmation rule needs. Escalation gating lives here: a
content-proof payload fires only after the detection stage signaled, and
sqli timing samples are collected only after the boolean stage signaled.
Execution stops at the first confirming payload for a case.
"""

from __future__ import annotations

import random
import string
import threading
from dataclasses import dataclass, field
from urllib.parse import quote

from .callback import CallbackListener
from .config import ScanConfig
from .confirm import Verdict, confirm
from .errors import ScanError, ScopeViolation
from .evidence import (
    CaseRef,
    EvidenceBundle,
    NormalizationProfile,
    ShellProfile,
    Snapshot,
    StateAssertion,
    TimingSamples,
    compare_responses,
)
from .inventory import EndpointInventory
from .payloads import (
    LadderContext,
    PayloadBackend,
    expand_content,
    expand_detect_pairs,
    expand_reflect_probe,
    expand_timing,
    generate_candidates,
    load_ladders,
)
from .plans import TestCase, example_body, example_query, fill_path
from .sessions import CanaryLedger, SessionContext
from .tokens import DEFAULT_KID_CANDIDATES, ForgeTechnique, forge_token
from .transport import HttpEngine, ResponseRecord


@dataclass
class RunEnv:
    """Shared run state handed to every case execution."""

    engine: HttpEngine
    config: ScanConfig
    inventory: EndpointInventory
    contexts: dict[str, SessionContext]
    ledger: CanaryLedger
    normalization: NormalizationProfile
    shell_profile: ShellProfile | None = None
    callback: CallbackListener | None = None
    backend: PayloadBackend | None = None
    rng: random.Random = field(default_factory=random.Random)
    diagnostics: list[str] = field(default_factory=list)
    # Optional recorder: every judged (bundle, verdict) pair is appended,
    # regardless of outcome. Used to build replayable evidence corpora.
    bundle_sink: list | None = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def note(self, message: str) -> None:
        with self._lock:
            self.diagnostics.append(message)

    def mint(self, prefix: str = "m", n: int = 6) -> str:
        with self._lock:
            tail = "".join(self.rng.choice(string.ascii_lowercase + string.digits) for _ in range(n))
        return f"{prefix}{tail}"

    def ctx(self, name: str) -> SessionContext | None:
        return self.contexts.get(name)


def take_snapshot(env: RunEnv, case_id: str) -> Snapshot:
    """Read every configured state probe; missing values stay absent so the
    assertion honestly reports unavailable instead of guessing."""
    snap: Snapshot = {}
    for probe in env.config.state_probes:
        ctx = env.ctx(probe.session)
        rec = env.engine.execute(
            "GET", probe.path, ctx=ctx, case_id=case_id, role="snapshot",
        )
        doc = rec.json()
        node = doc
        for part in probe.json_path.split("."):
            if not isinstance(node, dict) or part not in node:
                node = None
                break
            node = node[part]
        if isinstance(node, (int, float)) and not isinstance(node, bool):
            snap[f"{probe.session}:{probe.path}:{probe.json_path}"] = float(node)
    return snap


def _trace_case(env: RunEnv, case: TestCase, stage: str, verdict: Verdict | None,
                bundle: EvidenceBundle | None) -> None:
    event = {
        "type": "case",
        "case_id": case.case_id,
        "family": case.family,
        "endpoint": case.endpoint,
        "parameter": case.parameter,
        "stage": stage,
    }
    if verdict is not None:
        event["verdict"] = verdict.status.value
        event["rule_id"] = verdict.rule_id
        event["signals"] = {k: v for k, v in verdict.signals.items()}
    if bundle is not None:
        event["bundle_digest"] = bundle.digest()
        if bundle.attack:
            event["confirming_digest"] = bundle.attack[-1].request_digest
    env.engine.trace.append(event)


CaseResult = list[tuple[EvidenceBundle, Verdict]]


def execute_case(case: TestCase, env: RunEnv) -> CaseResult:
    """Run one case end to end; returns every (bundle, verdict) it produced."""
    handler = _KINDS.get(case.kind)
    if handler is None:
        raise ScanError(f"no execution shape for case kind {case.kind!r}")
    try:
        return handler(case, env)
    except ScopeViolation as exc:
        env.note(f"{case.case_id}: skipped, {exc}")
        return []


def _judge(env: RunEnv, case: TestCase, stage: str, bundle: EvidenceBundle) -> tuple[EvidenceBundle, Verdict]:
    verdict = confirm(bundle, thresholds=env.config.thresholds)
    _trace_case(env, case, stage, verdict, bundle)
    if env.bundle_sink is not None:
        with env._lock:
            env.bundle_sink.append((bundle, verdict))
    return bundle, verdict


def _exec_idor(case: TestCase, env: RunEnv) -> CaseResult:
    attacker = env.ctx(case.acting_session)
    if attacker is None:
        return []
    method = case.data["method"]
    path = case.data["path"]
    attack = env.engine.execute(
        method, path, ctx=attacker, case_id=case.case_id, role="attack", family=case.family,
    )
    baseline = env.engine.execute(
        method, path, case_id=case.case_id, role="baseline", family=case.family,
        allow_reauth=False,
    )
    bundle = EvidenceBundle(
        case=CaseRef(
            case_id=case.case_id, family=case.family, endpoint=case.endpoint,
            parameter=case.parameter, acting_session=case.acting_session,
            victim_session=case.victim_session, technique="cross_account_read",
        ),
        attack=[attack],
        baseline=baseline,
        victim_nonces=(case.data["nonce"],),
        shell_profile=env.shell_profile,
        normalization=env.normalization,
    )
    return [_judge(env, case, "attack", bundle)]


def _exec_forged_token(case: TestCase, env: RunEnv) -> CaseResult:
    victim = env.ctx(case.victim_session)
    if victim is None or not victim.token:
        return []
    technique = ForgeTechnique(case.data["technique"])
    kid = None
    if technique == ForgeTechnique.KID_PATH_TRAVERSAL:
        kid_path = case.data.get("kid_path")
        kid = next((c for c in DEFAULT_KID_CANDIDATES if c.path == kid_path), None)
    forged = forge_token(
        victim.token, technique, kid_candidate=kid, weak_secret=case.data.get("weak_secret"),
    )
    method, path = case.data["method"], case.data["path"]
    reference = env.engine.execute(
        method, path, ctx=victim, case_id=case.case_id, role="reference", family=case.family,
    )
    baseline = env.engine.execute(
        method, path, case_id=case.case_id, role="baseline", family=case.family,
        allow_reauth=False,
    )
    attack = env.engine.execute(
        method, path, ctx=victim, token_override=forged.value,
        case_id=case.case_id, role="attack", family=case.family,
    )
    bundle = EvidenceBundle(
        case=CaseRef(
            case_id=case.case_id, family=case.family, endpoint=case.endpoint,
            parameter=case.parameter, acting_session=case.acting_session,
            victim_session=case.victim_session, technique=technique.value,
        ),
        attack=[attack],
        baseline=baseline,
        reference=reference,
        normalization=env.normalization,
        shell_profile=env.shell_profile,
        notes=forged.note,
    )
    return [_judge(env, case, technique.value, bundle)]


def _exec_vertical(case: TestCase, env: RunEnv) -> CaseResult:
    user = env.ctx(case.acting_session)
    admin = env.ctx(case.victim_session)
    if user is None or admin is None:
        return []
    method, path = case.data["method"], case.data["path"]
    reference = env.engine.execute(
        method, path, ctx=admin, case_id=case.case_id, role="reference", family=case.family,
    )
    attack = env.engine.execute(
        method, path, ctx=user, case_id=case.case_id, role="attack", family=case.family,
    )
    bundle = EvidenceBundle(
        case=CaseRef(
            case_id=case.case_id, family=case.family, endpoint=case.endpoint,
            parameter=case.parameter, acting_session=case.acting_session,
            victim_session=case.victim_session, technique="vertical_access",
        ),
        attack=[attack],
        reference=reference,
        normalization=env.normalization,
        shell_profile=env.shell_profile,
    )
    return [_judge(env, case, "attack", bundle)]


def _send_with_value(env: RunEnv, case: TestCase, value: str, role: str):
    """Issue the case's request with the target parameter set to value."""
    method = case.data["method"]
    template = case.data["template"]
    location = case.data["location"]
    ctx = env.ctx(case.acting_session)
    ep = env.inventory.find(method, template)
    query = example_query(ep) if ep else {}
    body = example_body(ep) if ep and method in ("POST", "PUT", "PATCH") else None
    path = fill_path(ep) if ep else template
    if location == "query":
        query[case.parameter] = value
    elif location == "body":
        if body is None:
            body = {}
        body[case.parameter] = value
    elif location == "path":
        path = template.replace("{" + case.parameter + "}", quote(str(value), safe="/."))
    return env.engine.execute(
        method, path, ctx=ctx, query=query or None, json_body=body,
        case_id=case.case_id, role=role, family=case.family,
    )


def _exec_injection(case: TestCase, env: RunEnv) -> CaseResult:
    ladder = load_ladders().get(case.family)
    if ladder is None:
        return []
    sentinel = env.config.sentinels[0] if env.config.sentinels else None
    lctx = LadderContext(
        base_value=case.data["base_value"],
        marker_nonce=env.mint("k", 8),
        prefix=env.mint("p", 5),
        suffix=env.mint("q", 5),
        sentinel_path=sentinel.relative_path if sentinel else None,
        sentinel_marker=sentinel.marker if sentinel else None,
    )
    results: CaseResult = []
    thresholds = env.config.thresholds

    # Detection stage: a boolean pair or a reflection probe, depending on
    # the family. Later stages run only if this stage signals.
    escalate = False
    boolean_evidence: tuple[ResponseRecord, ResponseRecord, ResponseRecord] | None = None
    content_baseline: ResponseRecord | None = None

    pairs = expand_detect_pairs(ladder, lctx)
    probe_payload = expand_reflect_probe(ladder, lctx)
    if pairs:
        base_rec = _send_with_value(env, case, lctx.base_value, "baseline")
        content_baseline = base_rec
        for pair in pairs:
            true_rec = _send_with_value(env, case, pair.true_payload, "detect")
            false_rec = _send_with_value(env, case, pair.false_payload, "detect")
            if 0 in (base_rec.status, true_rec.status, false_rec.status):
                continue
            differs = compare_responses(true_rec, false_rec, env.normalization, thresholds.diff_distance)
            anchored = compare_responses(base_rec, true_rec, env.normalization, thresholds.diff_distance)
            if differs.significant and not anchored.significant:
                escalate = True
                boolean_evidence = (true_rec, false_rec, base_rec)
                break
    elif probe_payload is not None:
        probe_rec = _send_with_value(env, case, probe_payload, "detect")
        content_baseline = probe_rec
        escalate = probe_rec.status > 0 and probe_payload in probe_rec.text()
    else:
        # Content-only ladders (path traversal): the content stage is the
        # detection, so run it unconditionally.
        content_baseline = _send_with_value(env, case, lctx.base_value, "baseline")
        escalate = True

    if not escalate:
        _trace_case(env, case, "detect", None, None)
        return results

    # Content-proof stage: ladder candidates first, then backend extras.
    candidates = expand_content(ladder, lctx)
    ep = env.inventory.find(case.data["method"], case.data["template"])
    if ep is not None:
        param = next((p for p in ep.params if p.name == case.parameter), None)
        if param is not None:
            extra = generate_candidates(env.backend, case.family, ep, param, lctx.base_value)
            if extra.degraded:
                env.note(f"{case.case_id}: {extra.degraded}")
            candidates = candidates + extra.candidates

    for cand in candidates:
        attack = _send_with_value(env, case, cand.payload, "attack")
        bundle = EvidenceBundle(
            case=CaseRef(
                case_id=case.case_id, family=case.family, endpoint=case.endpoint,
                parameter=case.parameter, acting_session=case.acting_session,
                technique=f"content:{cand.source}", payload=cand.payload[:120],
            ),
            attack=[attack],
            baseline=content_baseline,
            markers=cand.marker,
            normalization=env.normalization,
            shell_profile=env.shell_profile,
            evidence_kinds=("content",),
        )
        pair = _judge(env, case, "content", bundle)
        results.append(pair)
        if pair[1].confirmed:
            return results

    # Timing stage, sqli only: runs only after the boolean stage signaled.
    if boolean_evidence is not None and ladder.timing:
        true_rec, false_rec, base_rec = boolean_evidence
        t = thresholds
        baseline_ms = [base_rec.elapsed_ms]
        while len(baseline_ms) < t.timing_baseline_min:
            rec = _send_with_value(env, case, lctx.base_value, "timing_baseline")
            if rec.status == 0:
                break
            baseline_ms.append(rec.elapsed_ms)
        for tc in expand_timing(ladder, lctx)[:2]:
            attack_ms = []
            attack_recs = []
            for _ in range(t.timing_attack_min):
                rec = _send_with_value(env, case, tc.payload, "timing_attack")
                if rec.status == 0:
                    break
                attack_ms.append(rec.elapsed_ms)
                attack_recs.append(rec)
            bundle = EvidenceBundle(
                case=CaseRef(
                    case_id=case.case_id, family=case.family, endpoint=case.endpoint,
                    parameter=case.parameter, acting_session=case.acting_session,
                    technique="timing", payload=tc.payload[:120],
                ),
                attack=[true_rec, false_rec] + attack_recs,
                baseline=base_rec,
                timing=TimingSamples(tuple(baseline_ms), tuple(attack_ms)),
                normalization=env.normalization,
                shell_profile=env.shell_profile,
                evidence_kinds=("boolean", "timing"),
            )
            pair = _judge(env, case, "timing", bundle)
            results.append(pair)
            if pair[1].confirmed:
                return results
    return results


def _exec_state_mutation(case: TestCase, env: RunEnv) -> CaseResult:
    actor = env.ctx(case.acting_session)
    if actor is None:
        return []
    method = case.data["method"]
    template = case.data["template"]
    ep = env.inventory.find(method, template)
    if ep is None:
        return []
    body = example_body(ep)
    query = example_query(ep)
    if case.data["location"] == "body":
        body[case.parameter] = case.data["value"]
    else:
        query[case.parameter] = str(case.data["value"])
    pre = take_snapshot(env, case.case_id)
    attack = env.engine.execute(
        method, fill_path(ep), ctx=actor, json_body=body or None, query=query or None,
        case_id=case.case_id, role="attack", family=case.family,
    )
    post = take_snapshot(env, case.case_id)
    bundle = EvidenceBundle(
        case=CaseRef(
            case_id=case.case_id, family=case.family, endpoint=case.endpoint,
            parameter=case.parameter, acting_session=case.acting_session,
            technique=f"mutation:{case.data['value']}",
        ),
        attack=[attack],
        pre_state=pre,
        post_state=post,
        assertions=tuple(StateAssertion.from_dict(a) for a in case.data["assertions"]),
        normalization=env.normalization,
    )
    return [_judge(env, case, "mutation", bundle)]


def _exec_burst(case: TestCase, env: RunEnv) -> CaseResult:
    actor = env.ctx(case.acting_session)
    if actor is None:
        return []
    method = case.data["method"]
    template = case.data["template"]
    ep = env.inventory.find(method, template)
    if ep is None:
        return []
    body = example_body(ep)
    assertions = tuple(StateAssertion.from_dict(a) for a in case.data["assertions"])
    results: CaseResult = []
    attempts = int(case.data.get("attempts", 1))
    for attempt in range(1, attempts + 1):
        pre = take_snapshot(env, case.case_id)
        records = env.engine.burst(
            method, fill_path(ep), env.config.burst_size, ctx=actor,
            json_body=body or None, case_id=case.case_id, family=case.family,
            settle_ms=env.config.settle_ms,
        )
        post = take_snapshot(env, case.case_id)
        bundle = EvidenceBundle(
            case=CaseRef(
                case_id=case.case_id, family=case.family, endpoint=case.endpoint,
                parameter=case.parameter, acting_session=case.acting_session,
                technique=f"burst:{env.config.burst_size}x attempt {attempt}",
            ),
            attack=records,
            pre_state=pre,
            post_state=post,
            assertions=assertions,
            normalization=env.normalization,
        )
        pair = _judge(env, case, f"burst[{attempt}]", bundle)
        results.append(pair)
        if pair[1].confirmed:
            break
    return results


def _exec_oob_fetch(case: TestCase, env: RunEnv) -> CaseResult:
    if env.callback is None:
        return []
    nonce = env.mint("cb", 12)
    url = env.callback.url_for(nonce)
    attack = _send_with_value(env, case, url, "attack")
    heard = env.callback.wait_for(nonce, timeout_s=2.0)
    hits = env.callback.hits()
    bundle = EvidenceBundle(
        case=CaseRef(
            case_id=case.case_id, family=case.family, endpoint=case.endpoint,
            parameter=case.parameter, acting_session=case.acting_session,
            technique="oob_fetch", payload=url,
        ),
        attack=[attack],
        expected_nonce=nonce,
        callback_hits=hits,
        normalization=env.normalization,
        notes="listener heard the nonce" if heard else "no callback within the wait window",
    )
    return [_judge(env, case, "attack", bundle)]


def _exec_origin_probe(case: TestCase, env: RunEnv) -> CaseResult:
    method = case.data["method"]
    template = case.data["template"]
    ep = env.inventory.find(method, template)
    path = fill_path(ep) if ep else template
    origin = case.data["origin"]
    attack = env.engine.execute(
        method, path, headers={"Origin": origin},
        case_id=case.case_id, role="attack", family=case.family,
        allow_reauth=False,
    )
    bundle = EvidenceBundle(
        case=CaseRef(
            case_id=case.case_id, family=case.family, endpoint=case.endpoint,
            parameter=case.parameter, acting_session=case.acting_session,
            technique="origin_probe", payload=origin,
        ),
        attack=[attack],
        origin_sent=origin,
        normalization=env.normalization,
    )
    return [_judge(env, case, "attack", bundle)]


_KINDS = {
    "idor_read": _exec_idor,
    "forged_token": _exec_forged_token,
    "vertical_access": _exec_vertical,
    "injection_ladder": _exec_injection,
    "state_mutation": _exec_state_mutation,
    "burst": _exec_burst,
    "oob_fetch": _exec_oob_fetch,
    "origin_probe": _exec_origin_probe,
}
