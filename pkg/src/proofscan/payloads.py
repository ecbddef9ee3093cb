"""Payload ladders and pluggable candidate backends.

Ladders are data, not code: an ordered escalation per family (detection
pair, then content proof, then timing where it applies) loaded from the
packaged JSON table. A backend may contribute extra content-stage
candidates; it can never touch signals or verdicts, so a broken or
adversarial backend costs requests, not correctness.
"""

from __future__ import annotations

import json
import random
import string
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FuturesTimeout
from dataclasses import dataclass, field
from importlib import resources
from typing import Protocol, runtime_checkable

from .evidence import MarkerSpec
from .inventory import Endpoint, ParamSpec


@dataclass(frozen=True)
class DetectPair:
    true_payload: str
    false_payload: str


@dataclass(frozen=True)
class ContentCandidate:
    payload: str
    marker: MarkerSpec
    note: str = ""
    source: str = "ladder"


@dataclass(frozen=True)
class TimingCandidate:
    payload: str
    sleep_ms: int


@dataclass(frozen=True)
class FamilyLadder:
    family: str
    param_kinds: tuple[str, ...]
    locations: tuple[str, ...]
    detect_pairs: tuple[dict, ...] = ()
    reflect_probe: str | None = None
    content: tuple[dict, ...] = ()
    timing: tuple[dict, ...] = ()
    mutations: tuple[dict, ...] = ()


_CACHED: dict[str, FamilyLadder] | None = None


def load_ladders() -> dict[str, FamilyLadder]:
    global _CACHED
    if _CACHED is None:
        raw = json.loads(
            resources.files("proofscan.data").joinpath("payload_ladders.json").read_text()
        )
        out = {}
        for fam, entry in raw["families"].items():
            out[fam] = FamilyLadder(
                family=fam,
                param_kinds=tuple(entry.get("param_kinds", ())),
                locations=tuple(entry.get("locations", ())),
                detect_pairs=tuple(entry.get("detect_pairs", ())),
                reflect_probe=entry.get("reflect_probe"),
                content=tuple(entry.get("content", ())),
                timing=tuple(entry.get("timing", ())),
                mutations=tuple(entry.get("mutations", ())),
            )
        _CACHED = out
    return _CACHED


def _fill(template: str, subs: dict[str, str]) -> str:
    # Plain replace, not str.format: payloads contain literal braces.
    for key, value in subs.items():
        template = template.replace(key, value)
    return template


@dataclass
class LadderContext:
    """Concrete substitutions for one (endpoint, parameter) ladder walk."""

    base_value: str
    marker_nonce: str
    prefix: str
    suffix: str
    sentinel_path: str | None = None
    sentinel_marker: str | None = None

    def subs(self) -> dict[str, str]:
        return {
            "{BASE}": self.base_value,
            "{M}": self.marker_nonce,
            "{P}": self.prefix,
            "{Q}": self.suffix,
        }


def expand_detect_pairs(ladder: FamilyLadder, ctx: LadderContext) -> list[DetectPair]:
    subs = ctx.subs()
    return [
        DetectPair(_fill(p["true"], subs), _fill(p["false"], subs))
        for p in ladder.detect_pairs
    ]


def expand_reflect_probe(ladder: FamilyLadder, ctx: LadderContext) -> str | None:
    if ladder.reflect_probe is None:
        return None
    return _fill(ladder.reflect_probe, ctx.subs())


def expand_content(ladder: FamilyLadder, ctx: LadderContext) -> list[ContentCandidate]:
    subs = ctx.subs()
    out: list[ContentCandidate] = []
    probe = expand_reflect_probe(ladder, ctx)
    reflection = (probe,) if probe else ()
    for entry in ladder.content:
        payload_t = entry["payload"]
        if "{S}" in payload_t or "{SMARK}" in entry.get("marker", ""):
            if not ctx.sentinel_path:
                continue
            local = dict(subs)
            local["{S}"] = ctx.sentinel_path
            payload = _fill(payload_t, local)
            marker_text = _fill(entry["marker"], {**local, "{SMARK}": ctx.sentinel_marker or ""})
        else:
            payload = _fill(payload_t, subs)
            marker_text = _fill(entry["marker"], subs)
        absent = entry.get("absent_literal")
        out.append(
            ContentCandidate(
                payload=payload,
                marker=MarkerSpec(
                    expected=marker_text,
                    quote_guard=bool(entry.get("quote_guard")),
                    html_only=bool(entry.get("html_only")),
                    absent_literal=_fill(absent, subs) if absent else None,
                    reflection_markers=reflection,
                ),
            )
        )
    return out


def expand_timing(ladder: FamilyLadder, ctx: LadderContext) -> list[TimingCandidate]:
    subs = ctx.subs()
    return [TimingCandidate(_fill(t["payload"], subs), int(t["sleep_ms"])) for t in ladder.timing]


@runtime_checkable
class PayloadBackend(Protocol):
    """Optional source of extra content-stage candidates.

    Implementations see the attack surface but never the evidence; whatever
    they return is executed and judged by the same deterministic rules as
    ladder payloads.
    """

    name: str

    def generate(
        self, family: str, endpoint: Endpoint, param: ParamSpec, base_value: str
    ) -> list[ContentCandidate]: ...


class BuiltinLadderBackend:
    """Default backend: the ladder table is already the candidate source, so
    this contributes nothing extra."""

    name = "builtin"

    def generate(self, family, endpoint, param, base_value):
        return []


class RandomNoiseBackend:
    """Adversarial stand-in used to prove backend independence.

    Emits junk payloads whose markers are fresh random nonces; a correct
    target never echoes them, so candidates from this backend add traffic
    and must change zero verdicts.
    """

    name = "random_noise"

    def __init__(self, seed: int = 1337, per_param: int = 3):
        self._rng = random.Random(seed)
        self.per_param = per_param

    def _junk(self, n: int) -> str:
        return "".join(self._rng.choice(string.ascii_letters + string.digits) for _ in range(n))

    def generate(self, family, endpoint, param, base_value):
        out = []
        for _ in range(self.per_param):
            out.append(
                ContentCandidate(
                    payload=self._junk(12),
                    marker=MarkerSpec(expected="zz" + self._junk(24)),
                    note="noise",
                    source="random_noise",
                )
            )
        return out


@dataclass
class BackendResult:
    candidates: list[ContentCandidate] = field(default_factory=list)
    degraded: str | None = None  # reason the backend was bypassed


def generate_candidates(
    backend: PayloadBackend | None,
    family: str,
    endpoint: Endpoint,
    param: ParamSpec,
    base_value: str,
    timeout_s: float = 5.0,
) -> BackendResult:
    """Ask the backend for extras, guarding against hangs and exceptions.

    Failure degrades to ladder-only candidates with a diagnostic note; it
    never aborts the case.
    """
    if backend is None:
        return BackendResult()
    # No `with` block: shutdown must not join a hung worker thread.
    pool = ThreadPoolExecutor(max_workers=1)
    future = pool.submit(backend.generate, family, endpoint, param, base_value)
    try:
        cands = future.result(timeout=timeout_s)
    except FuturesTimeout:
        pool.shutdown(wait=False, cancel_futures=True)
        return BackendResult(degraded=f"backend {backend.name!r} timed out after {timeout_s}s")
    except Exception as exc:
        pool.shutdown(wait=False, cancel_futures=True)
        return BackendResult(degraded=f"backend {backend.name!r} raised {type(exc).__name__}: {exc}")
    pool.shutdown(wait=False)
    good = [c for c in cands or [] if isinstance(c, ContentCandidate)]
    dropped = len(cands or []) - len(good)
    note = f"backend {backend.name!r} returned {dropped} malformed candidates" if dropped else None
    return BackendResult(candidates=good, degraded=note)
