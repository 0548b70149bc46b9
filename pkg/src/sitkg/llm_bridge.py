"""Few-shot chat prompting over serialized situational graphs.

Transports are swappable: :class:`HttpTransport` talks to an
OpenAI-compatible chat-completion endpoint, :class:`MockTransport` replays a
script and never opens a socket.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

from .kg_core import DEFAULT_VOCABULARY, NodeKind, RecordingComponent, RelationKind, Vocabulary
from .evaluation import NextQuery, ParentQuery

logger = logging.getLogger(__name__)

PLACEHOLDER = "PARENT"
NEXT_PLACEHOLDER = "NEXT"

PARENT_HEADER = (
    "You are a knowledgeable assistant. Given a set of triples representing sub-actions, "
    "predict the most likely parent action."
)
PARENT_INTRO = (
    "Below are examples of parent actions and their corresponding sequences of sub-actions. "
    "Each triple represents a head, relation, and tail from the knowledge graph describing the parent action."
)
PARENT_QUESTION = "What is the parent action for the following graph?"

NEXT_HEADER = (
    "You are a knowledgeable assistant. Given a sub-action and the objects it involves, "
    "predict the most likely next sub-action."
)
NEXT_INTRO = (
    "Below are examples of sub-actions, the objects they involve and the sub-action that followed. "
    "Each triple represents a head, relation, and tail from the knowledge graph."
)
NEXT_QUESTION = "What is the next sub-action for the following graph?"

RELATION_ORDER = (RelationKind.HAS_ACTOR, RelationKind.HAS_ELEMENT, RelationKind.HAS_NEXT, RelationKind.HAS_OBJECT)


def closing_constraint(labels: Sequence[str], noun: str = "parent actions") -> str:
    return f"Answer nothing but one of the {len(labels)} possible {noun}: {', '.join(labels)}."


class TransportError(RuntimeError):
    pass


class RateLimited(TransportError):
    pass


class Timeout(TransportError):
    pass


class InsufficientExamples(ValueError):
    pass


class UnparseableAnswer(ValueError):
    pass


@dataclass
class PromptConfig:
    examples_per_class: int = 1
    max_triples_per_example: int = 0  # 0 keeps every triple
    endpoint: str = ""
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    timeout: float = 60.0
    max_in_flight: int = 4
    retries: int = 3
    backoff: float = 1.0

    def __post_init__(self) -> None:
        if self.examples_per_class < 1:
            raise ValueError("examples_per_class must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not self.endpoint:
            self.endpoint = os.environ.get("SITKG_LLM_ENDPOINT", "")


@dataclass
class ChatExchange:
    request: list[dict[str, str]]
    response: str = ""
    usage: dict[str, Any] = field(default_factory=dict)


# --- serialization ------------------------------------------------------------


def serialize_component(component: RecordingComponent, mask: bool = True) -> list[str]:
    """One ``head, relation, tail`` line per triple, grouped by relation in
    a fixed order and kept in chain order within a relation."""
    nodes = component.node_map()

    def name(nid: str) -> str:
        node = nodes[nid]
        return PLACEHOLDER if mask and node.kind is NodeKind.PARENT_ACTION else node.label

    lines = []
    for rel in RELATION_ORDER:
        for h, _, t in component.relation_triples(rel):
            lines.append(f"{name(h)}, {rel.value}, {name(t)}")
    return lines


def _truncate(lines: list[str], limit: int) -> list[str]:
    if limit and len(lines) > limit:
        return lines[:limit] + [f"... ({len(lines) - limit} more triples omitted)"]
    return lines


def select_examples(
    train_components: Sequence[RecordingComponent], cfg: PromptConfig, vocab: Vocabulary = DEFAULT_VOCABULARY
) -> dict[str, list[RecordingComponent]]:
    """First ``examples_per_class`` training recordings of every class, by recording key."""
    by_class: dict[str, list[RecordingComponent]] = {p: [] for p in vocab.parent_actions}
    for comp in sorted(train_components, key=lambda c: c.key):
        label = comp.parent.label
        if label in by_class and len(by_class[label]) < cfg.examples_per_class:
            by_class[label].append(comp)
    for label, comps in by_class.items():
        if len(comps) < cfg.examples_per_class:
            raise InsufficientExamples(label)
    return by_class


def build_parent_prompt(
    train_examples: dict[str, list[RecordingComponent]] | Sequence[RecordingComponent],
    test_component: RecordingComponent,
    cfg: PromptConfig,
    vocab: Vocabulary = DEFAULT_VOCABULARY,
) -> list[dict[str, str]]:
    if not isinstance(train_examples, dict):
        train_examples = select_examples(train_examples, cfg, vocab)
    blocks = []
    n = 0
    for label in sorted(train_examples):
        for comp in train_examples[label]:
            n += 1
            lines = _truncate(serialize_component(comp, mask=False), cfg.max_triples_per_example)
            blocks.append(f"Example {n}:\n" + "\n".join(lines) + f"\nParent action: {label}")
    test_lines = serialize_component(test_component, mask=True)
    user = "\n\n".join(
        [PARENT_INTRO, "\n\n".join(blocks), PARENT_QUESTION, "\n".join(test_lines), closing_constraint(vocab.parent_actions)]
    )
    return [{"role": "system", "content": PARENT_HEADER}, {"role": "user", "content": user}]


def next_examples(
    train_components: Sequence[RecordingComponent], cfg: PromptConfig, vocab: Vocabulary = DEFAULT_VOCABULARY
) -> list[tuple[str, tuple[str, ...], str]]:
    """First ``examples_per_class`` training transitions per successor label.

    Labels never seen as a successor in training get no example.
    """
    out: dict[str, list[tuple[str, tuple[str, ...], str]]] = {s: [] for s in vocab.sub_actions}
    for comp in sorted(train_components, key=lambda c: c.key):
        nodes, objs = comp.node_map(), comp.objects_of()
        for a, _, b in comp.relation_triples(RelationKind.HAS_NEXT):
            gold = nodes[b].label
            if gold in out and len(out[gold]) < cfg.examples_per_class:
                out[gold].append((nodes[a].label, tuple(sorted(objs.get(a, ()))), gold))
    return [ex for label in sorted(out) for ex in out[label]]


def _next_lines(current: str, objects: Sequence[str]) -> list[str]:
    return [f"{current}, has_object, {o}" for o in objects] + [f"{current}, has_next, {NEXT_PLACEHOLDER}"]


def build_next_prompt(
    examples: Sequence[tuple[str, tuple[str, ...], str]],
    current: str,
    objects: Sequence[str],
    vocab: Vocabulary = DEFAULT_VOCABULARY,
) -> list[dict[str, str]]:
    blocks = [
        f"Example {i}:\n" + "\n".join(_next_lines(cur, objs)) + f"\nNext sub-action: {gold}"
        for i, (cur, objs, gold) in enumerate(examples, 1)
    ]
    user = "\n\n".join(
        [NEXT_INTRO, "\n\n".join(blocks), NEXT_QUESTION, "\n".join(_next_lines(current, objects)),
         closing_constraint(vocab.sub_actions, "sub-actions")]
    )
    return [{"role": "system", "content": NEXT_HEADER}, {"role": "user", "content": user}]


# --- transport ----------------------------------------------------------------


class Transport(Protocol):
    def send(self, payload: dict[str, Any], timeout: float) -> dict[str, Any]: ...


class HttpTransport:
    def __init__(self, endpoint: str, api_key: str | None = None):
        if not endpoint:
            raise TransportError("no endpoint configured (set SITKG_LLM_ENDPOINT)")
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get("SITKG_LLM_KEY", "")

    def send(self, payload: dict[str, Any], timeout: float) -> dict[str, Any]:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=timeout)
        except httpx.TimeoutException as exc:
            raise Timeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited(resp.text[:200])
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()


class MockTransport:
    """Replays scripted replies in order.

    A script entry is either the assistant text or a mapping with ``error``
    set to ``transport``, ``rate_limit`` or ``timeout``. When the script
    runs out the last entry repeats; ``by_query`` entries, keyed by query
    id, take precedence when the payload carries a ``query_id``.
    """

    ERRORS = {"transport": TransportError, "rate_limit": RateLimited, "timeout": Timeout}

    def __init__(self, script: Sequence[Any] = (), by_query: dict[str, Any] | None = None):
        self.script = list(script)
        self.by_query = dict(by_query or {})
        self.calls: list[dict[str, Any]] = []
        self._lock = threading.Lock()
        self._pos = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "MockTransport":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(data, list):
            return cls(data)
        return cls(data.get("script", []), data.get("by_query"))

    def send(self, payload: dict[str, Any], timeout: float) -> dict[str, Any]:
        with self._lock:
            self.calls.append(payload)
            qid = payload.get("query_id")
            if qid is not None and qid in self.by_query:
                entry = self.by_query[qid]
            elif self.script:
                entry = self.script[min(self._pos, len(self.script) - 1)]
                self._pos += 1
            else:
                raise TransportError("mock script is empty")
        if isinstance(entry, dict) and "error" in entry:
            raise self.ERRORS[entry["error"]](entry.get("message", "scripted failure"))
        text = entry if isinstance(entry, str) else entry.get("content", "")
        return {
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0},
        }


class _Backoff:
    """Shared pause after a rate-limit response."""

    def __init__(self):
        self._until = 0.0
        self._lock = threading.Lock()

    def wait(self, sleep: Callable[[float], None]) -> None:
        delay = self._until - time.monotonic()
        if delay > 0:
            sleep(delay)

    def push(self, seconds: float) -> None:
        with self._lock:
            self._until = max(self._until, time.monotonic() + seconds)


def chat_complete(
    messages: list[dict[str, str]],
    transport: Transport,
    cfg: PromptConfig,
    sleep: Callable[[float], None] = time.sleep,
    query_id: str | None = None,
    backoff: _Backoff | None = None,
) -> ChatExchange:
    """Send one chat request, retrying transport errors and rate limits.

    Up to ``cfg.retries`` retries with exponential backoff; a timeout is
    raised at once.
    """
    if not messages:
        raise ValueError("empty request")
    payload: dict[str, Any] = {"model": cfg.model, "messages": messages, "temperature": cfg.temperature}
    if query_id is not None and isinstance(transport, MockTransport):
        payload["query_id"] = query_id
    attempt = 0
    while True:
        if backoff is not None:
            backoff.wait(sleep)
        try:
            body = transport.send(payload, cfg.timeout)
            break
        except Timeout:
            raise
        except TransportError as exc:
            if attempt >= cfg.retries:
                raise
            delay = cfg.backoff * 2**attempt
            attempt += 1
            logger.warning("retry %d after %s: %s", attempt, type(exc).__name__, exc)
            if isinstance(exc, RateLimited) and backoff is not None:
                backoff.push(delay)
            sleep(delay)
    try:
        text = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed response: {exc}") from exc
    return ChatExchange(messages, text or "", dict(body.get("usage") or {}))


# --- answers ------------------------------------------------------------------


def _tokens(text: str) -> list[str]:
    return re.sub(r"[^a-z0-9]+", " ", text.lower()).split()


def _contains(tokens: list[str], sub: list[str]) -> int:
    """Start index of ``sub`` inside ``tokens``, or -1."""
    for i in range(len(tokens) - len(sub) + 1):
        if tokens[i : i + len(sub)] == sub:
            return i
    return -1


def parse_answer(text: str, labels: Sequence[str], fallback_order: Sequence[str] | None = None) -> list[str]:
    """Rank ``labels`` with the answered label first.

    Case, punctuation and the choice of underscore, space or hyphen between
    words are ignored. An exact match wins; otherwise the longest label
    found inside the answer (earliest on ties). The remaining labels follow
    ``fallback_order``.
    """
    tokens = _tokens(text)
    match = None
    for lab in labels:
        if _tokens(lab) == tokens:
            match = lab
            break
    else:
        found = [(lab, _contains(tokens, _tokens(lab))) for lab in labels]
        found = [(lab, pos) for lab, pos in found if pos >= 0]
        if found:
            match = max(found, key=lambda f: (len(_tokens(f[0])), -f[1]))[0]
    if match is None:
        raise UnparseableAnswer(text)
    order = list(fallback_order) if fallback_order is not None else list(labels)
    rest = [lab for lab in order if lab != match and lab in labels]
    rest += [lab for lab in labels if lab != match and lab not in rest]
    return [match] + rest


@dataclass
class LLMPredictor:
    """Parent and next-action ranking through a chat model.

    Unparseable answers are logged, counted in ``failures`` and produce an
    empty ranking, so the query scores as a miss at every k.
    """

    transport: Transport
    train_components: Sequence[RecordingComponent]
    cfg: PromptConfig = field(default_factory=PromptConfig)
    vocab: Vocabulary = DEFAULT_VOCABULARY
    parent_order: Sequence[str] | None = None
    next_order: Sequence[str] | None = None
    sleep: Callable[[float], None] = time.sleep
    name: str = "llm"
    failures: list[str] = field(default_factory=list)
    exchanges: dict[str, ChatExchange] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._lock = threading.Lock()
        self._backoff = _Backoff()
        self._parent_examples: dict | None = None
        self._next_examples: list | None = None

    def _ask(self, qid: str, messages, labels, order) -> list[str]:
        ex = chat_complete(messages, self.transport, self.cfg, self.sleep, qid, self._backoff)
        with self._lock:
            self.exchanges[qid] = ex
        try:
            return parse_answer(ex.response, labels, order)
        except UnparseableAnswer:
            logger.warning("unparseable answer for %s: %r", qid, ex.response[:80])
            with self._lock:
                self.failures.append(qid)
            return []

    def rank_parent(self, q: ParentQuery) -> list[str]:
        if self._parent_examples is None:
            self._parent_examples = select_examples(self.train_components, self.cfg, self.vocab)
        messages = build_parent_prompt(self._parent_examples, q.component, self.cfg, self.vocab)
        return self._ask(q.qid, messages, self.vocab.parent_actions, self.parent_order)

    def rank_next(self, q: NextQuery) -> list[str]:
        if self._next_examples is None:
            self._next_examples = next_examples(self.train_components, self.cfg, self.vocab)
        messages = build_next_prompt(self._next_examples, q.current, q.objects, self.vocab)
        return self._ask(q.qid, messages, self.vocab.sub_actions, self.next_order)


def run_queries(predictor: LLMPredictor, queries: Sequence[ParentQuery | NextQuery]) -> dict[str, list[str]]:
    """Rankings keyed by query id, with up to ``cfg.max_in_flight`` concurrent requests."""

    def one(q):
        return q.qid, (predictor.rank_parent(q) if isinstance(q, ParentQuery) else predictor.rank_next(q))

    with ThreadPoolExecutor(max_workers=max(1, predictor.cfg.max_in_flight)) as pool:
        return dict(pool.map(one, queries))
