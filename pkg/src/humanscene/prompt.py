"""Prompt parsing, human-action inference and the hashed prompt embedding."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .core import HumanAction, Predicate, all_categories, get_scene_type, inverse_predicate, normalize_category

logger = logging.getLogger(__name__)

EMBED_DIM = 512
ARTICLES = {"a", "an", "the", "one", "some"}


class UnknownPredicatePhrase(ValueError):
    pass


class UnresolvedMention(ValueError):
    pass


class LLMClientError(RuntimeError):
    pass


@dataclass(frozen=True)
class Triplet:
    subject: str
    predicate: Predicate
    object: str

    def __post_init__(self):
        if Predicate(self.predicate) is Predicate.NONE:
            raise ValueError("a triplet cannot use the None predicate")
        object.__setattr__(self, "predicate", Predicate(self.predicate))

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate.name.lower(), self.object)


@dataclass
class AnchoredNode:
    category: str
    adjectives: tuple[str, ...] = ()
    feature_code: int | None = None
    action: HumanAction | None = None


@dataclass
class PartialGraph:
    nodes: list[AnchoredNode] = field(default_factory=list)
    edges: list[tuple[int, int, Predicate]] = field(default_factory=list)
    issues: list[Exception] = field(default_factory=list)

    @property
    def categories(self) -> list[str]:
        return [n.category for n in self.nodes]


# ---------------------------------------------------------------- lexicon

def _data_path(name: str):
    return resources.files("humanscene").joinpath("data", name)


@lru_cache(maxsize=None)
def _load_json(name: str) -> dict:
    return json.loads(_data_path(name).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class PredicateLexicon:
    canonical: dict
    phrases: tuple  # (phrase, Predicate), longest first

    @classmethod
    def load(cls, path: str | Path | None = None) -> PredicateLexicon:
        data = json.loads(Path(path).read_text()) if path else _load_json("predicate_lexicon.json")
        canonical = {Predicate[k.upper()]: v for k, v in data["canonical"].items()}
        phrases = [(v, p) for p, v in canonical.items()]
        for key, alts in data.get("aliases", {}).items():
            phrases += [(a, Predicate[key.upper()]) for a in alts]
        phrases.sort(key=lambda pv: (-len(pv[0].split()), -len(pv[0]), pv[0]))
        return cls(canonical, tuple(phrases))

    def phrase(self, p: Predicate) -> str:
        return self.canonical[Predicate(p)]


@lru_cache(maxsize=1)
def default_lexicon() -> PredicateLexicon:
    return PredicateLexicon.load()


# ---------------------------------------------------------------- parsing

def _tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+(?:-[a-z0-9]+)*", text.lower())


def _split_sentences(text: str) -> list[str]:
    parts = re.split(r"[.!?;\n]+|\band\b", text.lower())
    return [p.strip(" ,") for p in parts if p.strip(" ,")]


def _find_predicate(words: list[str], lexicon: PredicateLexicon):
    """Leftmost, then longest, predicate phrase in a token list."""
    best = None
    for phrase, pred in lexicon.phrases:
        pw = phrase.split()
        k = len(pw)
        for i in range(len(words) - k + 1):
            if words[i : i + k] == pw:
                cand = (i, -k, pred)
                if best is None or cand < best:
                    best = cand
                break
    if best is None:
        return None
    i, negk, pred = best
    return i, i - negk, pred


def _resolve_mention(words: list[str], vocab: Sequence[str]):
    """Split a noun phrase into (adjectives, category) by longest category match."""
    words = [w for w in words if w not in ("there", "is", "are")]
    while words and words[0] in ARTICLES:
        words = words[1:]
    if not words:
        return None
    best = None
    for cat in vocab:
        cw = cat.split()
        k = len(cw)
        for i in range(len(words) - k + 1):
            if words[i : i + k] == cw:
                # prefer longest match, then the one closest to the end of the phrase
                key = (k, i)
                if best is None or key > best[0]:
                    best = (key, i, cat)
    if best is None:
        return None
    _, i, cat = best
    adjectives = tuple(w for w in words[:i] if w not in ARTICLES)
    return adjectives, cat


def _count_mentions(words: list[str], vocab: Sequence[str]) -> int:
    """Number of non-overlapping category mentions, longest names first."""
    used = [False] * len(words)
    count = 0
    for cat in sorted(vocab, key=lambda c: -len(c.split())):
        cw = cat.split()
        k = len(cw)
        for i in range(len(words) - k + 1):
            if words[i : i + k] == cw and not any(used[i : i + k]):
                used[i : i + k] = [True] * k
                count += 1
    return count


def _vocab_for(scene_type) -> list[str]:
    if scene_type is None:
        return all_categories()
    st = get_scene_type(scene_type) if isinstance(scene_type, str) else scene_type
    return list(st.vocabulary.categories)


def parse_prompt(text: str, scene_type=None, lexicon: PredicateLexicon | None = None):
    """Parse templated sentences into anchored nodes and relation triplets.

    Accepts "There is a(n) {adjectives} {category} {predicate phrase} a(n)
    {adjectives} {category}." sentences joined by periods or "and". Sentences
    that cannot be resolved are skipped and recorded in ``partial.issues``.
    Returns ``(partial, triplets)``.
    """
    lexicon = lexicon or default_lexicon()
    vocab = _vocab_for(scene_type)
    partial = PartialGraph()
    triplets: list[Triplet] = []
    if not isinstance(text, str):
        text = str(text)

    def instance(adjs, cat, taken):
        for i, node in enumerate(partial.nodes):
            if i in taken or node.category != cat:
                continue
            if not adjs or not node.adjectives or set(adjs) == set(node.adjectives):
                if adjs and not node.adjectives:
                    node.adjectives = adjs
                return i
        partial.nodes.append(AnchoredNode(cat, adjs))
        return len(partial.nodes) - 1

    for sentence in _split_sentences(text):
        words = _tokens(sentence)
        if not words:
            continue
        found = _find_predicate(words, lexicon)
        if found is None:
            mentions = _count_mentions(words, vocab)
            if mentions >= 2:
                partial.issues.append(UnknownPredicatePhrase(f"no known relation phrase in {sentence!r}"))
            elif mentions == 1:
                adjs, cat = _resolve_mention(words, vocab)
                instance(adjs, cat, set())
            else:
                partial.issues.append(UnresolvedMention(f"no known category in {sentence!r}"))
            continue
        start, end, pred = found
        subj = _resolve_mention(words[:start], vocab)
        obj = _resolve_mention(words[end:], vocab)
        if subj is None or obj is None:
            partial.issues.append(UnresolvedMention(f"could not resolve both objects in {sentence!r}"))
            continue
        i = instance(subj[0], subj[1], set())
        j = instance(obj[0], obj[1], {i})
        if _conflicts(partial.edges, i, j, pred):
            # a second, differently placed instance of the subject
            partial.nodes.append(AnchoredNode(subj[1], subj[0]))
            i = len(partial.nodes) - 1
        partial.edges.append((i, j, pred))
        triplets.append(Triplet(subj[1], pred, obj[1]))
    for issue in partial.issues:
        logger.debug("prompt issue: %s", issue)
    return partial, triplets


def _conflicts(edges, i: int, j: int, pred: Predicate) -> bool:
    for a, b, q in edges:
        if (a, b) == (i, j) and q != pred:
            return True
        if (a, b) == (j, i) and q != inverse_predicate(pred):
            return True
    return False


def _with_article(words: str) -> str:
    return ("an " if words[0] in "aeiou" else "a ") + words


def render_triplet(t: Triplet, lexicon: PredicateLexicon | None = None, subject_adjs=(), object_adjs=()) -> str:
    lexicon = lexicon or default_lexicon()
    s = " ".join((*subject_adjs, t.subject))
    o = " ".join((*object_adjs, t.object))
    return f"There is {_with_article(s)} {lexicon.phrase(t.predicate)} {_with_article(o)}."


# ---------------------------------------------------------------- actions

@dataclass(frozen=True)
class ActionRuleTable:
    default: dict
    overrides: dict

    @classmethod
    def load(cls, path: str | Path | None = None) -> ActionRuleTable:
        data = json.loads(Path(path).read_text()) if path else _load_json("action_rules.json")

        def conv(d):
            return {normalize_category(k): tuple(HumanAction.parse(a) for a in v) for k, v in d.items()}

        overrides = {get_scene_type(k).name: conv(v) for k, v in data.get("overrides", {}).items()}
        return cls(conv(data["default"]), overrides)

    def options(self, scene_type: str | None, category: str) -> tuple[HumanAction, ...]:
        cat = normalize_category(category)
        if scene_type is not None:
            st = get_scene_type(scene_type).name
            if cat in self.overrides.get(st, {}):
                return self.overrides[st][cat]
        return self.default.get(cat, (HumanAction.NONE,))

    def lookup(self, scene_type: str | None, category: str) -> HumanAction:
        return self.options(scene_type, category)[0]


@lru_cache(maxsize=1)
def default_action_table() -> ActionRuleTable:
    return ActionRuleTable.load()


class TextCompletionClient(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass
class HTTPCompletionClient:
    """Minimal client for an OpenAI-style ``/v1/completions`` endpoint."""

    endpoint: str
    model: str
    timeout: float = 20.0
    max_tokens: int = 64

    @classmethod
    def from_config(cls, path: str | Path) -> HTTPCompletionClient:
        cfg = json.loads(Path(path).read_text())
        unknown = set(cfg) - {"endpoint", "model", "timeout", "max_tokens"}
        if unknown:
            raise ValueError(f"unknown LLM config keys: {sorted(unknown)}")
        return cls(**cfg)

    def complete(self, prompt: str) -> str:
        body = json.dumps(
            {"model": self.model, "prompt": prompt, "max_tokens": self.max_tokens, "temperature": 0.0}
        ).encode()
        req = urllib.request.Request(self.endpoint, data=body, headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode())
            return payload["choices"][0]["text"]
        except (urllib.error.URLError, TimeoutError, KeyError, IndexError, ValueError, OSError) as exc:
            raise LLMClientError(str(exc)) from exc


def action_query(categories: Sequence[str], scene_type: str) -> str:
    room = {"bedroom": "bedroom", "livingroom": "living room", "diningroom": "dining room"}.get(
        get_scene_type(scene_type).name, scene_type
    )
    return (
        f"Room type: {room}. For every object in the list, name the kind of human contact it "
        "supports: sitting, lying, touching, or None. "
        "Example: objects 'chair, sofa, tv stand, cabinet, pendant lamp' -> "
        "'sitting, lying, None, touching, None'. "
        f"Objects: '{', '.join(categories)}'. Answer:"
    )


def parse_action_reply(reply: str, expected: int) -> list[HumanAction]:
    text = reply.strip().strip("'\"").splitlines()[0] if reply.strip() else ""
    items = [w.strip().strip("'\".") for w in text.split(",")]
    if len(items) != expected:
        raise ValueError(f"expected {expected} actions, got {len(items)}")
    return [HumanAction.parse(w) for w in items]


def infer_actions(
    categories: Sequence[str],
    scene_type: str | None = None,
    client: TextCompletionClient | None = None,
    table: ActionRuleTable | None = None,
) -> list[HumanAction]:
    table = table or default_action_table()
    fallback = [table.lookup(scene_type, c) for c in categories]
    if client is None or not categories:
        return fallback
    try:
        reply = client.complete(action_query(categories, scene_type or "bedroom"))
        return parse_action_reply(reply, len(categories))
    except LLMClientError as exc:
        logger.warning("action LLM unavailable, using rule table: %s", exc)
    except ValueError as exc:
        logger.warning("malformed action reply, using rule table: %s", exc)
    return fallback


# ---------------------------------------------------------------- embedding

@dataclass(frozen=True)
class PromptEmbedding:
    vector: np.ndarray
    token_count: int

    @property
    def dim(self) -> int:
        return len(self.vector)


def _signed_buckets(key: str, dim: int, k: int = 2):
    digest = hashlib.blake2b(key.encode(), digest_size=8 * k).digest()
    for i in range(k):
        h = int.from_bytes(digest[8 * i : 8 * i + 8], "little")
        yield h % dim, 1.0 if (h >> 63) & 1 else -1.0


def embed_prompt(text: str, dim: int = EMBED_DIM) -> PromptEmbedding:
    """Signed-hash bag of words, salted with each word's first-occurrence rank.

    Repeating a word only rescales its contribution, so the normalised vector
    is unchanged; reordering distinct words changes it.
    """
    words = _tokens(text or "")
    vec = np.zeros(dim, dtype=np.float64)
    rank: dict[str, int] = {}
    for w in words:
        r = rank.setdefault(w, len(rank))
        for b, sgn in _signed_buckets("u:" + w, dim):
            vec[b] += sgn
        for b, sgn in _signed_buckets(f"p{r}:" + w, dim):
            vec[b] += sgn
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return PromptEmbedding(vec, len(words))
