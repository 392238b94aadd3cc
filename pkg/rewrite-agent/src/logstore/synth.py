"""Synthetic search logs with planted demand-aware reformulations.

The world has a few topics (each with a keyword and a small vocabulary) and a few
two-word ambiguous entities. Every entity has a dominant topic whose videos fill
the top of the bare-entity result list, so a user whose latent topic is another
one fails on the bare query. There are enough of them to fill a whole recall
page, so the off-topic entity videos only surface for a query that names the
topic or through the fake index. Whether and how that user reformulates is what the
mining stage has to recover.

Topic sessions are browsing: each play lasts browse_dwell, which is a valid view
but not an immediately satisfied search. Only a `browse_satisfied_rate` share of
them ends on a long play. Long satisfied plays otherwise come from bare-entity
searches of dominant-topic users and from successful reformulations.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from logstore.context import ContextWindows, HistoryTracker
from logstore.docstore import DocStore
from logstore.models import (
    GroundTruthEvent,
    ImpressionRecord,
    Interaction,
    LogCorpus,
    SyntheticUser,
    UserContext,
    VideoDoc,
)
from logstore.sessionize import DEFAULT_GAP_TIMEOUT_S, session_id_for, sessionize
from mining.filters import context_terms
from mining.terms import tokenize_ordered, tokenize_terms
from utils.errors import ConfigError

logger = structlog.get_logger()

# first term of every topic is its keyword and appears in all of the topic's titles
DEFAULT_TOPICS: Dict[str, Tuple[str, ...]] = {
    "liquor": ("liquor", "baijiu", "tasting", "distillery", "vintage", "cocktail", "brewery", "sommelier"),
    "music": ("singer", "concert", "album", "lyrics", "ballad", "karaoke", "guitar", "chorus"),
    "cooking": ("recipe", "kitchen", "noodles", "baking", "grill", "dumplings", "wok", "braised"),
    "travel": ("travel", "hotel", "itinerary", "beach", "hiking", "museum", "airport", "backpacking"),
    "gaming": ("gaming", "speedrun", "console", "esports", "walkthrough", "boss", "multiplayer", "arcade"),
    "fitness": ("fitness", "workout", "yoga", "cardio", "stretching", "marathon", "dumbbell", "pilates"),
}

DEFAULT_ENTITIES: Tuple[str, ...] = (
    "guang liang", "red star", "golden gate", "blue moon", "silver lake", "little bear",
)

Range = Tuple[float, float]


class SimConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_users: int = 100
    topics: Dict[str, Tuple[str, ...]] = Field(default_factory=lambda: dict(DEFAULT_TOPICS))
    entities: Tuple[str, ...] = DEFAULT_ENTITIES
    sessions_per_user: int = Field(12, ge=1)
    ambiguity_rate: float = Field(0.2, ge=0.0, le=1.0)
    noise_rate: float = Field(0.15, ge=0.0, le=1.0)
    partial_rate: float = Field(0.1, ge=0.0, le=1.0)
    browse_satisfied_rate: float = Field(0.0, ge=0.0, le=1.0)

    # a full recall page: the bare entity query recalls no off-topic entity video
    dominant_docs_per_entity: int = 100
    docs_per_entity_topic: int = Field(3, ge=1)
    generic_docs_per_topic: int = Field(10, ge=1)
    results_per_impression: int = Field(40, ge=1)
    examine_depth: int = Field(10, ge=1)
    regions: int = Field(4, ge=1)

    preview_dwell: Range = (0.2, 2.0)
    browse_dwell: Range = (12.0, 25.0)
    satisfied_dwell: Range = (35.0, 180.0)
    reformulation_dwell: Range = (12.0, 60.0)
    in_session_gap_s: Range = (20.0, 300.0)
    between_session_extra_s: Range = (3600.0, 86400.0)

    start_ts: int = 1_700_000_000
    test_fraction: float = Field(0.2, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check(self) -> "SimConfig":
        if self.n_users < 1:
            raise ValueError("n_users must be at least 1")
        if not self.topics:
            raise ValueError("at least one topic is required")
        if not self.entities:
            raise ValueError("at least one ambiguous entity is required")
        for name, vocab in self.topics.items():
            if len(vocab) < self.docs_per_entity_topic or len(vocab) < 3:
                raise ValueError(f"topic {name} needs at least {max(3, self.docs_per_entity_topic)} terms")
        if self.noise_rate + self.partial_rate > 1.0:
            raise ValueError("noise_rate + partial_rate must not exceed 1")
        if self.dominant_docs_per_entity < self.examine_depth:
            raise ValueError("dominant_docs_per_entity must cover examine_depth")
        for name in ("preview_dwell", "browse_dwell", "satisfied_dwell", "reformulation_dwell",
                     "in_session_gap_s", "between_session_extra_s"):
            lo, hi = getattr(self, name)
            if lo < 0 or lo > hi:
                raise ValueError(f"{name} must be an ordered non-negative range")
        # planted events must satisfy the default mining thresholds by construction
        if self.preview_dwell[1] >= 2.4:
            raise ValueError("preview_dwell must stay below 2.4s")
        if self.browse_dwell[0] < 2.4:
            raise ValueError("browse_dwell must start at 2.4s or above")
        if self.reformulation_dwell[0] <= 10.0:
            raise ValueError("reformulation_dwell must start above 10s")
        return self

    def dominant_topic(self, entity: str) -> str:
        names = list(self.topics)
        return names[self.entities.index(entity) % len(names)]


def build_catalog(config: SimConfig) -> Dict[str, VideoDoc]:
    """Deterministic catalog: entity videos (dominant topic first), then generic topic videos"""
    docs: Dict[str, VideoDoc] = {}

    def add(title: str, topic: str) -> None:
        doc_id = f"v{len(docs):05d}"
        docs[doc_id] = VideoDoc(doc_id=doc_id, title=title, tags=(config.topics[topic][0],), topic=topic)

    for entity in config.entities:
        dominant = config.dominant_topic(entity)
        keyword, *terms = config.topics[dominant]
        for j in range(config.dominant_docs_per_entity):
            add(f"{entity} {keyword} {terms[j % len(terms)]}", dominant)
        for topic, (keyword, *terms) in config.topics.items():
            if topic == dominant:
                continue
            for j in range(config.docs_per_entity_topic):
                add(f"{entity} {keyword} {terms[j - 1]}" if j else f"{entity} {keyword}", topic)

    for topic, (keyword, *terms) in config.topics.items():
        for j in range(config.generic_docs_per_topic):
            add(f"{keyword} {terms[j % len(terms)]} {terms[(j + 3) % len(terms)]}", topic)
    return docs


class UserModel:
    """Synthetic user behavior shared by the log generator and the simulated A/B test.

    The user examines the first `examine_depth` main-path results plus every
    fake-sourced result. A result satisfies when its topic is the user's latent
    topic and it shares a term with the query the user originally issued.
    """

    def __init__(self, docstore: DocStore, examine_depth: int):
        self.docstore = docstore
        self.examine_depth = examine_depth

    def examined(self, main_docs: Sequence[str], fake_docs: Sequence[str] = ()) -> List[str]:
        shown = list(main_docs[:self.examine_depth])
        seen = set(shown)
        shown.extend(d for d in fake_docs if d not in seen)
        return shown

    def first_satisfying(
        self,
        topic: str,
        intent_query: str,
        main_docs: Sequence[str],
        fake_docs: Sequence[str] = (),
    ) -> Optional[str]:
        intent = tokenize_terms(intent_query)
        for doc_id in self.examined(main_docs, fake_docs):
            if self.docstore.get(doc_id).topic == topic and self.docstore.terms(doc_id) & intent:
                return doc_id
        return None


class _UserSimulation:
    """Generates one user's impressions in time order"""

    def __init__(self, user: SyntheticUser, config: SimConfig, docstore: DocStore,
                 model: UserModel, rng: np.random.Generator, windows: ContextWindows, gap_timeout: float):
        self.user = user
        self.config = config
        self.docstore = docstore
        self.model = model
        self.rng = rng
        self.gap_timeout = gap_timeout
        self.tracker = HistoryTracker(docstore.docs, windows)
        self.vocab = config.topics[user.topic]
        self.ts = float(config.start_ts + int(rng.integers(0, 86400)))
        self.impressions: List[ImpressionRecord] = []
        self.events: List[GroundTruthEvent] = []
        self.session_index = 0

    def _dwell(self, bounds: Range) -> float:
        return round(float(self.rng.uniform(*bounds)), 1)

    def _issue(self, query: str, intent_query: str, success_dwell: Range) -> Tuple[ImpressionRecord, bool]:
        results = [d for d, _ in self.docstore.match(query, self.config.results_per_impression)]
        if not results:
            results = [next(iter(self.docstore.docs))]
        hit = self.model.first_satisfying(self.user.topic, intent_query, results)
        if hit is not None:
            interactions = (Interaction(hit, self._dwell(success_dwell), True),)
        else:
            interactions = (Interaction(results[0], self._dwell(self.config.preview_dwell), False),)
        record = ImpressionRecord(
            user_id=self.user.user_id,
            timestamp=self.ts,
            query=query,
            results=tuple(results),
            interactions=interactions,
            region=self.user.region,
        )
        self.impressions.append(record)
        self.tracker.observe(record)
        self.ts += float(int(self.rng.uniform(*self.config.in_session_gap_s)))
        return record, hit is not None

    def _topic_query(self) -> str:
        keyword, *terms = self.vocab
        if self.rng.random() < 0.5:
            return f"{keyword} {terms[int(self.rng.integers(len(terms)))]}"
        a, b = self.rng.choice(len(terms), size=2, replace=False)
        return f"{terms[int(a)]} {terms[int(b)]}"

    def _topic_session(self) -> None:
        count = int(self.rng.integers(1, 4))
        for k in range(count):
            query = self._topic_query()
            satisfied = k == count - 1 and self.rng.random() < self.config.browse_satisfied_rate
            _, ok = self._issue(query, query, self.config.satisfied_dwell if satisfied else self.config.browse_dwell)
            if not ok:
                break

    def _planted_term(self, entity_terms: frozenset, context: UserContext) -> Optional[str]:
        pool = []
        for video in context.h_video:
            if self.docstore.get(video.doc_id).topic != self.user.topic:
                continue
            pool.extend(t for t in tokenize_ordered(video.title) if t in self.vocab and t not in entity_terms)
        if not pool:
            return None
        return pool[int(self.rng.integers(len(pool)))]

    def _ambiguous_session(self) -> None:
        if self.rng.random() < 0.5:
            query = self._topic_query()
            self._issue(query, query, self.config.browse_dwell)

        entity = self.config.entities[int(self.rng.integers(len(self.config.entities)))]
        entity_terms = tokenize_terms(entity)
        context = self.tracker.snapshot(self.user.region)
        orig_ts = self.ts
        _, ok = self._issue(entity, entity, self.config.satisfied_dwell)
        if ok:
            return

        known = context_terms(context)
        covered = [t for t in self.vocab[:self.config.docs_per_entity_topic] if t not in entity_terms]
        fresh = [t for t in self.vocab if t not in known and t not in entity_terms]
        roll = self.rng.random()

        if roll < self.config.noise_rate:
            # generic reformulation: a topic term the context never showed
            options = [t for t in covered if t not in known]
            if options:
                self._issue(f"{entity} {options[int(self.rng.integers(len(options)))]}", entity,
                            self.config.reformulation_dwell)
            return

        if roll < self.config.noise_rate + self.config.partial_rate:
            # one gain term grounded in context, one not
            grounded = [t for t in covered if t in known]
            if grounded and fresh:
                t_ctx = grounded[int(self.rng.integers(len(grounded)))]
                t_new = fresh[int(self.rng.integers(len(fresh)))]
                self._issue(f"{entity} {t_ctx} {t_new}", entity, self.config.reformulation_dwell)
            return

        term = self._planted_term(entity_terms, context)
        if term is None:
            return
        q_next = f"{entity} {term}"
        _, ok = self._issue(q_next, entity, self.config.reformulation_dwell)
        if ok:
            self.events.append(GroundTruthEvent(
                user_id=self.user.user_id,
                session_id=session_id_for(self.user.user_id, self.session_index),
                timestamp=orig_ts,
                q_orig=entity,
                q_next=q_next,
                gain_term=term,
            ))

    def run(self) -> None:
        for _ in range(self.config.sessions_per_user):
            if self.rng.random() < self.config.ambiguity_rate:
                self._ambiguous_session()
            else:
                self._topic_session()
            self.session_index += 1
            self.ts += self.gap_timeout + float(int(self.rng.uniform(*self.config.between_session_extra_s)))


def synthesize_logs(
    config: SimConfig,
    seed: int,
    windows: ContextWindows = ContextWindows(),
    gap_timeout: float = DEFAULT_GAP_TIMEOUT_S,
) -> LogCorpus:
    """Generate a ground-truth-annotated corpus; identical output for identical (config, seed)"""
    if gap_timeout <= config.in_session_gap_s[1]:
        raise ConfigError("session gap timeout must exceed the in-session gap range")

    docs = build_catalog(config)
    docstore = DocStore(docs)
    model = UserModel(docstore, config.examine_depth)
    topic_names = list(config.topics)

    users: List[SyntheticUser] = []
    impressions: List[ImpressionRecord] = []
    events: List[GroundTruthEvent] = []
    for index in range(config.n_users):
        rng = np.random.default_rng([seed, index])
        user = SyntheticUser(
            user_id=f"u{index:05d}",
            topic=topic_names[int(rng.integers(len(topic_names)))],
            region=f"region-{int(rng.integers(config.regions))}",
        )
        sim = _UserSimulation(user, config, docstore, model, rng, windows, gap_timeout)
        sim.run()
        users.append(user)
        impressions.extend(sim.impressions)
        events.extend(sim.events)

    sessions = sessionize(impressions, gap_timeout)
    events.sort(key=lambda e: e.key)
    logger.info("Synthesized logs", seed=seed, users=len(users), impressions=len(impressions),
                sessions=len(sessions), planted=len(events))
    return LogCorpus(sessions=tuple(sessions), docs=docs, ground_truth=tuple(events), users=tuple(users))


def _subset(corpus: LogCorpus, keep: frozenset) -> LogCorpus:
    return LogCorpus(
        sessions=tuple(s for s in corpus.sessions if s.user_id in keep),
        docs=corpus.docs,
        ground_truth=None if corpus.ground_truth is None
        else tuple(e for e in corpus.ground_truth if e.user_id in keep),
        users=None if corpus.users is None else tuple(u for u in corpus.users if u.user_id in keep),
    )


def split_by_user(corpus: LogCorpus, test_fraction: float, seed: int) -> Tuple[LogCorpus, LogCorpus]:
    """Disjoint (train, test) corpora; every user lands in exactly one side"""
    user_ids = sorted(corpus.user_ids())
    order = np.random.default_rng(seed).permutation(len(user_ids))
    n_test = int(round(test_fraction * len(user_ids)))
    test = frozenset(user_ids[i] for i in order[:n_test])
    train = frozenset(user_ids) - test
    logger.info("Split corpus by user", train_users=len(train), test_users=len(test))
    return _subset(corpus, train), _subset(corpus, test)
