"""Paired simulated A/B test: both arms replay the same requests with the same random draws"""

from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

import numpy as np
import structlog
from pydantic import BaseModel

from fakeindex.builder import FakeIndex
from harness.metrics import Metrics, compute_metrics
from logstore.context import ContextWindows, contexts_for_sessions, user_sessions
from logstore.docstore import DocStore
from logstore.models import ImpressionRecord, Interaction, LogCorpus, SessionRecord, UserContext
from logstore.synth import SimConfig, UserModel
from mining.models import MiningThresholds
from mining.terms import normalize_query
from policy.softmax import PolicyParams
from reward.oracle import RewardOracle
from serving.flow import serve
from serving.latency import LatencyModel
from serving.models import FusionResult, SearchRequest
from serving.recall import traditional_recall
from utils.errors import ContractError

logger = structlog.get_logger()

CONTROL = "control"
TREATMENT = "treatment"


@dataclass(frozen=True)
class ArtifactBundle:
    params: PolicyParams
    index: FakeIndex
    oracle: RewardOracle
    docstore: DocStore
    train_users: FrozenSet[str] = frozenset()


@dataclass(frozen=True)
class ABRequest:
    request: SearchRequest
    user_id: str
    topic: str
    timestamp: float


class ABReport(BaseModel):
    seed: int
    requests: int
    control: Metrics
    treatment: Metrics
    deltas: Dict[str, Optional[float]]
    config: Dict[str, Any]

    def tsv_line(self) -> str:
        def fmt(value: Optional[float]) -> str:
            return "nan" if value is None else f"{value:.6f}"

        return "\t".join([
            str(self.seed),
            str(self.requests),
            str(self.control.vv_gt10),
            str(self.treatment.vv_gt10),
            fmt(self.deltas["vv_gt10"]),
            f"{self.control.reformulation_rate:.6f}",
            f"{self.treatment.reformulation_rate:.6f}",
            fmt(self.deltas["reformulation_rate"]),
        ])


TSV_HEADER = "seed\trequests\tcontrol_vv_gt10\ttreatment_vv_gt10\tdelta_vv_gt10\tcontrol_reform\ttreatment_reform\tdelta_reform"


def collect_requests(test: LogCorpus, sim: SimConfig, windows: ContextWindows = ContextWindows()) -> List[ABRequest]:
    """Every ambiguous-entity impression of the test users, in (user, timestamp) order, with its context"""
    if test.users is None:
        raise ContractError("the A/B simulation needs the synthetic user table of the test corpus")
    topics = {u.user_id: u.topic for u in test.users}
    entities = {normalize_query(e) for e in sim.entities}

    requests: List[ABRequest] = []
    grouped = user_sessions(test)
    for user_id in sorted(grouped):
        sessions = grouped[user_id]
        contexts = contexts_for_sessions(sessions, test.docs, windows)
        for session in sessions:
            for pos, impression in enumerate(session.impressions):
                if normalize_query(impression.query) not in entities:
                    continue
                if user_id not in topics:
                    raise ContractError(f"test user {user_id} has no synthetic profile")
                req = SearchRequest(impression.query, contexts[(session.session_id, pos)],
                                    f"{user_id}/{len(requests):06d}")
                requests.append(ABRequest(req, user_id, topics[user_id], impression.timestamp))
    return requests


def follow_up_request(req: SearchRequest, q_next: str, windows: ContextWindows) -> SearchRequest:
    """The reformulated request: the failed query joins the query history, clipped to its window"""
    ctx = req.context
    history = ((req.query,) + ctx.h_query)[:windows.h_query]
    return SearchRequest(q_next, UserContext(history, ctx.h_video, ctx.geo), f"{req.request_id}/next")


class _Draws:
    """Per-request random values shared by both arms"""

    def __init__(self, seed: int, index: int, sim: SimConfig, topic: str):
        rng = np.random.default_rng([seed, index])
        vocab = sim.topics[topic]
        self.intent_term = vocab[int(rng.integers(len(vocab)))]
        self.satisfied = round(float(rng.uniform(*sim.satisfied_dwell)), 1)
        self.preview = round(float(rng.uniform(*sim.preview_dwell)), 1)
        self.reformulation = round(float(rng.uniform(*sim.reformulation_dwell)), 1)
        self.second_preview = round(float(rng.uniform(*sim.preview_dwell)), 1)
        self.gap = float(int(rng.uniform(*sim.in_session_gap_s)))


class _Arm:
    def __init__(self, name: str, artifacts: ArtifactBundle, model: UserModel, lat: LatencyModel,
                 windows: ContextWindows):
        self.name = name
        self.artifacts = artifacts
        self.model = model
        self.lat = lat
        self.windows = windows
        self.sessions: List[SessionRecord] = []
        self.outcomes: List[FusionResult] = []

    def _search(self, req: SearchRequest) -> Tuple[List[str], List[str]]:
        if self.name == CONTROL:
            return [d for d, _ in traditional_recall(req.query, self.artifacts.docstore)], []
        a = self.artifacts
        result = serve(req, a.params, a.index, a.oracle, a.docstore, self.lat)
        self.outcomes.append(result)
        return list(result.main_docs), list(result.fake_docs)

    def _record(self, r: ABRequest, query: str, ts: float, main: List[str], fake: List[str],
                hit: Optional[str], success_dwell: float, preview_dwell: float) -> Optional[ImpressionRecord]:
        results = tuple(main + fake)
        if not results:
            return None
        if hit is not None:
            interactions = (Interaction(hit, success_dwell, True),)
        else:
            interactions = (Interaction(results[0], preview_dwell, False),)
        return ImpressionRecord(r.user_id, ts, query, results, interactions, r.request.context.geo)

    def replay(self, index: int, r: ABRequest, draws: _Draws) -> None:
        req = r.request
        impressions: List[ImpressionRecord] = []

        main, fake = self._search(req)
        hit = self.model.first_satisfying(r.topic, req.query, main, fake)
        first = self._record(r, req.query, r.timestamp, main, fake, hit, draws.satisfied, draws.preview)
        if first is not None:
            impressions.append(first)

        if hit is None:
            q_next = f"{normalize_query(req.query)} {draws.intent_term}"
            follow = follow_up_request(req, q_next, self.windows)
            main, fake = self._search(follow)
            hit = self.model.first_satisfying(r.topic, req.query, main, fake)
            second = self._record(r, q_next, r.timestamp + draws.gap, main, fake, hit,
                                  draws.reformulation, draws.second_preview)
            if second is not None:
                impressions.append(second)

        if impressions:
            self.sessions.append(SessionRecord(f"{self.name}-{index:06d}", r.user_id, tuple(impressions)))


def _delta(control: float, treatment: float) -> Optional[float]:
    return (treatment - control) / control if control > 0 else None


def simulate_ab(
    sim: SimConfig,
    artifacts: ArtifactBundle,
    test: LogCorpus,
    seed: int,
    lat: LatencyModel = LatencyModel(),
    thresholds: MiningThresholds = MiningThresholds(),
    windows: ContextWindows = ContextWindows(),
) -> ABReport:
    """
    Replay the test users' ambiguous searches through both arms

    Control serves traditional recall only; treatment serves the full fused flow.
    A user who is not satisfied dwells below tau_short and reformulates once with
    an intent term drawn from their topic vocabulary.

    Raises:
        ContractError: train and test users overlap, or the test corpus has no user table
    """
    overlap = artifacts.train_users & test.user_ids()
    if overlap:
        logger.error("Train/test user overlap", users=len(overlap))
        raise ContractError(f"{len(overlap)} users appear in both the training and the test logs",
                            example=sorted(overlap)[0])

    requests = collect_requests(test, sim, windows)
    model = UserModel(artifacts.docstore, sim.examine_depth)
    arms = {name: _Arm(name, artifacts, model, lat, windows) for name in (CONTROL, TREATMENT)}

    for index, r in enumerate(requests):
        draws = _Draws(seed, index, sim, r.topic)
        for arm in arms.values():
            arm.replay(index, r, draws)

    control = compute_metrics(arms[CONTROL].sessions, thresholds, arms[CONTROL].outcomes)
    treatment = compute_metrics(arms[TREATMENT].sessions, thresholds, arms[TREATMENT].outcomes)
    report = ABReport(
        seed=seed,
        requests=len(requests),
        control=control,
        treatment=treatment,
        deltas={
            "vv_gt10": _delta(control.vv_gt10, treatment.vv_gt10),
            "reformulation_rate": _delta(control.reformulation_rate, treatment.reformulation_rate),
        },
        config={"sim": sim.model_dump(mode="json"), "latency": lat.model_dump(), "thresholds": thresholds.model_dump()},
    )
    logger.info("Simulated A/B", seed=seed, requests=len(requests), control_vv=control.vv_gt10,
                treatment_vv=treatment.vv_gt10, control_reform=control.reformulation_rate,
                treatment_reform=treatment.reformulation_rate)
    return report
