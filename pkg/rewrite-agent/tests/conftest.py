import functools
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import pytest

from fakeindex.builder import BuildConfig, FakeIndex, build_index
from logstore.docstore import DocStore
from logstore.models import (
    ImpressionRecord,
    Interaction,
    LogCorpus,
    SessionRecord,
    UserContext,
    VideoDoc,
    VideoSummary,
)
from logstore.sessionize import sessionize
from logstore.synth import SimConfig, split_by_user, synthesize_logs
from mining.dataset import MiningReport, build_dataset
from mining.models import TrainingSample
from policy.softmax import PolicyParams
from reward.oracle import QueryStats, RewardOracle, build_oracle
from trainer.loop import TrainConfig, TrainReport, train

TINY_SIM = SimConfig(n_users=60, sessions_per_user=10, ambiguity_rate=0.4)
TINY_TRAIN = TrainConfig(sft_epochs=300, grpo_iters=100, learning_rate=0.2, rollout_batch=32, seed=1)

MakeImpression = Callable[..., ImpressionRecord]


@pytest.fixture
def make_impression() -> MakeImpression:
    """Impression factory: one played doc with the given dwell, clicked when dwell >= 2.4s by default"""

    def make(
        user_id: str,
        ts: float,
        query: str,
        dwell: Optional[float] = None,
        doc: str = "v1",
        results: Tuple[str, ...] = ("v1", "v2"),
        clicked: Optional[bool] = None,
        region: str = "region-0",
    ) -> ImpressionRecord:
        interactions = ()
        if dwell is not None:
            interactions = (Interaction(doc, dwell, dwell >= 2.4 if clicked is None else clicked),)
        return ImpressionRecord(user_id, ts, query, results, interactions, region)

    return make


@pytest.fixture
def catalog() -> dict:
    docs = [
        VideoDoc("v1", "guang liang liquor tasting", ("liquor",), "liquor"),
        VideoDoc("v2", "guang liang singer concert", ("singer",), "music"),
        VideoDoc("v3", "air fryer recipes", ("recipe",), "cooking"),
        VideoDoc("v4", "baijiu distillery tour", ("liquor",), "liquor"),
    ]
    return {d.doc_id: d for d in docs}


@pytest.fixture
def docstore(catalog) -> DocStore:
    return DocStore(catalog)


@pytest.fixture
def liquor_context(catalog) -> UserContext:
    return UserContext(
        h_query=("baijiu distillery",),
        h_video=(VideoSummary.of(catalog["v4"]), VideoSummary.of(catalog["v1"])),
        geo="region-1",
    )


@pytest.fixture
def small_oracle() -> RewardOracle:
    stats = {
        "guang liang": QueryStats("guang liang", 40, 0.5),
        "guang liang liquor": QueryStats("guang liang liquor", 100, 0.2),
        "baijiu distillery": QueryStats("baijiu distillery", 12, 0.75),
    }
    return RewardOracle(stats, 180)


@pytest.fixture
def corpus_of(catalog) -> Callable[[List[ImpressionRecord]], LogCorpus]:
    def build(impressions: List[ImpressionRecord], gap_timeout: float = 1800.0) -> LogCorpus:
        return LogCorpus(sessions=tuple(sessionize(impressions, gap_timeout)), docs=catalog)

    return build


def single_session(impressions: List[ImpressionRecord]) -> SessionRecord:
    return SessionRecord("u1#0000", impressions[0].user_id, tuple(impressions))


@pytest.fixture
def session_of() -> Callable[[List[ImpressionRecord]], SessionRecord]:
    return single_session


@dataclass
class Pipeline:
    """Every artifact of one synth -> mine -> oracle -> train -> index run"""

    sim: SimConfig
    seed: int
    corpus: LogCorpus
    train_logs: LogCorpus
    test_logs: LogCorpus
    dataset: List[TrainingSample]
    mining: MiningReport
    oracle: RewardOracle
    params: PolicyParams
    report: TrainReport
    index: FakeIndex
    docstore: DocStore


def run_pipeline(sim: SimConfig, seed: int, cfg: TrainConfig = TINY_TRAIN) -> Pipeline:
    corpus = synthesize_logs(sim, seed)
    train_logs, test_logs = split_by_user(corpus, sim.test_fraction, seed)
    dataset, mining = build_dataset(train_logs)
    oracle = build_oracle(train_logs)
    params, report = train(dataset, oracle, cfg)
    return Pipeline(
        sim=sim,
        seed=seed,
        corpus=corpus,
        train_logs=train_logs,
        test_logs=test_logs,
        dataset=dataset,
        mining=mining,
        oracle=oracle,
        params=params,
        report=report,
        index=build_index(train_logs, BuildConfig()),
        docstore=DocStore(corpus.docs),
    )


@functools.lru_cache(maxsize=None)
def pipeline_for(seed: int) -> Pipeline:
    """Default tiny pipeline for a seed, built once per test run"""
    return run_pipeline(TINY_SIM, seed)


@pytest.fixture(scope="session")
def pipeline() -> Pipeline:
    return pipeline_for(1)
