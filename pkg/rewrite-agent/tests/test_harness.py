import numpy as np
import pytest

from harness.ab import ArtifactBundle, collect_requests, follow_up_request, simulate_ab
from harness.metrics import compute_metrics
from harness.objective import expected_objective
from logstore.context import ContextWindows
from logstore.models import LogCorpus, UserContext
from mining.terms import normalize_query, tokenize_terms
from policy.features import DIM, FEATURE_NAMES
from policy.softmax import PolicyParams
from serving.flow import serve
from serving.models import DocSource, FusedDoc, FusionResult, SearchRequest
from utils.errors import ContractError

from conftest import pipeline_for

REJECT_POLICY = PolicyParams(20 * np.eye(DIM)[FEATURE_NAMES.index("is_reject")])


def artifacts_of(pipeline, params=None, train_users=None):
    return ArtifactBundle(
        params=params or pipeline.params,
        index=pipeline.index,
        oracle=pipeline.oracle,
        docstore=pipeline.docstore,
        train_users=pipeline.train_logs.user_ids() if train_users is None else train_users,
    )


class TestMetrics:
    def test_single_satisfied_play(self, make_impression, session_of):
        metrics = compute_metrics([session_of([make_impression("u1", 0.0, "q", 12.0)])])
        assert metrics.vv_gt10 == 1
        assert metrics.reformulation_rate == 0.0

    def test_failed_then_reformulated(self, make_impression, session_of):
        session = session_of([make_impression("u1", 0.0, "q", 1.0), make_impression("u1", 20.0, "q x", 40.0)])
        metrics = compute_metrics([session])
        assert metrics.reformulation_rate == 1.0
        assert metrics.reformulations == 1
        assert metrics.vv_gt10 == 1

    def test_empty(self):
        metrics = compute_metrics([])
        assert metrics.vv_gt10 == 0
        assert metrics.reformulation_rate == 0.0
        assert metrics.index_hit_rate == 0.0

    def test_last_impression_never_reformulated(self, make_impression, session_of):
        metrics = compute_metrics([session_of([make_impression("u1", 0.0, "q", 1.0)])])
        assert metrics.reformulation_rate == 0.0

    def test_index_hit_rate(self):
        doc = (FusedDoc("v1", DocSource.MAIN, 1.0),)
        outcomes = [
            FusionResult("a", doc, 123.0, rewrite_attempted="q x", index_hit=True),
            FusionResult("b", doc, 123.0, rewrite_attempted="q y", index_hit=False),
            FusionResult("c", doc, 123.0),
        ]
        assert compute_metrics([], outcomes=outcomes).index_hit_rate == 0.5

    def test_session_order_does_not_matter(self, pipeline):
        sessions = list(pipeline.test_logs.sessions)
        shuffled = [sessions[i] for i in np.random.default_rng(7).permutation(len(sessions))]
        assert compute_metrics(shuffled) == compute_metrics(sessions)


class TestObjective:
    def test_empty(self, small_oracle):
        assert expected_objective(PolicyParams.zeros(), [], small_oracle) == 0.0

    def test_reject_policy_scores_reject_reward(self, pipeline):
        samples = pipeline.dataset[:20]
        assert expected_objective(REJECT_POLICY, samples, pipeline.oracle) == pytest.approx(0.0, abs=1e-6)

    def test_training_improves_over_uniform(self, pipeline):
        trained = expected_objective(pipeline.params, pipeline.dataset, pipeline.oracle)
        assert trained > expected_objective(PolicyParams.zeros(), pipeline.dataset, pipeline.oracle)


class TestAB:
    def test_requests_are_ambiguous_entity_searches(self, pipeline):
        requests = collect_requests(pipeline.test_logs, pipeline.sim)
        entities = {normalize_query(e) for e in pipeline.sim.entities}
        assert requests
        assert all(normalize_query(r.request.query) in entities for r in requests)
        keys = [(r.user_id, r.timestamp) for r in requests]
        assert keys == sorted(keys)

    def test_user_table_required(self, pipeline):
        bare = LogCorpus(sessions=pipeline.test_logs.sessions, docs=pipeline.test_logs.docs)
        with pytest.raises(ContractError):
            collect_requests(bare, pipeline.sim)

    def test_overlapping_users(self, pipeline):
        artifacts = artifacts_of(pipeline, train_users=pipeline.train_logs.user_ids() | pipeline.test_logs.user_ids())
        with pytest.raises(ContractError):
            simulate_ab(pipeline.sim, artifacts, pipeline.test_logs, seed=1)

    def test_inert_treatment(self, pipeline):
        report = simulate_ab(pipeline.sim, artifacts_of(pipeline, REJECT_POLICY), pipeline.test_logs, seed=1)
        assert report.treatment.vv_gt10 == report.control.vv_gt10
        assert report.treatment.reformulation_rate == report.control.reformulation_rate
        assert report.deltas["vv_gt10"] == 0.0
        assert report.treatment.rewrite_attempts == 0

    def test_deterministic(self, pipeline):
        a = simulate_ab(pipeline.sim, artifacts_of(pipeline), pipeline.test_logs, seed=4)
        b = simulate_ab(pipeline.sim, artifacts_of(pipeline), pipeline.test_logs, seed=4)
        assert a == b
        assert a.tsv_line() == b.tsv_line()

    def test_treatment_never_worse(self, pipeline):
        report = simulate_ab(pipeline.sim, artifacts_of(pipeline), pipeline.test_logs, seed=2)
        assert report.treatment.vv_gt10 >= report.control.vv_gt10
        assert report.treatment.reformulation_rate <= report.control.reformulation_rate

    def test_direction(self, pipeline):
        report = simulate_ab(pipeline.sim, artifacts_of(pipeline), pipeline.test_logs, seed=pipeline.seed)
        assert report.treatment.vv_gt10 > report.control.vv_gt10
        assert report.treatment.reformulation_rate < report.control.reformulation_rate
        assert report.treatment.index_hit_rate > 0.0

    @pytest.mark.parametrize("seed", [2, 3, 4, 5])
    def test_direction_across_seeds(self, seed):
        run = pipeline_for(seed)
        report = simulate_ab(run.sim, artifacts_of(run), run.test_logs, seed=seed)
        assert report.treatment.vv_gt10 > report.control.vv_gt10
        assert report.treatment.reformulation_rate < report.control.reformulation_rate

    def test_served_fake_docs_share_a_term_with_the_query(self, pipeline):
        fake_docs = 0
        for r in collect_requests(pipeline.test_logs, pipeline.sim):
            result = serve(r.request, pipeline.params, pipeline.index, pipeline.oracle, pipeline.docstore)
            q_terms = tokenize_terms(r.request.query)
            for doc_id in result.fake_docs:
                assert pipeline.docstore.terms(doc_id) & q_terms
            fake_docs += len(result.fake_docs)
        assert fake_docs > 0


class TestFollowUp:
    def test_history_is_clipped_to_the_window(self, liquor_context):
        ctx = UserContext(("a", "b", "c"), liquor_context.h_video, "region-1")
        req = SearchRequest("guang liang", ctx, "r1")
        follow = follow_up_request(req, "guang liang liquor", ContextWindows(h_query=3))
        assert follow.query == "guang liang liquor"
        assert follow.context.h_query == ("guang liang", "a", "b")
        assert follow.context.h_video == ctx.h_video
        assert follow.request_id == "r1/next"

    def test_short_history_grows(self, liquor_context):
        follow = follow_up_request(SearchRequest("guang liang", liquor_context, "r1"), "x", ContextWindows())
        assert follow.context.h_query == ("guang liang", "baijiu distillery")

    def test_empty_window(self, liquor_context):
        follow = follow_up_request(SearchRequest("guang liang", liquor_context, "r1"), "x", ContextWindows(h_query=0))
        assert follow.context.h_query == ()
