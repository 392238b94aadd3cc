import math

import numpy as np
import pytest

from logstore.models import UserContext
from mining.terms import REJECT_TOKEN
from policy.candidates import MAX_APPENDED_TERMS, Provenance, generate_candidates
from policy.features import DIM, FEATURE_NAMES, LN_FREQ_CAP, feature_matrix
from policy.params_io import load_params, save_params
from policy.softmax import (
    PolicyDistribution,
    PolicyParams,
    distribution,
    encode_input,
    expected_reward,
    logprob_and_grad,
    logprob_and_grad_of,
    sample_group,
)
from reward.oracle import QueryStats, RewardOracle
from utils.errors import ConfigError, ContractError, FormatError

REJECT_WEIGHT = np.eye(DIM)[FEATURE_NAMES.index("is_reject")]


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


class TestCandidates:
    def test_no_context(self, small_oracle):
        cands = generate_candidates("x", UserContext(), small_oracle)
        assert [(c.text, c.provenance) for c in cands] == [("x", Provenance.IDENTITY), (REJECT_TOKEN, Provenance.REJECT)]

    def test_context_term_append(self, liquor_context, small_oracle):
        texts = [c.text for c in generate_candidates("guang liang", liquor_context, small_oracle)]
        assert "guang liang liquor" in texts
        assert texts[:2] == ["guang liang", REJECT_TOKEN]

    def test_deterministic(self, liquor_context, small_oracle):
        assert generate_candidates("Guang Liang", liquor_context, small_oracle) == \
            generate_candidates("Guang Liang", liquor_context, small_oracle)

    def test_past_queries_in_vocabulary(self, small_oracle):
        ctx = UserContext(h_query=("baijiu distillery", "unrelated", "distillery visit"))
        cands = generate_candidates("distillery", ctx, small_oracle)
        past = [c.text for c in cands if c.provenance is Provenance.CONTEXT_QUERY]
        assert past == ["baijiu distillery"]
        assert len({c.text for c in cands}) == len(cands)

    def test_append_cap(self, small_oracle):
        ctx = UserContext(h_query=tuple(f"term{i}" for i in range(40)))
        cands = generate_candidates("q", ctx, small_oracle)
        appended = [c for c in cands if c.provenance is Provenance.CONTEXT_TERM]
        assert len(appended) == MAX_APPENDED_TERMS

    def test_empty_query(self, small_oracle):
        with pytest.raises(ContractError):
            generate_candidates("   ", UserContext(), small_oracle)


class TestFeatures:
    def test_reject_row(self, small_oracle):
        cands = generate_candidates("guang liang", UserContext(), small_oracle)
        phi = feature_matrix(cands, "guang liang", frozenset(), small_oracle)
        assert phi[1].tolist() == [1.0, 1.0, 0, 0, 0, 0, 0, 0]

    def test_identity_and_vocab(self, liquor_context, small_oracle):
        enc = encode_input("guang liang", liquor_context, small_oracle)
        identity = enc.features[0]
        assert identity[FEATURE_NAMES.index("is_identity")] == 1.0
        assert identity[FEATURE_NAMES.index("ln_freq_capped")] == pytest.approx(math.log(40))
        rewrite = enc.features[enc.index_of("guang liang liquor")]
        assert rewrite[FEATURE_NAMES.index("in_vocab")] == 1.0
        assert rewrite[FEATURE_NAMES.index("ctr")] == pytest.approx(0.2)
        assert rewrite[FEATURE_NAMES.index("gain_terms_in_context_frac")] == 1.0
        assert rewrite[FEATURE_NAMES.index("char_len_delta_norm")] > 0

    def test_log_freq_capped(self):
        oracle = RewardOracle({"q": QueryStats("q", 10**9, 0.0)})
        enc = encode_input("q", UserContext(), oracle)
        assert enc.features[0][FEATURE_NAMES.index("ln_freq_capped")] == LN_FREQ_CAP


class TestDistribution:
    def test_zero_theta_is_uniform(self, liquor_context, small_oracle):
        dist = distribution(PolicyParams.zeros(), "guang liang", liquor_context, small_oracle)
        assert np.allclose(dist.probs, 1.0 / len(dist.candidates))

    def test_large_reject_weight(self, liquor_context, small_oracle):
        dist = distribution(PolicyParams(20 * REJECT_WEIGHT), "guang liang", liquor_context, small_oracle)
        assert dist.prob_of(REJECT_TOKEN) > 0.99
        assert dist.argmax().is_reject

    def test_bias_shift_leaves_probs_unchanged(self, liquor_context, small_oracle):
        rng = np.random.default_rng(6)
        bias = np.eye(DIM)[FEATURE_NAMES.index("bias")]
        for _ in range(20):
            theta = rng.normal(size=DIM)
            base = distribution(PolicyParams(theta), "guang liang", liquor_context, small_oracle)
            shifted = distribution(PolicyParams(theta + 50 * bias), "guang liang", liquor_context, small_oracle)
            assert shifted.candidates == base.candidates
            assert np.allclose(shifted.probs, base.probs, rtol=0, atol=1e-12)

    def test_identical_features_identical_probs(self, small_oracle):
        ctx = UserContext(h_query=("alpha", "omega"))
        dist = distribution(PolicyParams(np.arange(DIM, dtype=float) / 10), "q", ctx, small_oracle)
        assert dist.prob_of("q alpha") == pytest.approx(dist.prob_of("q omega"), abs=0.0)

    def test_no_overflow_at_large_logits(self, liquor_context, small_oracle):
        dist = distribution(PolicyParams(np.full(DIM, 500.0)), "guang liang", liquor_context, small_oracle)
        assert np.all(np.isfinite(dist.probs))
        assert dist.probs.sum() == pytest.approx(1.0)

    def test_params_validation(self):
        with pytest.raises(ContractError):
            PolicyParams(np.zeros(DIM + 1))
        with pytest.raises(ContractError):
            PolicyParams(np.full(DIM, np.nan))

    def test_expected_reward(self, liquor_context, small_oracle):
        enc = encode_input("guang liang", liquor_context, small_oracle)
        dist = distribution(PolicyParams.zeros(), "guang liang", liquor_context, small_oracle)
        assert expected_reward(dist, enc.rewards) == pytest.approx(enc.rewards.mean())


class TestSampling:
    def test_single_candidate(self):
        dist = PolicyDistribution(tuple(generate_candidates("x", UserContext(), RewardOracle()))[:1], np.array([1.0]))
        assert len({c.text for c in sample_group(dist, 3, 16)}) == 1

    def test_seeded(self, liquor_context, small_oracle):
        dist = distribution(PolicyParams.zeros(), "guang liang", liquor_context, small_oracle)
        assert sample_group(dist, 42, 8) == sample_group(dist, 42, 8)

    def test_group_too_small(self, liquor_context, small_oracle):
        dist = distribution(PolicyParams.zeros(), "guang liang", liquor_context, small_oracle)
        with pytest.raises(ConfigError):
            sample_group(dist, 0, 1)

    def test_uniform_frequencies(self, small_oracle):
        dist = distribution(PolicyParams.zeros(), "x", UserContext(), small_oracle)
        n = 100_000
        draws = sample_group(dist, 7, n)
        share = sum(c.is_reject for c in draws) / n
        assert abs(share - 0.5) < 3 * math.sqrt(0.25 / n)


class TestLogprob:
    def test_uniform(self, liquor_context, small_oracle):
        enc = encode_input("guang liang", liquor_context, small_oracle)
        logp, grad = logprob_and_grad(PolicyParams.zeros(), "guang liang", liquor_context, small_oracle, REJECT_TOKEN)
        assert logp == pytest.approx(-math.log(len(enc.candidates)))
        assert np.allclose(grad, enc.features[1] - enc.features.mean(axis=0))

    def test_not_a_candidate(self, liquor_context, small_oracle):
        with pytest.raises(ContractError):
            logprob_and_grad(PolicyParams.zeros(), "guang liang", liquor_context, small_oracle, "air fryer")

    def test_finite_differences(self, liquor_context, small_oracle):
        enc = encode_input("guang liang", liquor_context, small_oracle)
        rng = np.random.default_rng(0)
        h = 1e-5
        for _ in range(50):
            theta = rng.normal(size=DIM)
            index = int(rng.integers(len(enc.candidates)))
            _, grad = logprob_and_grad_of(theta, enc, index)
            numeric = np.array([
                (logprob_and_grad_of(theta + h * e, enc, index)[0] - logprob_and_grad_of(theta - h * e, enc, index)[0]) / (2 * h)
                for e in np.eye(DIM)
            ])
            assert rel_error(grad, numeric) < 1e-5


class TestParamsFile:
    def test_save_load(self, tmp_path):
        params = PolicyParams(np.linspace(-1, 1, DIM))
        assert load_params(save_params(params, tmp_path / "p.tsv")) == params

    def test_missing_feature(self, tmp_path):
        path = tmp_path / "p.tsv"
        path.write_text("bias\t1.0\n", encoding="utf-8")
        with pytest.raises(FormatError, match="missing"):
            load_params(path)

    def test_unknown_feature(self, tmp_path):
        path = tmp_path / "p.tsv"
        path.write_text("wat\t1.0\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_params(path)
