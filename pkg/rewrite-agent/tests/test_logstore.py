import json

import numpy as np
import pytest

from logstore.context import ContextWindows, HistoryTracker, build_contexts
from logstore.docstore import DocStore
from logstore.ingest import ingest_logs, load_corpus, write_corpus
from logstore.models import ImpressionRecord, Interaction, VideoDoc
from logstore.sessionize import sessionize
from logstore.synth import SimConfig, UserModel, build_catalog, split_by_user, synthesize_logs
from serving.recall import RECALL_LIMIT, traditional_recall
from utils.config import parse_config
from utils.errors import ConfigError, ContractError, IntegrityError, ParseError


def write_lines(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


class TestIngest:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "logs.jsonl"
        path.write_text("", encoding="utf-8")
        corpus = ingest_logs(path)
        assert corpus.sessions == ()
        assert len(corpus.docs) == 0

    def test_one_doc_one_impression(self, tmp_path):
        path = write_lines(tmp_path / "logs.jsonl", [
            {"doc_id": "v1", "title": "guang liang liquor"},
            {"user_id": "u1", "ts": 100.0, "query": "guang liang", "results": ["v1"],
             "interactions": [{"doc_id": "v1", "dwell_s": 40.0, "clicked": True}]},
        ])
        corpus = ingest_logs(path)
        assert len(corpus.sessions) == 1
        assert len(corpus.sessions[0].impressions) == 1
        assert corpus.sessions[0].impressions[0].max_dwell == 40.0

    def test_dangling_doc_reference(self, tmp_path):
        path = write_lines(tmp_path / "logs.jsonl", [
            {"doc_id": "v1", "title": "guang liang liquor"},
            {"user_id": "u1", "ts": 1.0, "query": "q", "results": ["v1", "v404"]},
        ])
        with pytest.raises(IntegrityError, match="v404"):
            ingest_logs(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "logs.jsonl"
        path.write_text('{"doc_id": "v1", "title": "a"}\n{not json\n', encoding="utf-8")
        with pytest.raises(ParseError) as exc:
            ingest_logs(path)
        assert exc.value.line == 2

    def test_missing_field_is_parse_error(self, tmp_path):
        path = write_lines(tmp_path / "logs.jsonl", [{"user_id": "u1", "query": "q", "results": ["v1"]}])
        with pytest.raises(ParseError, match="ts"):
            ingest_logs(path)

    def test_numeric_strings_are_coerced(self, tmp_path):
        path = write_lines(tmp_path / "logs.jsonl", [
            {"doc_id": "v1", "title": "air fryer recipes"},
            {"user_id": "u1", "ts": "200", "query": "q", "results": ["v1"],
             "interactions": [{"doc_id": "v1", "dwell_s": "12.5", "clicked": True}]},
        ])
        impression = ingest_logs(path).sessions[0].impressions[0]
        assert impression.timestamp == 200.0
        assert impression.interactions[0].dwell_s == 12.5

    @pytest.mark.parametrize("row, field", [
        ({"ts": "noon"}, "ts"),
        ({"ts": True}, "ts"),
        ({"ts": "nan"}, "ts"),
        ({"interactions": [{"doc_id": "v1", "dwell_s": "long"}]}, "dwell_s"),
        ({"interactions": [{"doc_id": "v1", "dwell_s": 3.0, "clicked": "false"}]}, "clicked"),
        ({"interactions": [{"doc_id": "v1", "dwell_s": 3.0, "clicked": 1}]}, "clicked"),
    ])
    def test_badly_typed_field_reports_line_number(self, tmp_path, row, field):
        impression = {"user_id": "u1", "ts": 1.0, "query": "q", "results": ["v1"], **row}
        path = write_lines(tmp_path / "logs.jsonl", [{"doc_id": "v1", "title": "a"}, impression])
        with pytest.raises(ParseError, match=field) as exc:
            ingest_logs(path)
        assert exc.value.line == 2

    def test_separate_catalog(self, tmp_path):
        docs = write_lines(tmp_path / "docs.jsonl", [{"doc_id": "v1", "title": "air fryer recipes"}])
        logs = write_lines(tmp_path / "logs.jsonl", [
            {"user_id": "u1", "ts": 5.0, "query": "air fryer", "results": ["v1"]},
        ])
        corpus = ingest_logs(logs, docs)
        assert set(corpus.docs) == {"v1"}

    def test_interaction_on_unshown_doc_rejected(self):
        with pytest.raises(ContractError):
            ImpressionRecord("u1", 0.0, "q", ("v1",), (Interaction("v2", 3.0, True),))


class TestSessionize:
    def test_empty(self):
        assert sessionize([]) == []

    def test_within_gap_is_one_session(self, make_impression):
        sessions = sessionize([make_impression("u1", 0.0, "a", 1.0), make_impression("u1", 100.0, "b", 12.0)], 1800)
        assert len(sessions) == 1
        assert len(sessions[0].impressions) == 2

    def test_beyond_gap_splits(self, make_impression):
        sessions = sessionize([make_impression("u1", 0.0, "a", 1.0), make_impression("u1", 1801.0, "b", 12.0)], 1800)
        assert [len(s.impressions) for s in sessions] == [1, 1]

    def test_same_user_same_timestamp_rejected(self, make_impression):
        with pytest.raises(IntegrityError, match="u1"):
            sessionize([make_impression("u1", 10.0, "a", 1.0), make_impression("u1", 10.0, "b", 12.0)])

    def test_other_users_may_share_a_timestamp(self, make_impression):
        sessions = sessionize([make_impression("u1", 10.0, "a", 1.0), make_impression("u2", 10.0, "b", 12.0)])
        assert len(sessions) == 2

    def test_sessions_partition_the_input(self, make_impression):
        rng = np.random.default_rng(8)
        records = []
        for user in ("u1", "u2", "u3"):
            for ts in rng.choice(20000, size=30, replace=False):
                records.append(make_impression(user, float(ts), f"q{int(ts) % 7}", 1.0))
        rng.shuffle(records)
        sessions = sessionize(records, gap_timeout=1800)
        flat = [i for s in sessions for i in s.impressions]
        assert sorted(flat, key=lambda r: (r.user_id, r.timestamp)) == flat
        assert len(flat) == len(records)
        assert set(flat) == set(records)
        assert len({s.session_id for s in sessions}) == len(sessions)
        for s in sessions:
            assert {i.user_id for i in s.impressions} == {s.user_id}
            gaps = np.diff([i.timestamp for i in s.impressions])
            assert all(0 < g < 1800 for g in gaps)

    def test_orders_by_user_then_time(self, make_impression):
        records = [
            make_impression("u2", 50.0, "x", 1.0),
            make_impression("u1", 20.0, "b", 1.0),
            make_impression("u1", 10.0, "a", 1.0),
        ]
        sessions = sessionize(records)
        assert [s.user_id for s in sessions] == ["u1", "u2"]
        assert [i.query for i in sessions[0].impressions] == ["a", "b"]
        assert sessions[0].session_id != sessions[1].session_id


class TestContext:
    def test_history_is_strictly_before(self, catalog, make_impression, corpus_of):
        corpus = corpus_of([
            make_impression("u1", 0.0, "baijiu", 40.0, doc="v1"),
            make_impression("u1", 60.0, "guang liang", 1.0, doc="v2", clicked=False),
        ])
        contexts = build_contexts(corpus)
        session_id = corpus.sessions[0].session_id
        assert contexts[(session_id, 0)].h_query == ()
        second = contexts[(session_id, 1)]
        assert second.h_query == ("baijiu",)
        assert [v.doc_id for v in second.h_video] == ["v1"]
        assert second.geo == "region-0"

    def test_windows_bound_history(self, catalog, make_impression):
        tracker = HistoryTracker(catalog, ContextWindows(h_query=2, h_video=1))
        for i, doc in enumerate(["v1", "v2", "v3"]):
            tracker.observe(make_impression("u1", float(i), f"q{i}", 30.0, doc=doc, results=(doc,)))
        ctx = tracker.snapshot("r")
        assert ctx.h_query == ("q2", "q1")
        assert [v.doc_id for v in ctx.h_video] == ["v3"]

    def test_topic_never_exposed(self, catalog):
        tracker = HistoryTracker(catalog)
        tracker.observe(ImpressionRecord("u1", 0.0, "q", ("v1",), (Interaction("v1", 50.0, True),)))
        summary = tracker.snapshot().h_video[0]
        assert not hasattr(summary, "topic")


class TestDocStore:
    def test_nothing_matches(self, docstore):
        assert docstore.match("zzz unknown") == []

    def test_exact_title_ranks_first(self, docstore):
        assert docstore.match("air fryer recipes")[0][0] == "v3"

    def test_deterministic_tie_order(self, docstore):
        ranked = docstore.match("guang liang")
        assert [d for d, _ in ranked] == ["v1", "v2"]
        assert ranked == docstore.match("guang liang")

    def test_from_jsonl_missing_title(self, tmp_path):
        path = write_lines(tmp_path / "docs.jsonl", [{"doc_id": "v1"}])
        with pytest.raises(ParseError):
            DocStore.from_jsonl(path)


class TestSynth:
    def test_same_seed_byte_identical(self, tmp_path):
        sim = SimConfig(n_users=15)
        a = write_corpus(synthesize_logs(sim, 7), tmp_path / "a")
        b = write_corpus(synthesize_logs(sim, 7), tmp_path / "b")
        for name in ("logs.jsonl", "docs.jsonl", "ground_truth.jsonl", "users.jsonl"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_no_ambiguity_no_ground_truth(self):
        corpus = synthesize_logs(SimConfig(n_users=20, ambiguity_rate=0.0), 3)
        assert corpus.ground_truth == ()

    def test_planted_events_are_recorded(self):
        corpus = synthesize_logs(SimConfig(n_users=100, ambiguity_rate=0.2), 11)
        assert len(corpus.ground_truth) > 0
        keys = {(i.user_id, i.timestamp, i.query) for i in corpus.impressions()}
        for event in corpus.ground_truth:
            assert (event.user_id, event.timestamp, event.q_orig) in keys
            assert event.q_next.endswith(event.gain_term)

    @pytest.mark.parametrize("override", [{"n_users": 0}, {"topics": {}}, {"entities": []},
                                          {"noise_rate": 0.8, "partial_rate": 0.5}])
    def test_invalid_config(self, override):
        with pytest.raises(ConfigError):
            parse_config(SimConfig, override)

    def test_gap_timeout_must_exceed_in_session_gaps(self):
        with pytest.raises(ConfigError):
            synthesize_logs(SimConfig(n_users=2), 0, gap_timeout=100.0)

    def test_catalog_is_deterministic_with_dominant_docs_first(self):
        sim = SimConfig()
        docs = build_catalog(sim)
        assert docs == build_catalog(sim)
        entity = sim.entities[0]
        top = [d for d, _ in DocStore(docs).match(entity, sim.examine_depth)]
        assert {docs[d].topic for d in top} == {sim.dominant_topic(entity)}

    def test_bare_entity_recall_page_is_all_dominant(self):
        sim = SimConfig()
        docstore = DocStore(build_catalog(sim))
        for entity in sim.entities:
            page = traditional_recall(entity, docstore)
            assert len(page) == RECALL_LIMIT
            assert {docstore.get(d).topic for d, _ in page} == {sim.dominant_topic(entity)}
            covered = f"{entity} {sim.topics['travel'][0]}"
            if sim.dominant_topic(entity) != "travel":
                assert docstore.get(traditional_recall(covered, docstore)[0][0]).topic == "travel"

    def test_user_model_examines_fake_results(self, docstore):
        model = UserModel(docstore, examine_depth=1)
        assert model.first_satisfying("liquor", "guang liang", ["v2", "v1"]) is None
        assert model.first_satisfying("liquor", "guang liang", ["v2"], ["v1"]) == "v1"


class TestCorpusFiles:
    def test_round_trip(self, tmp_path):
        corpus = synthesize_logs(SimConfig(n_users=12), 5)
        loaded = load_corpus(write_corpus(corpus, tmp_path / "c"))
        assert loaded == corpus

    def test_missing_logs(self, tmp_path):
        with pytest.raises(ParseError):
            load_corpus(tmp_path)

    def test_split_by_user_is_disjoint(self):
        corpus = synthesize_logs(SimConfig(n_users=30), 2)
        train, test = split_by_user(corpus, 0.2, 2)
        assert not train.user_ids() & test.user_ids()
        assert train.user_ids() | test.user_ids() == corpus.user_ids()
        assert len(test.user_ids()) == 6
        assert all(e.user_id in test.user_ids() for e in test.ground_truth)

    def test_mixed_file(self, tmp_path):
        path = write_lines(tmp_path / "logs.jsonl", [
            {"user_id": "u1", "ts": 1.0, "query": "air fryer", "results": ["v3"]},
            VideoDoc("v3", "air fryer recipes").to_dict(),
        ])
        corpus = ingest_logs(path)
        assert set(corpus.docs) == {"v3"}
