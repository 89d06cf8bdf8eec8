import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlstm.detection import (DetectionConfig, StreamResult, StreamState, early_stats, evaluate,
                             first_crossing, format_table, format_tsv, predict_user,
                             stream_step, stream_step_vectors, stream_sweep, stream_user,
                             threshold_sweep, BATCH_COLUMNS)
from mlstm.embeddings import WordVectorStore
from mlstm.ingestion import (BENIGN, VANDAL, build_aspect_sequences, gen_synthetic,
                             synthetic_vocabulary)
from mlstm.model import ModelParams, init_params
from mlstm.numerics import SeededRng


@pytest.fixture(scope="module")
def setup():
    store = WordVectorStore(6, synthetic_vocabulary(6, seed=1), seed=1)
    params = init_params((6, 6, 2), 4, 2, SeededRng(3), bound=0.8)
    users = gen_synthetic(30, 5, 0.7, seed=11)
    return store, params, users


def constant_params(p_vandal):
    # Zero weights leave only the bias, so P(vandal) is constant.
    p = ModelParams((1, 1, 1), 1, 2)
    p.classifier.b[:] = [0.0, np.log(p_vandal / (1 - p_vandal))]
    return p


class TestPredict:
    def test_strict_threshold(self):
        params = constant_params(0.91)
        xs = [np.zeros((2, 1))] * 3
        prob, verdict = predict_user(params, xs, DetectionConfig(0.9))
        assert prob == pytest.approx(0.91) and verdict

    def test_equal_to_tau_is_benign(self):
        params = constant_params(0.5)
        prob, verdict = predict_user(params, [np.zeros((1, 1))] * 3, DetectionConfig(0.5))
        assert prob == 0.5 and not verdict

    def test_tiny_tau_flags_everyone(self, setup):
        store, params, users = setup
        cfg = DetectionConfig(1e-300)
        assert all(predict_user(params, build_aspect_sequences(u, store), cfg)[1] for u in users)

    @pytest.mark.parametrize("tau", [0.0, 1.0, -0.1, 1.5])
    def test_tau_range(self, tau):
        with pytest.raises(ValueError):
            DetectionConfig(tau)


class TestStream:
    def test_prefix_equivalence(self, setup):
        store, params, users = setup
        for u in users:
            a = build_aspect_sequences(u, store)
            state = StreamState.initial(params)
            for t, edit in enumerate(u.edits, start=1):
                state, prob, _ = stream_step(state, edit, params, store)
                assert state.t == t
                assert prob == predict_user(params, a.prefix(t))[0]

    def test_first_crossing(self):
        params = ModelParams((1, 1, 1), 1, 2)
        state = StreamState.initial(params)
        cfg = DetectionConfig(0.8)
        flags = []
        for p in (0.4, 0.7, 0.85):
            params = constant_params(p)
            state, _, flagged = stream_step_vectors(state, [np.zeros(1)] * 3, params, cfg)
            flags.append(flagged)
        assert state.flagged_at == 3 and flags == [False, False, True]

    def test_latching(self):
        state = StreamState.initial(constant_params(0.5))
        cfg = DetectionConfig(0.8)
        for p in (0.5, 0.9, 0.3):
            state, prob, flagged = stream_step_vectors(state, [np.zeros(1)] * 3, constant_params(p), cfg)
        assert prob == pytest.approx(0.3)
        assert state.flagged_at == 2 and flagged

    def test_stream_user(self, setup):
        store, params, users = setup
        r = stream_user(users[0], params, store)
        assert r.T == users[0].T and r.label == users[0].label
        assert r.probs[-1] == predict_user(params, build_aspect_sequences(users[0], store))[0]

    @given(st.lists(st.floats(0.001, 0.999), min_size=1, max_size=10), st.floats(0.01, 0.98), st.floats(0.0, 0.5))
    def test_flag_step_monotone_in_tau(self, probs, tau, delta):
        hi = first_crossing(probs, min(tau + delta, 0.99))
        lo = first_crossing(probs, tau)
        if hi is not None:
            assert lo is not None and lo <= hi


class TestEvaluate:
    def test_hand_example(self):
        verdicts = [True, True, True, False]
        labels = [VANDAL, VANDAL, BENIGN, BENIGN]
        r = evaluate(verdicts, labels)
        assert (r.tp, r.fp, r.fn, r.tn) == (2, 1, 0, 1)
        assert r.precision == pytest.approx(2 / 3) and r.recall == 1.0
        assert r.f1 == pytest.approx(0.8) and r.accuracy == 0.75
        assert r.degenerate == ()

    def test_perfect(self):
        r = evaluate([True, False, True], [VANDAL, BENIGN, VANDAL])
        assert (r.precision, r.recall, r.f1, r.accuracy) == (1.0, 1.0, 1.0, 1.0)

    def test_degenerate(self):
        r = evaluate([False, False], [BENIGN, BENIGN])
        assert r.precision == 0.0 and r.recall == 0.0 and r.f1 == 0.0
        assert set(r.degenerate) == {"precision", "recall", "f1"}
        assert r.accuracy == 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate([True], [])

    def test_boolean_labels(self):
        assert evaluate([True, False], [True, False]).accuracy == 1.0

    @given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=40))
    def test_recall_monotone_and_accuracy_exact(self, data):
        probs = [p for p, _ in data]
        labels = [VANDAL if y else BENIGN for _, y in data]
        rows = threshold_sweep(probs, labels)
        recalls = [r.recall for _, r in rows]
        flagged = [r.tp + r.fp for _, r in rows]
        assert all(a >= b for a, b in zip(recalls, recalls[1:]))
        assert all(a >= b for a, b in zip(flagged, flagged[1:]))
        for _, r in rows:
            assert r.accuracy == (r.tp + r.tn) / len(data)
            for v in (r.precision, r.recall, r.f1, r.accuracy):
                assert 0.0 <= v <= 1.0


class TestEarlyStats:
    def test_definitions(self):
        results = [
            StreamResult("a", VANDAL, [0.1, 0.9, 0.9, 0.9, 0.9]),   # flagged at 2 of 5: early
            StreamResult("b", VANDAL, [0.1, 0.2, 0.9]),             # flagged only at T: not early
            StreamResult("c", VANDAL, [0.1, 0.2]),                  # never flagged
            StreamResult("d", BENIGN, [0.9, 0.9]),                  # benign users ignored
        ]
        s = early_stats(results, 0.5)
        assert s.n_vandals == 3 and s.n_early == 1
        assert s.avg_edits == 2.0
        assert s.fraction_early == pytest.approx(1 / 3)

    def test_no_vandals(self):
        s = early_stats([StreamResult("d", BENIGN, [0.9])], 0.5)
        assert (s.avg_edits, s.fraction_early, s.n_vandals) == (0.0, 0.0, 0)

    def test_stream_sweep_rows(self):
        results = [StreamResult("a", VANDAL, [0.55, 0.65, 0.95]), StreamResult("b", BENIGN, [0.75, 0.1])]
        rows = stream_sweep(results)
        assert [tau for tau, _, _ in rows] == [0.5, 0.6, 0.7, 0.8, 0.9]
        # b is flagged (latched) for tau < 0.75 even though its final probability is low.
        assert [r.fp for _, r, _ in rows] == [1, 1, 1, 0, 0]
        assert [e.avg_edits for _, _, e in rows] == [1.0, 2.0, 0.0, 0.0, 0.0]


def test_tables():
    rows = [(0.5, 0.8835, 0.9667, 0.9232, 0.9133)]
    tsv = format_tsv(BATCH_COLUMNS, rows)
    assert tsv.splitlines()[0] == "tau\tprecision\trecall\tf1\taccuracy"
    assert tsv.splitlines()[1].split("\t")[0] == "0.500000"
    table = format_table(BATCH_COLUMNS, rows, percent=BATCH_COLUMNS[1:])
    assert "88.35%" in table and "91.33%" in table
