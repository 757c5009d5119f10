import json
import math
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from affectmirror.emotions import SeedText
from affectmirror.poet import (
    END_TOKEN,
    GenerationError,
    GenerationParams,
    NgramBackend,
    Poem,
    Rejection,
    RemoteBackend,
    detokenize,
    generate_raw,
    load_corpus,
    load_ngram,
    make_poem,
    ngram_next_logits,
    remote_generate,
    sample_token,
    save_ngram,
    tokenize,
    train_ngram,
    trim_and_validate,
    word_count,
)

from helpers import FailingBackend, RejectingBackend, ScriptedBackend

SEED = SeedText(prefix="You are", emotion_word="glad")


class TestTokenize:
    def test_newlines_are_tokens(self):
        assert tokenize("a b\nc") == ["a", "b", "\n", "c"]

    def test_blank_lines_preserved(self):
        assert tokenize("a\n\nb") == ["a", "\n", "\n", "b"]

    def test_round_trip(self):
        text = "You are glad\nof the morning,\n\nand the light."
        assert detokenize(tokenize(text)) == text

    def test_word_count_spans_lines(self):
        assert word_count("one two\nthree  four\n") == 4


class TestSampleToken:
    def test_top_1_is_argmax(self):
        rng = np.random.default_rng(0)
        for temp in (0.1, 0.8, 10.0):
            assert sample_token([0.5, 3.0, 1.0], temp, 1, rng) == 1

    def test_top_1_tie_breaks_to_lowest_id(self):
        rng = np.random.default_rng(0)
        assert sample_token([2.0, 2.0, 1.0], 1.0, 1, rng) == 0

    def test_seeded_determinism(self):
        logits = [2.0, 1.0, 0.0, -1.0]
        a = sample_token(logits, 0.8, 3, np.random.default_rng(42))
        b = sample_token(logits, 0.8, 3, np.random.default_rng(42))
        assert a == b

    def test_frequencies_match_truncated_softmax(self):
        # temperature 1, top_k 2 on [2,1,0]: P = (0.7311, 0.2689, 0)
        rng = np.random.default_rng(7)
        n = 20_000
        counts = np.zeros(3, dtype=int)
        for _ in range(n):
            counts[sample_token([2.0, 1.0, 0.0], 1.0, 2, rng)] += 1
        assert counts[2] == 0
        p = 1 / (1 + math.exp(-1))
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(counts[0] - n * p) <= 3 * sigma

    def test_all_neg_inf_is_error(self):
        with pytest.raises(GenerationError):
            sample_token([-np.inf, -np.inf], 1.0, 2, np.random.default_rng(0))

    def test_non_finite_logits_rejected(self):
        with pytest.raises(GenerationError):
            sample_token([np.nan, 1.0], 1.0, 2, np.random.default_rng(0))

    @given(
        logits=st.lists(st.floats(-50, 50), min_size=1, max_size=30),
        top_k=st.integers(1, 30),
        temp=st.floats(0.05, 5.0),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=300, deadline=None)
    def test_never_leaves_top_k_set(self, logits, top_k, temp, seed):
        z = np.array(logits)
        tok = sample_token(z, temp, top_k, np.random.default_rng(seed))
        k = min(top_k, len(logits))
        order = np.argsort(-z, kind="stable")[:k]
        assert tok in set(int(i) for i in order)


class TestNgram:
    def test_conditional_probability_hand_count(self):
        # corpus "a b a b": bigram counts a->b twice; vocabulary {a, b, END}
        alpha = 0.5
        model = train_ngram(["a b a b"], order=2, alpha=alpha)
        logits = ngram_next_logits(model, ["a"])
        probs = np.exp(logits)
        v = len(model.vocab)
        assert v == 3
        want = (2 + alpha) / (2 + alpha * v)
        assert probs[model.index["b"]] == pytest.approx(want)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_single_word_document_forces_chain(self):
        model = train_ngram(["hello"], order=3, alpha=0.0)
        backend = NgramBackend(model)
        raw = generate_raw(
            backend,
            SeedText(prefix="hello", emotion_word="hello"),
            GenerationParams(max_words=10, min_words=1),
            np.random.default_rng(0),
        )
        assert not raw.hit_budget

    def test_document_boundaries_never_bridged(self):
        model = train_ngram(["a b", "c d"], order=2, alpha=0.0)
        # context "b" was never followed by "c": only END observed after b
        logits = ngram_next_logits(model, ["b"])
        probs = np.exp(logits)
        assert probs[model.index["c"]] == 0.0
        assert probs[model.index[END_TOKEN]] == pytest.approx(1.0)

    def test_observed_successors_rank_above_unobserved(self):
        model = train_ngram(["the sun rises", "the sun sets"], order=3, alpha=0.1)
        logits = ngram_next_logits(model, ["the", "sun"])
        assert logits[model.index["rises"]] > logits[model.index["the"]]
        assert logits[model.index["sets"]] > logits[model.index["the"]]

    def test_unseen_context_backs_off(self):
        model = train_ngram(["a b c"], order=3, alpha=0.2)
        # trigram context (z, b) unseen -> falls back to bigram (b,)
        got = ngram_next_logits(model, ["z", "b"])
        want = ngram_next_logits(model, ["b"])
        assert np.allclose(got, want)

    def test_alpha_zero_empty_model_is_uniform(self):
        model = train_ngram(["x"], order=2, alpha=0.0)
        model.counts = [{} for _ in range(model.order)]
        model.totals = [{} for _ in range(model.order)]
        logits = ngram_next_logits(model, ["x"])
        assert np.allclose(np.exp(logits), 1 / len(model.vocab))

    def test_all_context_distributions_sum_to_one(self):
        docs = ["the rain falls\non the quiet roof", "you are the rain"]
        model = train_ngram(docs, order=3, alpha=0.05)
        for level in model.counts:
            for ctx in level:
                probs = np.exp(ngram_next_logits(model, list(ctx)))
                assert probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_corpus_loader_splits_on_separator(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("doc one here\n%%\ndoc two there\n%%\n")
        assert load_corpus(path) == ["doc one here", "doc two there"]

    def test_corpus_loader_rejects_empty(self, tmp_path):
        path = tmp_path / "corpus.txt"
        path.write_text("%%\n%%\n")
        with pytest.raises(ValueError):
            load_corpus(path)

    def test_model_save_load_round_trip(self, tmp_path):
        model = train_ngram(["you are glad\nof the light", "so it goes"], order=3, alpha=0.01)
        path = tmp_path / "model.json"
        save_ngram(model, path)
        loaded = load_ngram(path)
        assert loaded.vocab == model.vocab
        ctx = ["you"]
        assert np.allclose(ngram_next_logits(loaded, ctx), ngram_next_logits(model, ctx))


class TestGenerateRaw:
    def test_deterministic_single_path(self):
        backend = ScriptedBackend(["of", "the", "morning", "light."])
        raw = generate_raw(backend, SEED, GenerationParams(), np.random.default_rng(0))
        assert raw.text == "You are glad of the morning light."
        assert not raw.hit_budget

    def test_different_seeds_can_differ(self):
        model = train_ngram(
            ["you are glad of rain", "you are glad of sun", "you are glad of wind"],
            order=3,
            alpha=0.0,
        )
        backend = NgramBackend(model)
        outs = {
            generate_raw(backend, SEED, GenerationParams(), np.random.default_rng(s)).text
            for s in range(100)
        }
        assert len(outs) > 1

    def test_budget_exhaustion_is_flagged(self):
        class LoopBackend(ScriptedBackend):
            def next_logits(self, context):
                logits = np.full(len(self.vocab), -np.inf)
                logits[self.vocab.index("la")] = 0.0
                return logits

        backend = LoopBackend([])
        params = GenerationParams(max_words=10, min_words=1)
        raw = generate_raw(backend, SEED, params, np.random.default_rng(0))
        assert raw.hit_budget
        assert word_count(raw.text) <= 3 + 4 * params.max_words

    def test_backend_failure_carries_identity(self):
        class BrokenBackend(ScriptedBackend):
            def next_logits(self, context):
                raise RuntimeError("boom")

        with pytest.raises(GenerationError, match="scripted"):
            generate_raw(BrokenBackend([]), SEED, GenerationParams(), np.random.default_rng(0))


class TestTrimAndValidate:
    def test_cut_at_last_terminal_punctuation(self):
        raw = "You are glad. The sun ri"
        poem = trim_and_validate(raw, SEED, GenerationParams(min_words=3))
        assert isinstance(poem, Poem)
        assert poem.body == "You are glad."
        # same cut with the default minimum: the trimmed text is rejected short
        result = trim_and_validate(raw, SEED, GenerationParams())
        assert isinstance(result, Rejection)
        assert result.text == "You are glad."

    def test_cut_lands_on_latest_punctuation(self):
        result = trim_and_validate(
            "You are glad of the sun. it ri", SEED, GenerationParams()
        )
        assert isinstance(result, Poem)
        assert result.body == "You are glad of the sun."

    def test_too_short_is_rejected(self):
        result = trim_and_validate("You are frustrated", SeedText("You are", "frustrated"), GenerationParams())
        assert isinstance(result, Rejection)
        assert result.reason == "too_short"

    def test_word_cap_applies_across_lines(self):
        raw = "You are glad\n" + "\n".join(f"word{i} next{i}" for i in range(100))
        result = trim_and_validate(raw, SEED, GenerationParams(max_words=80))
        assert isinstance(result, Poem)
        assert result.word_count <= 80

    def test_line_cut_when_budget_hit_without_punctuation(self):
        raw = "You are glad of light\nand of rain\nand of half a tho"
        result = trim_and_validate(raw, SEED, GenerationParams(), hit_budget=True)
        assert isinstance(result, Poem)
        assert result.body == "You are glad of light\nand of rain"

    def test_complete_unpunctuated_poem_keeps_all_lines(self):
        raw = "You are glad of light\nand of rain\nand of wind"
        result = trim_and_validate(raw, SEED, GenerationParams(), hit_budget=False)
        assert isinstance(result, Poem)
        assert result.body == raw

    def test_formatting_preserved(self):
        raw = "You are glad,\n  and the window keeps\nits morning light."
        result = trim_and_validate(raw, SEED, GenerationParams())
        assert isinstance(result, Poem)
        assert result.body == raw

    def test_raw_must_start_with_seed(self):
        with pytest.raises(ValueError):
            trim_and_validate("Something else", SEED, GenerationParams())

    @given(
        words=st.lists(
            st.sampled_from(
                ["rain", "light", "you", "still,", "window.", "glass!", "dusk?", "slow"]
            ),
            min_size=0,
            max_size=160,
        ),
        newline_every=st.integers(3, 9),
        hit_budget=st.booleans(),
    )
    @settings(max_examples=300, deadline=None)
    def test_accepted_poems_satisfy_contract(self, words, newline_every, hit_budget):
        parts = []
        for i, w in enumerate(words):
            parts.append(w)
            if (i + 1) % newline_every == 0:
                parts.append("\n")
        raw = SEED.text + (" " + detokenize(parts) if parts else "")
        params = GenerationParams()
        result = trim_and_validate(raw, SEED, params, hit_budget=hit_budget)
        if isinstance(result, Rejection):
            assert word_count(result.text) < params.min_words
            return
        assert params.min_words <= result.word_count <= params.max_words
        assert result.body.startswith(SEED.text)
        tail = result.body[len(SEED.text) :]
        if any(c in ".!?" for c in tail):
            assert result.body[-1] in ".!?"


class TestMakePoem:
    def test_first_attempt_valid_uses_one_call(self):
        backend = ScriptedBackend(["of", "the", "morning", "light."])
        poem = make_poem(backend, SEED, GenerationParams(), np.random.default_rng(0))
        assert backend.calls == 1
        assert poem.body == "You are glad of the morning light."
        assert not poem.fallback

    def test_rejections_retry_with_same_seed_then_fallback(self):
        backend = RejectingBackend()
        params = GenerationParams(max_attempts=3)
        poem = make_poem(backend, SEED, params, np.random.default_rng(0))
        assert backend.calls == 3
        assert poem.fallback
        assert poem.body.startswith(SEED.text)
        assert poem.body.endswith(params.fallback_line)

    def test_hard_failure_raises_after_retries(self):
        backend = FailingBackend()
        with pytest.raises(GenerationError):
            make_poem(backend, SEED, GenerationParams(max_attempts=2), np.random.default_rng(0))
        assert backend.calls == 2


# --- remote backend ----------------------------------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    mode = "echo"

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length))
        if self.mode == "slow":
            time.sleep(1.5)
        if self.mode == "empty":
            body = b""
        elif self.mode == "no_text":
            body = json.dumps({"something": "else"}).encode()
        else:
            text = payload["seed_text"] + " and the day begins again."
            body = json.dumps({"text": text}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/"
    server.shutdown()


class TestRemoteBackend:
    def test_echo_server_round_trip(self, stub_server):
        _StubHandler.mode = "echo"
        text = remote_generate(stub_server, SEED, GenerationParams())
        assert text == "You are glad and the day begins again."

    def test_empty_body_is_malformed(self, stub_server):
        _StubHandler.mode = "empty"
        with pytest.raises(GenerationError, match="JSON|malformed"):
            remote_generate(stub_server, SEED, GenerationParams())
        _StubHandler.mode = "echo"

    def test_missing_text_is_malformed(self, stub_server):
        _StubHandler.mode = "no_text"
        with pytest.raises(GenerationError, match="malformed"):
            remote_generate(stub_server, SEED, GenerationParams())
        _StubHandler.mode = "echo"

    def test_timeout(self, stub_server):
        _StubHandler.mode = "slow"
        t0 = time.perf_counter()
        with pytest.raises(GenerationError):
            remote_generate(stub_server, SEED, GenerationParams(), timeout=0.3)
        assert time.perf_counter() - t0 < 1.4
        _StubHandler.mode = "echo"

    def test_backend_wrapper_makes_poems(self, stub_server):
        _StubHandler.mode = "echo"
        backend = RemoteBackend(stub_server)
        poem = make_poem(backend, SEED, GenerationParams(), np.random.default_rng(0))
        assert poem.body.startswith("You are glad")

    def test_unreachable_endpoint(self):
        with pytest.raises(GenerationError):
            remote_generate("http://127.0.0.1:1/", SEED, GenerationParams(), timeout=0.5)
