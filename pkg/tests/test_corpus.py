from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docnmt.corpus import (
    BOS_ID,
    BREAK_ID,
    DOCSTART_ID,
    END_OF_WORD,
    RESERVED_TOKENS,
    ContextSample,
    ContrastiveInstance,
    CorefAnnotation,
    CorpusError,
    Document,
    ParallelDocumentCorpus,
    TextCodec,
    Vocab,
    bpe_apply,
    bpe_decode,
    bpe_train,
    build_context_samples,
    corpus_stats,
    document_samples,
    escape_sentence,
    filter_intersentential,
    load_alignments,
    load_contrastive,
    load_coref,
    load_documents,
    load_parallel,
    load_samples,
    parse_alignment_line,
    save_alignments,
    save_contrastive,
    save_coref,
    save_documents,
    save_parallel,
    save_samples,
    split_headline_body,
    unescape_sentence,
)
from docnmt.corpus.bpe import BpeModel


def brute_force_merges(words: Counter, n: int) -> list[tuple[str, str]]:
    """Replay BPE learning by recounting every adjacent pair from scratch."""
    segs = {w: list(w[:-1]) + [w[-1] + END_OF_WORD] for w in words}
    merges = []
    for _ in range(n):
        counts: Counter = Counter()
        for w, s in segs.items():
            for a, b in zip(s, s[1:]):
                counts[a, b] += words[w]
        if not counts:
            break
        top = max(counts.values())
        best = sorted(p for p, c in counts.items() if c == top)[0]
        merges.append(best)
        for w, s in segs.items():
            out, i = [], 0
            while i < len(s):
                if i + 1 < len(s) and (s[i], s[i + 1]) == best:
                    out.append(s[i] + s[i + 1])
                    i += 2
                else:
                    out.append(s[i])
                    i += 1
            segs[w] = out
    return merges


words = st.text(alphabet="abcde", min_size=1, max_size=6)
sentences = st.lists(words, min_size=1, max_size=6).map(" ".join)


class TestBpe:
    def test_low_lower_first_two_merges(self):
        model = bpe_train(["low", "low", "lower"], 2)
        assert list(model.merges) == [("l", "o"), ("lo", "w</w>")]
        assert list(model.merges) == brute_force_merges(Counter({"low": 2, "lower": 1}), 2)

    def test_lower_segmentation_replays_merges(self):
        model = bpe_train(["low", "low", "lower"], 2)
        assert bpe_apply(model, "lower") == ["lo", "w", "e", "r</w>"]

    def test_zero_merges_is_char_split(self):
        model = bpe_train(["hello"], 0)
        assert bpe_apply(model, "abc") == ["a", "b", "c</w>"]

    def test_empty_corpus_rejected(self):
        with pytest.raises(CorpusError):
            bpe_train([], 10)

    def test_empty_sentence(self):
        model = bpe_train(["a b"], 3)
        assert bpe_apply(model, "") == []
        assert bpe_decode([]) == ""

    def test_save_load(self, tmp_path):
        model = bpe_train(["the cat sat on the mat", "the hat"], 10)
        model.save(tmp_path / "bpe.txt")
        assert BpeModel.load(tmp_path / "bpe.txt") == model

    @settings(max_examples=40, deadline=None)
    @given(st.lists(sentences, min_size=1, max_size=8), st.integers(0, 30))
    def test_matches_brute_force_oracle(self, corpus, n):
        counts = Counter(w for s in corpus for w in s.split())
        assert list(bpe_train(corpus, n).merges) == brute_force_merges(counts, n)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(sentences, min_size=1, max_size=8), st.integers(0, 30))
    def test_round_trip(self, corpus, n):
        model = bpe_train(corpus, n)
        for s in corpus:
            assert bpe_decode(bpe_apply(model, s)) == s


class TestCodec:
    def test_reserved_ids(self):
        v = Vocab()
        assert [v.id(t) for t in RESERVED_TOKENS] == list(range(7))

    def test_unknown_maps_to_unk(self, toy_codec):
        assert toy_codec.encode("zzzzqq").count(1) >= 1

    def test_round_trip(self, toy_codec, toy_docs):
        for s, _ in toy_docs.pairs():
            for sent in s.sentences:
                assert toy_codec.decode(toy_codec.encode(sent)) == sent

    def test_decode_skips_bos_eos(self, toy_codec):
        ids = toy_codec.encode("the cat")
        assert toy_codec.decode([BOS_ID] + ids + [3]) == "the cat"

    def test_vocab_save_load(self, toy_codec, tmp_path):
        toy_codec.vocab.save(tmp_path / "v.txt")
        loaded = Vocab.load(tmp_path / "v.txt")
        assert loaded == toy_codec.vocab
        assert loaded.digest() == toy_codec.vocab.digest()

    def test_vocab_load_checks_reserved(self, tmp_path):
        (tmp_path / "v.txt").write_text("a\nb\n")
        with pytest.raises(CorpusError):
            Vocab.load(tmp_path / "v.txt")


class TestEscaping:
    def test_literal_reserved_token_survives(self):
        s = "see <break> here"
        esc = escape_sentence(s)
        assert esc != s
        assert unescape_sentence(esc) == s

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from(list(RESERVED_TOKENS) + ["\\" + RESERVED_TOKENS[4], "x", "y"]), max_size=6))
    def test_escape_inverse(self, toks):
        s = " ".join(toks)
        assert unescape_sentence(escape_sentence(s)) == s

    def test_escaped_reserved_not_special(self):
        codec = TextCodec.train([escape_sentence(f"a {RESERVED_TOKENS[4]} b")], 5)
        ids = codec.encode(escape_sentence(f"a {RESERVED_TOKENS[4]} b"))
        assert BREAK_ID not in ids


class TestSamples:
    @pytest.fixture
    def doc_codec(self):
        codec = TextCodec.train(["aa bb cc"], 10)
        return codec, Document("d", ("aa", "bb", "cc"), title="aa bb")

    def test_2to1_contexts(self, doc_codec):
        codec, doc = doc_codec
        out = document_samples(doc, doc, "2to1", codec)
        assert [s.src_context for s in out] == [(DOCSTART_ID,), tuple(codec.encode("aa")), tuple(codec.encode("bb"))]

    def test_3to1_contexts(self, doc_codec):
        codec, doc = doc_codec
        out = document_samples(doc, doc, "3to1", codec)
        a, b = codec.encode("aa"), codec.encode("bb")
        assert [s.src_context for s in out] == [(DOCSTART_ID,), tuple(a), tuple(a + [BREAK_ID] + b)]

    def test_2to2_has_target_context(self, doc_codec):
        codec, doc = doc_codec
        out = document_samples(doc, doc, "2to2", codec)
        assert out[0].tgt_context == (DOCSTART_ID,)
        assert out[2].tgt_context == tuple(codec.encode("bb"))

    def test_title_context(self, doc_codec):
        codec, doc = doc_codec
        out = document_samples(doc, doc, "title", codec)
        assert all(s.src_context == tuple(codec.encode("aa bb")) for s in out)

    def test_title_missing_names_doc(self, doc_codec):
        codec, _ = doc_codec
        with pytest.raises(CorpusError, match="untitled"):
            document_samples(Document("untitled", ("aa",)), None, "title", codec)

    def test_context_never_crosses_documents(self, toy_docs, toy_codec):
        out = build_context_samples(toy_docs, "2to1", toy_codec)
        assert len(out) == toy_docs.n_sentences
        firsts = [s for s in out if s.sent_index == 0]
        assert [s.src_context for s in firsts] == [(DOCSTART_ID,)] * 2

    def test_sent_with_context_rejected(self):
        with pytest.raises(CorpusError):
            ContextSample((8,), (9,), (8,), None, "sent", "d", 0)

    def test_save_load(self, toy_docs, toy_codec, tmp_path):
        out = build_context_samples(toy_docs, "2to2", toy_codec)
        save_samples(tmp_path / "s.jsonl", out)
        assert load_samples(tmp_path / "s.jsonl") == out


class TestDocuments:
    def test_stats_example(self):
        assert corpus_stats([Document("d", ("a b c", "a b c d e"))]) == (2, 8, 4)

    def test_headline_split_counts(self):
        docs = [Document("x", ("h",) + ("b",) * 3), Document("y", ("h",) + ("b",) * 5)]
        heads, body = split_headline_body(docs)
        assert len(heads) == 2 and len(body) == 8

    def test_single_sentence_doc_is_headline(self):
        heads, body = split_headline_body([Document("x", ("only",))])
        assert heads == [("x", 0)] and body == []

    def test_misaligned_corpus_rejected(self):
        with pytest.raises(CorpusError):
            ParallelDocumentCorpus([Document("a", ("x", "y"))], [Document("a", ("x",))])

    def test_duplicate_ids_rejected(self):
        d = Document("a", ("x",))
        with pytest.raises(CorpusError):
            ParallelDocumentCorpus([d, d], [d, d])

    def test_empty_document_rejected(self):
        with pytest.raises(CorpusError):
            Document("a", ())

    def test_parallel_round_trip(self, toy_docs, tmp_path):
        save_parallel(toy_docs, tmp_path / "s.jsonl", tmp_path / "t.jsonl")
        back = load_parallel(tmp_path / "s.jsonl", tmp_path / "t.jsonl")
        assert back == toy_docs
        save_documents(tmp_path / "s2.jsonl", back.source_docs)
        assert (tmp_path / "s.jsonl").read_bytes() == (tmp_path / "s2.jsonl").read_bytes()

    def test_bad_jsonl_line_number(self, tmp_path):
        (tmp_path / "d.jsonl").write_text('{"id": "a", "sentences": ["x"]}\n{oops\n')
        with pytest.raises(CorpusError, match=":2:"):
            load_documents(tmp_path / "d.jsonl")


class TestAnnotations:
    def test_intra_sentential_excluded(self):
        ann = CorefAnnotation("d", (((1, (0, 1)), (1, (3, 4))),))
        assert filter_intersentential([ann]) == []

    def test_previous_sentence_included(self):
        ann = CorefAnnotation("d", (((0, (0, 1)), (1, (0, 1))),))
        assert filter_intersentential([ann]) == [("d", 0, 1)]

    def test_nearest_antecedent_decides(self):
        # the anaphor's nearest antecedent is in its own sentence
        ann = CorefAnnotation("d", (((0, (0, 1)), (2, (4, 5))), ((2, (0, 1)), (2, (4, 5)))))
        assert filter_intersentential([ann]) == []

    def test_out_of_bounds_span(self):
        ann = CorefAnnotation("d", (((0, (0, 9)), (1, (0, 1))),))
        with pytest.raises(CorpusError):
            filter_intersentential([ann], documents=[Document("d", ("a b", "c d"))])

    def test_coref_round_trip(self, tmp_path):
        anns = [CorefAnnotation("d", (((0, (0, 1)), (1, (0, 1))),))]
        save_coref(tmp_path / "c.jsonl", anns)
        assert load_coref(tmp_path / "c.jsonl") == anns

    def test_single_pair_form_accepted(self):
        ann = CorefAnnotation.from_json({"doc": "d", "pairs": [[0, [0, 1]], [1, [0, 1]]]})
        assert len(ann.pairs) == 1

    def test_contrastive_round_trip(self, tmp_path):
        inst = [ContrastiveInstance(("it rained .",), "it was wet .", "es war nass .", ("er war nass .",), "es")]
        save_contrastive(tmp_path / "c.jsonl", inst)
        assert load_contrastive(tmp_path / "c.jsonl") == inst

    def test_contrastive_correct_among_wrong(self):
        with pytest.raises(CorpusError):
            ContrastiveInstance((), "s", "a", ("a",))

    def test_alignments(self, tmp_path):
        rows = [parse_alignment_line("0-0 1-2"), []]
        save_alignments(tmp_path / "a.txt", rows)
        assert load_alignments(tmp_path / "a.txt") == [[(0, 0), (1, 2)], []]
        with pytest.raises(CorpusError):
            parse_alignment_line("0:1")


class TestCorpusRoundTrip:
    def test_bpe_round_trip_thousand_sentences(self):
        rng = np.random.default_rng(5)
        alphabet = list("abcdefghij")
        sents = [
            " ".join("".join(rng.choice(alphabet, size=int(rng.integers(1, 8)))) for _ in range(int(rng.integers(1, 10))))
            for _ in range(1000)
        ]
        codec = TextCodec.train(sents, 300)
        assert all(codec.decode(codec.encode(s)) == s for s in sents)
