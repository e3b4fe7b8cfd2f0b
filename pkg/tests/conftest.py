import numpy as np
import pytest

from docnmt.corpus import Document, ParallelDocumentCorpus, TextCodec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_docs():
    src = [
        Document("a", ("the cat sat .", "it was happy .", "then it slept ."), title="cats"),
        Document("b", ("a dog ran .", "it barked ."), title="dogs"),
    ]
    tgt = [
        Document("a", ("die katze sass .", "sie war froh .", "dann schlief sie ."), title="katzen"),
        Document("b", ("ein hund lief .", "er bellte ."), title="hunde"),
    ]
    return ParallelDocumentCorpus(src, tgt)


@pytest.fixture
def toy_codec(toy_docs):
    sentences = []
    for s, t in toy_docs.pairs():
        sentences += list(s.sentences) + list(t.sentences) + [s.title, t.title]
    return TextCodec.train(sentences, 200)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    ran = any(item.nodeid.startswith("tests/test_acceptance.py") or "test_acceptance" in item.nodeid
              for item in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", []))
    if not ran and not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        passed, detail = ACCEPTANCE.get(n, (False, "did not report (errored or deselected)"))
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {n}: {detail}")
