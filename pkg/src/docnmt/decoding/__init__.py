"""Beam search, 2to2 output splitting and back-translation."""

from .search import (
    DEFAULT_ALPHA,
    NEVER_EMIT,
    Hypothesis,
    beam_search,
    default_max_len,
    diagnostics,
    greedy,
    length_penalty,
    score_sequence,
    score_sequences,
    split_2to2,
)
from .translate import (
    PROVENANCE,
    SyntheticCorpus,
    Translation,
    backtranslate,
    load_translations,
    save_translations,
    translate,
    translate_sample,
)
