"""Document-aware data model: ingestion, BPE, vocabulary and sample construction."""

from .annotations import (
    ContrastiveInstance,
    CorefAnnotation,
    filter_intersentential,
    load_alignments,
    load_contrastive,
    load_coref,
    parse_alignment_line,
    save_alignments,
    save_contrastive,
    save_coref,
)
from .bpe import END_OF_WORD, BpeModel, bpe_apply, bpe_decode, bpe_train
from .documents import (
    RESERVED_TOKENS,
    CorpusError,
    Document,
    ParallelDocumentCorpus,
    atomic_write_text,
    corpus_stats,
    escape_sentence,
    load_documents,
    load_parallel,
    read_jsonl,
    save_documents,
    save_parallel,
    split_headline_body,
    tokenize,
    unescape_sentence,
    write_jsonl,
)
from .samples import (
    SAMPLE_KINDS,
    ContextSample,
    build_context_samples,
    document_samples,
    load_samples,
    save_samples,
)
from .vocab import (
    BOS_ID,
    BREAK_ID,
    DOCSTART_ID,
    EOS_ID,
    MASK_ID,
    PAD_ID,
    UNK_ID,
    TextCodec,
    Vocab,
)
