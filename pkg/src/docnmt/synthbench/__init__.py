"""Synthetic discourse language and the desk-scale comparison harness."""

from .grammar import (
    GrammarError,
    Noun,
    SynthCorpusBundle,
    SynthGrammar,
    gen_corpus,
    generate_documents,
    make_grammar,
)
from .harness import (
    BudgetMismatch,
    ComparisonReport,
    HarnessConfig,
    SystemSpec,
    Workbench,
    build_codec,
    default_finetune,
    run_bt_experiment,
    run_comparison,
    system_spec,
)
from .oracle import (
    agreement_counts,
    agreement_rate,
    antecedent,
    majority_scorer,
    oracle_scorer,
    pronoun_gender,
    shuffle_context,
)
