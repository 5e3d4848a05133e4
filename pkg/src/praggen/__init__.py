"""Pragmatically informative conditional text generation.

A base speaker proposes text for a structured input; a listener tries to
reconstruct the input from that text. Decoding can stay with the base
speaker, rerank its candidates by reconstructability, or steer each token
against explicit distractor inputs while tracking a listener belief over
which input is being described.
"""

from .core import (
    AttributeSchema,
    AttributeSpec,
    DegenerateDistributionError,
    Document,
    MeaningRepresentation,
    TokenSequence,
    UnbuildableContextError,
    Vocabulary,
    default_schema,
    detokenize,
    linearize_mr,
    load_schema,
    log_normalize,
    tokenize,
    validate_mr,
)
from .data import (
    CorpusRecord,
    SyntheticGrammar,
    build_corpus_vocabulary,
    default_grammar,
    delexicalize,
    generate_corpus,
    parse_e2e_csv,
    read_jsonl,
    relexicalize,
    write_jsonl,
)
from .distractor import (
    DistractorPolicy,
    ValueFrequencyTable,
    mask_all_distractor,
    mask_single_distractor,
    previous_unit_distractor,
    value_frequencies,
)
from .evaluation import (
    CoverageMatcher,
    ablation_matrix,
    bleu,
    coverage_ratio,
    rouge_l,
)
from .listener import (
    AttributeClassifierListener,
    ListenerModel,
    ReverseSpeakerListener,
    load_listener,
    reconstruction_logprob,
    save_listener,
    train_attribute_listener,
    train_reverse_listener,
)
from .pragmatics import (
    BeliefCollapseError,
    BeliefState,
    DecodeConfig,
    ScoredCandidate,
    beam_search,
    belief_update,
    distractor_step_scores,
    generate,
    pragmatic_decode_distractor,
    rerank_reconstructor,
)
from .speaker import (
    EnsembleSpeaker,
    NGramSpeaker,
    SpeakerModel,
    ensemble_logprob,
    load_speaker,
    next_token_logprobs,
    save_speaker,
    sequence_logprob,
    train_ngram_speaker,
)

__version__ = "0.1.0"

__all__ = [
    "AttributeClassifierListener",
    "AttributeSchema",
    "AttributeSpec",
    "BeliefCollapseError",
    "BeliefState",
    "CorpusRecord",
    "CoverageMatcher",
    "DecodeConfig",
    "DegenerateDistributionError",
    "DistractorPolicy",
    "Document",
    "EnsembleSpeaker",
    "ListenerModel",
    "MeaningRepresentation",
    "NGramSpeaker",
    "ReverseSpeakerListener",
    "ScoredCandidate",
    "SpeakerModel",
    "SyntheticGrammar",
    "TokenSequence",
    "UnbuildableContextError",
    "ValueFrequencyTable",
    "Vocabulary",
    "ablation_matrix",
    "beam_search",
    "belief_update",
    "bleu",
    "build_corpus_vocabulary",
    "coverage_ratio",
    "default_grammar",
    "default_schema",
    "delexicalize",
    "detokenize",
    "distractor_step_scores",
    "ensemble_logprob",
    "generate",
    "generate_corpus",
    "linearize_mr",
    "load_listener",
    "load_schema",
    "load_speaker",
    "log_normalize",
    "mask_all_distractor",
    "mask_single_distractor",
    "next_token_logprobs",
    "parse_e2e_csv",
    "pragmatic_decode_distractor",
    "previous_unit_distractor",
    "read_jsonl",
    "reconstruction_logprob",
    "relexicalize",
    "rerank_reconstructor",
    "rouge_l",
    "save_listener",
    "save_speaker",
    "sequence_logprob",
    "tokenize",
    "train_attribute_listener",
    "train_ngram_speaker",
    "train_reverse_listener",
    "validate_mr",
    "value_frequencies",
    "write_jsonl",
]
