"""spanmatch: train-free, example-based named-entity span extraction."""
from .corpus import (
    CorpusError,
    EntitySpan,
    LabeledSentence,
    MARKER_END,
    MARKER_START,
    Sentence,
    SupportExample,
    SupportSet,
    Token,
    build_support_set,
    corpus_to_support_set,
    explode_to_support_examples,
    load_support_json,
    make_support_example,
    make_tokens,
    read_bio_corpus,
    save_support_json,
    strip_markers,
    write_bio,
)
from .encoders import (
    EncodedSequence,
    Encoder,
    EncoderConfig,
    EncoderError,
    StaticHashEncoder,
    SupportEncoding,
    ToyTransformerEncoder,
    create_encoder,
    encode_support_set,
    load_precomputed,
    save_precomputed,
)
from .estimator import ExampleSpanRecognizer
from .evaluation import EvalProtocol, EvalReport, exact_match_prf, run_protocol, sample_support
from .scoring import (
    Prediction,
    ScoredSpan,
    ScoringConfig,
    hard_attention_scores,
    predict,
    soft_attention_scores,
    top_span,
    topk_soft_attention_scores,
    vote_predict,
)
from .similarity import AttentionWeights, PairSimilarity, sentence_attention, token_boundary_similarity
from .synth import SynthSpec, default_spec, generate
from .training import (
    BoundaryScores,
    LossBreakdown,
    TrainingConfig,
    TrainingEpisode,
    TrainingLabels,
    build_episodes,
    build_labels,
    episode_loss,
    episode_scores,
    train,
)

__version__ = "0.1.0"
