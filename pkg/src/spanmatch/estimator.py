"""Scikit-learn style facade over the training and scoring pipeline.

``fit`` fine-tunes the encoder episodically on a labeled source corpus;
``predict`` recognizes entities in new sentences using only a support set,
with no retraining.  Hyperparameters follow sklearn conventions (stored
verbatim in ``__init__``, fitted state in trailing-underscore attributes), so
the estimator works with ``clone``, ``get_params`` and friends.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_labeled_sentences, as_support_set, check_token_sequences
from .corpus import SupportSet, corpus_to_support_set
from .encoders import EncoderConfig, create_encoder, encode_support_set
from .evaluation import exact_match_prf
from .scoring import Prediction, ScoringConfig, predict as score_predict
from .training import TrainingConfig, train


class ExampleSpanRecognizer(BaseEstimator):
    """Few-shot entity span recognizer driven by support examples.

    Parameters mirror the encoder, training, and scoring configurations; see
    :class:`EncoderConfig`, :class:`TrainingConfig`, :class:`ScoringConfig`.
    """

    def __init__(
        self,
        encoder_kind: str = "toy-transformer",
        dim: int = 64,
        layers: int = 2,
        heads: int = 4,
        vocab_hash_buckets: int = 8192,
        max_sequence_length: int = 384,
        k: int = 5,
        temperature: float = 1.0,
        learning_rate: float = 5e-5,
        adam_epsilon: float = 1e-8,
        weight_decay: float = 0.0,
        neg_pos_ratio: float = 1.0,
        batch_size: int = 8,
        epochs: int = 5,
        squash: str = "sigmoid",
        algorithm: str = "hard-attention",
        top_n: int = 5,
        max_span_length: int | None = None,
        seed: int = 0,
    ) -> None:
        self.encoder_kind = encoder_kind
        self.dim = dim
        self.layers = layers
        self.heads = heads
        self.vocab_hash_buckets = vocab_hash_buckets
        self.max_sequence_length = max_sequence_length
        self.k = k
        self.temperature = temperature
        self.learning_rate = learning_rate
        self.adam_epsilon = adam_epsilon
        self.weight_decay = weight_decay
        self.neg_pos_ratio = neg_pos_ratio
        self.batch_size = batch_size
        self.epochs = epochs
        self.squash = squash
        self.algorithm = algorithm
        self.top_n = top_n
        self.max_span_length = max_span_length
        self.seed = seed

    def _encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            kind=self.encoder_kind,
            dim=self.dim,
            layers=self.layers,
            heads=self.heads,
            vocab_hash_buckets=self.vocab_hash_buckets,
            seed=self.seed,
            max_sequence_length=self.max_sequence_length,
        )

    def _training_config(self) -> TrainingConfig:
        return TrainingConfig(
            k=self.k,
            temperature=self.temperature,
            learning_rate=self.learning_rate,
            adam_epsilon=self.adam_epsilon,
            weight_decay=self.weight_decay,
            max_sequence_length=self.max_sequence_length,
            neg_pos_ratio=self.neg_pos_ratio,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            squash=self.squash,
        )

    def _scoring_config(self) -> ScoringConfig:
        return ScoringConfig(
            algorithm=self.algorithm,
            k=self.k,
            temperature=self.temperature,
            top_n=self.top_n,
            max_span_length=self.max_span_length,
        )

    def fit(self, X, y=None, support_pool: SupportSet | None = None):
        """Fine-tune the encoder on a labeled corpus.

        X: sequences of token strings (or ready LabeledSentences with y=None).
        y: per-sentence lists of (start, end, entity_type) triples.
        The support pool defaults to exploding the training corpus itself.
        """
        corpus = as_labeled_sentences(X, y, id_prefix="fit")
        pool = support_pool if support_pool is not None else corpus_to_support_set(corpus)
        self.encoder_ = create_encoder(self._encoder_config())
        if self.encoder_kind == "toy-transformer" and self.epochs > 0:
            result = train(corpus, pool, self.encoder_, self._training_config())
            self.loss_curve_ = result.loss_curve
        else:
            self.loss_curve_ = []
        self.source_pool_ = pool
        return self

    def set_support(self, support) -> "ExampleSpanRecognizer":
        """Attach the inference-time support set (SupportSet or examples)."""
        self.support_set_ = as_support_set(support)
        return self

    def _resolve_support(self, support) -> SupportSet:
        if support is not None:
            return as_support_set(support)
        check_is_fitted(self, "support_set_")
        return self.support_set_

    def predict(self, X, support=None) -> list[list[tuple[int, int, str]]]:
        """Entity spans per sentence as (start, end, entity_type) triples."""
        return [p.tuples for p in self.predict_detailed(X, support)]

    def predict_detailed(self, X, support=None) -> list[Prediction]:
        """Full predictions with scores and per-support traces."""
        check_is_fitted(self, "encoder_")
        support_set = self._resolve_support(support)
        cfg = self._scoring_config()
        encoded = encode_support_set(support_set, self.encoder_)
        return [
            score_predict(tokens, encoded, self.encoder_, cfg)
            for tokens in check_token_sequences(X)
        ]

    def score(self, X, y, support=None) -> float:
        """Micro exact-match F1 against gold span triples."""
        gold = as_labeled_sentences(X, y, id_prefix="score")
        preds = self.predict_detailed(X, support)
        _, _, f1 = exact_match_prf(gold, preds)
        return f1
