"""Data model and ingestion: BIO-tagged corpora, gold spans, marked support examples.

A support example is a sentence containing exactly one entity, wrapped in the
reserved boundary marker tokens.  Sentences with several entities are exploded
into one support example per entity.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

log = logging.getLogger(__name__)

# Reserved marker surface forms.  Angle-bracket glyphs outside ASCII so they can
# never collide with whitespace-tokenized corpus text.
MARKER_START = "⟨e⟩"      # ⟨e⟩
MARKER_END = "⟨/e⟩"       # ⟨/e⟩


class CorpusError(ValueError):
    """Raised for malformed corpus files or inconsistent span annotations."""


@dataclass(frozen=True)
class Token:
    """A single whitespace token with its 0-based position in the sentence."""

    text: str
    index: int

    def __post_init__(self) -> None:
        if not self.text:
            raise CorpusError("token text must be non-empty")
        if self.index < 0:
            raise CorpusError(f"token index must be >= 0, got {self.index}")


def make_tokens(texts: Sequence[str]) -> tuple[Token, ...]:
    """Build a contiguous token tuple from surface forms."""
    return tuple(Token(text, i) for i, text in enumerate(texts))


def token_texts(tokens: Iterable[Token | str]) -> list[str]:
    """Surface forms of a token sequence; accepts Token objects or raw strings."""
    return [t.text if isinstance(t, Token) else t for t in tokens]


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    source_id: str = ""

    def __post_init__(self) -> None:
        if len(self.tokens) < 1:
            raise CorpusError("sentence must contain at least one token")
        for i, tok in enumerate(self.tokens):
            if tok.index != i:
                raise CorpusError(
                    f"token indices must be contiguous from 0; "
                    f"position {i} holds index {tok.index}"
                )

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Inclusive token-index span labeled with an entity type."""

    start: int
    end: int
    entity_type: str

    def __post_init__(self) -> None:
        if not (0 <= self.start <= self.end):
            raise CorpusError(f"invalid span bounds ({self.start}, {self.end})")
        if not self.entity_type:
            raise CorpusError("entity_type must be non-empty")

    def overlaps(self, other: "EntitySpan") -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass(frozen=True)
class LabeledSentence:
    sentence: Sentence
    spans: tuple[EntitySpan, ...]

    def __post_init__(self) -> None:
        n = len(self.sentence)
        prev: EntitySpan | None = None
        for span in self.spans:
            if span.end >= n:
                raise CorpusError(
                    f"span ({span.start}, {span.end}) exceeds sentence length {n}"
                )
            if prev is not None:
                if span.start < prev.start:
                    raise CorpusError("spans must be sorted by start index")
                if prev.overlaps(span):
                    raise CorpusError(
                        f"overlapping spans ({prev.start},{prev.end}) and "
                        f"({span.start},{span.end})"
                    )
            prev = span

    @property
    def entity_types(self) -> set[str]:
        return {s.entity_type for s in self.spans}


@dataclass(frozen=True)
class SupportExample:
    """A marked sentence containing exactly one entity.

    ``tokens`` include the two marker tokens; the entity tokens sit strictly
    between ``start_marker_pos`` and ``end_marker_pos``.
    """

    entity_type: str
    tokens: tuple[Token, ...]
    start_marker_pos: int
    end_marker_pos: int

    def __post_init__(self) -> None:
        texts = [t.text for t in self.tokens]
        if texts.count(MARKER_START) != 1 or texts.count(MARKER_END) != 1:
            raise CorpusError("support example must contain exactly one marker pair")
        if texts[self.start_marker_pos] != MARKER_START:
            raise CorpusError("start_marker_pos does not point at the opening marker")
        if texts[self.end_marker_pos] != MARKER_END:
            raise CorpusError("end_marker_pos does not point at the closing marker")
        if self.end_marker_pos - self.start_marker_pos < 2:
            raise CorpusError("markers must enclose at least one token")
        for i, tok in enumerate(self.tokens):
            if tok.index != i:
                raise CorpusError("support token indices must be contiguous from 0")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    @property
    def entity_texts(self) -> list[str]:
        return [t.text for t in self.tokens[self.start_marker_pos + 1 : self.end_marker_pos]]


def make_support_example(
    texts: Sequence[str], entity_start: int, entity_end: int, entity_type: str
) -> SupportExample:
    """Wrap the inclusive token span ``[entity_start, entity_end]`` in markers.

    ``texts`` are the plain sentence tokens without markers.
    """
    if not (0 <= entity_start <= entity_end < len(texts)):
        raise CorpusError(
            f"entity bounds ({entity_start}, {entity_end}) invalid for "
            f"sentence of length {len(texts)}"
        )
    marked = (
        list(texts[:entity_start])
        + [MARKER_START]
        + list(texts[entity_start : entity_end + 1])
        + [MARKER_END]
        + list(texts[entity_end + 1 :])
    )
    return SupportExample(
        entity_type=entity_type,
        tokens=make_tokens(marked),
        start_marker_pos=entity_start,
        end_marker_pos=entity_end + 2,
    )


def strip_markers(example: SupportExample) -> tuple[list[str], EntitySpan]:
    """Inverse of :func:`make_support_example`: plain tokens plus the gold span."""
    texts = [
        t.text
        for i, t in enumerate(example.tokens)
        if i not in (example.start_marker_pos, example.end_marker_pos)
    ]
    span = EntitySpan(
        start=example.start_marker_pos,
        end=example.end_marker_pos - 2,
        entity_type=example.entity_type,
    )
    return texts, span


class SupportSet:
    """Support examples grouped by entity type, insertion-ordered within a type."""

    def __init__(self, examples: Iterable[SupportExample] = ()) -> None:
        self._entries: dict[str, list[SupportExample]] = {}
        for ex in examples:
            self.add(ex)

    def add(self, example: SupportExample) -> None:
        self._entries.setdefault(example.entity_type, []).append(example)

    @property
    def entries(self) -> dict[str, list[SupportExample]]:
        return self._entries

    @property
    def entity_types(self) -> list[str]:
        return list(self._entries)

    @property
    def num_types(self) -> int:
        return len(self._entries)

    def count(self, entity_type: str) -> int:
        return len(self._entries.get(entity_type, []))

    def examples_for(self, entity_type: str) -> list[SupportExample]:
        return list(self._entries.get(entity_type, []))

    def all_examples(self) -> list[SupportExample]:
        return [ex for group in self._entries.values() for ex in group]

    def __len__(self) -> int:
        return sum(len(group) for group in self._entries.values())

    def __iter__(self) -> Iterator[tuple[str, list[SupportExample]]]:
        return iter(self._entries.items())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SupportSet):
            return NotImplemented
        return self._entries == other._entries


def read_bio_corpus(path: str | Path, format: str = "bio-conll") -> list[LabeledSentence]:
    """Read a BIO-tagged corpus: one ``token<TAB or SPACE>tag`` pair per line,
    sentences separated by blank lines.

    An ``I-X`` tag that does not continue a ``B-X``/``I-X`` run is repaired to
    ``B-X`` with a warning; public corpora contain such noise.
    """
    if format != "bio-conll":
        raise CorpusError(f"unsupported corpus format: {format!r}")
    path = Path(path)
    sentences: list[LabeledSentence] = []
    texts: list[str] = []
    tags: list[str] = []
    sentence_index = 0

    def flush() -> None:
        nonlocal sentence_index
        if not texts:
            return
        source_id = f"{path.name}#{sentence_index}"
        sentences.append(_bio_to_labeled(texts, tags, source_id, path))
        sentence_index += 1
        texts.clear()
        tags.clear()

    with path.open(encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line:
                flush()
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise CorpusError(
                    f"{path}:{lineno}: expected 'token<TAB or SPACE>tag', got {raw!r}"
                )
            texts.append(parts[0])
            tags.append(parts[1])
    flush()
    if not sentences:
        raise CorpusError(f"{path}: corpus file contains no sentences")
    return sentences


def _bio_to_labeled(
    texts: list[str], tags: list[str], source_id: str, path: Path
) -> LabeledSentence:
    spans: list[EntitySpan] = []
    current_type: str | None = None
    current_start = 0
    for i, tag in enumerate(tags):
        if tag == "O":
            kind, etype = "O", None
        elif tag.startswith("B-") or tag.startswith("I-"):
            kind, etype = tag[0], tag[2:]
            if not etype:
                raise CorpusError(f"{path}: empty entity type in tag {tag!r} ({source_id})")
        else:
            raise CorpusError(f"{path}: malformed BIO tag {tag!r} ({source_id})")

        continues = kind == "I" and current_type == etype
        if kind == "I" and not continues:
            log.warning(
                "%s (%s): I-%s without preceding B-%s/I-%s run; treating as B-%s",
                path, source_id, etype, etype, etype, etype,
            )
            kind = "B"
        if not continues and current_type is not None:
            spans.append(EntitySpan(current_start, i - 1, current_type))
            current_type = None
        if kind == "B":
            current_type = etype
            current_start = i
        elif kind == "O":
            current_type = None
    if current_type is not None:
        spans.append(EntitySpan(current_start, len(tags) - 1, current_type))
    return LabeledSentence(
        sentence=Sentence(tokens=make_tokens(texts), source_id=source_id),
        spans=tuple(spans),
    )


def write_bio(sentences: Sequence[LabeledSentence], path: str | Path) -> None:
    """Write sentences in the same BIO format :func:`read_bio_corpus` consumes."""
    path = Path(path)
    lines: list[str] = []
    for ls in sentences:
        tags = ["O"] * len(ls.sentence)
        for span in ls.spans:
            tags[span.start] = f"B-{span.entity_type}"
            for i in range(span.start + 1, span.end + 1):
                tags[i] = f"I-{span.entity_type}"
        for tok, tag in zip(ls.sentence.tokens, tags):
            lines.append(f"{tok.text}\t{tag}")
        lines.append("")
    path.write_text("\n".join(lines), encoding="utf-8")


def explode_to_support_examples(ls: LabeledSentence) -> list[SupportExample]:
    """One support example per gold span, markers around that span only."""
    texts = ls.sentence.texts
    return [
        make_support_example(texts, span.start, span.end, span.entity_type)
        for span in ls.spans
    ]


def build_support_set(examples: Iterable[SupportExample]) -> SupportSet:
    """Group support examples by entity type, preserving insertion order."""
    return SupportSet(examples)


def corpus_to_support_set(sentences: Iterable[LabeledSentence]) -> SupportSet:
    """Explode every sentence and pool the resulting support examples."""
    pool = SupportSet()
    for ls in sentences:
        for ex in explode_to_support_examples(ls):
            pool.add(ex)
    return pool


def support_record_hash(example: SupportExample) -> str:
    """Short content hash of a support example; the basis of stable support ids."""
    import hashlib

    payload = json.dumps(support_example_to_record(example), sort_keys=True, ensure_ascii=False)
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=4).hexdigest()


def assign_support_id(example: SupportExample, taken: set[str]) -> str:
    """Deterministic, content-derived support id unique within ``taken``.

    Ids are URL-path safe (they appear in DELETE routes).  Identical content
    re-added after a delete reuses its old id; live duplicates get ``.1``,
    ``.2``, ... suffixes in insertion order.
    """
    import re

    safe_type = re.sub(r"[^A-Za-z0-9_.-]", "_", example.entity_type) or "type"
    base = f"{safe_type}-{support_record_hash(example)}"
    if base not in taken:
        return base
    n = 1
    while f"{base}.{n}" in taken:
        n += 1
    return f"{base}.{n}"


def support_example_to_record(example: SupportExample) -> dict:
    texts, span = strip_markers(example)
    return {
        "entity_type": example.entity_type,
        "tokens": texts,
        "entity_start": span.start,
        "entity_end": span.end,
    }


def support_example_from_record(record: dict) -> SupportExample:
    try:
        return make_support_example(
            record["tokens"],
            record["entity_start"],
            record["entity_end"],
            record["entity_type"],
        )
    except KeyError as exc:
        raise CorpusError(f"support record missing field {exc}") from exc


def save_support_json(support: SupportSet | Sequence[SupportExample], path: str | Path) -> None:
    """Write support examples as one JSON array of plain-token records."""
    examples = support.all_examples() if isinstance(support, SupportSet) else list(support)
    records = [support_example_to_record(ex) for ex in examples]
    Path(path).write_text(json.dumps(records, ensure_ascii=False, indent=2), encoding="utf-8")


def load_support_json(path: str | Path) -> SupportSet:
    """Load a support-example JSON array; marker positions are derived."""
    try:
        records = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(records, list):
        raise CorpusError(f"{path}: expected a JSON array of support records")
    return build_support_set(support_example_from_record(r) for r in records)
