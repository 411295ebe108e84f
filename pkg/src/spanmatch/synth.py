"""Deterministic synthetic corpus generator for train-free transfer experiments.

Sentences are produced from token templates with typed slots, e.g.
``("we", "flew", "to", "{CITY}", "last", "spring")``.  Source and target
entity types are disjoint and so are their value vocabularies, which makes the
generated train and test splits share no entity surface form: whatever the
scorer recognizes in the target domain, it never saw as an entity in training.
A template pool mixes generic frames (instantiated for every type) with
type-specific frames, so the target domain is phrased partly in unseen
contexts.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import (
    EntitySpan,
    LabeledSentence,
    Sentence,
    SupportSet,
    corpus_to_support_set,
    make_tokens,
)

SLOT_RE = re.compile(r"^\{([A-Za-z0-9_-]+)\}$")


class SynthError(ValueError):
    pass


def slot_type(token: str) -> str | None:
    match = SLOT_RE.match(token)
    return match.group(1) if match else None


@dataclass
class SynthSpec:
    source_types: dict[str, tuple[str, ...]]
    target_types: dict[str, tuple[str, ...]]
    templates: tuple[tuple[str, ...], ...]
    train_size: int = 400
    test_size: int = 100
    pool_per_type: int = 30
    seed: int = 0
    # Fraction of train-split slot fills drawn as pseudo values instead of the
    # type vocabulary, for the listed types.  Each pseudo string is used once
    # in TWO different types (like ambiguous real-world mentions), so even
    # across many epochs its embedding cannot settle on a type: episodes
    # carrying one are decidable only by comparing the query against its
    # support examples, which is the behaviour that transfers.
    rare_value_rate: float = 0.0
    rare_value_types: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        overlap = set(self.source_types) & set(self.target_types)
        if overlap:
            raise SynthError(f"source and target types must be disjoint, got {overlap}")
        seen: dict[str, str] = {}
        for entity_type, vocab in {**self.source_types, **self.target_types}.items():
            if not vocab:
                raise SynthError(f"empty vocabulary for type {entity_type!r}")
            for value in vocab:
                if value in seen:
                    raise SynthError(
                        f"surface {value!r} appears in both {seen[value]!r} and "
                        f"{entity_type!r}; vocabularies must be pairwise disjoint"
                    )
                seen[value] = entity_type
        known = set(self.source_types) | set(self.target_types)
        for template in self.templates:
            slots = [slot_type(t) for t in template if slot_type(t)]
            if not slots:
                raise SynthError(f"template {template!r} has no typed slot")
            for s in slots:
                if s not in known:
                    raise SynthError(f"template {template!r} references unknown type {s!r}")
        if self.train_size < 1 or self.test_size < 1 or self.pool_per_type < 1:
            raise SynthError("sizes must be positive")
        if not (0.0 <= self.rare_value_rate <= 1.0):
            raise SynthError("rare_value_rate must lie in [0, 1]")
        for entity_type in self.rare_value_types:
            if entity_type not in known:
                raise SynthError(f"rare values requested for unknown type {entity_type!r}")
        if self.rare_value_rate > 0 and len(self.rare_value_types) < 2:
            raise SynthError("rare values need at least two types to share strings across")

    @property
    def vocab(self) -> dict[str, tuple[str, ...]]:
        return {**self.source_types, **self.target_types}


@dataclass
class SynthResult:
    train: list[LabeledSentence]
    test: list[LabeledSentence]
    target_pool: SupportSet


def _eligible(templates: Sequence[tuple[str, ...]], types: set[str]) -> list[tuple[str, ...]]:
    out = []
    for template in templates:
        slots = {slot_type(t) for t in template if slot_type(t)}
        if slots <= types:
            out.append(template)
    return out


_RARE_SYLLABLES = (
    "bra", "chi", "dor", "fen", "gal", "hul", "jor", "kel", "mon", "nis",
    "pol", "quam", "rov", "sul", "tam", "vel", "wix", "yor", "zen", "alb",
)


class _RareValueFactory:
    """Deterministic stream of pseudo surface forms shared across type pairs.

    A generated string is handed out twice, to two *different* entity types,
    then never again.  Known surfaces (vocabulary values, template words) are
    skipped so rare strings stay unambiguous tokens.
    """

    def __init__(self, spec: SynthSpec, reserved: set[str]) -> None:
        self.spec = spec
        self.reserved = reserved
        self.counter = 0
        self.pending: list[tuple[str, str]] = []  # (string, origin type)

    def _fresh(self) -> str:
        base = len(_RARE_SYLLABLES)
        while True:
            n = self.counter
            self.counter += 1
            head = _RARE_SYLLABLES[n % base] + _RARE_SYLLABLES[(n // base) % base]
            tail = str(n // base**2) if n >= base**2 else ""
            value = f"{head}{tail}"
            if value not in self.reserved:
                return value

    def maybe(self, entity_type: str, rng: np.random.Generator) -> str | None:
        if self.spec.rare_value_rate == 0.0 or entity_type not in self.spec.rare_value_types:
            return None
        if rng.random() >= self.spec.rare_value_rate:
            return None
        for i, (value, origin) in enumerate(self.pending):
            if origin != entity_type:
                self.pending.pop(i)
                return value
        value = self._fresh()
        self.pending.append((value, entity_type))
        return value


def _fill(
    template: tuple[str, ...],
    vocab: dict[str, tuple[str, ...]],
    rng: np.random.Generator,
    source_id: str,
    rare: _RareValueFactory | None = None,
) -> LabeledSentence:
    texts: list[str] = []
    spans: list[EntitySpan] = []
    for token in template:
        entity_type = slot_type(token)
        if entity_type is None:
            texts.append(token)
            continue
        value = rare.maybe(entity_type, rng) if rare is not None else None
        if value is None:
            values = vocab[entity_type]
            value = values[int(rng.integers(len(values)))]
        parts = value.split()
        spans.append(EntitySpan(len(texts), len(texts) + len(parts) - 1, entity_type))
        texts.extend(parts)
    return LabeledSentence(
        sentence=Sentence(tokens=make_tokens(texts), source_id=source_id),
        spans=tuple(spans),
    )


def generate(spec: SynthSpec) -> SynthResult:
    """Produce a source-typed train split, a target-typed test split, and a
    target-typed support pool.  Deterministic for a fixed spec seed."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed]))
    vocab = spec.vocab

    source_templates = _eligible(spec.templates, set(spec.source_types))
    target_templates = _eligible(spec.templates, set(spec.target_types))
    if not source_templates:
        raise SynthError("no template is restricted to source types")
    if not target_templates:
        raise SynthError("no template is restricted to target types")

    reserved = {part for values in vocab.values() for v in values for part in v.split()}
    reserved.update(tok for template in spec.templates for tok in template)
    rare = _RareValueFactory(spec, reserved)
    train = [
        _fill(
            source_templates[int(rng.integers(len(source_templates)))],
            vocab, rng, f"train#{i}", rare=rare,
        )
        for i in range(spec.train_size)
    ]
    test = [
        _fill(
            target_templates[int(rng.integers(len(target_templates)))],
            vocab, rng, f"test#{i}",
        )
        for i in range(spec.test_size)
    ]

    pool_sentences: list[LabeledSentence] = []
    for entity_type in spec.target_types:
        per_type = [
            t for t in target_templates
            if {slot_type(tok) for tok in t if slot_type(tok)} == {entity_type}
        ]
        if not per_type:
            raise SynthError(f"no single-type template for target type {entity_type!r}")
        for i in range(spec.pool_per_type):
            pool_sentences.append(
                _fill(
                    per_type[int(rng.integers(len(per_type)))],
                    vocab, rng, f"pool-{entity_type}#{i}",
                )
            )

    train_surfaces = _entity_surfaces(train)
    test_surfaces = _entity_surfaces(test) | _entity_surfaces(pool_sentences)
    shared = train_surfaces & test_surfaces
    if shared:
        raise SynthError(
            f"vocabulary too small: surfaces reused across train and test: {sorted(shared)[:5]}"
        )

    return SynthResult(train=train, test=test, target_pool=corpus_to_support_set(pool_sentences))


def _entity_surfaces(sentences: Iterable[LabeledSentence]) -> set[str]:
    out = set()
    for ls in sentences:
        for span in ls.spans:
            out.add(" ".join(ls.sentence.texts[span.start : span.end + 1]))
    return out


GENERIC_FRAMES: tuple[tuple[str, ...], ...] = (
    ("can", "you", "tell", "me", "more", "about", "{X}"),
    ("i", "would", "like", "to", "hear", "about", "{X}", "please"),
    ("my", "favorite", "one", "is", "{X}", "honestly"),
    ("{X}", "is", "the", "one", "i", "picked"),
    ("please", "add", "{X}", "to", "the", "list"),
    ("remind", "me", "to", "look", "up", "{X}", "later"),
)

_SPECIFIC_FRAMES: dict[str, tuple[tuple[str, ...], ...]] = {
    "CITY": (
        ("we", "flew", "to", "{CITY}", "last", "spring"),
        ("the", "express", "to", "{CITY}", "leaves", "soon"),
        ("she", "moved", "to", "{CITY}", "for", "work"),
    ),
    "DATE": (
        ("the", "meeting", "moved", "to", "{DATE}", "again"),
        ("the", "deadline", "is", "{DATE}", "now"),
        ("we", "agreed", "on", "{DATE}", "for", "the", "visit"),
    ),
    "COLOR": (
        ("they", "painted", "the", "fence", "{COLOR}", "this", "week"),
        ("i", "bought", "a", "{COLOR}", "jacket"),
        ("the", "team", "wears", "{COLOR}", "uniforms"),
    ),
    "ANIMAL": (
        ("a", "wild", "{ANIMAL}", "crossed", "the", "trail"),
        ("the", "zoo", "welcomed", "a", "baby", "{ANIMAL}"),
        ("we", "spotted", "a", "{ANIMAL}", "near", "the", "creek"),
    ),
    "FRUIT": (
        ("he", "packed", "a", "ripe", "{FRUIT}", "for", "his", "lunch"),
        ("the", "corner", "market", "sells", "fresh", "{FRUIT}", "every", "morning"),
        ("she", "blended", "a", "{FRUIT}", "smoothie", "after", "the", "gym"),
        ("grandmas", "famous", "{FRUIT}", "jam", "won", "the", "county", "prize"),
        ("the", "orchard", "grows", "{FRUIT}", "trees", "along", "the", "fence"),
        ("a", "bowl", "of", "sliced", "{FRUIT}", "sat", "on", "the", "table"),
    ),
    "METAL": (
        ("the", "wedding", "ring", "was", "cast", "in", "pure", "{METAL}"),
        ("this", "alloy", "contains", "tiny", "traces", "of", "{METAL}"),
        ("miners", "haul", "raw", "{METAL}", "out", "of", "the", "north", "pit"),
        ("the", "sculptor", "welds", "scrap", "{METAL}", "into", "giant", "birds"),
        ("polished", "{METAL}", "fittings", "lined", "the", "engine", "room"),
        ("the", "blade", "was", "forged", "from", "folded", "{METAL}"),
    ),
}

_VOCABS: dict[str, tuple[str, ...]] = {
    "CITY": (
        "paris", "london", "tokyo", "madrid", "berlin", "oslo", "cairo", "sydney",
        "toronto", "lisbon", "dublin", "vienna", "prague", "athens", "helsinki",
        "warsaw", "bogota", "lima", "quito", "nairobi", "accra", "hanoi", "seoul",
        "taipei", "manila", "jakarta", "perth", "auckland", "havana", "geneva",
    ),
    "DATE": (
        "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
        "january", "february", "march", "april", "june", "july", "august",
        "september", "october", "november", "december", "springtime", "summertime",
        "midwinter", "solstice", "equinox", "dawn", "dusk", "midnight", "noontime",
        "twilight", "forenoon", "eventide",
    ),
    "COLOR": (
        "crimson", "scarlet", "maroon", "turquoise", "teal", "indigo", "violet",
        "magenta", "beige", "ochre", "charcoal", "ivory", "sage", "lilac", "mauve",
        "khaki", "cerulean", "vermilion", "periwinkle", "chartreuse", "aquamarine",
        "burgundy", "lavender", "sienna", "umber", "cobalt blue", "pale rose",
        "deep cyan", "mint green", "dusty plum",
    ),
    "ANIMAL": (
        "otter", "badger", "lynx", "heron", "falcon", "weasel", "marmot", "gazelle",
        "ibex", "tapir", "ocelot", "wombat", "pangolin", "jackal", "stoat",
        "caracal", "kudu", "oryx", "dingo", "quokka", "civet", "serval", "margay",
        "saola", "markhor", "snow leopard", "sea dolphin", "horned owl",
        "tree frog", "pine marten",
    ),
    "FRUIT": (
        "mango", "papaya", "guava", "lychee", "durian", "plantain", "tamarind",
        "kumquat", "persimmon", "nectarine", "apricot", "pomelo", "rambutan",
        "soursop", "jackfruit", "mulberry", "gooseberry", "cloudberry", "quince",
        "feijoa", "longan", "salak", "medlar", "jujube", "carambola",
        "blood orange", "star apple", "dragon fruit", "honeydew melon",
        "cactus pear",
    ),
    "METAL": (
        "titanium", "tungsten", "platinum", "iridium", "palladium", "zinc",
        "chromium", "manganese", "vanadium", "niobium", "tantalum", "rhodium",
        "osmium", "gallium", "bismuth", "antimony", "zirconium", "molybdenum",
        "rhenium", "hafnium", "cadmium", "beryllium", "lithium", "scandium",
        "yttrium", "rose gold", "cast iron", "sterling silver", "carbon steel",
        "white brass",
    ),
}


def default_spec(seed: int = 0, target_vocab_size: int = 16, **overrides) -> SynthSpec:
    """Four source types, two unseen target types, shared generic frames.

    Source sentences mix recurring vocabulary values with cross-type
    ambiguous pseudo values (rate 0.5), so polarity is often decidable only by
    comparing the query against its support examples.  Target types lean on
    type-specific frames, giving a budget-10 support sample a high chance of
    containing either the query's value or its frame.  Sized so training
    completes in minutes on CPU.
    """
    source = {t: _VOCABS[t] for t in ("CITY", "DATE", "COLOR", "ANIMAL")}
    target = {t: _VOCABS[t][:target_vocab_size] for t in ("FRUIT", "METAL")}
    templates: list[tuple[str, ...]] = []
    for entity_type in source:
        for frame in GENERIC_FRAMES:
            templates.append(
                tuple(f"{{{entity_type}}}" if tok == "{X}" else tok for tok in frame)
            )
        templates.extend(_SPECIFIC_FRAMES[entity_type])
    for entity_type in target:
        for frame in GENERIC_FRAMES[:3]:
            templates.append(
                tuple(f"{{{entity_type}}}" if tok == "{X}" else tok for tok in frame)
            )
        templates.extend(_SPECIFIC_FRAMES[entity_type])
    params = dict(
        source_types=source,
        target_types=target,
        templates=tuple(templates),
        seed=seed,
        rare_value_rate=0.5,
        rare_value_types=tuple(source),
    )
    params.update(overrides)
    return SynthSpec(**params)
