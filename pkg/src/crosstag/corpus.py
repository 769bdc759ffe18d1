"""BIO-tagged corpora: tag inventories, CoNLL-style parsing, splits.

Everything here is pure and deterministic.  Sentences carry a language
code so downstream models can condition on language identity.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

from .rng import shuffled_indices


class CorpusError(ValueError):
    """Malformed corpus data or an unsatisfiable request against it."""


class ParseError(CorpusError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


DEFAULT_ENTITY_TYPES = ("per", "loc", "org", "misc")


@dataclass(frozen=True)
class TagSet:
    """BIO tag inventory over an ordered list of entity types.

    Tags are ordered O first, then B-x/I-x per entity type, so the
    default four types give nine tags with O pinned at index 0.  The
    beginning-of-tagging symbol is not a real tag; it gets the index
    just past the tag range and is only ever used as the left context
    of the first position.
    """

    entity_types: tuple[str, ...] = DEFAULT_ENTITY_TYPES

    def __post_init__(self):
        if not self.entity_types:
            raise ValueError("at least one entity type is required")
        lowered = tuple(t.lower() for t in self.entity_types)
        if len(set(lowered)) != len(lowered):
            raise ValueError("entity types must be unique")
        object.__setattr__(self, "entity_types", lowered)

    @cached_property
    def tags(self) -> tuple[str, ...]:
        names = ["O"]
        for etype in self.entity_types:
            names.append(f"B-{etype.upper()}")
            names.append(f"I-{etype.upper()}")
        return tuple(names)

    @property
    def o_index(self) -> int:
        return 0

    @property
    def bos_index(self) -> int:
        return len(self.tags)

    @cached_property
    def _index_by_name(self) -> dict[str, int]:
        return {name.upper(): i for i, name in enumerate(self.tags)}

    def __len__(self) -> int:
        return len(self.tags)

    def index(self, name: str) -> int:
        """Map a tag string to its index, case-insensitively."""
        try:
            return self._index_by_name[name.upper()]
        except KeyError:
            raise KeyError(f"unknown tag {name!r}") from None

    def name(self, index: int) -> str:
        if index == self.bos_index:
            return "BOS"
        return self.tags[index]

    def prefix_and_type(self, index: int) -> tuple[str, str | None]:
        """Return ('O'|'B'|'I', entity_type-or-None) for a tag index."""
        if index == 0:
            return "O", None
        etype = self.entity_types[(index - 1) // 2]
        prefix = "B" if (index - 1) % 2 == 0 else "I"
        return prefix, etype

    def b_index(self, etype: str) -> int:
        return 1 + 2 * self.entity_types.index(etype.lower())

    def i_index(self, etype: str) -> int:
        return 2 + 2 * self.entity_types.index(etype.lower())


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    language: str

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.tokens:
            raise ValueError("sentence must contain at least one token")
        for tok in self.tokens:
            if not tok:
                raise ValueError("empty token")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class LabeledSentence:
    sentence: Sentence
    tags: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "tags", tuple(self.tags))
        if len(self.tags) != len(self.sentence):
            raise ValueError(
                f"{len(self.tags)} tags for {len(self.sentence)} tokens"
            )

    @property
    def tokens(self) -> tuple[str, ...]:
        return self.sentence.tokens

    @property
    def language(self) -> str:
        return self.sentence.language

    def __len__(self) -> int:
        return len(self.sentence)


@dataclass(frozen=True)
class LanguageInfo:
    code: str
    name: str
    family: str
    branch: str


class LanguageRegistry:
    """Registry of language codes with family/branch metadata."""

    def __init__(self, entries: Sequence[LanguageInfo] = ()):
        self._by_code: dict[str, LanguageInfo] = {}
        for entry in entries:
            self.add(entry)

    def add(self, entry: LanguageInfo) -> None:
        if entry.code in self._by_code:
            raise ValueError(f"duplicate language code {entry.code!r}")
        self._by_code[entry.code] = entry

    def resolve(self, code: str) -> LanguageInfo:
        try:
            return self._by_code[code]
        except KeyError:
            raise KeyError(f"unregistered language code {code!r}") from None

    def __contains__(self, code: str) -> bool:
        return code in self._by_code

    def __iter__(self) -> Iterator[LanguageInfo]:
        return iter(self._by_code.values())

    def codes(self) -> list[str]:
        return list(self._by_code)

    def __len__(self) -> int:
        return len(self._by_code)


def default_registry() -> LanguageRegistry:
    """The fifteen-language registry used in the original experiments.

    Catalan is registered as ``ca`` (its ISO 639-1 code).
    """
    rows = [
        ("gl", "Galician", "Indo-European", "Romance"),
        ("ca", "Catalan", "Indo-European", "Romance"),
        ("fr", "French", "Indo-European", "Romance"),
        ("it", "Italian", "Indo-European", "Romance"),
        ("ro", "Romanian", "Indo-European", "Romance"),
        ("es", "Spanish", "Indo-European", "Romance"),
        ("fy", "West Frisian", "Indo-European", "Germanic"),
        ("nl", "Dutch", "Indo-European", "Germanic"),
        ("tl", "Tagalog", "Austronesian", "Philippine"),
        ("ceb", "Cebuano", "Austronesian", "Philippine"),
        ("uk", "Ukrainian", "Indo-European", "Slavic"),
        ("ru", "Russian", "Indo-European", "Slavic"),
        ("mr", "Marathi", "Indo-European", "Indo-Aryan"),
        ("hi", "Hindi", "Indo-European", "Indo-Aryan"),
        ("ur", "Urdu", "Indo-European", "Indo-Aryan"),
    ]
    return LanguageRegistry([LanguageInfo(*row) for row in rows])


def bio_repair(tags: Sequence[int], tagset: TagSet) -> tuple[tuple[int, ...], int]:
    """Rewrite invalid I-x tags to B-x, left to right.

    An I-x is invalid when it follows sentence start, O, or a B-y/I-y of a
    different type.  Returns the repaired sequence and the repair count.
    """
    repaired = list(tags)
    repairs = 0
    prev = tagset.o_index
    for i, tag in enumerate(repaired):
        prefix, etype = tagset.prefix_and_type(tag)
        if prefix == "I":
            prev_prefix, prev_type = tagset.prefix_and_type(prev)
            if prev_prefix == "O" or prev_type != etype:
                repaired[i] = tagset.b_index(etype)
                repairs += 1
        prev = repaired[i]
    return tuple(repaired), repairs


def is_bio_consistent(tags: Sequence[int], tagset: TagSet) -> bool:
    return bio_repair(tags, tagset)[1] == 0


@dataclass
class ParseResult:
    """Sentences parsed from one corpus text plus repair accounting.

    Behaves as a sequence of :class:`LabeledSentence`.
    """

    sentences: list[LabeledSentence] = field(default_factory=list)
    repair_count: int = 0

    def __iter__(self) -> Iterator[LabeledSentence]:
        return iter(self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)

    def __getitem__(self, item):
        return self.sentences[item]


def parse_conll(text: str, language: str, tagset: TagSet) -> ParseResult:
    """Parse two-column CoNLL text (token, tag; blank line ends a sentence).

    Tags are matched case-insensitively against the tag inventory.  BIO
    violations are repaired (I-x with a bad left context becomes B-x) and
    counted in the result.  An empty or all-blank text yields zero
    sentences.
    """
    result = ParseResult()
    tokens: list[str] = []
    tags: list[int] = []

    def flush():
        if not tokens:
            return
        repaired, repairs = bio_repair(tags, tagset)
        result.sentences.append(
            LabeledSentence(Sentence(tuple(tokens), language), repaired)
        )
        result.repair_count += repairs
        tokens.clear()
        tags.clear()

    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            flush()
            continue
        fields = line.split()
        if len(fields) != 2:
            raise ParseError(
                f"expected 'token tag', got {len(fields)} fields: {line!r}",
                line=lineno,
            )
        token, tag_name = fields
        try:
            tag = tagset.index(tag_name)
        except KeyError:
            raise ParseError(f"unknown tag {tag_name!r}", line=lineno) from None
        tokens.append(token)
        tags.append(tag)
    flush()
    return result


def serialize_conll(sentences: Sequence[LabeledSentence], tagset: TagSet) -> str:
    """Render sentences in normalized form: single-space columns, one blank
    line between sentences, trailing newline."""
    blocks = []
    for sent in sentences:
        lines = [
            f"{tok} {tagset.name(tag)}" for tok, tag in zip(sent.tokens, sent.tags)
        ]
        blocks.append("\n".join(lines))
    if not blocks:
        return ""
    return "\n\n".join(blocks) + "\n"


def bio_spans(
    tags: Sequence[int], tagset: TagSet
) -> list[tuple[int, int, str]]:
    """Extract (start, end_exclusive, entity_type) spans from a BIO sequence.

    The input must already be BIO-consistent; repair first if it is not.
    """
    spans: list[tuple[int, int, str]] = []
    start = None
    current_type = None
    prev_prefix = "O"
    for i, tag in enumerate(tags):
        prefix, etype = tagset.prefix_and_type(tag)
        if prefix == "I" and (prev_prefix == "O" or etype != current_type):
            raise CorpusError(
                f"BIO-inconsistent sequence at position {i}: "
                f"{tagset.name(tag)} after "
                f"{'start' if i == 0 else tagset.name(tags[i - 1])}"
            )
        if prefix == "B":
            if start is not None:
                spans.append((start, i, current_type))
            start, current_type = i, etype
        elif prefix == "O":
            if start is not None:
                spans.append((start, i, current_type))
            start, current_type = None, None
        prev_prefix = prefix
    if start is not None:
        spans.append((start, len(tags), current_type))
    return spans


def tags_from_spans(
    n: int, spans: Sequence[tuple[int, int, str]], tagset: TagSet
) -> tuple[int, ...]:
    """Inverse of :func:`bio_spans` for a valid, sorted span list."""
    tags = [tagset.o_index] * n
    prev_end = 0
    for start, end, etype in spans:
        if not (0 <= start < end <= n):
            raise ValueError(f"span ({start}, {end}) out of range for n={n}")
        if start < prev_end:
            raise ValueError("spans overlap or are unsorted")
        tags[start] = tagset.b_index(etype)
        for i in range(start + 1, end):
            tags[i] = tagset.i_index(etype)
        prev_end = end
    return tuple(tags)


@dataclass(frozen=True)
class SplitSpec:
    train_size: int
    dev_size: int
    test_size: int
    seed: int

    def __post_init__(self):
        for name in ("train_size", "dev_size", "test_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")


@dataclass(frozen=True)
class Splits:
    train: list[LabeledSentence]
    dev: list[LabeledSentence]
    test: list[LabeledSentence]


def make_splits(corpus: Sequence[LabeledSentence], spec: SplitSpec) -> Splits:
    """Deterministic disjoint train/dev/test selection.

    The corpus order is shuffled once with splitmix64 under ``spec.seed``;
    train is the shuffle prefix while dev and test come off the end.  A
    smaller train size under the same seed is therefore always a prefix of
    a larger one, and dev/test membership does not move when only the
    train size changes.
    """
    n = len(corpus)
    needed = spec.train_size + spec.dev_size + spec.test_size
    if needed > n:
        raise CorpusError(
            f"split needs {needed} sentences "
            f"({spec.train_size}+{spec.dev_size}+{spec.test_size}) "
            f"but corpus has only {n}"
        )
    order = shuffled_indices(n, spec.seed)
    train = [corpus[i] for i in order[: spec.train_size]]
    dev = [corpus[i] for i in order[n - spec.dev_size - spec.test_size : n - spec.test_size]]
    test = [corpus[i] for i in order[n - spec.test_size :]]
    return Splits(train=train, dev=dev, test=test)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    language: str
    role: str  # "target" | "source"


def parse_manifest(text: str, base_dir: str = ".") -> list[ManifestEntry]:
    """Parse a corpus manifest: one ``path<TAB>language<TAB>role`` per line.

    Relative paths are resolved against ``base_dir`` (normally the
    manifest's own directory).  Lines starting with ``#`` are comments.
    """
    entries = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split("\t") if "\t" in stripped else stripped.split()
        if len(fields) != 3:
            raise ParseError(
                f"expected 'path<TAB>language<TAB>role', got {line!r}", line=lineno
            )
        path, language, role = fields
        if role not in ("target", "source"):
            raise ParseError(
                f"role must be 'target' or 'source', got {role!r}", line=lineno
            )
        if not os.path.isabs(path):
            path = os.path.normpath(os.path.join(base_dir, path))
        entries.append(ManifestEntry(path=path, language=language, role=role))
    return entries


def load_manifest(path: str) -> list[ManifestEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))
