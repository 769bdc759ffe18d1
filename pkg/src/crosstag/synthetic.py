"""Synthetic bilingual NER corpora for transfer experiments.

Two artificial languages share their entity morphology: an entity word
is a language-specific stem plus a type-marked suffix, and the suffix
inventory is identical in both languages.  The type marker sits five
characters from the end ("a"/"o"/"u" for per/loc/org), while the last
four characters are common to all types.  A window-limited affix
feature therefore cannot read the type; a character-level encoder can.
Everything else is language-specific: filler vocabulary, cue words,
stems.  Dev and test entity stems are held out from training, so
entity words at evaluation time are always out-of-vocabulary and typing
must come from morphology or context.

Each type also has a cue word that precedes the entity with a fixed
probability, giving context features a partial (deliberately capped)
signal.  Every sentence starts with a capitalized token, so
capitalization alone cannot separate entities from fillers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from string import ascii_lowercase

from .corpus import LabeledSentence, Sentence, TagSet
from .rng import SplitMix64

_TYPE_MARKERS = {"per": "a", "loc": "o", "org": "u"}
_SUFFIX_TAILS = ("rnia", "lgon")


@dataclass(frozen=True)
class SyntheticConfig:
    entity_types: tuple[str, ...] = ("per", "loc", "org")
    n_train_stems: int = 400
    n_eval_stems: int = 200
    n_fillers: int = 150
    cue_prob_pct: int = 50  # chance the type cue precedes an entity
    two_token_pct: int = 20  # chance an entity spans two tokens
    entity_free_pct: int = 25  # chance a sentence has no entity
    min_len: int = 6
    max_len: int = 12

    def suffixes(self, etype: str) -> tuple[str, ...]:
        marker = _TYPE_MARKERS[etype]
        return tuple(marker + tail for tail in _SUFFIX_TAILS)


@dataclass
class TransferPair:
    target_language: str
    source_language: str
    tagset: TagSet
    target_train: list[LabeledSentence]
    target_dev: list[LabeledSentence]
    target_test: list[LabeledSentence]
    source_train: list[LabeledSentence]


def _random_word(rng: SplitMix64, lo: int, hi: int) -> str:
    length = lo + rng.below(hi - lo + 1)
    return "".join(ascii_lowercase[rng.below(26)] for _ in range(length))


def _word_pool(rng: SplitMix64, count: int, taken: set[str], lo=3, hi=6) -> list[str]:
    pool: list[str] = []
    while len(pool) < count:
        w = _random_word(rng, lo, hi)
        if w not in taken:
            taken.add(w)
            pool.append(w)
    return pool


@dataclass
class _LanguageAssets:
    fillers: list[str]
    cues: dict[str, str]  # entity type -> cue word
    train_stems: list[str]
    eval_stems: list[str]


def _build_assets(rng: SplitMix64, config: SyntheticConfig, taken: set[str]) -> _LanguageAssets:
    fillers = _word_pool(rng, config.n_fillers, taken, 2, 7)
    cues = {t: _word_pool(rng, 1, taken, 3, 5)[0] for t in config.entity_types}
    train_stems = _word_pool(rng, config.n_train_stems, taken)
    eval_stems = _word_pool(rng, config.n_eval_stems, taken)
    return _LanguageAssets(fillers, cues, train_stems, eval_stems)


def _entity_word(rng: SplitMix64, stems: list[str], config: SyntheticConfig, etype: str) -> str:
    stem = stems[rng.below(len(stems))]
    suffixes = config.suffixes(etype)
    return (stem + suffixes[rng.below(len(suffixes))]).capitalize()


def _sentence(
    rng: SplitMix64,
    language: str,
    assets: _LanguageAssets,
    stems: list[str],
    config: SyntheticConfig,
    tagset: TagSet,
) -> LabeledSentence:
    length = config.min_len + rng.below(config.max_len - config.min_len + 1)
    tokens = [assets.fillers[rng.below(len(assets.fillers))] for _ in range(length)]
    tags = [tagset.o_index] * length
    if rng.below(100) >= config.entity_free_pct:
        n_entities = 1 + (1 if rng.below(100) < 35 else 0)
        # entity start positions leave room for a two-token span
        slots = sorted({1 + rng.below(length - 2) for _ in range(n_entities)})
        used = -2
        for pos in slots:
            if pos <= used + 1:
                continue
            etype = config.entity_types[rng.below(len(config.entity_types))]
            tokens[pos] = _entity_word(rng, stems, config, etype)
            tags[pos] = tagset.b_index(etype)
            used = pos
            if pos + 1 < length and rng.below(100) < config.two_token_pct:
                tokens[pos + 1] = _entity_word(rng, stems, config, etype)
                tags[pos + 1] = tagset.i_index(etype)
                used = pos + 1
            if pos >= 1 and rng.below(100) < config.cue_prob_pct:
                tokens[pos - 1] = assets.cues[etype]
    tokens[0] = tokens[0].capitalize()
    return LabeledSentence(Sentence(tuple(tokens), language), tuple(tags))


def make_corpus(
    language: str,
    n_sentences: int,
    rng: SplitMix64,
    assets: _LanguageAssets,
    config: SyntheticConfig,
    tagset: TagSet,
    heldout_stems: bool = False,
) -> list[LabeledSentence]:
    stems = assets.eval_stems if heldout_stems else assets.train_stems
    return [
        _sentence(rng, language, assets, stems, config, tagset)
        for _ in range(n_sentences)
    ]


def make_transfer_pair(
    seed: int,
    n_target_train: int = 100,
    n_source_train: int = 10000,
    n_dev: int = 1000,
    n_test: int = 1000,
    config: SyntheticConfig | None = None,
    target_language: str = "ta",
    source_language: str = "sa",
) -> TransferPair:
    """Deterministic pair of related synthetic languages plus splits."""
    config = config or SyntheticConfig()
    tagset = TagSet(config.entity_types)
    rng = SplitMix64(seed)
    taken: set[str] = set()
    target_assets = _build_assets(rng, config, taken)
    source_assets = _build_assets(rng, config, taken)
    return TransferPair(
        target_language=target_language,
        source_language=source_language,
        tagset=tagset,
        target_train=make_corpus(
            target_language, n_target_train, rng, target_assets, config, tagset
        ),
        target_dev=make_corpus(
            target_language, n_dev, rng, target_assets, config, tagset, heldout_stems=True
        ),
        target_test=make_corpus(
            target_language, n_test, rng, target_assets, config, tagset, heldout_stems=True
        ),
        source_train=make_corpus(
            source_language, n_source_train, rng, source_assets, config, tagset
        ),
    )
