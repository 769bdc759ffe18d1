"""Template-based sparse features for the log-linear CRF.

Feature strings are human-readable and fully determine identity, e.g.
``w0=Paris|t=B-LOC`` or ``bigram|tp=BOS|t=B-LOC``.  The template
inventory is the standard CoNLL NER set: word identity in a +/-2 window,
prefixes and suffixes up to length 4, a character-class word shape,
orthographic flags, all conjoined with the current tag; a tag-bigram
indicator; and the tag bigram conjoined with the current word.

Cross-lingual training additionally conjoins every feature with the
sentence's language code (``...|lang=gl``), exactly doubling the list.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Sentence, TagSet

BOS_TOKEN = "<BOS>"
EOS_TOKEN = "<EOS>"


@dataclass(frozen=True)
class FeatureTemplateSet:
    window: int = 2
    affix_max: int = 4

    def __post_init__(self):
        if self.window < 0 or self.affix_max < 0:
            raise ValueError("window and affix_max must be non-negative")


def word_shape(word: str) -> str:
    """Collapse characters to case/digit classes: Paris -> Xxxxx, A-4 -> X-d."""
    out = []
    for ch in word:
        if ch.isupper():
            out.append("X")
        elif ch.islower():
            out.append("x")
        elif ch.isdigit():
            out.append("d")
        else:
            out.append(ch)
    return "".join(out)


def context_atoms(tokens: tuple[str, ...], i: int, templates: FeatureTemplateSet) -> list[str]:
    """Tag-independent atoms for 1-based position ``i``.

    These are the unigram templates; each gets conjoined with the current
    tag to become a feature.  Boundary offsets use BOS/EOS placeholders.
    """
    n = len(tokens)
    if not 1 <= i <= n:
        raise IndexError(f"position {i} out of range 1..{n}")
    word = tokens[i - 1]
    atoms = []
    for off in range(-templates.window, templates.window + 1):
        j = i - 1 + off
        if j < 0:
            value = BOS_TOKEN
        elif j >= n:
            value = EOS_TOKEN
        else:
            value = tokens[j]
        label = f"w{off:+d}" if off else "w0"
        atoms.append(f"{label}={value}")
    for length in range(1, min(templates.affix_max, len(word)) + 1):
        atoms.append(f"pre{length}={word[:length]}")
    for length in range(1, min(templates.affix_max, len(word)) + 1):
        atoms.append(f"suf{length}={word[-length:]}")
    atoms.append(f"shape={word_shape(word)}")
    if any(ch.isdigit() for ch in word):
        atoms.append("has_digit")
    if "-" in word:
        atoms.append("has_hyphen")
    if word.isupper():
        atoms.append("all_caps")
    if word[0].isupper():
        atoms.append("init_cap")
    return atoms


def extract_features(
    sentence: Sentence,
    i: int,
    t_prev: int,
    t: int,
    templates: FeatureTemplateSet,
    tagset: TagSet,
) -> list[str]:
    """Instantiated feature strings for one lattice edge (1-based ``i``)."""
    tag = tagset.name(t)
    prev = tagset.name(t_prev)
    word = sentence.tokens[i - 1]
    feats = [f"{atom}|t={tag}" for atom in context_atoms(sentence.tokens, i, templates)]
    feats.append(f"bigram|tp={prev}|t={tag}")
    feats.append(f"w0={word}|tp={prev}|t={tag}")
    return feats


def conjoin_language(features: list[str], language: str) -> list[str]:
    """Append a language-conjoined twin of every feature (exact doubling)."""
    return features + [f"{feat}|lang={language}" for feat in features]


class FeatureIndex:
    """Injective map from feature string to dense id.

    While unfrozen, lookups through :meth:`add` allocate new ids; once
    frozen, unseen features are simply ignored (mapped to ``None``).
    """

    def __init__(self):
        self._ids: dict[str, int] = {}
        self.frozen = False

    def add(self, feature: str) -> int:
        fid = self._ids.get(feature)
        if fid is None:
            if self.frozen:
                raise RuntimeError("feature index is frozen")
            fid = len(self._ids)
            self._ids[feature] = fid
        return fid

    def get(self, feature: str) -> int | None:
        return self._ids.get(feature)

    def freeze(self) -> None:
        self.frozen = True

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, feature: str) -> bool:
        return feature in self._ids

    def feature_strings(self) -> list[str]:
        """Feature strings ordered by id (for serialization)."""
        out = [""] * len(self._ids)
        for feat, fid in self._ids.items():
            out[fid] = feat
        return out

    @classmethod
    def from_strings(cls, strings: list[str]) -> "FeatureIndex":
        index = cls()
        for s in strings:
            index.add(s)
        index.freeze()
        return index
