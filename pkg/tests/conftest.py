import pytest

from crosstag.corpus import LabeledSentence, Sentence, TagSet


@pytest.fixture(scope="session")
def tagset():
    return TagSet()


@pytest.fixture
def mk(tagset):
    """Labeled sentence builder: mk(tokens, tag_names, language)."""

    def build(tokens, tags, language="xx"):
        return LabeledSentence(
            Sentence(tuple(tokens), language),
            tuple(tagset.index(t) for t in tags),
        )

    return build
