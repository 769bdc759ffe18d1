"""Log-linear CRF: sparse template features, exact likelihood, L-BFGS.

The potential of an edge is ``exp(eta . f(t_prev, t, w, i))``; the
conditional log-likelihood is concave, and its gradient is observed
feature counts minus marginal-expected counts.  Expected counts come
from the forward-backward posteriors of the inference core.

Training compiles each sentence once into dense id structures (feature
extraction and dictionary lookups are the slow part) so that every
L-BFGS objective evaluation is pure array work:

- emission features are stored CSR-style per (position, tag) segment;
- the tag-bigram feature reduces to one id table per language;
- the word-conjoined bigram reduces to one id table per vocabulary word.

Missing features point at a sentinel id one past the weight vector,
which is pinned to weight zero during scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import CorpusError, LabeledSentence, Sentence, TagSet
from .features import FeatureIndex, FeatureTemplateSet, conjoin_language, context_atoms
from .lattice import LogLattice, posteriors, viterbi
from .optim import LbfgsConfig, LbfgsResult, NumericError, minimize_lbfgs

# Flush threshold for streamed bincount accumulation of expected counts.
_FLUSH = 1 << 21


def auto_l2(n_train: int) -> float:
    """Default L2 strength: 1.0 in low resource, 0.1 from 1000 sentences up."""
    return 1.0 if n_train < 1000 else 0.1


@dataclass
class CompiledSentence:
    n: int
    language: str
    gold: np.ndarray | None  # int64 (n,) or None for unlabeled input
    word_idx: np.ndarray  # int64 (n,) into the batch word-table stack
    emit_ids: np.ndarray  # int64 flat, present feature ids only
    emit_seg_len: np.ndarray  # int64 (n*k,) segment lengths, tag-major per position
    emit_off: np.ndarray  # int64 (n*k + 1,) prefix offsets


@dataclass
class CompiledBatch:
    sentences: list[CompiledSentence]
    word_tables: np.ndarray  # int64 (U, L, k+1, k); missing -> sentinel id
    trans_tables: dict[str | None, np.ndarray]  # (L, k+1, k)
    observed: np.ndarray  # float64 (D,) gold feature counts
    n_tokens: int


class LogLinearModel:
    """Template CRF over a fixed tag set.

    ``fit_index`` allocates ids for every feature observed on a gold edge
    and freezes the index; after that the weight vector has one slot per
    feature and unseen features are ignored.
    """

    def __init__(
        self,
        tagset: TagSet,
        templates: FeatureTemplateSet | None = None,
        conjoin_language: bool = False,
    ):
        self.tagset = tagset
        self.templates = templates or FeatureTemplateSet()
        self.conjoin_language = conjoin_language
        self.index = FeatureIndex()
        self.weights = np.zeros(0)
        self.languages: tuple[str, ...] = ()
        self._atom_rows: dict[tuple[str, str | None], np.ndarray] = {}
        self._word_tables: dict[tuple[str, str | None], np.ndarray] = {}
        self._trans_tables: dict[str | None, np.ndarray] = {}

    # -- layout helpers ------------------------------------------------

    @property
    def k(self) -> int:
        return len(self.tagset)

    @property
    def n_layers(self) -> int:
        # 1 for plain features, 2 when every feature has a language twin.
        return 2 if self.conjoin_language else 1

    @property
    def missing_id(self) -> int:
        return len(self.index)

    def _lang_key(self, language: str) -> str | None:
        if not self.conjoin_language:
            return None
        if language not in self.languages:
            raise CorpusError(
                f"language {language!r} was not seen when the feature index "
                f"was built (known: {', '.join(self.languages)})"
            )
        return language

    # -- indexing ------------------------------------------------------

    def fit_index(self, corpus: Sequence[LabeledSentence]) -> None:
        """Allocate feature ids from gold edges of ``corpus`` and freeze."""
        if self.index.frozen:
            raise RuntimeError("feature index is already frozen")
        tagset = self.tagset
        self.languages = tuple(sorted({s.language for s in corpus}))
        for sent in corpus:
            lang = sent.language
            prev = tagset.bos_index
            for i, tag in enumerate(sent.tags, start=1):
                feats = [
                    f"{atom}|t={tagset.name(tag)}"
                    for atom in context_atoms(sent.tokens, i, self.templates)
                ]
                feats.append(f"bigram|tp={tagset.name(prev)}|t={tagset.name(tag)}")
                feats.append(
                    f"w0={sent.tokens[i - 1]}|tp={tagset.name(prev)}|t={tagset.name(tag)}"
                )
                if self.conjoin_language:
                    feats = conjoin_language(feats, lang)
                for feat in feats:
                    self.index.add(feat)
                prev = tag
        self.index.freeze()
        self.weights = np.zeros(len(self.index))

    # -- compiled id structures ----------------------------------------

    def _atom_row(self, atom: str, lang: str | None) -> np.ndarray:
        """Feature ids of ``atom`` conjoined with every tag; (L, k)."""
        key = (atom, lang)
        row = self._atom_rows.get(key)
        if row is None:
            miss = self.missing_id
            layers = [
                [self.index.get(f"{atom}|t={name}") for name in self.tagset.tags]
            ]
            if lang is not None:
                layers.append(
                    [
                        self.index.get(f"{atom}|t={name}|lang={lang}")
                        for name in self.tagset.tags
                    ]
                )
            row = np.array(
                [[miss if v is None else v for v in layer] for layer in layers],
                dtype=np.int64,
            )
            self._atom_rows[key] = row
        return row

    def _trans_table(self, lang: str | None) -> np.ndarray:
        table = self._trans_tables.get(lang)
        if table is None:
            miss = self.missing_id
            k = self.k
            prev_names = list(self.tagset.tags) + ["BOS"]
            table = np.full((self.n_layers, k + 1, k), miss, dtype=np.int64)
            for a, pname in enumerate(prev_names):
                for b, bname in enumerate(self.tagset.tags):
                    base = f"bigram|tp={pname}|t={bname}"
                    fid = self.index.get(base)
                    if fid is not None:
                        table[0, a, b] = fid
                    if lang is not None:
                        fid = self.index.get(f"{base}|lang={lang}")
                        if fid is not None:
                            table[1, a, b] = fid
            self._trans_tables[lang] = table
        return table

    def _word_table(self, word: str, lang: str | None) -> np.ndarray:
        key = (word, lang)
        table = self._word_tables.get(key)
        if table is None:
            miss = self.missing_id
            k = self.k
            prev_names = list(self.tagset.tags) + ["BOS"]
            table = np.full((self.n_layers, k + 1, k), miss, dtype=np.int64)
            for a, pname in enumerate(prev_names):
                for b, bname in enumerate(self.tagset.tags):
                    base = f"w0={word}|tp={pname}|t={bname}"
                    fid = self.index.get(base)
                    if fid is not None:
                        table[0, a, b] = fid
                    if lang is not None:
                        fid = self.index.get(f"{base}|lang={lang}")
                        if fid is not None:
                            table[1, a, b] = fid
            self._word_tables[key] = table
        return table

    def _compile_sentence(
        self,
        sentence: Sentence,
        gold: np.ndarray | None,
        word_ids: dict[tuple[str, str | None], int],
        word_list: list[np.ndarray],
    ) -> CompiledSentence:
        lang = self._lang_key(sentence.language)
        k = self.k
        n = len(sentence)
        miss = self.missing_id
        word_idx = np.empty(n, dtype=np.int64)
        seg_ids: list[np.ndarray] = []
        seg_len = np.empty(n * k, dtype=np.int64)
        for i in range(1, n + 1):
            word = sentence.tokens[i - 1]
            wkey = (word, lang)
            widx = word_ids.get(wkey)
            if widx is None:
                widx = len(word_list)
                word_ids[wkey] = widx
                word_list.append(self._word_table(word, lang))
            word_idx[i - 1] = widx
            rows = np.concatenate(
                [self._atom_row(atom, lang) for atom in context_atoms(sentence.tokens, i, self.templates)],
                axis=0,
            )  # (A*L, k)
            cols = rows.T  # (k, A*L): per-tag segments
            for b in range(k):
                present = cols[b][cols[b] != miss]
                seg_ids.append(present)
                seg_len[(i - 1) * k + b] = present.size
        emit_ids = (
            np.concatenate(seg_ids) if seg_ids else np.empty(0, dtype=np.int64)
        )
        emit_off = np.zeros(n * k + 1, dtype=np.int64)
        np.cumsum(seg_len, out=emit_off[1:])
        return CompiledSentence(
            n=n,
            language=sentence.language,
            gold=gold,
            word_idx=word_idx,
            emit_ids=emit_ids,
            emit_seg_len=seg_len,
            emit_off=emit_off,
        )

    def compile_batch(self, corpus: Sequence[LabeledSentence]) -> CompiledBatch:
        if not self.index.frozen:
            raise RuntimeError("fit_index must run before compiling")
        if not corpus:
            raise ValueError("batch must be non-empty")
        word_ids: dict[tuple[str, str | None], int] = {}
        word_list: list[np.ndarray] = []
        compiled = []
        langs = set()
        for sent in corpus:
            gold = np.asarray(sent.tags, dtype=np.int64)
            compiled.append(
                self._compile_sentence(sent.sentence, gold, word_ids, word_list)
            )
            langs.add(self._lang_key(sent.language))
        word_tables = np.stack(word_list)  # (U, L, k+1, k)
        trans_tables = {lang: self._trans_table(lang) for lang in langs}
        observed = self._observed_counts(compiled, word_tables, trans_tables)
        return CompiledBatch(
            sentences=compiled,
            word_tables=word_tables,
            trans_tables=trans_tables,
            observed=observed,
            n_tokens=sum(c.n for c in compiled),
        )

    def _observed_counts(self, compiled, word_tables, trans_tables) -> np.ndarray:
        k = self.k
        miss = self.missing_id
        counts = np.zeros(miss + 1)
        for cs in compiled:
            trans = trans_tables[self._lang_key(cs.language)]
            prev = k  # BOS row
            for i in range(cs.n):
                b = int(cs.gold[i])
                seg = cs.emit_ids[cs.emit_off[i * k + b] : cs.emit_off[i * k + b + 1]]
                np.add.at(counts, seg, 1.0)
                np.add.at(counts, trans[:, prev, b], 1.0)
                np.add.at(counts, word_tables[cs.word_idx[i], :, prev, b], 1.0)
                prev = b
        counts[miss] = 0.0
        return counts[:miss]

    # -- scoring -------------------------------------------------------

    def _emit_scores(self, cs: CompiledSentence, eta_ext: np.ndarray) -> np.ndarray:
        vals = eta_ext[cs.emit_ids]
        cumsum = np.concatenate([[0.0], np.cumsum(vals)])
        sums = cumsum[cs.emit_off[1:]] - cumsum[cs.emit_off[:-1]]
        return sums.reshape(cs.n, self.k)

    def _scores_cube(
        self,
        cs: CompiledSentence,
        eta_ext: np.ndarray,
        word_scores: np.ndarray,
        trans_scores: dict[str | None, np.ndarray],
    ) -> np.ndarray:
        emit = self._emit_scores(cs, eta_ext)  # (n, k)
        cube = word_scores[cs.word_idx].copy()  # (n, k+1, k)
        cube += trans_scores[self._lang_key(cs.language)][None, :, :]
        cube += emit[:, None, :]
        return cube

    def lattice_for(self, sentence: Sentence) -> LogLattice:
        """Score lattice for one sentence under the current weights."""
        cs = self._compile_sentence(sentence, None, {}, wl := [])
        eta_ext = np.append(self.weights, 0.0)
        word_scores = eta_ext[np.stack(wl)].sum(axis=1)
        trans = {key: eta_ext[self._trans_table(key)].sum(axis=0)
                 for key in {self._lang_key(sentence.language)}}
        return LogLattice(self._scores_cube(cs, eta_ext, word_scores, trans))

    def decode(self, sentence: Sentence) -> list[int]:
        tags, _ = viterbi(self.lattice_for(sentence))
        return tags

    # -- objective -----------------------------------------------------

    def loglik_and_gradient(
        self,
        batch: CompiledBatch | Sequence[LabeledSentence],
        l2: float = 0.0,
    ) -> tuple[float, np.ndarray]:
        """Batch conditional log-likelihood and its gradient in eta.

        Adds ``-l2/2 * ||eta||^2`` (and its gradient) when ``l2 > 0``.
        """
        if not isinstance(batch, CompiledBatch):
            batch = self.compile_batch(batch)
        k = self.k
        miss = self.missing_id
        eta = self.weights
        eta_ext = np.append(eta, 0.0)

        word_scores = eta_ext[batch.word_tables].sum(axis=1)  # (U, k+1, k)
        trans_scores = {
            lang: eta_ext[table].sum(axis=0)
            for lang, table in batch.trans_tables.items()
        }

        total_log_z = 0.0
        expected = np.zeros(miss + 1)
        word_edge_acc = np.zeros(batch.word_tables.shape[0] * (k + 1) * k)
        trans_edge_acc = {lang: np.zeros((k + 1, k)) for lang in batch.trans_tables}
        pend_ids: list[np.ndarray] = []
        pend_w: list[np.ndarray] = []
        pending = 0

        def flush():
            nonlocal pending
            if pend_ids:
                expected_part = np.bincount(
                    np.concatenate(pend_ids),
                    weights=np.concatenate(pend_w),
                    minlength=miss + 1,
                )
                expected[: expected_part.size] += expected_part
                pend_ids.clear()
                pend_w.clear()
                pending = 0

        for cs in batch.sentences:
            cube = self._scores_cube(cs, eta_ext, word_scores, trans_scores)
            post = posteriors(LogLattice(cube))
            total_log_z += post.log_z
            node = post.node_marginals
            edge = post.edge_marginals
            pend_ids.append(cs.emit_ids)
            pend_w.append(np.repeat(node.reshape(-1), cs.emit_seg_len))
            pending += cs.emit_ids.size
            trans_edge_acc[self._lang_key(cs.language)] += edge.sum(axis=0)
            flat = (cs.word_idx[:, None] * ((k + 1) * k)) + np.arange((k + 1) * k)[None, :]
            np.add.at(word_edge_acc, flat.reshape(-1), edge.reshape(cs.n, -1).reshape(-1))
            if pending >= _FLUSH:
                flush()
        flush()

        layers = self.n_layers
        word_w = np.broadcast_to(
            word_edge_acc.reshape(-1, 1, (k + 1) * k),
            (word_edge_acc.size // ((k + 1) * k), layers, (k + 1) * k),
        ).reshape(-1)
        expected += np.bincount(
            batch.word_tables.reshape(-1), weights=word_w, minlength=miss + 1
        )
        for lang, acc in trans_edge_acc.items():
            table = batch.trans_tables[lang]
            acc_w = np.broadcast_to(acc[None, :, :], table.shape).reshape(-1)
            expected += np.bincount(
                table.reshape(-1), weights=acc_w, minlength=miss + 1
            )

        loglik = float(batch.observed @ eta) - total_log_z
        grad = batch.observed - expected[:miss]
        if l2 > 0.0:
            loglik -= 0.5 * l2 * float(eta @ eta)
            grad -= l2 * eta
        return loglik, grad


def train_lbfgs(
    model: LogLinearModel,
    train: Sequence[LabeledSentence],
    lbfgs: LbfgsConfig | None = None,
    l2: float | None = None,
) -> LbfgsResult:
    """Fit ``model.weights`` by maximizing the regularized log-likelihood.

    The index must already be fitted from ``train``.  ``l2=None`` picks
    the default for the corpus size (see :func:`auto_l2`).  The model's
    weights are set to the best iterate; the returned result carries the
    accepted-step objective trace (of the minimized negative objective).
    """
    if not model.index.frozen:
        raise RuntimeError("fit_index must run before training")
    if l2 is None:
        l2 = auto_l2(len(train))
    batch = model.compile_batch(train)

    def objective(x: np.ndarray) -> tuple[float, np.ndarray]:
        model.weights = x
        ll, grad = model.loglik_and_gradient(batch, l2=l2)
        if not np.isfinite(ll):
            raise NumericError("log-likelihood became non-finite")
        return -ll, -grad

    result = minimize_lbfgs(objective, np.zeros(len(model.index)), lbfgs or LbfgsConfig())
    model.weights = result.x
    return result
