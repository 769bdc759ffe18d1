"""Neural CRF potentials: char-LSTM word encoder, BiLSTM sentence encoder.

Words are encoded as the final hidden state of a character LSTM
concatenated with a per-language word embedding.  A stacked
bidirectional LSTM turns the word vectors into per-position sentence
representations s(w)_i, projected to r2 dimensions.  Two scorers build
the edge lattice from there:

- mono:  score[i][t'][t] = a(t', t) + o(t)' W s(w)_i
- xling: score[i][t'][t] = a(t', t) + u' tanh(U [s(w)_i; l(lang)] + b)

The xling emission as written carries no tag index, so it cancels
between numerator and partition function; only the shared transitions
and encoder structure receive usable signal.  ``tag_dependent_emission``
(off by default) swaps u for o(t)' P, restoring per-tag emissions while
keeping the shared projection; see README for the trade-off.

All parameters live in one flat float64 vector with named views, so the
optimizer and the finite-difference checker see a single coordinate
space.  Gradients are hand-derived reverse passes over the same kernels
used in the forward direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import backend
from .corpus import LabeledSentence, Sentence, TagSet
from .lattice import LogLattice, posteriors, viterbi
from .optim import NumericError


@dataclass(frozen=True)
class Dims:
    r1: int = 100  # tag embedding size
    r2: int = 100  # sentence representation size
    r3: int = 16  # language embedding size
    q: int = 128  # xling projection size
    d_char: int = 50  # char LSTM hidden size = char half of the word vector
    d_word: int = 50  # per-language word embedding size
    lstm_layers: int = 2
    lstm_hidden: int = 100  # per direction per layer

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value <= 0:
                raise ValueError(f"dims.{name} must be positive")


UNK = 0  # reserved id in every vocabulary


def _vocab_from(values: Iterable[str]) -> dict[str, int]:
    vocab = {}
    for v in sorted(set(values)):
        vocab[v] = len(vocab) + 1
    return vocab


class NeuralModel:
    """Flat-parameter neural CRF, mono or cross-lingual.

    Build with :meth:`build`; the parameter vector is ``params`` and
    named tensor views come from :meth:`view`.  Group names (the part of
    a parameter name before ``/``) organize gradient checking.
    """

    def __init__(
        self,
        tagset: TagSet,
        dims: Dims,
        kind: str,
        languages: tuple[str, ...],
        char_vocab: dict[str, int],
        word_vocabs: dict[str, dict[str, int]],
        tag_dependent_emission: bool = False,
        seed: int = 0,
    ):
        if kind not in ("mono", "xling"):
            raise ValueError(f"unknown scorer kind {kind!r}")
        if not languages:
            raise ValueError("at least one language required")
        self.tagset = tagset
        self.dims = dims
        self.kind = kind
        self.languages = tuple(languages)
        self.char_vocab = dict(char_vocab)
        self.word_vocabs = {l: dict(v) for l, v in word_vocabs.items()}
        self.tag_dependent_emission = bool(tag_dependent_emission)
        self.seed = seed
        self._layout: dict[str, tuple[int, tuple[int, ...]]] = {}
        self.params = self._allocate()
        self._init_params(seed)

    # -- construction ----------------------------------------------------

    @classmethod
    def build(
        cls,
        tagset: TagSet,
        corpus: Sequence[LabeledSentence],
        dims: Dims | None = None,
        kind: str = "mono",
        tag_dependent_emission: bool = False,
        seed: int = 0,
    ) -> "NeuralModel":
        """Create a model whose vocabularies cover ``corpus``."""
        dims = dims or Dims()
        languages = tuple(sorted({s.language for s in corpus}))
        chars = (ch for s in corpus for tok in s.tokens for ch in tok)
        char_vocab = _vocab_from(chars)
        word_vocabs = {
            lang: _vocab_from(
                tok for s in corpus if s.language == lang for tok in s.tokens
            )
            for lang in languages
        }
        return cls(
            tagset,
            dims,
            kind,
            languages,
            char_vocab,
            word_vocabs,
            tag_dependent_emission=tag_dependent_emission,
            seed=seed,
        )

    def _declare(self, name: str, shape: tuple[int, ...], cursor: int) -> int:
        self._layout[name] = (cursor, shape)
        return cursor + int(np.prod(shape))

    def _allocate(self) -> np.ndarray:
        d = self.dims
        k = len(self.tagset)
        cur = 0
        cur = self._declare("char/embedding", (len(self.char_vocab) + 1, d.d_char), cur)
        cur = self._declare("char/wx", (4 * d.d_char, d.d_char), cur)
        cur = self._declare("char/wh", (4 * d.d_char, d.d_char), cur)
        cur = self._declare("char/b", (4 * d.d_char,), cur)
        for lang in self.languages:
            cur = self._declare(
                f"word:{lang}/embedding",
                (len(self.word_vocabs[lang]) + 1, d.d_word),
                cur,
            )
        in_dim = d.d_char + d.d_word
        for layer in range(d.lstm_layers):
            for direction in ("fw", "bw"):
                cur = self._declare(
                    f"bilstm/{direction}{layer}/wx", (4 * d.lstm_hidden, in_dim), cur
                )
                cur = self._declare(
                    f"bilstm/{direction}{layer}/wh",
                    (4 * d.lstm_hidden, d.lstm_hidden),
                    cur,
                )
                cur = self._declare(
                    f"bilstm/{direction}{layer}/b", (4 * d.lstm_hidden,), cur
                )
            in_dim = 2 * d.lstm_hidden
        cur = self._declare("bilstm/proj_w", (d.r2, 2 * d.lstm_hidden), cur)
        cur = self._declare("bilstm/proj_b", (d.r2,), cur)
        cur = self._declare("trans/a", (k + 1, k), cur)
        if self.kind == "mono":
            cur = self._declare("tag_embed/o", (k, d.r1), cur)
            cur = self._declare("W/w", (d.r1, d.r2), cur)
        else:
            cur = self._declare("lang_embed/l", (len(self.languages), d.r3), cur)
            cur = self._declare("U/u", (d.q, d.r2 + d.r3), cur)
            cur = self._declare("b/b", (d.q,), cur)
            if self.tag_dependent_emission:
                cur = self._declare("tag_embed/o", (k, d.r1), cur)
                cur = self._declare("P/p", (d.r1, d.q), cur)
            else:
                cur = self._declare("u/u", (d.q,), cur)
        return np.zeros(cur)

    def _init_params(self, seed: int) -> None:
        rng = np.random.default_rng(np.random.PCG64(seed))

        def glorot(view):
            fan_out, fan_in = view.shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            view[...] = rng.uniform(-bound, bound, size=view.shape)

        def orthogonal_gates(view, hidden):
            for g in range(4):
                m = rng.normal(size=(hidden, hidden))
                qmat, r = np.linalg.qr(m)
                qmat *= np.sign(np.diag(r))
                view[g * hidden : (g + 1) * hidden] = qmat

        def lstm_bias(view, hidden):
            view[...] = 0.0
            view[hidden : 2 * hidden] = 1.0  # forget gate

        for name, (_, shape) in self._layout.items():
            view = self.view(name)
            if name.endswith("/embedding") or name in ("tag_embed/o", "lang_embed/l", "u/u"):
                view[...] = rng.uniform(-0.1, 0.1, size=shape)
            elif name.endswith("/wx") or name in ("bilstm/proj_w", "W/w", "U/u", "P/p"):
                glorot(view)
            elif name.endswith("/wh"):
                orthogonal_gates(view, shape[1])
            elif name.endswith("/b") and name not in ("b/b",):
                if name == "bilstm/proj_b":
                    view[...] = 0.0
                else:
                    lstm_bias(view, shape[0] // 4)
            else:  # trans/a, b/b
                view[...] = 0.0

    # -- parameter access --------------------------------------------------

    @property
    def n_params(self) -> int:
        return self.params.size

    def parameter_names(self) -> tuple[str, ...]:
        return tuple(self._layout)

    def groups(self) -> tuple[str, ...]:
        seen = []
        for name in self._layout:
            group = name.split("/", 1)[0]
            if group not in seen:
                seen.append(group)
        return tuple(seen)

    def group_slice(self, group: str) -> slice:
        spans = [
            (off, off + int(np.prod(shape)))
            for name, (off, shape) in self._layout.items()
            if name.split("/", 1)[0] == group
        ]
        if not spans:
            raise KeyError(group)
        lo = min(s for s, _ in spans)
        hi = max(e for _, e in spans)
        if any(
            not (lo <= s and e <= hi) for s, e in spans
        ) or sum(e - s for s, e in spans) != hi - lo:
            raise AssertionError(f"group {group} is not contiguous")
        return slice(lo, hi)

    def view(self, name: str, vector: np.ndarray | None = None) -> np.ndarray:
        off, shape = self._layout[name]
        base = self.params if vector is None else vector
        return base[off : off + int(np.prod(shape))].reshape(shape)

    def name_of_coordinate(self, idx: int) -> tuple[str, int]:
        for name, (off, shape) in self._layout.items():
            size = int(np.prod(shape))
            if off <= idx < off + size:
                return name, idx - off
        raise IndexError(idx)

    def zero_grad(self) -> np.ndarray:
        return np.zeros_like(self.params)

    # -- encoders ----------------------------------------------------------

    def _char_ids(self, word: str) -> np.ndarray:
        get = self.char_vocab.get
        return np.fromiter((get(c, UNK) for c in word), dtype=np.int64, count=len(word))

    def _word_id(self, word: str, language: str) -> int:
        try:
            vocab = self.word_vocabs[language]
        except KeyError:
            raise KeyError(f"language {language!r} has no word table") from None
        return vocab.get(word, UNK)

    def _run_char(self, word: str):
        ids = self._char_ids(word)
        x = self.view("char/embedding")[ids]
        h, c, gates = backend.lstm_forward(
            self.view("char/wx"), self.view("char/wh"), self.view("char/b"), x
        )
        return ids, x, h, c, gates

    def _run_bilstm(self, x0: np.ndarray):
        """Stacked BiLSTM + projection; returns (S, trace)."""
        d = self.dims
        layers = []
        x = x0
        for layer in range(d.lstm_layers):
            fw = self.view(f"bilstm/fw{layer}/wx"), self.view(
                f"bilstm/fw{layer}/wh"
            ), self.view(f"bilstm/fw{layer}/b")
            bw = self.view(f"bilstm/bw{layer}/wx"), self.view(
                f"bilstm/bw{layer}/wh"
            ), self.view(f"bilstm/bw{layer}/b")
            hf, cf, gf = backend.lstm_forward(*fw, x)
            xr = x[::-1].copy()
            hb, cb, gb = backend.lstm_forward(*bw, xr)
            out = np.concatenate([hf, hb[::-1]], axis=1)
            layers.append((x, xr, hf, cf, gf, hb, cb, gb))
            x = out
        s = x @ self.view("bilstm/proj_w").T + self.view("bilstm/proj_b")
        return s, (layers, x)

    def _bilstm_backward(self, trace, ds: np.ndarray, grad: np.ndarray) -> np.ndarray:
        d = self.dims
        layers, x_top = trace
        self.view("bilstm/proj_w", grad)[...] += ds.T @ x_top
        self.view("bilstm/proj_b", grad)[...] += ds.sum(axis=0)
        dx = ds @ self.view("bilstm/proj_w")
        for layer in range(d.lstm_layers - 1, -1, -1):
            x, xr, hf, cf, gf, hb, cb, gb = layers[layer]
            h = d.lstm_hidden
            dhf = dx[:, :h].copy()
            dhb = dx[:, h:][::-1].copy()
            dwx, dwh, db, dxf = backend.lstm_backward(
                self.view(f"bilstm/fw{layer}/wx"),
                self.view(f"bilstm/fw{layer}/wh"),
                self.view(f"bilstm/fw{layer}/b"),
                x, hf, cf, gf, dhf,
            )
            self.view(f"bilstm/fw{layer}/wx", grad)[...] += dwx
            self.view(f"bilstm/fw{layer}/wh", grad)[...] += dwh
            self.view(f"bilstm/fw{layer}/b", grad)[...] += db
            dwx, dwh, db, dxb = backend.lstm_backward(
                self.view(f"bilstm/bw{layer}/wx"),
                self.view(f"bilstm/bw{layer}/wh"),
                self.view(f"bilstm/bw{layer}/b"),
                xr, hb, cb, gb, dhb,
            )
            self.view(f"bilstm/bw{layer}/wx", grad)[...] += dwx
            self.view(f"bilstm/bw{layer}/wh", grad)[...] += dwh
            self.view(f"bilstm/bw{layer}/b", grad)[...] += db
            dx = dxf + dxb[::-1]
        return dx

    # -- lattice construction ------------------------------------------------

    def _encode_tokens(self, sentence: Sentence):
        d = self.dims
        char_traces = []
        omega = np.empty((len(sentence), d.d_char + d.d_word))
        word_ids = np.empty(len(sentence), dtype=np.int64)
        table = self.view(f"word:{sentence.language}/embedding")
        for i, word in enumerate(sentence.tokens):
            ids, x, h, c, gates = self._run_char(word)
            char_traces.append((ids, x, h, c, gates))
            wid = self._word_id(word, sentence.language)
            word_ids[i] = wid
            omega[i, : d.d_char] = h[-1]
            omega[i, d.d_char :] = table[wid]
        return omega, word_ids, char_traces

    def _emission_forward(self, s: np.ndarray, language: str):
        """Per-position emission rows (n, k) plus a trace for backward."""
        d = self.dims
        k = len(self.tagset)
        if self.kind == "mono":
            ow = self.view("tag_embed/o") @ self.view("W/w")  # (k, r2)
            return s @ ow.T, ("mono", ow)
        lang_idx = self.languages.index(language) if language in self.languages else -1
        if lang_idx < 0:
            raise KeyError(f"language {language!r} is not registered")
        lvec = self.view("lang_embed/l")[lang_idx]
        z = s @ self.view("U/u")[:, : d.r2].T
        z += lvec @ self.view("U/u")[:, d.r2 :].T
        z += self.view("b/b")
        t = np.tanh(z)  # (n, q)
        if self.tag_dependent_emission:
            op = self.view("tag_embed/o") @ self.view("P/p")  # (k, q)
            return t @ op.T, ("xling_tag", lang_idx, t, op)
        e = t @ self.view("u/u")  # (n,)
        return np.repeat(e[:, None], k, axis=1), ("xling", lang_idx, t)

    def _emission_backward(self, s, de, trace, grad) -> np.ndarray:
        d = self.dims
        kind = trace[0]
        if kind == "mono":
            ow = trace[1]
            dow = de.T @ s
            w = self.view("W/w")
            o = self.view("tag_embed/o")
            self.view("tag_embed/o", grad)[...] += dow @ w.T
            self.view("W/w", grad)[...] += o.T @ dow
            return de @ ow
        if kind == "xling_tag":
            _, lang_idx, t, op = trace
            dt = de @ op
            dop = de.T @ t
            p = self.view("P/p")
            o = self.view("tag_embed/o")
            self.view("tag_embed/o", grad)[...] += dop @ p.T
            self.view("P/p", grad)[...] += o.T @ dop
        else:
            _, lang_idx, t = trace
            dscalar = de.sum(axis=1)  # (n,)
            self.view("u/u", grad)[...] += dscalar @ t
            dt = dscalar[:, None] * self.view("u/u")[None, :]
        dz = dt * (1.0 - t * t)
        u_mat = self.view("U/u")
        lvec = self.view("lang_embed/l")[lang_idx]
        du = self.view("U/u", grad)
        du[:, : d.r2] += dz.T @ s
        du[:, d.r2 :] += np.outer(dz.sum(axis=0), lvec)
        self.view("b/b", grad)[...] += dz.sum(axis=0)
        self.view("lang_embed/l", grad)[lang_idx] += dz.sum(axis=0) @ u_mat[:, d.r2 :]
        return dz @ u_mat[:, : d.r2]

    def _forward(self, sentence: Sentence):
        omega, word_ids, char_traces = self._encode_tokens(sentence)
        s, bi_trace = self._run_bilstm(omega)
        emit, emit_trace = self._emission_forward(s, sentence.language)
        k = len(self.tagset)
        cube = np.repeat(self.view("trans/a")[None, :, :], len(sentence), axis=0)
        cube += emit[:, None, :]
        return cube, (omega, word_ids, char_traces, s, bi_trace, emit_trace)

    def _backward(self, sentence: Sentence, dcube: np.ndarray, trace, grad) -> None:
        d = self.dims
        omega, word_ids, char_traces, s, bi_trace, emit_trace = trace
        self.view("trans/a", grad)[...] += dcube.sum(axis=0)
        de = dcube.sum(axis=1)  # (n, k): emission is broadcast over t'
        ds = self._emission_backward(s, de, emit_trace, grad)
        domega = self._bilstm_backward(bi_trace, ds, grad)
        word_grad = self.view(f"word:{sentence.language}/embedding", grad)
        char_emb_grad = self.view("char/embedding", grad)
        for i in range(len(sentence)):
            ids, x, h, c, gates = char_traces[i]
            dh_out = np.zeros_like(h)
            dh_out[-1] = domega[i, : d.d_char]
            dwx, dwh, db, dx = backend.lstm_backward(
                self.view("char/wx"), self.view("char/wh"), self.view("char/b"),
                x, h, c, gates, dh_out,
            )
            self.view("char/wx", grad)[...] += dwx
            self.view("char/wh", grad)[...] += dwh
            self.view("char/b", grad)[...] += db
            np.add.at(char_emb_grad, ids, dx)
            word_grad[word_ids[i]] += domega[i, d.d_char :]

    # -- public API ---------------------------------------------------------

    def lattice(self, sentence: Sentence) -> LogLattice:
        cube, _ = self._forward(sentence)
        return LogLattice(cube)

    def decode(self, sentence: Sentence) -> list[int]:
        tags, _ = viterbi(self.lattice(sentence))
        return tags


def encode_word(word: str, language: str, model: NeuralModel) -> np.ndarray:
    """Word vector: char-LSTM final hidden states concatenated with a word embedding."""
    if not word:
        raise ValueError("word must be non-empty")
    _, _, h, _, _ = model._run_char(word)
    table = model.view(f"word:{language}/embedding")
    return np.concatenate([h[-1], table[model._word_id(word, language)]])


def encode_sentence(sentence: Sentence, model: NeuralModel) -> np.ndarray:
    """Per-position sentence representations s(w); shape (n, r2)."""
    omega, _, _ = model._encode_tokens(sentence)
    s, _ = model._run_bilstm(omega)
    return s


def mono_lattice(sentence: Sentence, model: NeuralModel) -> LogLattice:
    if model.kind != "mono":
        raise ValueError("model does not carry the mono scorer")
    return model.lattice(sentence)


def xling_lattice(sentence: Sentence, language: str, model: NeuralModel) -> LogLattice:
    if model.kind != "xling":
        raise ValueError("model does not carry the xling scorer")
    if language != sentence.language:
        sentence = Sentence(sentence.tokens, language)
    return model.lattice(sentence)


def loss_and_gradients(
    model: NeuralModel,
    batch: Sequence[LabeledSentence],
    grad: np.ndarray | None = None,
    weight: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Total negative log-likelihood of ``batch`` and its flat gradient.

    ``weight`` scales every sentence's contribution (used by the joint
    transfer objective); ``grad`` accumulates in place when given.
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    if grad is None:
        grad = model.zero_grad()
    k = len(model.tagset)
    total = 0.0
    for idx, labeled in enumerate(batch):
        cube, trace = model._forward(labeled.sentence)
        post = posteriors(LogLattice(cube))
        gold_score = 0.0
        prev = k
        dcube = post.edge_marginals.copy()
        for i, tag in enumerate(labeled.tags):
            gold_score += cube[i, prev, tag]
            dcube[i, prev, tag] -= 1.0
            prev = tag
        loss = post.log_z - gold_score
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at sentence index {idx}")
        total += weight * loss
        if weight != 1.0:
            dcube *= weight
        model._backward(labeled.sentence, dcube, trace, grad)
    return total, grad


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_coordinate: tuple[str, int]
    per_group_errors: dict[str, float]

    def __str__(self) -> str:
        lines = [f"max_rel_err {self.max_rel_err:.3e} at {self.worst_coordinate}"]
        for group, err in self.per_group_errors.items():
            lines.append(f"  {group:<14} {err:.3e}")
        return "\n".join(lines)


def grad_check(
    model: NeuralModel,
    example: LabeledSentence | Sequence[LabeledSentence],
    epsilon: float = 1e-4,
    samples_per_group: int = 30,
    seed: int = 0,
    corrupt_group: str | None = None,
) -> GradCheckReport:
    """Central finite differences vs analytic gradient, per parameter group.

    Relative error uses a denominator floor of 1e-4: coordinates whose
    true derivative sits below the floor (e.g. structurally cancelled
    ones in the literal xling emission) are compared on an absolute
    scale where finite differences can still resolve them.

    ``corrupt_group`` perturbs the analytic gradient of one group before
    comparison; the report's worst coordinate must then land in it (test
    hook for the checker itself).
    """
    batch = [example] if isinstance(example, LabeledSentence) else list(example)
    _, grad = loss_and_gradients(model, batch)
    if corrupt_group is not None:
        grad = grad.copy()
        grad[model.group_slice(corrupt_group)] += 1.0
    rng = np.random.default_rng(np.random.PCG64(seed))
    params = model.params
    per_group: dict[str, float] = {}
    worst = 0.0
    worst_coord = ("", 0)
    for group in model.groups():
        sl = model.group_slice(group)
        size = sl.stop - sl.start
        count = min(samples_per_group, size)
        coords = rng.choice(size, size=count, replace=False) + sl.start
        g_err = 0.0
        for coord in coords:
            saved = params[coord]
            params[coord] = saved + epsilon
            up, _ = loss_and_gradients(model, batch, grad=model.zero_grad())
            params[coord] = saved - epsilon
            dn, _ = loss_and_gradients(model, batch, grad=model.zero_grad())
            params[coord] = saved
            fd = (up - dn) / (2.0 * epsilon)
            rel = abs(fd - grad[coord]) / max(abs(fd), abs(grad[coord]), 1e-4)
            if rel > g_err:
                g_err = rel
            if rel > worst:
                worst = rel
                name, local = model.name_of_coordinate(int(coord))
                worst_coord = (name, local)
        per_group[group] = g_err
    return GradCheckReport(worst, worst_coord, per_group)
