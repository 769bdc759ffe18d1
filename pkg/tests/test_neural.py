"""Neural scorers: encoders, lattice assembly, backprop, grad checking."""

import math

import numpy as np
import pytest

from crosstag import backend
from crosstag.corpus import LabeledSentence, Sentence, TagSet
from crosstag.neural import (
    Dims,
    NeuralModel,
    encode_sentence,
    encode_word,
    grad_check,
    loss_and_gradients,
    mono_lattice,
    xling_lattice,
)
from crosstag.optim import NumericError

DIMS = Dims(r1=8, r2=10, r3=4, q=12, d_char=6, d_word=6, lstm_layers=2, lstm_hidden=7)


def corpus(tagset):
    def mk(tokens, tags, lang):
        return LabeledSentence(
            Sentence(tuple(tokens), lang), tuple(tagset.index(t) for t in tags)
        )

    return [
        mk(["Ana", "runs"], ["B-PER", "O"], "ta"),
        mk(["Bo", "visits", "Rio"], ["B-PER", "O", "B-LOC"], "sa"),
    ]


@pytest.fixture
def mono(tagset):
    return NeuralModel.build(tagset, corpus(tagset)[:1], DIMS, kind="mono", seed=5)


@pytest.fixture
def xling(tagset):
    return NeuralModel.build(tagset, corpus(tagset), DIMS, kind="xling", seed=5)


class TestDims:
    def test_rejects_non_positive(self):
        with pytest.raises(ValueError, match="lstm_hidden"):
            Dims(lstm_hidden=0)
        with pytest.raises(ValueError, match="r3"):
            Dims(r3=-1)


class TestBuild:
    def test_languages_and_vocabs(self, tagset, xling):
        assert xling.languages == ("sa", "ta")
        assert "Ana" in xling.word_vocabs["ta"]
        assert "Rio" in xling.word_vocabs["sa"]
        assert all(ch in xling.char_vocab for ch in "AnaBoRio")
        assert 0 not in xling.char_vocab.values()  # UNK slot reserved

    def test_unknown_kind_rejected(self, tagset):
        with pytest.raises(ValueError, match="kind"):
            NeuralModel.build(tagset, corpus(tagset), DIMS, kind="bert")

    def test_mono_and_xling_parameter_groups(self, mono, xling):
        assert set(mono.groups()) == {"char", "word:ta", "bilstm", "trans", "tag_embed", "W"}
        assert set(xling.groups()) == {
            "char", "word:sa", "word:ta", "bilstm", "trans", "lang_embed", "U", "b", "u",
        }

    def test_init_distributions(self, mono):
        emb = mono.view("char/embedding")
        assert np.all(np.abs(emb) <= 0.1)
        assert np.any(emb != 0.0)
        bias = mono.view("bilstm/fw0/b")
        h = DIMS.lstm_hidden
        np.testing.assert_array_equal(bias[h : 2 * h], 1.0)  # forget gate
        np.testing.assert_array_equal(bias[:h], 0.0)
        np.testing.assert_array_equal(mono.view("trans/a"), 0.0)
        wh = mono.view("char/wh")[: DIMS.d_char]  # input gate block
        np.testing.assert_allclose(wh @ wh.T, np.eye(DIMS.d_char), atol=1e-10)

    def test_same_seed_same_params(self, tagset):
        a = NeuralModel.build(tagset, corpus(tagset), DIMS, kind="xling", seed=9)
        b = NeuralModel.build(tagset, corpus(tagset), DIMS, kind="xling", seed=9)
        np.testing.assert_array_equal(a.params, b.params)


class TestEncoders:
    def test_encode_word_shape_and_oov(self, xling):
        vec = encode_word("Ana", "ta", xling)
        assert vec.shape == (DIMS.d_char + DIMS.d_word,)
        a = encode_word("Ann", "ta", xling)  # known chars, unknown word
        b = encode_word("Boa", "ta", xling)
        np.testing.assert_array_equal(a[DIMS.d_char :], b[DIMS.d_char :])  # UNK row
        assert not np.array_equal(a[: DIMS.d_char], b[: DIMS.d_char])

    def test_empty_word_rejected(self, xling):
        with pytest.raises(ValueError):
            encode_word("", "ta", xling)

    def test_unknown_language_rejected(self, xling):
        with pytest.raises(KeyError, match="zz"):
            encode_word("Ana", "zz", xling)

    def test_encode_sentence_shape(self, tagset, xling):
        s = encode_sentence(corpus(tagset)[1].sentence, xling)
        assert s.shape == (3, DIMS.r2)


class TestLstmKernelOracle:
    """backend.lstm_forward vs an independent per-step reference."""

    def _reference(self, wx, wh, b, x):
        hidden = wh.shape[1]
        h_prev = np.zeros(hidden)
        c_prev = np.zeros(hidden)
        hs, cs = [], []
        for t in range(x.shape[0]):
            z = wx @ x[t] + wh @ h_prev + b
            gi = 1.0 / (1.0 + np.exp(-z[:hidden]))
            gf = 1.0 / (1.0 + np.exp(-z[hidden : 2 * hidden]))
            gg = np.tanh(z[2 * hidden : 3 * hidden])
            go = 1.0 / (1.0 + np.exp(-z[3 * hidden :]))
            c_prev = gf * c_prev + gi * gg
            h_prev = go * np.tanh(c_prev)
            hs.append(h_prev)
            cs.append(c_prev)
        return np.array(hs), np.array(cs)

    def test_forward_matches_reference(self):
        rng = np.random.default_rng(0)
        hidden, din, t_len = 5, 4, 7
        wx = rng.normal(size=(4 * hidden, din))
        wh = rng.normal(size=(4 * hidden, hidden)) * 0.5
        b = rng.normal(size=4 * hidden)
        x = rng.normal(size=(t_len, din))
        h, c, _ = backend.lstm_forward(wx, wh, b, x)
        h_ref, c_ref = self._reference(wx, wh, b, x)
        np.testing.assert_allclose(h, h_ref, atol=1e-12)
        np.testing.assert_allclose(c, c_ref, atol=1e-12)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        hidden, din, t_len = 4, 3, 6
        wx = rng.normal(size=(4 * hidden, din)) * 0.5
        wh = rng.normal(size=(4 * hidden, hidden)) * 0.5
        b = rng.normal(size=4 * hidden) * 0.5
        x = rng.normal(size=(t_len, din))
        dh_out = rng.normal(size=(t_len, hidden))

        def loss(wx_, wh_, b_, x_):
            h, _, _ = backend.lstm_forward(wx_, wh_, b_, x_)
            return float((h * dh_out).sum())

        h, c, gates = backend.lstm_forward(wx, wh, b, x)
        dwx, dwh, db, dx = backend.lstm_backward(wx, wh, b, x, h, c, gates, dh_out)
        eps = 1e-6
        for tensor, analytic in ((wx, dwx), (wh, dwh), (b, db), (x, dx)):
            flat = tensor.reshape(-1)
            aflat = analytic.reshape(-1)
            for coord in rng.choice(flat.size, size=5, replace=False):
                saved = flat[coord]
                flat[coord] = saved + eps
                up = loss(wx, wh, b, x)
                flat[coord] = saved - eps
                dn = loss(wx, wh, b, x)
                flat[coord] = saved
                fd = (up - dn) / (2 * eps)
                assert abs(fd - aflat[coord]) <= 1e-7 * max(1.0, abs(fd))


class TestDirectionSymmetry:
    """Reversing the input and swapping fw/bw roles reverses the output.

    Swapping the parameter sets alone is not enough for a stacked
    BiLSTM: the concatenation halves swap too, so every consumer of a
    concat (layer >= 1 input maps and the projection) needs its column
    halves exchanged.
    """

    def test_stacked_bilstm_symmetry(self, mono):
        rng = np.random.default_rng(3)
        omega = rng.normal(size=(5, DIMS.d_char + DIMS.d_word))
        s_fwd, _ = mono._run_bilstm(omega)

        saved = mono.params.copy()
        h = DIMS.lstm_hidden
        for layer in range(DIMS.lstm_layers):
            for part in ("wx", "wh", "b"):
                fw = mono.view(f"bilstm/fw{layer}/{part}")
                bw = mono.view(f"bilstm/bw{layer}/{part}")
                tmp = fw.copy()
                fw[...] = bw
                bw[...] = tmp
            if layer >= 1:
                for direction in ("fw", "bw"):
                    wx = mono.view(f"bilstm/{direction}{layer}/wx")
                    wx[...] = np.concatenate([wx[:, h:], wx[:, :h]], axis=1)
        pw = mono.view("bilstm/proj_w")
        pw[...] = np.concatenate([pw[:, h:], pw[:, :h]], axis=1)

        s_rev, _ = mono._run_bilstm(omega[::-1].copy())
        mono.params[...] = saved
        np.testing.assert_allclose(s_rev, s_fwd[::-1], atol=1e-12)


class TestLattices:
    def test_mono_shape_and_assembly(self, tagset, mono):
        sent = corpus(tagset)[0].sentence
        lattice = mono_lattice(sent, mono)
        k = len(tagset)
        assert lattice.scores.shape == (2, k + 1, k)
        s = encode_sentence(sent, mono)
        emit = s @ (mono.view("tag_embed/o") @ mono.view("W/w")).T
        expected = mono.view("trans/a")[None, :, :] + emit[:, None, :]
        np.testing.assert_allclose(lattice.scores, expected, atol=1e-12)

    def test_mono_zero_w_leaves_only_transitions(self, tagset, mono):
        mono.view("W/w")[...] = 0.0
        mono.view("trans/a")[...] = np.arange(90, dtype=float).reshape(10, 9)
        lattice = mono_lattice(corpus(tagset)[0].sentence, mono)
        for i in range(lattice.n):
            np.testing.assert_array_equal(lattice.scores[i], mono.view("trans/a"))

    def test_xling_emission_invariance(self, tagset, xling):
        # The literal emission term has no tag dependence: subtracting
        # the transition table leaves a per-position constant.
        sent = corpus(tagset)[1].sentence
        lattice = xling_lattice(sent, "sa", xling)
        residual = lattice.scores - xling.view("trans/a")[None, :, :]
        for i in range(lattice.n):
            assert np.ptp(residual[i]) <= 1e-12

    def test_xling_zero_u_leaves_only_transitions(self, tagset, xling):
        xling.view("u/u")[...] = 0.0
        sent = corpus(tagset)[0].sentence
        lattice = xling_lattice(sent, "ta", xling)
        np.testing.assert_allclose(
            lattice.scores, np.repeat(xling.view("trans/a")[None], 2, axis=0), atol=1e-12
        )

    def test_xling_language_changes_scores(self, tagset, xling):
        sent = corpus(tagset)[0].sentence
        a = xling_lattice(sent, "ta", xling).scores
        b = xling_lattice(sent, "sa", xling).scores
        assert not np.allclose(a, b)

    def test_kind_mismatch_rejected(self, tagset, mono, xling):
        sent = corpus(tagset)[0].sentence
        with pytest.raises(ValueError):
            xling_lattice(sent, "ta", mono)
        with pytest.raises(ValueError):
            mono_lattice(sent, xling)

    def test_unregistered_language_rejected(self, tagset, xling):
        with pytest.raises(KeyError, match="de"):
            xling_lattice(corpus(tagset)[0].sentence, "de", xling)


class TestLoss:
    def test_zero_params_give_uniform_loss(self, tagset, mono):
        mono.params[...] = 0.0
        batch = corpus(tagset)[:1]
        loss, _ = loss_and_gradients(mono, batch)
        assert loss == pytest.approx(2 * math.log(9), abs=1e-12)

    def test_single_token_uniform_is_log_k(self, tagset):
        one = [
            LabeledSentence(Sentence(("Ana",), "ta"), (tagset.index("B-PER"),))
        ]
        model = NeuralModel.build(tagset, one, DIMS, kind="mono", seed=5)
        model.params[...] = 0.0
        loss, _ = loss_and_gradients(model, one)
        assert loss == pytest.approx(math.log(9), abs=1e-12)

    def test_duplicated_sentence_doubles_contribution(self, tagset, mono):
        batch = corpus(tagset)[:1]
        loss1, grad1 = loss_and_gradients(mono, batch)
        loss2, grad2 = loss_and_gradients(mono, batch + batch)
        assert loss2 == pytest.approx(2 * loss1, rel=1e-12)
        np.testing.assert_allclose(grad2, 2 * grad1, atol=1e-12)

    def test_weight_scales_loss_and_gradient(self, tagset, mono):
        batch = corpus(tagset)[:1]
        loss1, grad1 = loss_and_gradients(mono, batch)
        loss_mu, grad_mu = loss_and_gradients(mono, batch, weight=0.25)
        assert loss_mu == pytest.approx(0.25 * loss1, rel=1e-12)
        np.testing.assert_allclose(grad_mu, 0.25 * grad1, atol=1e-12)

    def test_gradient_accumulates_into_buffer(self, tagset, mono):
        batch = corpus(tagset)[:1]
        _, grad1 = loss_and_gradients(mono, batch)
        buf = mono.zero_grad()
        loss_and_gradients(mono, batch, grad=buf)
        loss_and_gradients(mono, batch, grad=buf)
        np.testing.assert_allclose(buf, 2 * grad1, atol=1e-12)

    def test_empty_batch_rejected(self, mono):
        with pytest.raises(ValueError):
            loss_and_gradients(mono, [])

    def test_non_finite_loss_names_sentence(self, tagset, mono):
        # Finite-but-huge scores overflow inside the DP; the loss guard
        # must name the offending sentence.
        mono.view("trans/a")[...] = 1e308
        with np.errstate(invalid="ignore", over="ignore"):
            with pytest.raises(NumericError, match="sentence index 0"):
                loss_and_gradients(mono, corpus(tagset)[:1])

    def test_char_sharing_in_transfer(self, tagset, xling):
        # One storage object serves every language; a source-only batch
        # still pushes gradient into it, but not into target word tables.
        assert np.shares_memory(xling.view("char/wx"), xling.params)
        assert np.shares_memory(xling.view("trans/a"), xling.params)
        source_only = [s for s in corpus(tagset) if s.language == "sa"]
        _, grad = loss_and_gradients(xling, source_only)
        assert np.any(grad[xling.group_slice("char")] != 0.0)
        assert np.any(grad[xling.group_slice("trans")] != 0.0)
        assert np.all(grad[xling.group_slice("word:ta")] == 0.0)
        assert np.any(grad[xling.group_slice("word:sa")] != 0.0)

    def test_literal_xling_emission_params_get_zero_gradient(self, tagset, xling):
        # The tag-independent emission cancels in the normalizer, so u,
        # U, b and the language embedding get structurally zero gradient
        # (zero up to float accumulation order).
        _, grad = loss_and_gradients(xling, corpus(tagset))
        for group in ("u", "U", "b", "lang_embed"):
            np.testing.assert_allclose(grad[xling.group_slice(group)], 0.0, atol=1e-12)
        assert np.any(np.abs(grad[xling.group_slice("trans")]) > 1e-6)


class TestGradCheck:
    def test_mono(self, tagset, mono):
        report = grad_check(mono, corpus(tagset)[0], seed=1)
        assert report.max_rel_err <= 1e-4
        assert set(report.per_group_errors) == set(mono.groups())

    def test_xling_literal(self, tagset, xling):
        report = grad_check(xling, corpus(tagset), seed=1)
        assert report.max_rel_err <= 1e-4

    def test_xling_tag_dependent(self, tagset):
        model = NeuralModel.build(
            tagset, corpus(tagset), DIMS, kind="xling",
            tag_dependent_emission=True, seed=5,
        )
        report = grad_check(model, corpus(tagset), seed=1)
        assert report.max_rel_err <= 1e-4
        assert "P" in report.per_group_errors

    def test_deterministic_under_seed(self, tagset, mono):
        a = grad_check(mono, corpus(tagset)[0], seed=2)
        b = grad_check(mono, corpus(tagset)[0], seed=2)
        assert a.max_rel_err == b.max_rel_err
        assert a.worst_coordinate == b.worst_coordinate
        assert a.per_group_errors == b.per_group_errors

    def test_corrupted_gradient_is_localized(self, tagset, mono):
        report = grad_check(mono, corpus(tagset)[0], seed=1, corrupt_group="char")
        assert report.max_rel_err > 1e-4
        assert report.worst_coordinate[0].startswith("char/")

    def test_epsilon_sweep_is_v_shaped(self, tagset, mono):
        errs = {
            eps: grad_check(mono, corpus(tagset)[0], epsilon=eps, seed=1).max_rel_err
            for eps in (1e-3, 1e-4, 1e-5)
        }
        assert errs[1e-4] <= errs[1e-3]
        assert errs[1e-4] <= errs[1e-5]
        assert min(errs.values()) == errs[1e-4]

    def test_report_renders_per_group(self, tagset, mono):
        report = grad_check(mono, corpus(tagset)[0], seed=1)
        text = str(report)
        assert "max_rel_err" in text
        for group in mono.groups():
            assert group in text
