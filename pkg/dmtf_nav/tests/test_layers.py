"""Tests for the transformer, fusion and recurrent building blocks."""

import numpy as np
import pytest

from dmtf_nav.core.errors import AnalysisError, DimensionError
from dmtf_nav.core.layers import (
    AudioCNN,
    DecoderLayer,
    EncoderLayer,
    GRUCell,
    MultiHeadAttention,
    PatchEmbedding,
    modality_importance,
    prep_audio,
)
from dmtf_nav.ndgrad import Tensor, gradcheck, ops


def test_prep_audio_tiles_short_and_crops_long_axes():
    spec = np.arange(3 * 10 * 2, dtype=np.float64).reshape(3, 10, 2)
    out = prep_audio(spec, 8, 8, 3)
    assert out.shape == (8, 8, 3)
    np.testing.assert_array_equal(out[:, 0, 0], spec[[0, 1, 2, 0, 1, 2, 0, 1], 1, 0])
    np.testing.assert_array_equal(out[0, :, 1], spec[0, 1:9, 1])
    assert not out[..., 2].any()


def test_prep_audio_rejects_empty_input():
    with pytest.raises(DimensionError):
        prep_audio(np.zeros((0, 4, 2)), 8, 8, 3)


def test_patch_embedding_token_count(rng):
    embed = PatchEmbedding(8, 3, 4, 6, rng)
    seq = embed(Tensor(rng.random((2, 8, 8, 3))))
    assert seq.tokens.shape == (2, 4, 6)
    assert seq.patch_count == 4


def test_audio_cnn_tokens(rng):
    cnn = AudioCNN(8, 3, 4, 6, rng)
    seq = cnn(Tensor(rng.random((2, 8, 8, 3))))
    assert seq.tokens.shape == (2, cnn.num_tokens, 6)
    assert cnn.num_tokens == 9


def test_attention_rows_are_normalized(rng):
    attn = MultiHeadAttention(8, 2, rng)
    for _ in range(50):
        q = Tensor(rng.normal(scale=3.0, size=(2, 3, 8)))
        k = Tensor(rng.normal(scale=3.0, size=(2, 5, 8)))
        out, weights = attn(q, k)
        assert out.shape == (2, 3, 8)
        assert weights.shape == (2, 2, 3, 5)
        np.testing.assert_allclose(weights.data.sum(axis=-1), 1.0, atol=1e-6)
        assert weights.data.min() >= 0.0 and weights.data.max() <= 1.0


def test_closed_update_gate_keeps_hidden_state(rng):
    gru = GRUCell(4, 3, rng)
    gru.input_proj.bias.data[:3] = -1e3
    h = rng.normal(size=(2, 3))
    out = gru(Tensor(rng.normal(size=(2, 4))), Tensor(h))
    np.testing.assert_array_equal(out.data, h)


def test_gru_gradients(rng):
    gru = GRUCell(3, 4, rng)
    x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    h = Tensor(rng.normal(size=(2, 4)), requires_grad=True)

    def fn():
        return ops.sum(ops.square(gru(x, h)))

    assert gradcheck(fn, [x, h] + gru.parameters()).ok


def test_encoder_layer_gradients(rng):
    layer = EncoderLayer(4, 2, 8, rng)
    x = Tensor(rng.normal(size=(1, 3, 4)), requires_grad=True)

    def fn():
        out, _ = layer(x)
        return ops.mean(ops.tanh(out))

    result = gradcheck(fn, [x] + layer.parameters(), max_entries=6)
    assert result.ok, result.failures[:3]


def test_modality_importance_matches_masked_sums(rng):
    raw = rng.random((2, 2, 3, 7))
    weights = [raw / raw.sum(axis=-1, keepdims=True)]
    importance = modality_importance(weights, boundary=4)
    w = weights[0]
    vis = w[..., :4].sum(axis=-1).mean(axis=(1, 2))
    aud = w[..., 4:].sum(axis=-1).mean(axis=(1, 2))
    np.testing.assert_allclose(importance[:, 0], vis / (vis + aud), rtol=1e-12)
    np.testing.assert_allclose(importance.sum(axis=-1), 1.0, rtol=1e-12)


def test_modality_importance_needs_weights():
    with pytest.raises(AnalysisError):
        modality_importance([], boundary=1)


class TestPermutationEquivariance:
    TRIALS = 20

    def test_encoder_tokens(self, rng):
        layer = EncoderLayer(8, 2, 16, rng)
        for _ in range(self.TRIALS):
            x = rng.normal(size=(2, 6, 8))
            perm = rng.permutation(6)
            out, weights = layer(Tensor(x))
            shuffled, shuffled_weights = layer(Tensor(x[:, perm]))
            np.testing.assert_allclose(shuffled.data, out.data[:, perm], rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(
                shuffled_weights.data, weights.data[:, :, perm][:, :, :, perm], rtol=1e-10, atol=1e-12
            )

    def test_decoder_target_slots(self, rng):
        layer = DecoderLayer(8, 2, 16, rng)
        for _ in range(self.TRIALS):
            targets = rng.normal(size=(2, 4, 8))
            memory = Tensor(rng.normal(size=(2, 7, 8)))
            perm = rng.permutation(4)
            out, _, cross = layer(Tensor(targets), memory)
            shuffled, _, shuffled_cross = layer(Tensor(targets[:, perm]), memory)
            np.testing.assert_allclose(shuffled.data, out.data[:, perm], rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(shuffled_cross.data, cross.data[:, :, perm], rtol=1e-10, atol=1e-12)

    def test_decoder_is_invariant_to_memory_order(self, rng):
        layer = DecoderLayer(8, 2, 16, rng)
        targets = Tensor(rng.normal(size=(1, 3, 8)))
        memory = rng.normal(size=(1, 7, 8))
        perm = rng.permutation(7)
        out, _, _ = layer(targets, Tensor(memory))
        shuffled, _, _ = layer(targets, Tensor(memory[:, perm]))
        np.testing.assert_allclose(shuffled.data, out.data, rtol=1e-10, atol=1e-12)
