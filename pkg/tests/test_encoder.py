import struct

import numpy as np
import pytest

from cdtriplet import encoder as enc
from cdtriplet.encoder import EncoderConfig, checkpoint_from_bytes, init_encoder
from cdtriplet.exceptions import ConfigError, FormatError, InputError, ShapeError
from conftest import TINY
from gradcheck import REL_TOL, max_rel_error, numerical_grad
from test_ops import conv_oracle, pool_oracle

# Regression pin, captured once from init_encoder(EncoderConfig(seed=7)) on golden_image().
# test_embed_matches_loop_reference checks the same forward pass against nested-loop oracles.
GOLDEN_HEAD = np.array([0.18669853, -0.04663748, 0.20344487, 0.03555179, -0.03847911, -0.17425294,
                        0.22190851, 0.02402533], dtype=np.float32)


def golden_image():
    y, x = np.mgrid[0:32, 0:32]
    return ((np.sin(x / 3.0) * np.cos(y / 5.0) + 1) / 2).astype(np.float32)[..., None]


def test_same_seed_same_weights():
    a = init_encoder(EncoderConfig(seed=1))
    b = init_encoder(EncoderConfig(seed=1))
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.weights, b.weights))


def test_different_seed_different_weights():
    a = init_encoder(EncoderConfig(seed=1))
    b = init_encoder(EncoderConfig(seed=2))
    assert not np.array_equal(a.weights[0], b.weights[0])


def test_he_init_std():
    cfg = EncoderConfig(input_size=(16, 16, 8), conv_blocks=((16, 3),), seed=5)
    kernel = init_encoder(cfg).weights[0]
    assert kernel.shape == (3, 3, 8, 16)
    expected = np.sqrt(2 / 72)
    assert abs(kernel.std() - expected) < 0.2 * expected


def test_biases_start_at_zero():
    model = init_encoder(EncoderConfig())
    for w in model.weights:
        if w.ndim == 1:
            assert not w.any()


def test_pooling_exhaustion_is_config_error():
    with pytest.raises(ConfigError):
        EncoderConfig(input_size=(4, 4, 1), conv_blocks=((4, 3), (4, 3), (4, 3)))
    with pytest.raises(ConfigError):
        EncoderConfig(embedding_dim=1)


def test_zero_image_zero_bias_gives_zero_embedding(tiny_model):
    e = enc.embed(tiny_model, np.zeros((8, 8, 1)))
    assert e.shape == (6,) and not e.any()
    e2, caches = enc.embed_with_cache(tiny_model, np.zeros((8, 8, 1)))
    assert not e2.any()
    grads = enc.backward(tiny_model, np.ones(6), caches)
    assert [g.shape for g in grads] == [w.shape for w in tiny_model.weights]


def test_identical_images_identical_embeddings(tiny_model, rng):
    img = rng.uniform(0, 1, (8, 8, 1))
    np.testing.assert_array_equal(enc.embed(tiny_model, img), enc.embed(tiny_model, img.copy()))


def test_embedding_golden_vector():
    e = enc.embed(init_encoder(EncoderConfig(seed=7)), golden_image())
    assert e.shape == (64,)
    np.testing.assert_allclose(e[:8], GOLDEN_HEAD, rtol=1e-5, atol=1e-6)


def loop_reference_embedding(model, image):
    """Forward pass built from the nested-loop conv/pool oracles."""
    w = [np.asarray(t, dtype=np.float64) for t in model.weights]
    h = np.asarray(image, dtype=np.float64)
    i = 0
    for _, k in model.config.conv_blocks:
        lo = (k - 1) // 2
        padded = np.pad(h, ((lo, k - 1 - lo), (lo, k - 1 - lo), (0, 0)))
        h = pool_oracle(np.maximum(conv_oracle(padded, w[i], w[i + 1]), 0))
        i += 2
    return h.ravel() @ w[i] + w[i + 1]


def test_embed_matches_loop_reference(rng):
    cfg = EncoderConfig(input_size=(12, 12, 2), conv_blocks=((3, 3), (4, 3)), embedding_dim=5, seed=2)
    model = init_encoder(cfg).astype(np.float64)
    for w in model.weights:
        w += rng.normal(0, 0.05, w.shape)
    for _ in range(3):
        img = rng.uniform(0, 1, (12, 12, 2))
        np.testing.assert_allclose(enc.embed(model, img), loop_reference_embedding(model, img), atol=1e-10)


def test_golden_vector_matches_loop_reference():
    model = init_encoder(EncoderConfig(seed=7))
    np.testing.assert_allclose(loop_reference_embedding(model, golden_image())[:8], GOLDEN_HEAD, atol=1e-5)


def test_embed_does_not_mutate_weights(tiny_model, rng):
    before = [w.copy() for w in tiny_model.weights]
    enc.embed(tiny_model, rng.uniform(0, 1, (3, 8, 8, 1)))
    assert all(np.array_equal(a, b) for a, b in zip(before, tiny_model.weights))


def test_embed_with_cache_matches_embed_on_100_images(rng):
    model = init_encoder(EncoderConfig(seed=4))
    imgs = rng.uniform(0, 1, (100, 32, 32, 1)).astype(np.float32)
    cached, _ = enc.embed_with_cache(model, imgs)
    plain = enc.embed(model, imgs)
    assert cached.tobytes() == plain.tobytes()
    for i in (0, 57, 99):
        # float32 BLAS may accumulate in another order for a different batch size
        np.testing.assert_allclose(enc.embed(model, imgs[i]), plain[i], rtol=1e-5, atol=1e-6)


def test_embed_rejects_bad_input(tiny_model):
    with pytest.raises(ShapeError):
        enc.embed(tiny_model, np.zeros((9, 8, 1)))
    bad = np.zeros((8, 8, 1))
    bad[0, 0, 0] = np.nan
    with pytest.raises(InputError):
        enc.embed(tiny_model, bad)


def test_embedding_length_matches_config(rng):
    for dim in (2, 5, 64):
        model = init_encoder(EncoderConfig(embedding_dim=dim))
        assert enc.embed(model, rng.uniform(0, 1, (32, 32, 1))).shape == (dim,)
    model = init_encoder(EncoderConfig(projection_head=(16, 8)))
    assert enc.embed(model, rng.uniform(0, 1, (32, 32, 1))).shape == (8,)


@pytest.mark.parametrize("head,normalize", [(None, False), ((5, 4), False), (None, True)])
def test_encoder_backward_finite_differences(rng, head, normalize):
    cfg = EncoderConfig(input_size=(8, 8, 1), conv_blocks=((3, 3), (4, 3)), embedding_dim=6,
                        projection_head=head, normalize=normalize, seed=1)
    model = init_encoder(cfg).astype(np.float64)
    for w in model.weights:
        w += rng.normal(0, 0.05, w.shape)  # nonzero biases move pre-activations off the kink
    x = rng.uniform(0, 1, (2, 8, 8, 1))
    r = rng.normal(size=(2, cfg.output_dim))
    _, caches = enc.embed_with_cache(model, x)
    grads = enc.backward(model, r, caches)
    for w, g in zip(model.weights, grads):
        num = numerical_grad(lambda: float(np.sum(enc.embed(model, x) * r)), w, h=1e-5)
        assert max_rel_error(g, num) < REL_TOL


def test_checkpoint_round_trip(tmp_path, rng):
    model = init_encoder(EncoderConfig(seed=9, projection_head=(12, 6)))
    path = tmp_path / "m.ckpt"
    enc.save_checkpoint(model, path)
    loaded = enc.load_checkpoint(path)
    assert loaded.config == model.config
    assert all(a.tobytes() == b.tobytes() for a, b in zip(model.weights, loaded.weights))
    img = rng.uniform(0, 1, (32, 32, 1))
    assert enc.embed(model, img).tobytes() == enc.embed(loaded, img).tobytes()


def test_checkpoint_layout(tiny_model):
    data = tiny_model.to_bytes()
    assert data[:4] == b"CDTL"
    version, blob_len = struct.unpack("<II", data[4:12])
    assert version == 1
    offset = 12 + blob_len
    rank = struct.unpack("<I", data[offset:offset + 4])[0]
    assert rank == 4
    assert struct.unpack("<4I", data[offset + 4:offset + 20]) == tiny_model.weights[0].shape
    n = tiny_model.weights[0].size
    first = np.frombuffer(data[offset + 20:offset + 20 + 4 * n], dtype="<f4")
    np.testing.assert_array_equal(first, tiny_model.weights[0].ravel())


def test_truncated_checkpoint_rejected(tiny_model):
    data = tiny_model.to_bytes()
    with pytest.raises(FormatError, match="truncated"):
        checkpoint_from_bytes(data[:-3])


def test_bad_magic_rejected(tiny_model):
    data = bytearray(tiny_model.to_bytes())
    data[0] ^= 0xFF
    with pytest.raises(FormatError, match="magic"):
        checkpoint_from_bytes(bytes(data))


def test_embedding_dim_mismatch_rejected(tiny_model):
    other = init_encoder(EncoderConfig(**{**TINY.to_dict(), "embedding_dim": 7}))
    # config blob of one model, tensors of the other
    a = tiny_model.to_bytes()
    b = other.to_bytes()
    blob_a = struct.unpack("<I", a[8:12])[0]
    blob_b = struct.unpack("<I", b[8:12])[0]
    franken = b[:12 + blob_b] + a[12 + blob_a:]
    with pytest.raises(FormatError, match="shape table"):
        checkpoint_from_bytes(franken)


def test_fingerprint_tracks_weights(tiny_model):
    fp = tiny_model.fingerprint()
    assert len(fp) == 32
    changed = tiny_model.copy()
    changed.weights[0][0, 0, 0, 0] += 1
    assert changed.fingerprint() != fp
