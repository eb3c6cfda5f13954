import numpy as np
import pytest

from magsepformer import nn
from magsepformer import tensor as T
from magsepformer.dsp import frame_count
from magsepformer.errors import ConfigError, InputTooShortError, ShapeError
from magsepformer.tensor import Tensor

from oracles import gradcheck, loop_attention


def _zero(module):
    for p in module.parameters():
        p.data = np.zeros_like(p.data)


def test_positional_encoding_examples():
    pe = nn.positional_encoding(50, 256)
    np.testing.assert_array_equal(pe[0, 0::2], 0.0)
    np.testing.assert_array_equal(pe[0, 1::2], 1.0)
    assert np.all(np.abs(pe) <= 1.0)
    assert abs(pe[1, 0] - 0.8414709848078965) < 1e-15
    with pytest.raises(ConfigError):
        nn.positional_encoding(0, 8)


def test_attention_matches_loop_oracle(rng):
    mha = nn.MultiHeadAttention(4, 2, rng)
    x = rng.standard_normal((1, 3, 4))
    out = mha(Tensor(x)).data[0]
    args = []
    for lin in (mha.query, mha.key, mha.value, mha.out):
        args += [lin.weight.data, lin.bias.data]
    np.testing.assert_allclose(out, loop_attention(x[0], *args, n_heads=2), atol=1e-10)


def test_attention_single_position_is_value_then_output(rng):
    mha = nn.MultiHeadAttention(8, 4, rng)
    x = Tensor(rng.standard_normal((2, 1, 8)))
    expected = mha.out(mha.value(x)).data
    np.testing.assert_allclose(mha(x).data, expected, atol=1e-14)


def test_attention_identical_values_give_identical_outputs(rng):
    mha = nn.MultiHeadAttention(8, 2, rng)
    mha.value.weight.data = np.zeros((8, 8))
    out = mha(Tensor(rng.standard_normal((1, 6, 8)))).data[0]
    np.testing.assert_allclose(out, np.broadcast_to(out[0], out.shape), atol=1e-14)


def test_attention_is_permutation_equivariant_without_pe(rng):
    mha = nn.MultiHeadAttention(8, 2, rng)
    x = rng.standard_normal((1, 7, 8))
    perm = rng.permutation(7)
    np.testing.assert_allclose(mha(Tensor(x[:, perm])).data, mha(Tensor(x)).data[:, perm], atol=1e-12)


def test_attention_head_divisibility():
    with pytest.raises(ConfigError):
        nn.MultiHeadAttention(10, 3, np.random.default_rng(0))


def test_attention_shape_check(rng):
    with pytest.raises(ShapeError):
        nn.MultiHeadAttention(8, 2, rng)(Tensor(np.zeros((2, 3, 6))))


def test_block_zero_weights_is_identity(rng):
    block = nn.TransformerBlock(16, 8, 4, rng)
    _zero(block)
    for norm in (block.norm1, block.norm2):
        norm.gain.data = np.ones(16)
    x = rng.standard_normal((2, 7, 16))
    out = block(Tensor(x)).data
    assert out.shape == (2, 7, 16)
    np.testing.assert_array_equal(out, x)


def test_block_input_gradient(rng):
    block = nn.TransformerBlock(8, 6, 2, rng)
    assert gradcheck(lambda x: block(x), [rng.standard_normal((2, 3, 8))]) < 1e-4


def test_block_parameter_gradients(rng):
    block = nn.TransformerBlock(8, 6, 2, rng)
    x = Tensor(rng.standard_normal((2, 5, 8)))
    params = block.parameters()
    worst = gradcheck(lambda *ps: _with_params(block, ps, x), [p.data.copy() for p in params],
                      samples=4)
    assert worst < 1e-4


def _with_params(block, tensors, x):
    for (name, _), t in zip(block.named_parameters(), tensors):
        obj = block
        *path, leaf = name.split(".")
        for part in path:
            obj = getattr(obj, part)
        setattr(obj, leaf, t)
    return block(x)


def test_single_block_parameter_count():
    block = nn.TransformerBlock(256, 256, 8, np.random.default_rng(0))
    brute = sum(int(np.prod(p.shape)) for _, p in block.named_parameters())
    assert block.parameter_count() == brute == 395_776
    # four attention projections, two FFW layers, two norms
    assert brute == 4 * (256 * 256 + 256) + (256 * 256 + 256) * 2 + 2 * 2 * 256


def test_conv1d_examples():
    rng = np.random.default_rng(0)
    ident = nn.Conv1d(1, 1, 1, rng)
    ident.weight.data = np.ones((1, 1))
    np.testing.assert_array_equal(ident(Tensor([1.0, 2.0, 3.0])).data, [[1, 2, 3]])
    pair = nn.Conv1d(1, 2, 2, rng)
    pair.weight.data = np.ones((1, 2))
    np.testing.assert_array_equal(pair(Tensor([1.0, 2.0, 3.0, 4.0])).data, [[3, 7]])
    enc = nn.Conv1d(256, 32, 16, rng)
    assert enc(Tensor(np.zeros(16000))).shape == (256, frame_count(16000, 32, 16)) == (256, 999)
    with pytest.raises(InputTooShortError):
        enc(Tensor(np.zeros(20)))


def test_conv_validation():
    with pytest.raises(ConfigError):
        nn.Conv1d(4, 2, 3, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        nn.ConvTranspose1d(4, 4, 0, np.random.default_rng(0))


def test_conv_transpose_examples(rng):
    dec = nn.ConvTranspose1d(3, 5, 2, rng)
    col = rng.standard_normal((3, 1))
    np.testing.assert_allclose(dec(Tensor(col)).data, col[:, 0] @ dec.weight.data, atol=1e-15)
    assert dec(Tensor(rng.standard_normal((3, 7)))).shape == ((7 - 1) * 2 + 5,)
    # stride == kernel with a one-hot filter bank undoes the matching conv1d
    enc, dec = nn.Conv1d(4, 4, 4, rng), nn.ConvTranspose1d(4, 4, 4, rng)
    enc.weight.data = np.eye(4)
    dec.weight.data = np.eye(4)
    x = rng.standard_normal(24)
    np.testing.assert_array_equal(dec(enc(Tensor(x))).data, x)


def test_conv_adjoint_identity(rng):
    conv = nn.Conv1d(6, 32, 16, rng)
    tconv = nn.ConvTranspose1d(6, 32, 16, rng)
    tconv.weight.data = conv.weight.data
    x = rng.standard_normal(32 + 16 * 9)
    y = rng.standard_normal((6, 10))
    lhs = np.sum(conv(Tensor(x)).data * y)
    rhs = np.sum(x * tconv(Tensor(y)).data)
    assert abs(lhs - rhs) < 1e-10


def test_conv_gradients(rng):
    conv = nn.Conv1d(3, 4, 2, rng)
    assert gradcheck(lambda x, w: T.transpose(T.linear(T.frame(x, 4, 2), w)),
                     [rng.standard_normal(12), conv.weight.data.copy()]) < 1e-4
    tconv = nn.ConvTranspose1d(3, 4, 2, rng)

    def run(d, w):
        tconv.weight = w
        return tconv(d)

    assert gradcheck(run, [rng.standard_normal((3, 5)), tconv.weight.data.copy()]) < 1e-4


def test_module_parameter_order_is_stable():
    a = nn.TransformerBlock(8, 4, 2, np.random.default_rng(0))
    names = [n for n, _ in a.named_parameters()]
    assert names[:2] == ["norm1.gain", "norm1.bias"]
    assert names[-1] == "ffw.outer.bias"
