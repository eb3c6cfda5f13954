import numpy as np
import pytest

from magsepformer import masker as M
from magsepformer.errors import ConfigError, DegenerateInputError, ShapeError
from magsepformer.masker import ChunkTensor, MaskerConfig, SepFormerParams
from magsepformer.tensor import Tensor

from oracles import brute_chunk_starts, gradcheck


def small_config(**kw):
    base = dict(repeats=1, k_intra=1, k_inter=1, d_model=8, d_ff=8, n_heads=2, chunk_size=4)
    base.update(kw)
    return MaskerConfig(**base)


def test_n_chunks_examples():
    assert M.n_chunks(1247, 50) == 49
    assert M.n_chunks(9999, 250) == 79
    assert M.n_chunks(4, 2) == 3
    assert M.n_chunks(3, 8) == 1


def test_n_chunks_matches_enumeration():
    for length in range(1, 200):
        for chunk in range(2, 2 * length + 1):
            assert M.n_chunks(length, chunk) == len(brute_chunk_starts(length, chunk))


@pytest.mark.parametrize("length,chunk", [(1247, 50), (10, 4), (10, 5), (3, 6), (7, 2)])
def test_chunk_merge_roundtrip(rng, length, chunk):
    w = rng.standard_normal((6, length))
    ct = M.chunk_sequence(Tensor(w), chunk)
    assert ct.data.shape == (M.n_chunks(length, chunk), chunk, 6)
    assert np.max(np.abs(M.merge_chunks(ct).data - w)) <= 1e-12


def test_chunk_contents_follow_hop(rng):
    w = rng.standard_normal((3, 20))
    ct = M.chunk_sequence(Tensor(w), 6)
    for s, start in enumerate(brute_chunk_starts(20, 6)):
        expected = np.zeros((6, 3))
        tail = w[:, start:start + 6].T
        expected[: len(tail)] = tail
        np.testing.assert_array_equal(ct.data.data[s], expected)


def test_chunking_errors():
    with pytest.raises(DegenerateInputError):
        M.chunk_sequence(Tensor(np.zeros((3, 4))), 9)
    with pytest.raises(ConfigError):
        M.chunk_sequence(Tensor(np.zeros((3, 4))), 1)
    ct = M.chunk_sequence(Tensor(np.zeros((3, 10))), 4)
    with pytest.raises(ShapeError):
        M.merge_chunks(ct, 40)


def test_config_validation():
    with pytest.raises(ConfigError):
        MaskerConfig(d_model=10, n_heads=3)
    with pytest.raises(ConfigError):
        MaskerConfig(repeats=-1)
    with pytest.raises(ConfigError):
        MaskerConfig(chunk_size=1)


def test_mask_range_and_shape(rng):
    cfg = small_config()
    params = SepFormerParams(cfg, 5, rng)
    w = np.abs(rng.standard_normal((5, 23))) * 10
    mask = M.masker_forward(Tensor(w), params).data
    assert mask.shape == (5, 23)
    assert np.all(mask >= 0) and np.all(mask < 1)


def test_default_stft_mask_shape():
    cfg = MaskerConfig(repeats=1, k_intra=1, k_inter=1, d_model=16, d_ff=16, n_heads=2)
    params = SepFormerParams(cfg, 257, np.random.default_rng(0))
    mask = M.masker_forward(Tensor(np.ones((257, 1247))), params)
    assert mask.shape == (257, 1247)


def test_zero_repetitions_is_identity(rng):
    cfg = small_config(repeats=0)
    params = SepFormerParams(cfg, 8, rng)
    ct = M.chunk_frames(Tensor(rng.standard_normal((11, 8))), 4)
    assert M.dual_path_forward(ct, params).data is ct.data


def test_zero_weights_without_pe_is_identity(rng):
    cfg = small_config(repeats=2, positional_encoding=False)
    params = SepFormerParams(cfg, 8, rng)
    for stack in params.intra + params.inter:
        for block in stack.blocks:
            for name, p in block.named_parameters():
                p.data = np.ones_like(p.data) if name.endswith("gain") else np.zeros_like(p.data)
    ct = M.chunk_frames(Tensor(rng.standard_normal((11, 8))), 4)
    np.testing.assert_array_equal(M.dual_path_forward(ct, params).data.data, ct.data.data)


def test_intra_stack_is_local_to_each_chunk(rng):
    cfg = small_config(k_inter=0, chunk_size=4)
    params = SepFormerParams(cfg, 8, rng)
    x = rng.standard_normal((5, 4, 8))
    base = M.dual_path_forward(ChunkTensor(Tensor(x), 4, 12), params).data.data
    x2 = x.copy()
    x2[2] += rng.standard_normal((4, 8))  # a constant shift would be erased by the norms
    moved = M.dual_path_forward(ChunkTensor(Tensor(x2), 4, 12), params).data.data
    changed = np.any(moved != base, axis=(1, 2))
    assert changed.tolist() == [False, False, True, False, False]


def test_inter_stack_mixes_chunks(rng):
    cfg = small_config(k_intra=0, chunk_size=4)
    params = SepFormerParams(cfg, 8, rng)
    x = rng.standard_normal((5, 4, 8))
    base = M.dual_path_forward(ChunkTensor(Tensor(x), 4, 12), params).data.data
    x2 = x.copy()
    x2[2, 1] += rng.standard_normal(8)
    moved = M.dual_path_forward(ChunkTensor(Tensor(x2), 4, 12), params).data.data
    # inter attention runs per intra position: only position 1 sees the change, in every chunk
    diff = np.any(moved != base, axis=2)
    assert diff[:, 1].all() and not diff[:, [0, 2, 3]].any()


def test_masker_is_deterministic():
    cfg = small_config()
    w = np.abs(np.random.default_rng(5).standard_normal((6, 17)))
    outs = [M.masker_forward(Tensor(w), SepFormerParams(cfg, 6, np.random.default_rng(9))).data
            for _ in range(2)]
    np.testing.assert_array_equal(outs[0], outs[1])


def test_masker_shape_and_config_errors(rng):
    params = SepFormerParams(small_config(), 6, rng)
    with pytest.raises(ShapeError):
        M.masker_forward(Tensor(np.zeros((5, 10))), params)
    ct = M.chunk_frames(Tensor(np.zeros((10, 6))), 4)
    with pytest.raises(ShapeError):
        M.dual_path_forward(ct, params)
    ct = M.chunk_frames(Tensor(np.zeros((10, 8))), 4)
    with pytest.raises(ConfigError):
        M.dual_path_forward(ct, params, small_config(repeats=2))


def test_input_projection_only_when_widths_differ(rng):
    assert SepFormerParams(small_config(), 8, rng).input_proj is None
    assert SepFormerParams(small_config(), 5, rng).input_proj is not None


def test_masker_gradient_wrt_input(rng):
    params = SepFormerParams(small_config(), 4, rng)
    w = np.abs(rng.standard_normal((4, 9))) + 0.5
    assert gradcheck(lambda x: M.masker_forward(x, params), [w], samples=12) < 1e-4
