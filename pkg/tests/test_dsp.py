import numpy as np
import pytest

from magsepformer import dsp, fft
from magsepformer.dsp import AudioBuffer, ComplexSpectrogram, WindowSpec
from magsepformer.tensor import Tensor
from magsepformer.errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    InputTooShortError,
    ShapeError,
)

from oracles import brute_frame_count, naive_dft, naive_stft


@pytest.mark.parametrize("m", [1, 2, 4, 8, 64, 512])
def test_fft_matches_naive_dft(rng, m):
    x = rng.standard_normal((3, m)) + 1j * rng.standard_normal((3, m))
    np.testing.assert_allclose(fft.fft(x), naive_dft(x), atol=1e-10 * m)
    np.testing.assert_allclose(fft.ifft(fft.fft(x)), x, atol=1e-12)


@pytest.mark.parametrize("m", [2, 4, 32, 512])
def test_rfft_irfft(rng, m):
    x = rng.standard_normal((4, m))
    spec = fft.rfft(x)
    np.testing.assert_allclose(spec, naive_dft(x)[:, : m // 2 + 1], atol=1e-10 * m)
    np.testing.assert_allclose(fft.irfft(spec, m), x, atol=1e-12)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ConfigError):
        fft.fft(np.ones(12))


def test_hann_window_examples():
    np.testing.assert_allclose(dsp.hann_window(4), [0, 0.5, 1.0, 0.5], atol=1e-15)
    assert dsp.hann_window(512)[0] == 0.0
    with pytest.raises(ConfigError):
        dsp.hann_window(5)


@pytest.mark.parametrize("hop,level", [(256, 1.0), (128, 2.0)])
def test_hann_cola_levels(hop, level):
    w = dsp.hann_window(512)
    total = np.zeros(512 * 8)
    for start in range(0, len(total) - 512 + 1, hop):
        total[start:start + 512] += w
    np.testing.assert_allclose(total[512:-512], level, atol=1e-12)


def test_frame_count_examples():
    assert dsp.frame_count(160000, 32, 16) == 9999
    assert dsp.frame_count(160000, 512, 128) == 1247
    assert dsp.frame_count(512, 512, 128) == 1
    with pytest.raises(InputTooShortError):
        dsp.frame_count(100, 512, 128)


def test_frame_count_matches_enumeration(rng):
    for _ in range(200):
        m = int(rng.integers(1, 300))
        h = int(rng.integers(1, m + 1))
        n = int(rng.integers(m, 3000))
        assert dsp.frame_count(n, m, h) == brute_frame_count(n, m, h)


def test_window_spec_validation():
    assert WindowSpec(512, 128).overlap_ratio == 0.75
    assert WindowSpec(512, 128).n_bins == 257
    for bad in [(512, 0), (512, 513), (511, 128)]:
        with pytest.raises(ConfigError):
            WindowSpec(*bad)


def test_audio_buffer_validation():
    with pytest.raises(ShapeError):
        AudioBuffer(np.zeros((2, 10)))
    with pytest.raises(ContractError):
        AudioBuffer(np.array([0.0, np.nan]))
    with pytest.raises(ConfigError):
        AudioBuffer(np.zeros(4), sample_rate=0)


def test_stft_matches_naive(rng):
    x = rng.standard_normal(1000)
    X = dsp.stft(x, WindowSpec(64, 16))
    np.testing.assert_allclose(X.values, naive_stft(x, 64, 16), atol=1e-10)
    assert X.shape == (33, dsp.frame_count(1000, 64, 16))


def test_stft_of_impulse_equals_window_dft():
    # w(0) = 0 would make an impulse at n = 0 vanish, so place it at n = 5
    x = np.zeros(512)
    x[5] = 1.0
    X = dsp.stft(x, WindowSpec(512, 128)).values[:, 0]
    expected = naive_dft(np.where(np.arange(512) == 5, dsp.hann_window(512), 0.0))[:257]
    np.testing.assert_allclose(X, expected, atol=1e-12)


def test_stft_zero_signal():
    assert not np.any(dsp.stft(np.zeros(2048), WindowSpec(512, 128)).values)


def test_stft_cosine_energy_concentrated():
    m, k = 512, 40
    n = np.arange(16000)
    X = dsp.stft(np.cos(2 * np.pi * k * n / m), WindowSpec(m, 128)).values
    energy = np.abs(X) ** 2
    interior = energy[:, 1:-1]
    share = interior[k - 1:k + 2].sum(0) / interior.sum(0)
    assert np.all(share >= 0.95)
    # the Hann main lobe puts 2/3 of the energy in bin k itself
    np.testing.assert_allclose(interior[k].sum() / interior.sum(), 2 / 3, rtol=1e-6)


def test_parseval_per_frame(rng):
    spec = WindowSpec(256, 64)
    x = rng.standard_normal(4000)
    X = dsp.stft(x, spec).values
    frames = dsp.frames(x, spec) * spec.window()
    weights = np.full(129, 2.0)
    weights[0] = weights[-1] = 1.0
    spectral = (weights[:, None] * np.abs(X) ** 2).sum(0) / 256
    np.testing.assert_allclose(spectral, (frames ** 2).sum(1), rtol=1e-9)


@pytest.mark.parametrize("m,h", [(512, 256), (512, 128), (32, 16)])
def test_istft_perfect_reconstruction(rng, m, h):
    spec = WindowSpec(m, h)
    x = rng.standard_normal(16000)
    X = dsp.stft(x, spec)
    y = dsp.istft(X, spec, len(x)).samples
    region = dsp.interior(X.n_frames, spec)
    err = np.linalg.norm(y[region] - x[region]) / np.linalg.norm(x[region])
    assert err < 1e-6


def test_istft_exact_beyond_interior_down_to_the_floor(rng):
    spec = WindowSpec(512, 128)
    x = rng.standard_normal(8000)
    X = dsp.stft(x, spec)
    y = dsp.istft(X, spec, len(x)).samples
    norm = dsp.synthesis_norm(X.n_frames, spec)
    ok = norm >= dsp.EDGE_NORM_FLOOR * norm.max()
    np.testing.assert_allclose(y[: len(norm)][ok], x[: len(norm)][ok], atol=1e-12)


def test_istft_zero_and_metadata():
    spec = WindowSpec(512, 128)
    zero = ComplexSpectrogram(np.zeros((257, 10), complex), 512, 128)
    assert not np.any(dsp.istft(zero, spec).samples)
    with pytest.raises(ContractError):
        dsp.istft(zero, WindowSpec(512, 256))
    with pytest.raises(ShapeError):
        ComplexSpectrogram(np.zeros((100, 3), complex), 512, 128)


def test_istft_out_len_trims_and_pads(rng):
    spec = WindowSpec(32, 16)
    X = dsp.stft(rng.standard_normal(100), spec)
    assert len(dsp.istft(X, spec, 90).samples) == 90
    assert len(dsp.istft(X, spec, 120).samples) == 120


def test_mag_phase_examples(rng):
    mp = dsp.mag_phase_split(np.array([[3 + 4j, 0j]]))
    assert mp.magnitude[0, 0] == 5.0 and mp.phase[0, 0] == np.arctan2(4, 3)
    assert mp.phase[0, 1] == 0.0
    X = rng.standard_normal((9, 7)) + 1j * rng.standard_normal((9, 7))
    mp = dsp.mag_phase_split(X)
    assert np.all(mp.phase > -np.pi) and np.all(mp.phase <= np.pi)
    assert np.max(np.abs(dsp.recombine(mp.magnitude, mp.phase) - X)) < 1e-12
    with pytest.raises(ContractError):
        dsp.recombine(-np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        dsp.recombine(np.ones((2, 2)), np.zeros((2, 3)))


def test_recombine_returns_spectrogram_with_metadata(rng):
    spec = WindowSpec(64, 32)
    X = dsp.stft(rng.standard_normal(640), spec)
    mp = dsp.mag_phase_split(X)
    Y = dsp.recombine(mp.magnitude, mp.phase, 64, 32)
    assert isinstance(Y, ComplexSpectrogram) and Y.hop == 32


@pytest.mark.parametrize("snr", [-10.0, 0.0, 7.5, 20.0])
def test_mix_at_snr(rng, snr):
    s, v = rng.standard_normal(4000), rng.standard_normal(4000) * 3
    x = dsp.mix_at_snr(AudioBuffer(s), AudioBuffer(v), snr).samples
    noise = x - s
    measured = 10 * np.log10((s @ s) / (noise @ noise))
    assert abs(measured - snr) < 1e-9
    if snr == 0.0:
        assert abs(s @ s - noise @ noise) < 1e-10 * (s @ s)
    if snr == 20.0:
        np.testing.assert_allclose(noise @ noise, 0.01 * (s @ s), rtol=1e-10)


def test_mix_at_snr_errors():
    with pytest.raises(DegenerateInputError):
        dsp.mix_at_snr(np.zeros(10), np.ones(10), 0.0)
    with pytest.raises(ShapeError):
        dsp.mix_at_snr(np.ones(10), np.ones(11), 0.0)


def test_istft_tensor_matches_numpy_istft(rng):
    spec = WindowSpec(64, 16)
    x = rng.standard_normal(1000)
    mp = dsp.mag_phase_split(dsp.stft(x, spec))
    y = dsp.istft_tensor(Tensor(mp.magnitude), mp.phase, spec, 1000).data
    np.testing.assert_allclose(y, dsp.istft(dsp.stft(x, spec), spec, 1000).samples, atol=1e-12)
