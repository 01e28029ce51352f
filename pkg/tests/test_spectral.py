import numpy as np
import pytest
from mpmath import mp, mpc, exp as mp_exp, pi as mp_pi

from spectf import spectral


def mp_dft(x, inverse=False):
    """Extended-precision direct summation, independent of the module."""
    n = len(x)
    sign = 1 if inverse else -1
    out = []
    with mp.workdps(50):
        for k in range(n):
            acc = mpc(0)
            for t, xt in enumerate(x):
                acc += mpc(complex(xt)) * mp_exp(sign * 2j * mp_pi * k * t / n)
            if inverse:
                acc /= n
            out.append(complex(acc))
    return np.array(out, dtype=np.complex128)


def rel_err(a, b):
    denom = max(np.max(np.abs(b)), 1e-300)
    return np.max(np.abs(a - b)) / denom


class TestNaiveTransforms:
    def test_delta_input_flat_spectrum(self):
        out = spectral.dft_naive([1, 0, 0, 0])
        assert np.allclose(out, np.ones(4), atol=1e-12)

    def test_constant_input_concentrates_at_dc(self):
        c = 0.7 - 0.2j
        out = spectral.dft_naive([c, c, c, c])
        expected = np.array([4 * c, 0, 0, 0])
        assert np.allclose(out, expected, atol=1e-12)

    def test_dft_matches_extended_precision_len6(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        assert rel_err(spectral.dft_naive(x), mp_dft(x)) <= 1e-12

    def test_idft_round_trip_len8(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        back = spectral.idft_naive(spectral.dft_naive(x))
        assert rel_err(back, x) <= 1e-10

    def test_idft_dc_only(self):
        n, c = 5, 2.5 + 1.0j
        X = np.zeros(n, dtype=np.complex128)
        X[0] = n * c
        assert np.allclose(spectral.idft_naive(X), np.full(n, c), atol=1e-12)

    def test_idft_matches_extended_precision_len5(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        assert rel_err(spectral.idft_naive(X), mp_dft(X, inverse=True)) <= 1e-12

    @pytest.mark.parametrize("fn", [spectral.dft_naive, spectral.idft_naive])
    def test_empty_input_rejected(self, fn):
        with pytest.raises(ValueError):
            fn([])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            spectral.dft_naive([1.0, np.nan])


class TestFastTransform:
    @pytest.mark.parametrize("n", list(range(1, 65)))
    def test_matches_naive_all_lengths(self, n):
        rng = np.random.default_rng(100 + n)
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        assert rel_err(spectral.fft(x), spectral.dft_naive(x)) <= 1e-9

    def test_length_one_identity(self):
        z = 3.0 - 4.0j
        assert spectral.fft([z])[0] == pytest.approx(z)

    def test_lookback_length_24(self):
        rng = np.random.default_rng(24)
        x = rng.standard_normal(24) + 1j * rng.standard_normal(24)
        assert rel_err(spectral.fft(x), spectral.dft_naive(x)) <= 1e-9

    def test_linearity(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        a, b = 1.3 - 0.2j, -0.7 + 2.1j
        lhs = spectral.fft(a * x + b * y)
        rhs = a * spectral.fft(x) + b * spectral.fft(y)
        assert rel_err(lhs, rhs) <= 1e-9

    def test_hermitian_symmetry_of_real_input(self):
        rng = np.random.default_rng(12)
        for n in (9, 16, 24):
            x = rng.standard_normal(n)
            X = spectral.fft(x)
            mirrored = np.conj(X[(-np.arange(n)) % n])
            assert rel_err(X, mirrored) <= 1e-9

    def test_ifft_inverts_fft(self):
        rng = np.random.default_rng(13)
        for n in (7, 12, 24, 33):
            x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            assert rel_err(spectral.ifft(spectral.fft(x)), x) <= 1e-9


class TestRealTransforms:
    def test_lookback_24_gives_13_bins(self):
        spec = spectral.rfft(np.arange(24.0))
        assert spec.bins.size == 13
        assert spec.origin_length == 24

    def test_constant_series(self):
        c, n = 1.75, 10
        spec = spectral.rfft(np.full(n, c))
        assert spec.bins[0] == pytest.approx(n * c)
        assert np.all(np.abs(spec.bins[1:]) <= 1e-9)

    def test_cosine_concentrates_at_bin3(self):
        t = np.arange(24)
        x = np.cos(2 * np.pi * 3 * t / 24)
        spec = spectral.rfft(x)
        assert spec.bins[3].real == pytest.approx(12.0, rel=1e-9)
        others = np.delete(np.abs(spec.bins), 3)
        assert np.all(others <= 1e-9)
        # cross-check the whole half spectrum against the naive oracle
        assert rel_err(spec.bins, spectral.dft_naive(x)[:13]) <= 1e-9

    def test_bin0_and_nyquist_real(self):
        rng = np.random.default_rng(14)
        spec = spectral.rfft(rng.standard_normal(16))
        scale = np.max(np.abs(spec.bins))
        assert abs(spec.bins[0].imag) <= 1e-9 * scale
        assert abs(spec.bins[-1].imag) <= 1e-9 * scale

    @pytest.mark.parametrize("n", [5, 8, 24, 48, 337])
    def test_round_trip(self, n):
        rng = np.random.default_rng(n)
        x = rng.standard_normal(n)
        back = spectral.irfft(spectral.rfft(x))
        assert np.max(np.abs(back - x)) <= 1e-9 * np.max(np.abs(x))

    def test_dc_only_spectrum_gives_constant(self):
        bins = np.zeros(4, dtype=np.complex128)
        bins[0] = 12.0
        out = spectral.irfft(spectral.Spectrum(bins, 6))
        assert np.allclose(out, np.full(6, 2.0), atol=1e-12)

    def test_hand_symmetrized_matches_naive_completion(self):
        rng = np.random.default_rng(15)
        n = 10
        bins = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        bins[0] = bins[0].real
        bins[-1] = bins[-1].real
        full = np.concatenate([bins, np.conj(bins[1:-1])[::-1]])
        expected = spectral.idft_naive(full)
        got = spectral.irfft(spectral.Spectrum(bins, n))
        assert rel_err(got, expected.real) <= 1e-9
        assert np.max(np.abs(expected.imag)) <= 1e-9

    def test_bin_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            spectral.irfft(spectral.Spectrum(np.zeros(5, dtype=np.complex128), 10))
        with pytest.raises(ValueError):
            spectral.Spectrum(np.zeros(4, dtype=np.complex128), 10)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            spectral.rfft([])


class TestConvolutionAndEnergy:
    def test_delta_kernel_is_identity(self):
        rng = np.random.default_rng(16)
        x = rng.standard_normal(9)
        h = np.zeros(9)
        h[0] = 1.0
        assert np.allclose(spectral.circular_convolve(x, h), x, atol=1e-12)

    def test_pair_of_ones(self):
        assert np.allclose(spectral.circular_convolve([1, 1], [1, 1]), [2, 2])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            spectral.circular_convolve([1, 2, 3], [1, 2])

    @pytest.mark.parametrize("n", [4, 7, 24, 48])
    def test_convolution_theorem(self, n):
        rng = np.random.default_rng(200 + n)
        x = rng.standard_normal(n)
        h = rng.standard_normal(n)
        sx, sh = spectral.rfft(x), spectral.rfft(h)
        freq_side = spectral.irfft(spectral.Spectrum(sx.bins * sh.bins, n))
        time_side = spectral.circular_convolve(x, h)
        assert rel_err(freq_side, time_side) <= 1e-9

    def test_zero_signal_energy(self):
        z = np.zeros(8)
        assert spectral.signal_energy(z) == 0.0
        assert spectral.spectral_energy(spectral.fft(z)) == 0.0

    def test_unit_impulse_energy(self):
        x = np.array([1.0, 0, 0, 0])
        assert spectral.signal_energy(x) == pytest.approx(1.0)
        assert spectral.spectral_energy(spectral.fft(x)) == pytest.approx(1.0)

    def test_parseval_random(self):
        rng = np.random.default_rng(17)
        for n in (3, 8, 24, 50):
            x = rng.standard_normal(n)
            lhs = spectral.signal_energy(x)
            rhs = spectral.spectral_energy(spectral.fft(x))
            assert abs(lhs - rhs) <= 1e-9 * lhs
