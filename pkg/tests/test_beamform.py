import numpy as np
import pytest

from farfield.beamform import (
    BeamformConfig,
    TdoaTrack,
    delay_and_sum,
    estimate_tdoa,
    load_track,
    save_track,
)
from farfield.core import AudioBuffer
from farfield.errors import ConfigError

FS = 16000


def shifted_copies(source, delays, length):
    """Channel ``c`` is ``source`` delayed by integer ``delays[c]`` samples."""
    base = max(delays) + 100
    return np.stack([source[base - d : base - d + length] for d in delays])


def measured_gain(signal_only, noise_only, track, weights="equal"):
    """SNR gain at the output over the reference input, using linearity to
    beamform the two components separately."""
    s_out = delay_and_sum(AudioBuffer(signal_only, FS), track, weights).samples[0]
    n_out = delay_and_sum(AudioBuffer(noise_only, FS), track, weights).samples[0]
    snr_in = np.mean(signal_only[0] ** 2) / np.mean(noise_only[0] ** 2)
    snr_out = np.mean(s_out**2) / np.mean(n_out**2)
    return 10 * np.log10(snr_out / snr_in)


class TestTdoa:
    def test_identical_channels(self, rng):
        x = np.tile(rng.standard_normal(FS), (3, 1))
        track = estimate_tdoa(AudioBuffer(x, FS))
        assert np.all(np.abs(track.delays) < 1e-9)
        np.testing.assert_allclose(track.confidence, 1.0, atol=1e-9)

    def test_five_sample_shift(self, rng):
        x = shifted_copies(rng.standard_normal(2 * FS), [0, 5], FS)
        track = estimate_tdoa(AudioBuffer(x, FS))
        assert np.all(np.abs(track.delays[:, 1] - 5) <= 0.5)
        assert np.all(track.delays[:, 0] == 0)

    def test_negative_shift(self, rng):
        x = shifted_copies(rng.standard_normal(2 * FS), [12, 0], FS)
        track = estimate_tdoa(AudioBuffer(x, FS))
        assert np.all(np.abs(track.delays[:, 1] + 12) <= 0.5)

    def test_fractional_shift(self, rng):
        src = rng.standard_normal(FS)
        spec = np.fft.rfft(src) * np.exp(-2j * np.pi * np.fft.rfftfreq(FS) * 2.4)
        x = np.stack([src, np.fft.irfft(spec, FS)])
        track = estimate_tdoa(AudioBuffer(x, FS), config=BeamformConfig(smoothing=False))
        # circular shift wraps a few samples, which the interior segments never see
        assert np.all(np.abs(track.delays[1:-1, 1] - 2.4) < 0.25)

    def test_monte_carlo_ten_db(self):
        hits = 0
        for trial in range(100):
            gen = np.random.default_rng(1000 + trial)
            d = int(gen.integers(-40, 41))
            clean = shifted_copies(gen.standard_normal(FS), [0, d] if d >= 0 else [-d, 0], FS // 2)
            truth = d
            noise = gen.standard_normal(clean.shape) * np.sqrt(0.1)
            track = estimate_tdoa(AudioBuffer(clean + noise, FS))
            hits += int(np.all(np.abs(track.delays[:, 1] - truth) <= 1.0))
        assert hits >= 95

    def test_single_channel(self, rng):
        track = estimate_tdoa(AudioBuffer(rng.standard_normal(FS), FS))
        assert not np.any(track.delays)

    def test_confidence_range(self, rng):
        x = rng.standard_normal((3, FS))
        track = estimate_tdoa(AudioBuffer(x, FS))
        assert np.all((track.confidence >= 0) & (track.confidence <= 1))

    def test_max_delay_bounds_search(self, rng):
        x = shifted_copies(rng.standard_normal(2 * FS), [0, 80], FS)
        track = estimate_tdoa(AudioBuffer(x, FS), max_delay_ms=2.0)
        assert np.all(np.abs(track.delays[:, 1]) <= 32.5)

    def test_smoothing_rides_through_an_outlier(self, rng):
        x = shifted_copies(rng.standard_normal(3 * FS), [0, 6], 2 * FS)
        x[1, 8000:12000] = rng.standard_normal(4000)  # one segment's worth of garbage
        smooth = estimate_tdoa(AudioBuffer(x, FS))
        assert np.sum(np.abs(smooth.delays[:, 1] - 6) > 1) <= np.sum(
            np.abs(estimate_tdoa(AudioBuffer(x, FS), config=BeamformConfig(smoothing=False)).delays[:, 1] - 6) > 1
        )

    def test_json_round_trip(self, rng, tmp_path):
        x = shifted_copies(rng.standard_normal(2 * FS), [0, 3, 7], FS)
        track = estimate_tdoa(AudioBuffer(x, FS))
        save_track(track, tmp_path / "t.json")
        back = load_track(tmp_path / "t.json")
        np.testing.assert_array_equal(back.delays, track.delays)
        np.testing.assert_array_equal(back.starts, track.starts)
        assert back.segment_frames == track.segment_frames


class TestDelayAndSum:
    def test_identical_channels_passthrough(self, rng):
        x = np.tile(rng.standard_normal(FS), (4, 1))
        audio = AudioBuffer(x, FS)
        out = delay_and_sum(audio, estimate_tdoa(audio))
        assert np.max(np.abs(out.samples[0] - x[0])) < 1e-10

    def test_single_channel(self, rng):
        audio = AudioBuffer(rng.standard_normal(1234), FS)
        out = delay_and_sum(audio, estimate_tdoa(audio))
        assert out == audio

    @pytest.mark.parametrize("frames", [100, 7999, 24001])
    def test_length_preserved(self, rng, frames):
        audio = AudioBuffer(rng.standard_normal((3, frames)), FS)
        assert delay_and_sum(audio, estimate_tdoa(audio)).frames == frames

    def test_two_channel_noise_halves(self):
        gen = np.random.default_rng(7)
        delays = [0, 9]
        sig = shifted_copies(gen.standard_normal(5 * FS), delays, 4 * FS)
        noise = gen.standard_normal(sig.shape)
        track = estimate_tdoa(AudioBuffer(sig + noise, FS))
        n_out = delay_and_sum(AudioBuffer(noise, FS), track).samples[0]
        ratio = 10 * np.log10(np.mean(n_out**2) / np.mean(noise[0] ** 2))
        assert ratio == pytest.approx(-3.0, abs=0.3)

    def test_weight_scale_bit_identical(self, rng):
        x = rng.standard_normal((3, FS))
        audio = AudioBuffer(x, FS)
        track = estimate_tdoa(audio)
        base = [0.2, 0.5, 0.3]
        ref = delay_and_sum(audio, track, base).samples
        for scale in (1e-6, 3.0, 7.77, 1e6):
            out = delay_and_sum(audio, track, [scale * w for w in base]).samples
            assert out.tobytes() == ref.tobytes()

    def test_zero_weight_drops_channel(self, rng):
        x = rng.standard_normal((2, FS))
        audio = AudioBuffer(x, FS)
        track = estimate_tdoa(audio, config=BeamformConfig(max_delay_ms=0))
        out = delay_and_sum(audio, track, [1.0, 0.0]).samples[0]
        np.testing.assert_allclose(out, x[0], atol=1e-10)

    @pytest.mark.parametrize("weights", [[0.0, 0.0], [1.0, -1.0], [1.0], "loudest"])
    def test_bad_weights(self, rng, weights):
        audio = AudioBuffer(rng.standard_normal((2, 1000)), FS)
        with pytest.raises(ConfigError):
            delay_and_sum(audio, estimate_tdoa(audio), weights)

    def test_confidence_weights(self, rng):
        x = shifted_copies(rng.standard_normal(2 * FS), [0, 4, 8], FS)
        audio = AudioBuffer(x, FS)
        out = delay_and_sum(audio, estimate_tdoa(audio), "confidence")
        assert np.max(np.abs(out.samples[0, 500:-500] - x[0, 500:-500])) < 1e-2

    def test_four_channel_gain(self):
        gen = np.random.default_rng(11)
        delays = [0, 4, 11, 2]
        sig = shifted_copies(gen.standard_normal(5 * FS), delays, 4 * FS)
        noise = gen.standard_normal(sig.shape)
        track = estimate_tdoa(AudioBuffer(sig + noise, FS))
        assert measured_gain(sig, noise, track) == pytest.approx(10 * np.log10(4), abs=0.5)


def test_track_manual_construction():
    track = TdoaTrack(np.array([0]), np.zeros((1, 2)), np.ones((1, 2)), FS, FS)
    assert track.to_json()["segments"][0]["delay"] == [0.0, 0.0]
