"""Filtering/resampling, velocities, standardization, robotic extraction."""

import numpy as np
import pytest
from scipy import signal as sg

from kinseg import geometry as geo
from kinseg.preprocess import (design_lowpass, fir_lowpass_resample,
                               jigsaws_extract, resample_indices, standardize,
                               velocities, wrap_degrees)
from kinseg.sequence import FeatureSequence, SensorSequence


def seq_from(channels, rate_hz=100.0, layout="open_surgery_6sensor"):
    channels = np.asarray(channels, dtype=np.float64)
    return SensorSequence(channels=channels,
                          labels=np.zeros(len(channels), dtype=np.int64),
                          rate_hz=rate_hz, layout=layout)


def probe(freq_hz, rate_hz, n_frames=3000):
    t = np.arange(n_frames) / rate_hz
    return np.sin(2 * np.pi * freq_hz * t)[:, None] * np.ones((1, 36))


class TestFilterDesign:
    @pytest.mark.parametrize("rate", [100.0, 179.695])
    @pytest.mark.parametrize("method", ["kaiser", "remez"])
    def test_band_specs(self, rate, method):
        taps = design_lowpass(rate, method=method)
        w, h = sg.freqz(taps, worN=8192, fs=rate)
        mag = np.abs(h)
        passband = mag[w <= 10.0]
        stopband = mag[w >= 15.0]
        ripple_db = 20 * np.log10(max(passband.max(), 1.0 / passband.min()))
        atten_db = -20 * np.log10(stopband.max())
        assert ripple_db <= 3.91
        assert atten_db >= 33.5
        assert len(taps) % 2 == 1  # integer group delay
        assert np.allclose(taps, taps[::-1])  # linear phase

    def test_rate_too_low(self):
        with pytest.raises(ValueError):
            design_lowpass(25.0)


class TestFirLowpassResample:
    def test_constant_channel(self):
        seq = seq_from(np.full((400, 36), 3.25))
        out = fir_lowpass_resample(seq)
        assert np.allclose(out.channels, 3.25, atol=1e-9)
        assert out.rate_hz == 30.0

    def test_passband_sinusoid_preserved(self):
        seq = seq_from(probe(2.0, 100.0))
        out = fir_lowpass_resample(seq)
        mid = out.channels[100:-100, 0]
        amp = (mid.max() - mid.min()) / 2.0
        ripple = 10 ** (3.91 / 20.0)
        assert 1.0 / ripple <= amp <= ripple

    def test_stopband_sinusoid_attenuated(self):
        seq = seq_from(probe(20.0, 100.0))
        out = fir_lowpass_resample(seq)
        mid = out.channels[100:-100, 0]
        amp = np.abs(mid).max()
        assert amp <= 10 ** (-33.5 / 20.0)

    def test_noop_at_target_rate(self):
        seq = seq_from(np.random.default_rng(0).normal(size=(50, 36)), rate_hz=30.0)
        assert fir_lowpass_resample(seq) is seq

    def test_rate_below_target_errors(self):
        seq = seq_from(np.zeros((50, 36)), rate_hz=20.0)
        with pytest.raises(ValueError):
            fir_lowpass_resample(seq)

    @pytest.mark.parametrize("n,rate", [(100, 100.0), (101, 100.0),
                                        (777, 179.695), (1000, 60.0)])
    def test_length_rule(self, n, rate):
        idx = resample_indices(n, rate, 30.0)
        exact = int(np.floor((n - 1) * 30.0 / rate)) + 1
        assert len(idx) == exact
        assert abs(len(idx) - int(np.ceil(n * 30.0 / rate))) <= 1
        assert idx[-1] <= n - 1

    def test_labels_nearest_index(self):
        ch = np.zeros((100, 36))
        seq = seq_from(ch)
        seq.labels = np.arange(100, dtype=np.int64)
        out = fir_lowpass_resample(seq)
        idx = resample_indices(100, 100.0, 30.0)
        assert np.array_equal(out.labels, idx)


class TestVelocities:
    def test_constant_pose_zero(self):
        seq = seq_from(np.full((10, 36), 5.0), rate_hz=30.0)
        assert np.allclose(velocities(seq).features, 0.0)

    def test_first_differences(self):
        ch = np.zeros((4, 36))
        ch[:, 0] = [0, 1, 3, 6]
        fs = velocities(seq_from(ch, rate_hz=30.0))
        assert np.array_equal(fs.features[:, 0], [0, 1, 2, 3])
        assert fs.n_frames == 4  # length preserving

    def test_euler_wraparound(self):
        ch = np.zeros((2, 36))
        ch[0, 3], ch[1, 3] = 179.0, -179.0  # channel 3 = sensor 1 e1
        fs = velocities(seq_from(ch, rate_hz=30.0))
        assert fs.features[1, 3] == pytest.approx(2.0)

    def test_position_channels_not_wrapped(self):
        ch = np.zeros((2, 36))
        ch[0, 0], ch[1, 0] = 179.0, -179.0
        fs = velocities(seq_from(ch, rate_hz=30.0))
        assert fs.features[1, 0] == pytest.approx(-358.0)

    def test_too_short_errors(self):
        with pytest.raises(ValueError):
            velocities(seq_from(np.zeros((1, 36))))

    def test_wrap_degrees(self):
        assert wrap_degrees(np.array([-358.0]))[0] == pytest.approx(2.0)
        assert wrap_degrees(np.array([358.0]))[0] == pytest.approx(-2.0)


class TestStandardize:
    def fs(self, arr):
        arr = np.asarray(arr, dtype=np.float64)
        return FeatureSequence(features=arr,
                               labels=np.zeros(len(arr), dtype=np.int64))

    def test_basic(self):
        out = standardize(self.fs([[1.0], [2.0], [3.0]]))
        assert np.allclose(out.features.ravel(),
                           [-1.224744871, 0.0, 1.224744871], atol=1e-9)

    def test_idempotent(self, rng):
        once = standardize(self.fs(rng.normal(size=(200, 4)) * 3 + 7))
        twice = standardize(once)
        assert np.allclose(twice.features, once.features, atol=1e-6)
        assert np.allclose(once.features.mean(axis=0), 0.0, atol=1e-6)
        assert np.allclose(once.features.std(axis=0), 1.0, atol=1e-6)

    def test_affine_invariance(self, rng):
        x = rng.normal(size=(100, 3))
        a = standardize(self.fs(x))
        b = standardize(self.fs(2.5 * x - 11.0))
        assert np.allclose(a.features, b.features, atol=1e-9)

    def test_zero_variance_channel(self):
        out = standardize(self.fs(np.column_stack([np.ones(5),
                                                   np.arange(5.0)])))
        assert np.allclose(out.features[:, 0], 0.0)
        assert out.zero_variance_channels == (0,)


class TestJigsawsExtract:
    def make_row(self, euler, pos=(1.0, 2.0, 3.0), grip=0.7, n=3):
        rows = np.zeros((n, 76))
        r = geo.rot(euler)
        for off in (38, 57):
            rows[:, off:off + 3] = pos
            rows[:, off + 3:off + 12] = r.reshape(-1)
            rows[:, off + 18] = grip
        return rows

    def test_identity_rotation(self):
        rows = self.make_row((0.0, 0.0, 0.0))
        seq = jigsaws_extract(rows)
        assert np.allclose(seq.channels[0, 3:6], 0.0, atol=1e-12)
        assert seq.channels.shape == (3, 14)
        assert seq.layout == "robotic_2psm"

    def test_known_pose_round_trips(self):
        euler = (30.0, 40.0, 50.0)
        seq = jigsaws_extract(self.make_row(euler))
        for off in (0, 7):
            assert np.allclose(seq.channels[0, off:off + 3], (1, 2, 3))
            assert np.allclose(seq.channels[0, off + 3:off + 6], euler, atol=1e-8)
            assert seq.channels[0, off + 6] == pytest.approx(0.7)

    def test_bad_width_errors(self):
        with pytest.raises(ValueError):
            jigsaws_extract(np.zeros((4, 75)))

    def test_non_orthogonal_block_reorthogonalized(self, caplog):
        rows = self.make_row((10.0, 20.0, 30.0))
        rows[1, 41:50] += 0.05  # corrupt PSM1 rotation at frame 1
        with caplog.at_level("WARNING"):
            seq = jigsaws_extract(rows)
        assert "re-orthogonalizing" in caplog.text
        r = geo.rot(seq.channels[1, 3:6])
        assert np.allclose(r.T @ r, np.eye(3), atol=1e-9)
