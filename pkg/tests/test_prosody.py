import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexstress.lexicon import make_alignment
from lexstress.prosody import (
    SAMPLE_RATE,
    AudioSignal,
    FeatureError,
    ProsodicFeatures,
    compute_f0,
    compute_intensity,
    extract_features,
    frame_centers,
    frame_map,
    interpolate_unvoiced,
    n_frames,
    read_feature_file,
    read_wav,
    write_feature_file,
    write_wav,
)


def tone(freq, seconds=0.4, amp=0.5, sr=SAMPLE_RATE, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioSignal(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def write_raw_wav(path, samples, rate=SAMPLE_RATE, channels=1, width=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(samples.tobytes())


class TestWav:
    def test_round_trip(self, tmp_path):
        audio = tone(200.0)
        write_wav(tmp_path / "t.wav", audio)
        back = read_wav(tmp_path / "t.wav")
        np.testing.assert_allclose(back.samples, audio.samples, atol=1.0 / 32767)

    def test_rejects_44k(self, tmp_path):
        path = tmp_path / "cd.wav"
        write_raw_wav(path, np.zeros(4410, dtype="<i2"), rate=44100)
        with pytest.raises(FeatureError, match=r"cd\.wav: sample rate 44100 Hz.*resample"):
            read_wav(path)

    def test_rejects_stereo(self, tmp_path):
        path = tmp_path / "st.wav"
        write_raw_wav(path, np.zeros(3200, dtype="<i2"), channels=2)
        with pytest.raises(FeatureError, match="mono"):
            read_wav(path)

    def test_rejects_8bit(self, tmp_path):
        path = tmp_path / "u8.wav"
        write_raw_wav(path, np.zeros(1600, dtype="u1"), width=1)
        with pytest.raises(FeatureError, match="16-bit"):
            read_wav(path)


class TestFrames:
    def test_forty_frames(self):
        assert n_frames(0.40) == 40
        np.testing.assert_allclose(frame_centers(0.0, 0.4)[:2], [0.005, 0.015])

    @given(st.integers(1, 500), st.floats(0.0, 0.0099))
    def test_frame_count(self, k, frac):
        assert n_frames(k * 0.01 + frac) == k

    def test_frame_map_valid(self):
        al = make_alignment("garage", "G ER0 AA1 ZH", [0.1] * 4)
        fmap = frame_map(al)
        assert fmap.size == 40
        assert fmap.min() == 0 and fmap.max() == 7
        assert np.all(np.diff(fmap) >= 0)
        # each 100 ms phoneme holds two 50 ms halves of five frames
        np.testing.assert_array_equal(np.bincount(fmap), [5] * 8)


class TestPitch:
    @pytest.mark.parametrize("freq", [75.0, 110.0, 220.0, 333.0, 500.0])
    def test_tone_accuracy(self, freq):
        audio = tone(freq)
        f0, voiced = compute_f0(audio, frame_centers(0.0, 0.4))
        assert voiced.all()
        np.testing.assert_allclose(f0, freq, atol=2.0)

    def test_silence_unvoiced(self):
        f0, voiced = compute_f0(AudioSignal(np.zeros(6400)), frame_centers(0.0, 0.4))
        assert not voiced.any()
        np.testing.assert_array_equal(f0, 0.0)

    def test_noise_mostly_unvoiced(self):
        rng = np.random.default_rng(0)
        _, voiced = compute_f0(AudioSignal(0.3 * rng.standard_normal(6400)),
                               frame_centers(0.0, 0.4))
        assert voiced.mean() < 0.2

    def test_short_audio(self):
        with pytest.raises(FeatureError, match="shorter"):
            compute_f0(AudioSignal(np.zeros(100)), np.array([0.005]))


class TestInterpolation:
    def test_linear_fill_and_edge_hold(self):
        f0 = np.array([0, 100, 0, 0, 130, 0])
        out, warn = interpolate_unvoiced(f0, f0 > 0)
        np.testing.assert_allclose(out, [100, 100, 110, 120, 130, 130])
        assert not warn

    def test_all_unvoiced_default(self):
        out, warn = interpolate_unvoiced(np.zeros(4), np.zeros(4, bool))
        np.testing.assert_array_equal(out, 100.0)
        assert warn

    @given(st.lists(st.tuples(st.booleans(), st.floats(75, 500)), min_size=1, max_size=50)
           .filter(lambda v: any(b for b, _ in v)))
    def test_no_zeros(self, frames):
        voiced = np.array([b for b, _ in frames])
        f0 = np.where(voiced, [f for _, f in frames], 0.0)
        out, _ = interpolate_unvoiced(f0, voiced)
        assert np.all(np.isfinite(out)) and np.all(out > 0)
        np.testing.assert_array_equal(out[voiced], f0[voiced])
        assert out.min() >= f0[voiced].min() and out.max() <= f0[voiced].max()


class TestIntensity:
    def test_full_scale_sine(self):
        db = compute_intensity(tone(200, amp=1.0), frame_centers(0.05, 0.35))
        np.testing.assert_allclose(db, 100 + 20 * np.log10(np.sqrt(0.5)), atol=0.05)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.01, 1.0))
    def test_shift_equivariance(self, gain):
        audio = tone(150, amp=0.9)
        centers = frame_centers(0.0, 0.4)
        base = compute_intensity(audio, centers)
        scaled = compute_intensity(AudioSignal(gain * audio.samples), centers)
        np.testing.assert_allclose(scaled - base, 20 * np.log10(gain), atol=0.1)

    def test_silence_clamped(self):
        db = compute_intensity(AudioSignal(np.zeros(3200)), frame_centers(0.0, 0.2))
        np.testing.assert_array_equal(db, 0.0)


class TestFeatures:
    def features(self):
        al = make_alignment("garage", "G ER0 AA1 ZH", [0.06, 0.09, 0.135, 0.06], start=0.02)
        return al, extract_features(tone(180.0, seconds=0.4), al)

    def test_extract(self):
        al, feat = self.features()
        assert feat.n_frames == n_frames(al.duration)
        np.testing.assert_allclose(feat.f0, 180.0, atol=2.0)
        np.testing.assert_allclose(feat.subphoneme_durations,
                                   np.repeat([0.03, 0.045, 0.0675, 0.03], 2))
        assert np.all(feat.scaled_frames() > 0) and np.all(feat.scaled_durations() > 0)

    def test_alignment_past_audio(self):
        al = make_alignment("garage", "G ER0 AA1 ZH", [0.2] * 4)
        with pytest.raises(FeatureError, match="audio lasts"):
            extract_features(tone(100.0, seconds=0.4), al)

    def test_scaled_values_positive_on_silence(self):
        al = make_alignment("garage", "G ER0 AA1 ZH", [0.05] * 4)
        feat = extract_features(AudioSignal(np.zeros(4000)), al)
        assert feat.all_unvoiced
        assert np.all(feat.scaled_frames() > 0)

    def test_file_round_trip(self, tmp_path):
        al, feat = self.features()
        write_feature_file([feat, feat], tmp_path / "f.jsonl", [al, al])
        back = read_feature_file(tmp_path / "f.jsonl")
        assert back == [feat, feat]

    def test_bad_record(self, tmp_path):
        (tmp_path / "f.jsonl").write_text('{"f0": [1.0]}\n')
        with pytest.raises(FeatureError, match="record 0"):
            read_feature_file(tmp_path / "f.jsonl")

    def test_mismatched_tracks(self):
        with pytest.raises(FeatureError, match="differ"):
            ProsodicFeatures([100.0, 100.0], [60.0], [True, True], [0.1, 0.1], [0, 1])
