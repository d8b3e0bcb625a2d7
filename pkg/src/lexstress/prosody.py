"""Frame-level F0 and intensity plus sub-phoneme durations for one word.

All tracks use a 10 ms hop and a 40 ms analysis window centred on each
frame.  Frame ``i`` of a word starting at ``t0`` is centred at
``t0 + (i + 0.5) * hop``.
"""
from __future__ import annotations

import json
import math
import wave
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lexicon import WordAlignment, split_subphonemes

SAMPLE_RATE = 16000
HOP = 0.010
WINDOW = 0.040
F0_MIN = 75.0
F0_MAX = 500.0
VOICING_THRESHOLD = 0.45
SILENCE_FLOOR = 0.03  # relative to the signal's peak amplitude
OCTAVE_COST = 0.01
DEFAULT_F0 = 100.0

F0_SCALE = 500.0
INTENSITY_SCALE = 100.0
DURATION_SCALE = 0.5
MIN_SCALED = 1e-3


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise FeatureError("audio must be a non-empty mono signal")
        if self.sample_rate != SAMPLE_RATE:
            raise FeatureError(
                f"sample rate {self.sample_rate} Hz is not supported; "
                f"resample to {SAMPLE_RATE} Hz first (e.g. `sox in.wav -r 16000 out.wav`)")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> AudioSignal:
    """Load a 16-bit PCM mono 16 kHz WAV file."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise FeatureError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise FeatureError(f"{path}: expected 16-bit PCM, got {8 * wf.getsampwidth()}-bit")
        rate = wf.getframerate()
        if rate != SAMPLE_RATE:
            raise FeatureError(
                f"{path}: sample rate {rate} Hz is not supported; resample to "
                f"{SAMPLE_RATE} Hz first (e.g. `sox in.wav -r 16000 out.wav`)")
        raw = wf.readframes(wf.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioSignal(samples, rate)


def write_wav(path, audio: AudioSignal) -> None:
    pcm = np.clip(np.round(audio.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(pcm.tobytes())


def n_frames(duration: float, hop: float = HOP) -> int:
    # tolerance absorbs binary round-off such as 0.3 / 0.01 = 29.999...
    return int(math.floor(duration / hop + 1e-9))


def frame_centers(start: float, end: float, hop: float = HOP) -> np.ndarray:
    return start + (np.arange(n_frames(end - start, hop)) + 0.5) * hop


def _frames(audio: AudioSignal, centers: np.ndarray, window: float) -> np.ndarray:
    """Cut centred windows out of the signal, zero-padding past its edges."""
    sr = audio.sample_rate
    n = int(round(window * sr))
    half = n // 2
    pad = np.concatenate([np.zeros(half + 1), audio.samples, np.zeros(n + half + 1)])
    # window for centre c starts at sample c - half, i.e. pad index c + 1
    starts = np.round(centers * sr).astype(int) + 1
    idx = starts[:, None] + np.arange(n)[None, :]
    return pad[idx]


def _nccf(frame: np.ndarray, lags: np.ndarray) -> np.ndarray:
    n = frame.size
    out = np.zeros(lags.size)
    energy = np.cumsum(frame ** 2)
    for j, lag in enumerate(lags):
        a = frame[: n - lag]
        b = frame[lag:]
        ea = energy[n - lag - 1]
        eb = energy[-1] - energy[lag - 1]
        denom = math.sqrt(ea * eb)
        if denom > 0:
            out[j] = float(a @ b) / denom
    return out


def compute_f0(audio: AudioSignal, centers: np.ndarray, window: float = WINDOW,
               f0_min: float = F0_MIN, f0_max: float = F0_MAX,
               threshold: float = VOICING_THRESHOLD,
               silence_floor: float = SILENCE_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Autocorrelation pitch tracker.

    Returns ``(f0, voiced)``; unvoiced frames carry ``f0 = 0``.  Among local
    maxima of the normalized autocorrelation the one maximizing
    ``r(lag) - OCTAVE_COST * log2(f0_min * lag / sr)`` wins, which keeps the
    tracker off sub-harmonics of a clean periodic signal.
    """
    sr = audio.sample_rate
    if audio.samples.size < int(round(window * sr)):
        raise FeatureError("audio is shorter than one analysis window")
    frames = _frames(audio, np.asarray(centers, dtype=float), window)
    lag_min = max(2, int(math.floor(sr / f0_max)) - 1)
    lag_max = int(math.ceil(sr / f0_min)) + 1
    lags = np.arange(lag_min - 1, lag_max + 2)
    floor = silence_floor * max(float(np.max(np.abs(audio.samples))), 1e-5)

    f0 = np.zeros(len(frames))
    voiced = np.zeros(len(frames), dtype=bool)
    for i, frame in enumerate(frames):
        rms = math.sqrt(float(np.mean(frame ** 2)))
        if rms <= floor:
            continue
        frame = frame - frame.mean()
        r = _nccf(frame, lags)
        best_score, best = -np.inf, None
        for j in range(1, lags.size - 1):
            if r[j] >= r[j - 1] and r[j] > r[j + 1] and r[j] >= threshold:
                lag = lags[j]
                if not lag_min <= lag <= lag_max:
                    continue
                score = r[j] - OCTAVE_COST * math.log2(f0_min * lag / sr)
                if score > best_score:
                    best_score, best = score, j
        if best is None:
            continue
        y0, y1, y2 = r[best - 1], r[best], r[best + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        lag = lags[best] + float(np.clip(shift, -0.5, 0.5))
        f0[i] = sr / lag
        voiced[i] = True
    return f0, voiced


def interpolate_unvoiced(f0, voiced, default: float = DEFAULT_F0) -> tuple[np.ndarray, bool]:
    """Fill unvoiced frames linearly between voiced neighbours.

    Leading and trailing gaps hold the nearest voiced value.  A track with no
    voiced frame at all is filled with ``default`` and the returned warning
    flag is set.
    """
    f0 = np.asarray(f0, dtype=float)
    voiced = np.asarray(voiced, dtype=bool)
    if not voiced.any():
        return np.full_like(f0, default), True
    idx = np.flatnonzero(voiced)
    out = np.interp(np.arange(f0.size), idx, f0[idx])
    return out, False


def compute_intensity(audio: AudioSignal, centers: np.ndarray,
                      window: float = WINDOW) -> np.ndarray:
    """Frame energy in positive-shifted dBFS: ``20 log10(rms) + 100``, floored at 0."""
    frames = _frames(audio, np.asarray(centers, dtype=float), window)
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    return np.maximum(20.0 * np.log10(rms + 1e-10) + 100.0, 0.0)


@dataclass(frozen=True)
class ProsodicFeatures:
    """Raw-unit prosody for one word (Hz, dB, seconds)."""

    f0: np.ndarray
    intensity: np.ndarray
    voiced: np.ndarray
    subphoneme_durations: np.ndarray
    frame_to_subphoneme: np.ndarray
    all_unvoiced: bool = False

    def __post_init__(self):
        object.__setattr__(self, "f0", np.asarray(self.f0, dtype=float))
        object.__setattr__(self, "intensity", np.asarray(self.intensity, dtype=float))
        object.__setattr__(self, "voiced", np.asarray(self.voiced, dtype=bool))
        object.__setattr__(self, "subphoneme_durations",
                           np.asarray(self.subphoneme_durations, dtype=float))
        object.__setattr__(self, "frame_to_subphoneme",
                           np.asarray(self.frame_to_subphoneme, dtype=int))
        t = self.f0.size
        if t == 0:
            raise FeatureError("word spans no frames")
        if not (self.intensity.size == self.voiced.size == self.frame_to_subphoneme.size == t):
            raise FeatureError("frame tracks differ in length")
        if not np.all(np.isfinite(self.f0)) or not np.all(np.isfinite(self.intensity)):
            raise FeatureError("non-finite feature values")
        if self.frame_to_subphoneme.min() < 0 or \
                self.frame_to_subphoneme.max() >= self.subphoneme_durations.size:
            raise FeatureError("frame map points outside the sub-phoneme sequence")

    @property
    def n_frames(self) -> int:
        return self.f0.size

    def scaled_frames(self) -> np.ndarray:
        """``(T, 2)`` scaled F0 and intensity, strictly positive."""
        return np.stack([
            np.maximum(self.f0 / F0_SCALE, MIN_SCALED),
            np.maximum(self.intensity / INTENSITY_SCALE, MIN_SCALED),
        ], axis=1)

    def scaled_durations(self) -> np.ndarray:
        return np.maximum(self.subphoneme_durations / DURATION_SCALE, MIN_SCALED)

    def __eq__(self, other):
        if not isinstance(other, ProsodicFeatures):
            return NotImplemented
        return (self.all_unvoiced == other.all_unvoiced
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("f0", "intensity", "voiced", "subphoneme_durations",
                                  "frame_to_subphoneme")))

    __hash__ = None


def frame_map(alignment: WordAlignment, hop: float = HOP) -> np.ndarray:
    """Sub-phoneme index containing each frame centre."""
    subs = split_subphonemes(alignment)
    ends = np.array([s.end for s in subs])
    centers = frame_centers(alignment.start, alignment.end, hop)
    idx = np.searchsorted(ends, centers, side="right")
    return np.minimum(idx, len(subs) - 1)


def extract_features(audio: AudioSignal, alignment: WordAlignment) -> ProsodicFeatures:
    """Prosodic features of one aligned word."""
    if alignment.end > audio.duration + 1e-6:
        raise FeatureError(
            f"{alignment.word!r}: alignment ends at {alignment.end:.4f} s but audio "
            f"lasts {audio.duration:.4f} s")
    centers = frame_centers(alignment.start, alignment.end)
    if centers.size == 0:
        raise FeatureError(f"{alignment.word!r}: word span shorter than one frame")
    f0, voiced = compute_f0(audio, centers)
    f0, warn = interpolate_unvoiced(f0, voiced)
    intensity = compute_intensity(audio, centers)
    durations = [s.duration for s in split_subphonemes(alignment)]
    return ProsodicFeatures(f0, intensity, voiced, durations, frame_map(alignment), warn)


# -- feature files -------------------------------------------------------------

def features_to_record(feat: ProsodicFeatures, word: str = "", speaker_id: str = "") -> dict:
    return {
        "word": word,
        "speaker_id": speaker_id,
        "f0": feat.f0.tolist(),
        "intensity": feat.intensity.tolist(),
        "voiced": feat.voiced.astype(int).tolist(),
        "subphoneme_durations": feat.subphoneme_durations.tolist(),
        "frame_to_subphoneme": feat.frame_to_subphoneme.tolist(),
        "all_unvoiced": feat.all_unvoiced,
    }


def features_from_record(rec: dict, index: int = 0) -> ProsodicFeatures:
    try:
        return ProsodicFeatures(
            np.array(rec["f0"], dtype=float),
            np.array(rec["intensity"], dtype=float),
            np.array(rec["voiced"], dtype=bool),
            np.array(rec["subphoneme_durations"], dtype=float),
            np.array(rec["frame_to_subphoneme"], dtype=int),
            bool(rec.get("all_unvoiced", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FeatureError(f"record {index}: {exc}") from None


def write_feature_file(features: Iterable[ProsodicFeatures], path,
                       alignments: Iterable[WordAlignment] | None = None) -> None:
    alignments = list(alignments) if alignments is not None else None
    with open(path, "w", encoding="utf-8") as fh:
        for i, feat in enumerate(features):
            word = spk = ""
            if alignments is not None:
                word, spk = alignments[i].word, alignments[i].speaker_id
            fh.write(json.dumps(features_to_record(feat, word, spk)) + "\n")


def read_feature_file(path) -> list[ProsodicFeatures]:
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if line.strip():
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FeatureError(f"record {i}: invalid JSON ({exc.msg})") from None
            out.append(features_from_record(rec, i))
    return out
