"""Extract F0 and intensity from a WAV file and pool them per sub-phoneme.

A gliding tone stands in for speech so the recovered pitch can be compared
with the known input.

Run: python demos/02_prosody_features.py
"""
import tempfile
from pathlib import Path

import numpy as np

from lexstress.lexicon import load_lexicon, make_alignment
from lexstress.prosody import AudioSignal, extract_features, read_wav, write_wav

sr = 16000
t = np.arange(int(0.45 * sr)) / sr
freq = 120 + 60 * t / t[-1]  # 120 Hz rising to 180 Hz
audio = AudioSignal(0.5 * np.sin(2 * np.pi * np.cumsum(freq) / sr))

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "s1_garage.wav"
    write_wav(path, audio)
    audio = read_wav(path)

al = make_alignment("garage", load_lexicon()["garage"], [0.06, 0.09, 0.135, 0.06], start=0.05)
feat = extract_features(audio, al)
print(f"{feat.f0.size} frames, voiced {feat.voiced.mean():.0%}")
print("F0 every 5th frame (Hz):", np.round(feat.f0[::5], 1))
print("intensity every 5th frame (dB):", np.round(feat.intensity[::5], 1))
print("sub-phoneme durations (s):", np.round(feat.subphoneme_durations, 4))
