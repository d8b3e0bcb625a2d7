"""Parametric prosody generator for stress-labelled words.

Instead of rendering audio, words are synthesized directly in the feature
domain: an alignment with per-phoneme durations and frame-level F0 and
intensity tracks on the usual 10 ms grid.  The target stress pattern is
imposed through longer nuclei, a raised F0 plateau and extra intensity on
the stressed syllable.  Unstressed vowels (by the *canonical* pattern) may
be reduced to schwa in the transcript, which ties phoneme identity to
canonical stress the way real lexicons do.
"""
from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .lexicon import (
    UNVOICED,
    Phoneme,
    WordAlignment,
    parse_lexicon_entry,
    syllabify,
    write_alignment_file,
)
from .prosody import (
    ProsodicFeatures,
    frame_map,
    interpolate_unvoiced,
    n_frames,
    write_feature_file,
)
from .training import TrainingExample

VOWEL_DURATION = 0.090
CONSONANT_DURATION = 0.060
REDUCED_VOWEL = "AH"

# relative intrinsic vowel duration and F0 (tense/diphthong long, high vowels higher pitched)
INTRINSIC_DURATION = {
    "AA": 1.2, "AE": 1.2, "AH": 0.7, "AO": 1.2, "AW": 1.35, "AY": 1.35, "EH": 0.9,
    "ER": 1.0, "EY": 1.2, "IH": 0.75, "IY": 1.0, "OW": 1.2, "OY": 1.4, "UH": 0.75,
    "UW": 1.1,
}
INTRINSIC_F0 = {"IY": 1.06, "UW": 1.06, "IH": 1.03, "UH": 1.03, "AA": 0.96, "AE": 0.96,
                "AO": 0.97}


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class SpeakerProfile:
    base_f0: float = 120.0
    rate: float = 1.0
    base_intensity: float = 65.0
    jitter: float = 0.1
    # how strongly this speaker realizes stress cues (1 = full effect sizes)
    stress_strength: float = 1.0

    def __post_init__(self):
        if not 75.0 <= self.base_f0 <= 400.0:
            raise GeneratorError(f"base_f0 {self.base_f0} outside [75, 400]")
        if not 0.7 <= self.rate <= 1.4:
            raise GeneratorError(f"rate {self.rate} outside [0.7, 1.4]")
        if not 0.0 <= self.jitter <= 0.3:
            raise GeneratorError(f"jitter {self.jitter} outside [0, 0.3]")
        if self.stress_strength < 0:
            raise GeneratorError("stress_strength must be non-negative")


@dataclass(frozen=True)
class StressEffects:
    """Acoustic correlates of stress; the defaults are engineering choices."""

    duration_mult: float = 1.5
    f0_mult: float = 1.25
    intensity_add: float = 6.0
    reduction_prob: float = 0.8
    # extra realism, all off by default
    onset_mult: float = 1.0          # lengthening of stressed-syllable consonants
    reduced_duration: float = 1.0    # duration factor of schwa-reduced vowels
    intrinsic: bool = False          # vowel-intrinsic duration and F0
    declination: float = 0.10        # F0 drop across the word
    frame_noise: float = 0.5         # per-frame noise, in units of speaker jitter
    intensity_noise_db: float = 10.0  # dB of frame noise per unit jitter

    def __post_init__(self):
        if self.duration_mult <= 1 or self.f0_mult <= 1:
            raise GeneratorError("stress multipliers must exceed 1")
        if self.intensity_add <= 0:
            raise GeneratorError("intensity_add must be positive")
        if not 0.0 <= self.reduction_prob <= 1.0:
            raise GeneratorError("reduction_prob must lie in [0, 1]")


def _scaled(mult: float, strength: float) -> float:
    return float(mult ** strength)


def synthesize_word(entry: str, realized: Sequence[int], speaker: SpeakerProfile = SpeakerProfile(),
                    effects: StressEffects = StressEffects(), seed=0, word: str = "",
                    speaker_id: str = "", source: str = "synthetic"
                    ) -> tuple[WordAlignment, ProsodicFeatures]:
    """Render one word with the given realized stress pattern."""
    symbols, canonical = parse_lexicon_entry(entry)
    syllables = syllabify(symbols)
    realized = tuple(int(v) for v in realized)
    if len(realized) != len(syllables):
        raise GeneratorError(
            f"pattern of length {len(realized)} for {len(syllables)}-syllable {entry!r}")
    rng = np.random.default_rng(seed)
    symbols = list(symbols)
    reduced = set()
    for syl in syllables:
        draw = rng.random()
        if canonical[syl.index] == 0 and draw < effects.reduction_prob:
            if symbols[syl.nucleus] != REDUCED_VOWEL:
                reduced.add(syl.nucleus)
            symbols[syl.nucleus] = REDUCED_VOWEL

    strength = speaker.stress_strength
    syl_of = np.zeros(len(symbols), dtype=int)
    for syl in syllables:
        syl_of[syl.start:syl.stop] = syl.index
    nuclei = {syl.nucleus for syl in syllables}
    noise = rng.standard_normal(len(symbols))
    durations = np.empty(len(symbols))
    for i, sym in enumerate(symbols):
        vowel = i in nuclei
        d = VOWEL_DURATION if vowel else CONSONANT_DURATION
        if vowel and effects.intrinsic:
            d *= INTRINSIC_DURATION.get(sym, 1.0)
        if i in reduced:
            d *= effects.reduced_duration
        d *= speaker.rate
        if realized[syl_of[i]]:
            d *= _scaled(effects.duration_mult if vowel else effects.onset_mult, strength)
        if speaker.jitter > 0:
            d *= float(np.exp(speaker.jitter * noise[i]))
        durations[i] = d

    phones, t = [], 0.0
    for sym, d in zip(symbols, durations):
        phones.append(Phoneme(sym, t, t + float(d)))
        t += float(d)
    alignment = WordAlignment(word or entry, tuple(phones), canonical, realized,
                              speaker_id=speaker_id, source=source)

    fmap = frame_map(alignment)
    n_t = n_frames(alignment.duration)
    if n_t == 0:
        raise GeneratorError(f"{entry!r} rendered shorter than one frame")
    phone_of = fmap // 2
    syl_frame = syl_of[phone_of]
    stressed = np.array(realized, dtype=float)[syl_frame]
    pos = (np.arange(n_t) + 0.5) / n_t
    f0 = speaker.base_f0 * (1.0 - effects.declination * pos)
    f0 *= np.where(stressed > 0, _scaled(effects.f0_mult, strength), 1.0)
    if effects.intrinsic:
        f0 *= np.array([INTRINSIC_F0.get(symbols[p], 1.0) if p in nuclei else 1.0
                        for p in phone_of])
    intensity = speaker.base_intensity + effects.intensity_add * strength * stressed
    frame_noise = rng.standard_normal((2, n_t))
    if speaker.jitter > 0:
        f0 = f0 * np.exp(effects.frame_noise * speaker.jitter * frame_noise[0])
        intensity = intensity + effects.intensity_noise_db * speaker.jitter * frame_noise[1]
    voiced = np.array([symbols[p] not in UNVOICED for p in phone_of])
    f0 = np.clip(f0, 60.0, 600.0)
    raw = np.where(voiced, f0, 0.0)
    f0_track, warn = interpolate_unvoiced(raw, voiced)
    intensity = np.maximum(intensity, 0.0)
    sub = np.repeat(durations / 2.0, 2)
    features = ProsodicFeatures(f0_track, intensity, voiced, sub, fmap, warn)
    return alignment, features


# -- corpora ------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusSpec:
    """Recipe for a generated corpus.

    ``words`` maps word text to its stress-marked transcription.  Speaker
    voices are drawn from the given ranges; ``n_words`` tokens are spread
    round-robin over speakers.
    """

    words: dict
    n_words: int
    n_speakers: int = 1
    error_rate: float = 0.0
    source: str = "human"
    seed: int = 0
    speaker_prefix: str = "spk"
    f0_range: tuple = (85.0, 250.0)
    rate_range: tuple = (0.8, 1.25)
    intensity_range: tuple = (58.0, 72.0)
    jitter_range: tuple = (0.05, 0.2)
    strength_range: tuple = (1.0, 1.0)
    reduction: bool = True

    def __post_init__(self):
        if not self.words:
            raise GeneratorError("corpus spec has an empty word list")
        if not 0.0 <= self.error_rate <= 1.0:
            raise GeneratorError("error_rate must lie in [0, 1]")
        if self.n_words < 1 or self.n_speakers < 1:
            raise GeneratorError("n_words and n_speakers must be positive")

    @classmethod
    def from_json(cls, path, lexicon: dict | None = None) -> CorpusSpec:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(doc) - set(cls.__dataclass_fields__) - {"lexicon"}
        if unknown:
            raise GeneratorError(f"{path}: unknown keys {sorted(unknown)}")
        words = doc.pop("words", None)
        if words is None and doc.get("lexicon"):
            from .lexicon import load_lexicon
            words = load_lexicon(Path(path).parent / doc["lexicon"])
        doc.pop("lexicon", None)
        if words is None:
            words = lexicon
        if words is None:
            from .lexicon import load_lexicon
            words = load_lexicon()
        if isinstance(words, list):
            words = {w.lower(): (lexicon or {}).get(w.lower()) for w in words}
            missing = [w for w, e in words.items() if e is None]
            if missing:
                raise GeneratorError(f"{path}: no transcription for {missing[:5]}")
        for key in ("f0_range", "rate_range", "intensity_range", "jitter_range",
                    "strength_range"):
            if key in doc:
                doc[key] = tuple(doc[key])
        return cls(words=dict(words), **doc)


def _random_error_pattern(canonical: tuple[int, ...], rng) -> tuple[int, ...]:
    k = len(canonical)
    wrong = [i for i in range(k) if not canonical[i]]
    pos = wrong[int(rng.integers(len(wrong)))]
    return tuple(int(i == pos) for i in range(k))


def make_speakers(spec: CorpusSpec) -> list[tuple[str, SpeakerProfile]]:
    rng = np.random.default_rng([spec.seed, 7919])
    out = []
    for s in range(spec.n_speakers):
        prof = SpeakerProfile(
            base_f0=float(rng.uniform(*spec.f0_range)),
            rate=float(rng.uniform(*spec.rate_range)),
            base_intensity=float(rng.uniform(*spec.intensity_range)),
            jitter=float(rng.uniform(*spec.jitter_range)),
            stress_strength=float(rng.uniform(*spec.strength_range)),
        )
        out.append((f"{spec.speaker_prefix}{s:03d}", prof))
    return out


def generate_corpus(spec: CorpusSpec, effects: StressEffects = StressEffects()
                    ) -> list[TrainingExample]:
    """Generate labelled examples; realized stress errs with ``spec.error_rate``."""
    speakers = make_speakers(spec)
    words = sorted(spec.words.items())
    if not spec.reduction:
        effects = replace(effects, reduction_prob=0.0)
    rng = np.random.default_rng([spec.seed, 1])
    out = []
    for i in range(spec.n_words):
        word, entry = words[int(rng.integers(len(words)))]
        _, canonical = parse_lexicon_entry(entry)
        realized = _random_error_pattern(canonical, rng) \
            if rng.random() < spec.error_rate else canonical
        spk_id, prof = speakers[i % len(speakers)]
        al, feat = synthesize_word(entry, realized, prof, effects, seed=[spec.seed, 2, i],
                                   word=word, speaker_id=spk_id, source=spec.source)
        out.append(TrainingExample(al, feat))
    return out


def corpus_summary(examples: Sequence[TrainingExample]) -> dict:
    return {
        "speakers": len({ex.speaker for ex in examples}),
        "words": len(examples),
        "unique_words": len({ex.alignment.word for ex in examples}),
        "stress_errors": sum(ex.alignment.is_error for ex in examples),
    }


def write_corpus(examples: Sequence[TrainingExample], out_dir, name: str = "corpus",
                 split: str = "train") -> dict:
    """Write alignment + feature files and return the manifest entry."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    al_path = out_dir / f"{name}.alignments.jsonl"
    ft_path = out_dir / f"{name}.features.jsonl"
    write_alignment_file([ex.alignment for ex in examples], al_path)
    write_feature_file([ex.features for ex in examples], ft_path,
                       [ex.alignment for ex in examples])
    sources = {ex.source for ex in examples}
    return {"alignments": al_path.name, "features": ft_path.name,
            "source": sources.pop() if len(sources) == 1 else "human", "split": split}
