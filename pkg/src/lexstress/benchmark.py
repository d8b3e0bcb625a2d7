"""Scaled synthetic ablation benchmark.

Builds a multi-speaker human-like training corpus, a single-voice synthetic
augmentation corpus and a held-out test corpus of unseen speakers, trains
the four attention/augmentation variants and checks their ordering.
"""
import time
from dataclasses import dataclass, field, replace

from .augmentation import CorpusSpec, StressEffects, corpus_summary, generate_corpus
from .evaluation import AblationResult, format_table, run_ablation
from .lexicon import load_lexicon
from .model import ModelConfig
from .training import TrainConfig

# Word-level prosody is made harder than the generator defaults: vowel-intrinsic
# duration and pitch, stress cues shared with onset consonants, shortened
# reduced vowels, speakers who mark stress weakly, and noisier frames.
EFFECTS = StressEffects(intrinsic=True, onset_mult=1.3, reduced_duration=0.6, frame_noise=1.5)
HUMAN_STRENGTH = (0.3, 1.2)


@dataclass
class BenchmarkConfig:
    seed: int = 0
    human_words: int = 4000
    human_speakers: int = 40
    human_error_rate: float = 0.05
    synthetic_words: int = 2000
    synthetic_error_rate: float = 0.5
    test_words: int = 2108
    test_speakers: int = 20
    test_error_rate: float = 0.09
    effects: StressEffects = EFFECTS
    strength_range: tuple = HUMAN_STRENGTH
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=80))


@dataclass
class BenchmarkResult:
    ablation: AblationResult
    corpora: dict
    seconds: float

    @property
    def auc(self) -> dict:
        return {k: r.auc for k, r in self.ablation.reports.items()}

    def checks(self) -> dict:
        auc = self.auc
        noatt = max(auc["NoAtt_TTS"], auc["NoAtt_NoTTS"])
        return {
            "ordering": auc["Att_TTS"] > auc["Att_NoTTS"] > noatt,
            "precision": self.ablation.reports["Att_TTS"].precision >= 0.90,
            "margin": auc["Att_TTS"] - noatt >= 0.10,
            "runtime": self.seconds <= 15 * 60,
        }

    @property
    def passed(self) -> bool:
        return all(self.checks().values())

    def summary(self) -> str:
        auc = ", ".join(f"{k} {v:.4f}" for k, v in self.auc.items())
        p = self.ablation.reports["Att_TTS"]
        failed = [k for k, ok in self.checks().items() if not ok]
        return (f"AUC {auc}; Att_TTS P {p.precision:.4f} at R {p.recall:.4f}; "
                f"{self.seconds:.0f}s; failed checks {failed}")

    def table(self) -> str:
        return format_table(list(self.ablation.reports.values()))


def make_corpora(config: BenchmarkConfig = BenchmarkConfig()) -> dict:
    """The three corpora, each from its own seed stream."""
    lex = load_lexicon()
    s = config.seed
    human = CorpusSpec(lex, config.human_words, config.human_speakers, config.human_error_rate,
                       "human", seed=10 * s + 1, speaker_prefix="tr",
                       strength_range=config.strength_range)
    # one steady voice: fixed pitch, rate and loudness, little jitter
    synthetic = CorpusSpec(lex, config.synthetic_words, 1, config.synthetic_error_rate,
                           "synthetic", seed=10 * s + 2, speaker_prefix="tts",
                           f0_range=(110, 110), rate_range=(1, 1), intensity_range=(65, 65),
                           jitter_range=(0.05, 0.05))
    test = replace(human, n_words=config.test_words, n_speakers=config.test_speakers,
                   error_rate=config.test_error_rate, seed=10 * s + 3, speaker_prefix="te")
    return {name: generate_corpus(spec, config.effects)
            for name, spec in (("human", human), ("synthetic", synthetic), ("test", test))}


def run_benchmark(config: BenchmarkConfig = BenchmarkConfig()) -> BenchmarkResult:
    t0 = time.perf_counter()
    corpora = make_corpora(config)
    train_config = replace(config.train, seed=config.seed)
    ablation = run_ablation(corpora["human"], corpora["synthetic"], corpora["test"],
                            config.model, train_config)
    summary = {k: corpus_summary(v) for k, v in corpora.items()}
    return BenchmarkResult(ablation, summary, time.perf_counter() - t0)
