"""Generate a multi-speaker corpus and a single-voice synthetic corpus.

Run: python demos/04_augmentation.py [out_dir]
"""
import sys
import tempfile

from lexstress.augmentation import (
    CorpusSpec,
    StressEffects,
    corpus_summary,
    generate_corpus,
    write_corpus,
)
from lexstress.lexicon import load_lexicon

lexicon = load_lexicon()
effects = StressEffects()
human = generate_corpus(CorpusSpec(lexicon, 400, 8, 0.05, "human", seed=1), effects)
synthetic = generate_corpus(CorpusSpec(lexicon, 200, 1, 0.5, "synthetic", seed=2,
                                       speaker_prefix="tts"), effects)
for name, corpus in (("human", human), ("synthetic", synthetic)):
    print(f"{name:<10} {corpus_summary(corpus)}")

ex = synthetic[0]
print(f"first synthetic word {ex.alignment.word!r}: canonical {ex.alignment.canonical}, "
      f"realized {ex.alignment.realized}")

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp()
print("manifest entry:", write_corpus(human, out, name="human"))
