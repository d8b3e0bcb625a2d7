"""Train the attention model with speaker-disjoint early stopping.

Plain SGD at this learning rate occasionally spikes; the checkpoint with the
lowest validation loss is the one returned.

Run: python demos/05_training.py
"""
import numpy as np

from lexstress.augmentation import CorpusSpec, generate_corpus
from lexstress.lexicon import load_lexicon
from lexstress.model import ModelConfig, forward
from lexstress.training import TrainConfig, train

examples = generate_corpus(CorpusSpec(load_lexicon(), 1500, 15, 0.05, seed=4))
config = ModelConfig()
result = train(examples, config, TrainConfig(epochs=25))
print(f"best epoch {result.best_epoch}, validation speakers {sorted(result.val_speakers)}")
for epoch, tr, va in result.log[::3]:
    print(f"epoch {epoch:3d}  train {tr:.4f}  val {va:.4f}")

ex = next(e for e in examples if e.speaker in result.val_speakers and e.alignment.n_syllables == 3)
posterior, att = forward(ex.alignment, ex.features, result.params, config)
print(f"{ex.alignment.word!r} realized {ex.alignment.realized}, "
      f"P(stressed) {np.round(posterior[:, 1], 3)}")
print("frame attention, one row per syllable (every 4th frame):")
print(np.round(att["frame"][:, ::4], 2))
