"""Score a held-out set, flag stress errors and summarise precision/recall.

Run: python demos/06_detection_eval.py
"""
from lexstress.augmentation import CorpusSpec, generate_corpus
from lexstress.evaluation import detect, evaluate_scores, format_table, word_scores
from lexstress.lexicon import load_lexicon
from lexstress.model import ModelConfig, forward
from lexstress.training import TrainConfig, train

lexicon = load_lexicon()
train_set = generate_corpus(CorpusSpec(lexicon, 1200, 12, 0.05, seed=5))
test_set = generate_corpus(CorpusSpec(lexicon, 600, 6, 0.2, seed=6, speaker_prefix="te"))

config = ModelConfig(attention=False)
result = train(train_set, config, TrainConfig(epochs=15))

ex = next(e for e in test_set if e.alignment.is_error)
posterior, _ = forward(ex.alignment, ex.features, result.params, config)
print(detect(ex.alignment.canonical, posterior, threshold=0.5, word=ex.alignment.word))

scores, truth, _ = word_scores(result.params, config, test_set)
report, curve = evaluate_scores("NoAtt_NoTTS", scores, truth)
print(format_table([report]))
print(f"{len(curve.thresholds)} PR points, AUC {curve.auc:.4f}")
