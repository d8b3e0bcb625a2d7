"""Run the attention model on one synthetic word and inspect its attention.

Run: python demos/03_stress_model.py
"""
import numpy as np

from lexstress.augmentation import synthesize_word
from lexstress.lexicon import load_lexicon
from lexstress.model import ModelConfig, dot_product_attention, forward, init_params

# the 2x2 hand example: one query, two keys
out, w = dot_product_attention([[1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], [[2.0], [4.0]])
print(f"hand example: weights {np.round(w[0], 4)}, output {out[0, 0]:.4f}")

config = ModelConfig()
params = init_params(config, seed=0)
al, feat = synthesize_word(load_lexicon()["banana"], (0, 1, 0), seed=1, word="banana")
posterior, attention = forward(al, feat, params, config)
print("untrained posterior (unstressed, stressed):")
print(np.round(posterior, 3))
print(f"frame attention {attention['frame'].shape}, row sums {attention['frame'].sum(axis=1)}")
print(f"phone attention {attention['phone'].shape}")
