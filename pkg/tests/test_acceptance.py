"""Acceptance gate.

Every criterion is a ``check_*`` function returning ``(passed, detail)``.
Under pytest each one prints a single ``PASS``/``FAIL`` line and asserts;
``python tests/test_acceptance.py`` prints the same lines without pytest.
"""
import filecmp
import itertools
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import naive
import oracles

from lexstress import benchmark
from lexstress.augmentation import (
    CorpusSpec,
    StressEffects,
    generate_corpus,
    synthesize_word,
    write_corpus,
)
from lexstress.cli import random_gradcheck_batch
from lexstress.evaluation import binomial_ci, pr_curve
from lexstress.lexicon import load_lexicon
from lexstress.model import (
    ModelConfig,
    differential_bidirectional,
    dot_product_attention,
    forward,
    init_params,
    load_checkpoint,
    sample_masks,
    save_checkpoint,
)
from lexstress.prosody import (
    AudioSignal,
    compute_f0,
    compute_intensity,
    frame_centers,
    interpolate_unvoiced,
)
from lexstress.training import TrainConfig, evaluate_loss, gradient_check, train

LEX = load_lexicon()


def check_gradients():
    """1: analytic vs central differences on 10 random (config, input) pairs, < 1 min."""
    t0 = time.perf_counter()
    worst = 0.0
    for c in range(10):
        rng = np.random.default_rng([2024, c])
        cfg = ModelConfig(
            max_syllables=int(rng.integers(5, 7)),
            gru_units=int(rng.integers(2, 6)),
            head_units=int(rng.integers(2, 6)),
            head_layers=int(rng.integers(1, 4)),
            attention=bool(c % 4 != 3),
        )
        params = init_params(cfg, seed=int(rng.integers(1 << 30)), scale=0.5)
        batch = random_gradcheck_batch(cfg, int(rng.integers(1 << 30)), n_words=2)
        masks = sample_masks(batch, cfg, rng) if c % 2 == 0 else None
        report = gradient_check(params, batch, cfg, masks=masks, h=1e-4)
        worst = max(worst, max(report.values()))
    seconds = time.perf_counter() - t0
    return worst <= 1e-4 and seconds < 60, f"max rel err {worst:.2e} in {seconds:.1f}s"


def _random_instance(seed, attention=True):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(attention=attention)
    word = sorted(LEX)[int(rng.integers(len(LEX)))]
    entry = LEX[word]
    k = sum(ch.isdigit() for ch in entry)
    realized = tuple(int(v) for v in np.eye(k, dtype=int)[int(rng.integers(k))])
    al, feat = synthesize_word(entry, realized, seed=seed, word=word)
    params = init_params(cfg, seed=seed, scale=float(rng.uniform(0.2, 1.5)))
    return cfg, al, feat, params


def check_forward_oracle():
    """2: forward equals the naive loop implementation on 24 seeded instances."""
    worst, worst_sum = 0.0, 0.0
    for seed in range(24):
        cfg, al, feat, params = _random_instance(seed, attention=seed % 6 != 5)
        post, att = forward(al, feat, params, cfg)
        ref, ref_f, ref_p = naive.posterior(al, feat, params, cfg)
        worst = max(worst, float(np.max(np.abs(post - np.array(ref)))))
        sums = [post.sum(axis=1)] + [a.sum(axis=1) for a in att.values()]
        worst_sum = max(worst_sum, max(float(np.max(np.abs(s - 1))) for s in sums))
        if cfg.attention:
            worst = max(worst, float(np.max(np.abs(att["frame"] - np.array(ref_f)))),
                        float(np.max(np.abs(att["phone"] - np.array(ref_p)))))
    return worst <= 1e-9 and worst_sum <= 1e-6, \
        f"max |diff| {worst:.1e}, max |row sum - 1| {worst_sum:.1e}"


def check_attention_example():
    """3: the 2x2 attention example."""
    out, w = dot_product_attention([[1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], [[2.0], [4.0]])
    err = max(abs(w[0, 0] - 0.6698), abs(w[0, 1] - 0.3302), abs(out[0, 0] - 2.6604))
    return err <= 1e-4, f"weights {np.round(w[0], 4).tolist()}, output {out[0, 0]:.4f}"


def check_dsp():
    """4: tone F0 over 75-500 Hz, intensity shift-equivariance, interpolation."""
    sr = 16000
    t = np.arange(int(0.3 * sr)) / sr
    centers = frame_centers(0.0, 0.3)
    f0_err = 0.0
    for freq in np.arange(75.0, 500.1, 5.0):
        f0, voiced = compute_f0(AudioSignal(0.6 * np.sin(2 * np.pi * freq * t)), centers)
        if not voiced.all():
            return False, f"{freq:.0f} Hz tone has unvoiced frames"
        f0_err = max(f0_err, float(np.max(np.abs(f0 - freq))))
    rng = np.random.default_rng(0)
    speech = AudioSignal(0.5 * np.sin(2 * np.pi * 140 * t) + 0.05 * rng.standard_normal(t.size))
    base = compute_intensity(speech, centers)
    db_err = 0.0
    for g in (0.01, 0.1, 0.5, 0.9, 1.7):
        shifted = compute_intensity(AudioSignal(g * speech.samples), centers)
        db_err = max(db_err, float(np.max(np.abs(shifted - base - 20 * math.log10(g)))))
    zeros = 0
    for _ in range(500):
        n = int(rng.integers(1, 60))
        voiced = rng.random(n) < rng.uniform(0.05, 0.9)
        voiced[rng.integers(n)] = True
        f0 = np.where(voiced, rng.uniform(75, 500, n), 0.0)
        zeros += int(np.sum(interpolate_unvoiced(f0, voiced)[0] <= 0))
    ok = f0_err <= 2.0 and db_err <= 0.1 and zeros == 0
    return ok, f"max F0 err {f0_err:.3f} Hz, max dB err {db_err:.2e}, zeros {zeros}"


def check_ratio_layer():
    """5: ratio columns are scale invariant and all ones on uniform input."""
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(200):
        k = int(rng.integers(2, 7))
        s = rng.uniform(1e-3, 3.0, size=(k, 3))
        g = float(np.exp(rng.uniform(-5, 5)))
        a, b = differential_bidirectional(s), differential_bidirectional(g * s)
        worst = max(worst, float(np.max(np.abs(a[:, 3:] - b[:, 3:]))))
        u = differential_bidirectional(np.full((k, 3), rng.uniform(1e-3, 3.0)))
        worst = max(worst, float(np.max(np.abs(u[:, 3:] - 1.0))))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


def check_evaluation():
    """7: PR points by exhaustive enumeration and Clopper-Pearson by bisection."""
    pr_err, cases = 0.0, 0
    levels = [0.2, 0.5, 0.5, 0.8]
    for n in range(2, 13):
        for labels in itertools.product((0, 1), repeat=n):
            if not 0 < sum(labels) < n:
                continue
            scores = [levels[(3 * i + n) % 4] + 0.01 * (i % 3) for i in range(n)]
            ref = oracles.pr_points(scores, list(labels))
            for t, p, r in pr_curve(scores, labels).points():
                pr_err = max(pr_err, abs(p - ref[t][0]), abs(r - ref[t][1]))
            cases += 1
    ci_err = 0.0
    for k, n in [(0, 12), (12, 12), (5, 12), (92, 97), (189, 2108), (40, 378)]:
        for level in (0.95, 0.99):
            diff = np.subtract(binomial_ci(k, n, level), oracles.clopper_pearson(k, n, level))
            ci_err = max(ci_err, float(np.max(np.abs(diff))))
    return pr_err <= 1e-12 and ci_err <= 1e-6, \
        f"{cases} PR cases max err {pr_err:.1e}; CI max err {ci_err:.1e}"


def check_determinism():
    """8: bitwise retrains, checkpoint round trip, byte-identical corpora."""
    spec = CorpusSpec(LEX, 160, 8, 0.2, seed=21)
    exs = generate_corpus(spec, StressEffects())
    tc = TrainConfig(epochs=3, seed=4)
    a, b = train(exs, ModelConfig(), tc), train(exs, ModelConfig(), tc)
    same_log = a.log == b.log
    same_params = all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    val = [ex for ex in exs if ex.speaker in a.val_speakers]
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        save_checkpoint(tmp / "m.json", a.params, a.config)
        params, cfg, _ = load_checkpoint(tmp / "m.json")
        loss_diff = abs(evaluate_loss(params, val, cfg) - evaluate_loss(a.params, val, a.config))
        write_corpus(generate_corpus(spec, StressEffects()), tmp / "c1")
        write_corpus(generate_corpus(spec, StressEffects()), tmp / "c2")
        names = ["corpus.alignments.jsonl", "corpus.features.jsonl"]
        _, mismatch, errors = filecmp.cmpfiles(tmp / "c1", tmp / "c2", names, shallow=False)
    ok = same_log and same_params and loss_diff <= 1e-9 and not mismatch and not errors
    return ok, (f"logs equal {same_log}, params equal {same_params}, "
                f"reload val-loss diff {loss_diff:.1e}, corpus files differ {mismatch + errors}")


def check_ablation():
    """6: scaled four-way ablation."""
    res = benchmark.run_benchmark()
    return res.passed, res.summary()


CRITERIA = [
    (1, check_gradients), (2, check_forward_oracle), (3, check_attention_example),
    (4, check_dsp), (5, check_ratio_layer), (6, check_ablation), (7, check_evaluation),
    (8, check_determinism),
]


def _report(number, func):
    ok, detail = func()
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {func.__doc__.split(':', 1)[1].strip()} [{detail}]"
    return ok, line


@pytest.mark.parametrize("number, func", CRITERIA, ids=[f"criterion_{n}" for n, _ in CRITERIA])
def test_criterion(number, func, capsys):
    ok, line = _report(number, func)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [_report(n, f) for n, f in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
