"""Loss, reverse-mode gradients and bucketed SGD for the stress classifier."""
from __future__ import annotations

import csv
import json
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lexicon import WordAlignment, read_alignment_file
from .model import (
    RATIO_EPS,
    Batch,
    ModelConfig,
    collate,
    forward_batch,
    init_params,
    param_shapes,
    predict,
    sample_masks,
)
from .prosody import ProsodicFeatures, read_feature_file

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingExample:
    alignment: WordAlignment
    features: ProsodicFeatures

    def __post_init__(self):
        if self.alignment.realized is None:
            raise TrainingError(f"{self.alignment.word!r} has no realized stress label")
        if self.features.subphoneme_durations.size != 2 * len(self.alignment.phonemes):
            raise TrainingError(f"{self.alignment.word!r}: features do not match alignment")

    @property
    def label(self) -> tuple[int, ...]:
        return self.alignment.realized

    @property
    def source(self) -> str:
        return self.alignment.source

    @property
    def speaker(self) -> str:
        return self.alignment.speaker_id

    def pair(self):
        return self.alignment, self.features


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 20
    epochs: int = 60
    patience: int = 10
    seed: int = 0
    val_fraction: float = 0.1
    init: str = "syllable"
    restarts: int = 1
    restart_epochs: int = 15

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainingError("learning_rate must be positive")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.epochs < 0:
            raise TrainingError("epochs must be >= 0")
        if self.restarts < 1 or self.restart_epochs < 0:
            raise TrainingError("restarts must be >= 1 and restart_epochs >= 0")


@dataclass
class Bucket:
    n_syllables: int
    max_frames: int
    members: list[int]


# -- loss --------------------------------------------------------------------------

def nll_loss(probs, labels, mask=None):
    """Mean negative log-likelihood over unmasked syllables.

    Returns ``(loss, per_example, clamped)`` where ``per_example`` averages
    over each word's own syllables and ``clamped`` reports whether any
    probability hit the 1e-12 floor.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    valid = labels >= 0
    if mask is not None:
        valid &= np.asarray(mask, bool)
    safe = np.where(valid, labels, 0)
    p = np.take_along_axis(probs, safe[..., None], axis=-1)[..., 0]
    clamped = bool(np.any(valid & (p < PROB_FLOOR)))
    nll = np.where(valid, -np.log(np.maximum(p, PROB_FLOOR)), 0.0)
    counts = valid.sum(axis=-1)
    per_example = nll.sum(axis=-1) / np.maximum(counts, 1)
    total = valid.sum()
    loss = float(nll.sum() / total) if total else 0.0
    return loss, per_example, clamped


# -- backward -----------------------------------------------------------------------

def _head_backward(g_out, params, config: ModelConfig, hcache, grads):
    n_layers = config.head_layers
    g = g_out
    for i in range(n_layers + 1, 0, -1):
        name = f"dense{i}" if i <= n_layers else "out"
        act, m, inp = hcache["acts"][i - 1], hcache["masks"][i - 1], hcache["inputs"][i - 1]
        if m is not None:
            g = g * m
        if i <= n_layers:
            g = g * (1.0 - act ** 2)
        grads[f"{name}_W"] = np.einsum("bki,bkj->ij", inp, g)
        grads[f"{name}_b"] = g.sum(axis=(0, 1))
        g = g @ params[f"{name}_W"].T
    return g


def _ratio_backward(g_r, s, smask):
    lv = np.zeros_like(smask)
    rv = np.zeros_like(smask)
    lv[:, 1:] = smask[:, 1:] & smask[:, :-1]
    rv[:, :-1] = smask[:, :-1] & smask[:, 1:]
    g_s = g_r[..., :3].copy()
    gl = g_r[..., 3:6] * lv[..., None]
    gr = g_r[..., 6:9] * rv[..., None]
    prev = np.ones_like(s)
    nxt = np.ones_like(s)
    prev[:, 1:] = s[:, :-1]
    nxt[:, :-1] = s[:, 1:]
    dl = np.maximum(prev, RATIO_EPS)
    dr = np.maximum(nxt, RATIO_EPS)
    g_s += gl / dl + gr / dr
    g_prev = -gl * s / dl ** 2 * (prev > RATIO_EPS)
    g_next = -gr * s / dr ** 2 * (nxt > RATIO_EPS)
    g_s[:, :-1] += g_prev[:, 1:]
    g_s[:, 1:] += g_next[:, :-1]
    return g_s


def _softmax_backward(a, g_a):
    return a * (g_a - np.sum(a * g_a, axis=-1, keepdims=True))


def _gru_backward(g_h, x, params, cache, grads):
    hs = cache["hs"]
    z_all, r_all, n_all = cache["gru"]["z"], cache["gru"]["r"], cache["gru"]["n"]
    uz, ur, un = params["gru_Uz"], params["gru_Ur"], params["gru_Un"]
    b, p, h_dim = hs.shape
    d_az, d_ar, d_an = np.zeros_like(hs), np.zeros_like(hs), np.zeros_like(hs)
    g_uz, g_ur, g_un = np.zeros_like(uz), np.zeros_like(ur), np.zeros_like(un)
    g_next = np.zeros((b, h_dim))
    zero = np.zeros((b, h_dim))
    for t in range(p - 1, -1, -1):
        dh = g_h[:, t] + g_next
        h_prev = hs[:, t - 1] if t > 0 else zero
        z, r, n = z_all[:, t], r_all[:, t], n_all[:, t]
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        g_prev = dh * z
        an = dn * (1.0 - n ** 2)
        g_un += (r * h_prev).T @ an
        drh = an @ un.T
        dr = drh * h_prev
        g_prev += drh * r
        az = dz * z * (1.0 - z)
        ar = dr * r * (1.0 - r)
        g_uz += h_prev.T @ az
        g_ur += h_prev.T @ ar
        g_prev += az @ uz.T + ar @ ur.T
        d_az[:, t], d_ar[:, t], d_an[:, t] = az, ar, an
        g_next = g_prev
    for gate, d in (("z", d_az), ("r", d_ar), ("n", d_an)):
        grads[f"gru_W{gate}"] = np.einsum("bpd,bph->dh", x, d)
        grads[f"gru_b{gate}"] = d.sum(axis=(0, 1))
    grads["gru_Uz"], grads["gru_Ur"], grads["gru_Un"] = g_uz, g_ur, g_un


def backward(params, batch: Batch, config: ModelConfig, cache, loss_scale: float = 1.0):
    """Gradients of ``loss_scale * nll_loss`` given a forward cache."""
    probs = cache["probs"]
    valid = (batch.labels >= 0) & batch.smask
    n = max(int(valid.sum()), 1)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, np.where(valid, batch.labels, 0)[..., None], 1.0, axis=-1)
    g_logits = loss_scale * (probs - onehot) * valid[..., None] / n
    grads: dict[str, np.ndarray] = {}
    g_r = _head_backward(g_logits, params, config, cache["head"], grads)
    g_s = _ratio_backward(g_r, cache["s"], batch.smask)
    if not config.attention:
        return grads
    scale = 1.0 / math.sqrt(config.d_k)
    q = cache["q"]
    g_af = g_s[..., :2] @ np.swapaxes(batch.fvals, 1, 2)
    g_lf = _softmax_backward(cache["a_f"], g_af)
    g_kf_up = np.swapaxes(g_lf, 1, 2) @ q * scale
    g_kf = np.swapaxes(batch.up, 1, 2) @ g_kf_up
    g_ap = g_s[..., 2:] @ np.swapaxes(batch.dvals, 1, 2)
    g_lp = _softmax_backward(cache["a_p"], g_ap)
    g_kp = np.swapaxes(g_lp, 1, 2) @ q * scale
    enc = cache["enc"]
    grads["key_frame_W"] = np.einsum("bph,bpk->hk", enc, g_kf)
    grads["key_frame_b"] = g_kf.sum(axis=(0, 1))
    grads["key_phone_W"] = np.einsum("bph,bpk->hk", enc, g_kp)
    grads["key_phone_b"] = g_kp.sum(axis=(0, 1))
    g_enc = g_kf @ params["key_frame_W"].T + g_kp @ params["key_phone_W"].T
    if cache["train_mode"]:
        g_enc = g_enc * cache["masks"]["gru"]
    _gru_backward(g_enc, batch.x, params, cache, grads)
    return grads


def compute_gradients(params, batch: Batch, config: ModelConfig, seed: int | None = None,
                      masks: dict | None = None, train_mode: bool = True,
                      loss_scale: float = 1.0):
    """Loss and exact gradients for one batch.

    Dropout masks come from ``masks`` or are drawn from ``seed``; pass
    ``train_mode=False`` for the deterministic inference network.
    """
    if train_mode and masks is None:
        masks = sample_masks(batch, config, np.random.default_rng(seed))
    probs, cache = forward_batch(params, batch, config, train_mode, masks=masks)
    loss, _, _ = nll_loss(probs, batch.labels, batch.smask)
    grads = backward(params, batch, config, cache, loss_scale)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter block {name!r}")
    return loss_scale * loss, grads


def sgd_step(params, grads, learning_rate: float):
    """Plain SGD: ``w <- w - lr * g`` (returns a new dict)."""
    return {name: w - learning_rate * grads[name] if name in grads else w.copy()
            for name, w in params.items()}


def gradient_check(params, batch: Batch, config: ModelConfig, masks: dict | None = None,
                   h: float = 1e-4, floor: float = 1e-7) -> dict[str, float]:
    """Max relative error per block between analytic and central differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    train_mode = masks is not None

    def loss_at(p):
        probs, _ = forward_batch(p, batch, config, train_mode, masks=masks)
        return nll_loss(probs, batch.labels, batch.smask)[0]

    _, grads = compute_gradients(params, batch, config, masks=masks, train_mode=train_mode)
    report = {}
    for name in param_shapes(config):
        w = params[name]
        numeric = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            up = loss_at(params)
            w[idx] = old - h
            down = loss_at(params)
            w[idx] = old
            numeric[idx] = (up - down) / (2 * h)
        a = grads[name]
        rel = np.abs(a - numeric) / np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
        report[name] = float(rel.max())
    return report


# -- batching ---------------------------------------------------------------------

def make_buckets(examples: Sequence[TrainingExample], batch_size: int):
    """Group by syllable count, sort by frame count, chunk into batches.

    Returns ``(buckets, batches)``; each batch is a list of example indices
    drawn from a single bucket.
    """
    if not examples:
        raise TrainingError("no examples to bucket")
    by_k: dict[int, list[int]] = {}
    for i, ex in enumerate(examples):
        by_k.setdefault(ex.alignment.n_syllables, []).append(i)
    buckets, batches = [], []
    for k in sorted(by_k):
        members = sorted(by_k[k], key=lambda i: (examples[i].features.n_frames, i))
        buckets.append(Bucket(k, max(examples[i].features.n_frames for i in members), members))
        for start in range(0, len(members), batch_size):
            batches.append(members[start:start + batch_size])
    return buckets, batches


def split_by_speaker(examples: Sequence[TrainingExample], fraction: float, seed: int = 0):
    """Hold out whole human speakers for validation.

    Synthetic examples always stay in the training part.
    """
    speakers = sorted({ex.speaker for ex in examples if ex.source == "human"})
    rng = np.random.default_rng(seed)
    n_val = int(round(fraction * len(speakers)))
    if fraction > 0 and len(speakers) > 1:
        n_val = min(max(n_val, 1), len(speakers) - 1)
    held = set(rng.permutation(speakers)[:n_val].tolist()) if n_val else set()
    train = [ex for ex in examples if not (ex.source == "human" and ex.speaker in held)]
    val = [ex for ex in examples if ex.source == "human" and ex.speaker in held]
    return train, val


def evaluate_loss(params, examples: Sequence[TrainingExample], config: ModelConfig) -> float:
    """Inference-mode mean NLL over all syllables of ``examples``."""
    if not examples:
        return float("nan")
    posts = predict(params, [ex.pair() for ex in examples], config)
    total, count = 0.0, 0
    for ex, post in zip(examples, posts):
        p = post[np.arange(len(ex.label)), list(ex.label)]
        total += float(-np.log(np.maximum(p, PROB_FLOOR)).sum())
        count += len(ex.label)
    return total / count


@dataclass
class TrainResult:
    params: dict
    config: ModelConfig
    log: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = 0
    train_speakers: set = field(default_factory=set)
    val_speakers: set = field(default_factory=set)
    restart: int = 0


def train(examples: Sequence[TrainingExample], model_config: ModelConfig,
          train_config: TrainConfig = TrainConfig(),
          validation: Sequence[TrainingExample] | None = None) -> TrainResult:
    """Bucketed minibatch SGD with early stopping on validation loss.

    Without an explicit ``validation`` set a speaker-disjoint share of the
    human examples is held out.  Epoch 0 in the log is the untrained model.
    """
    if not examples:
        raise TrainingError("empty training set")
    if validation is None:
        train_set, val_set = split_by_speaker(examples, train_config.val_fraction,
                                              train_config.seed)
    else:
        train_set, val_set = list(examples), list(validation)
    if not train_set:
        raise TrainingError("no training examples left after the validation split")
    if all(ex.features.all_unvoiced for ex in train_set):
        raise TrainingError("every training example has a fully unvoiced F0 track")

    _, batch_idx = make_buckets(train_set, train_config.batch_size)
    batches = [collate([train_set[i].pair() for i in idx], model_config) for idx in batch_idx]

    def losses(params):
        tr = evaluate_loss(params, train_set, model_config)
        va = evaluate_loss(params, val_set, model_config) if val_set else tr
        return tr, va

    def run(state, first, last):
        params, rng, history, best = state
        for epoch in range(first, last + 1):
            for bi in rng.permutation(len(batches)):
                batch = batches[bi]
                masks = sample_masks(batch, model_config, rng)
                _, grads = compute_gradients(params, batch, model_config, masks=masks)
                params = sgd_step(params, grads, train_config.learning_rate)
            tr, va = losses(params)
            history.append((epoch, tr, va))
            log.info("epoch %d train %.4f val %.4f", epoch, tr, va)
            if va < best[0]:
                best = (va, epoch, {k: v.copy() for k, v in params.items()})
            elif epoch - best[1] >= train_config.patience:
                return (params, rng, history, best), True
        return (params, rng, history, best), False

    # Restart r > 0 gets its own init and shuffling stream.  Each restart runs a
    # short screening phase and the lowest validation loss carries on.
    n = train_config.restarts
    warm = min(train_config.restart_epochs, train_config.epochs) if n > 1 else 0
    candidates = []
    for r in range(n):
        seed = train_config.seed if r == 0 else \
            int(np.random.default_rng([train_config.seed, r]).integers(1 << 31))
        params = init_params(model_config, seed=seed, scheme=train_config.init)
        tr, va = losses(params)
        best = (va, 0, {k: v.copy() for k, v in params.items()})
        state = (params, np.random.default_rng(seed), [(0, tr, va)], best)
        candidates.append((r,) + run(state, 1, warm))
    chosen, state, stopped = min(candidates, key=lambda c: c[1][3][0])
    if n > 1:
        log.info("restart %d selected (val %.4f)", chosen, state[3][0])
    if not stopped:
        state, _ = run(state, warm + 1, train_config.epochs)
    _, _, history, best = state
    return TrainResult(best[2], model_config, history, best[1],
                       {ex.speaker for ex in train_set}, {ex.speaker for ex in val_set}, chosen)


def write_loss_log(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, tr, va in rows:
            w.writerow([epoch, repr(tr), repr(va)])


# -- manifests ----------------------------------------------------------------------

def read_manifest(path) -> list[dict]:
    """Entries of a training manifest, paths resolved against its directory."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    entries = doc["entries"] if isinstance(doc, dict) else doc
    out = []
    for i, e in enumerate(entries):
        missing = {"alignments", "features", "source", "split"} - set(e)
        if missing:
            raise TrainingError(f"{path}: entry {i} lacks {sorted(missing)}")
        out.append({**e,
                    "alignments": str((path.parent / e["alignments"]).resolve()),
                    "features": str((path.parent / e["features"]).resolve())})
    return out


def load_examples(entries: Sequence[dict], split: str | None = None) -> list[TrainingExample]:
    out = []
    for e in entries:
        if split is not None and e["split"] != split:
            continue
        als = read_alignment_file(e["alignments"])
        feats = read_feature_file(e["features"])
        if len(als) != len(feats):
            raise TrainingError(f"{e['features']}: {len(feats)} feature records for "
                                f"{len(als)} alignments")
        out.extend(TrainingExample(a, f) for a, f in zip(als, feats))
    return out
