"""Attention-based syllable stress classifier.

Pipeline for a batch of words (all shapes carry a leading batch axis ``B``):

* sub-phoneme one-hots ``(B, P, D)`` -> GRU -> encodings ``E`` ``(B, P, H)``
* ``E`` -> two linear key projections of width ``d_k``
* frame attention: keys replicated onto frames, values = scaled F0/intensity
* phone attention: keys per sub-phoneme, values = scaled durations
* pooled ``(B, K, 3)`` -> neighbour ratios ``(B, K, 9)`` -> tanh MLP -> softmax

Queries are one-hot syllable indices, so ``d_k == max_syllables``.  With
``attention=False`` the pooled matrix is replaced by nucleus means and only
the ratio layer and head remain.
"""
from __future__ import annotations

import hashlib
import json
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .lexicon import INVENTORY, PHONEME_INDEX, WordAlignment, split_subphonemes
from .prosody import ProsodicFeatures

CHECKPOINT_VERSION = 1
RATIO_EPS = 1e-6


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    max_syllables: int = 6
    gru_units: int = 4
    head_units: int = 4
    head_layers: int = 3
    dropout: float = 0.24
    attention: bool = True
    n_phonemes: int = len(INVENTORY)

    def __post_init__(self):
        for name in ("max_syllables", "gru_units", "head_units", "head_layers", "n_phonemes"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must lie in [0, 1)")

    @property
    def d_k(self) -> int:
        return self.max_syllables

    @property
    def input_dim(self) -> int:
        # phoneme id, syllable index, is_vowel, left/right half
        return self.n_phonemes + self.max_syllables + 2 + 2


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    h, d, dk, u = config.gru_units, config.input_dim, config.d_k, config.head_units
    shapes = {}
    if config.attention:
        for gate in ("z", "r", "n"):
            shapes[f"gru_W{gate}"] = (d, h)
            shapes[f"gru_U{gate}"] = (h, h)
            shapes[f"gru_b{gate}"] = (h,)
        shapes["key_frame_W"] = (h, dk)
        shapes["key_frame_b"] = (dk,)
        shapes["key_phone_W"] = (h, dk)
        shapes["key_phone_b"] = (dk,)
    width = 9
    for i in range(1, config.head_layers + 1):
        shapes[f"dense{i}_W"] = (width, u)
        shapes[f"dense{i}_b"] = (u,)
        width = u
    shapes["out_W"] = (width, 2)
    shapes["out_b"] = (2,)
    return shapes


def init_params(config: ModelConfig, seed: int = 0, scale: float | None = None,
                scheme: str = "glorot") -> dict[str, np.ndarray]:
    """Random initial weights, reproducible from ``seed``.

    ``scheme="uniform"`` draws every entry from U(-scale, scale) (scale
    defaults to 0.1).  ``"glorot"`` uses U(-a, a) with
    ``a = sqrt(6 / (fan_in + fan_out))`` for matrices and zero biases.
    ``"syllable"`` is glorot plus a syllable-local attention start (see
    :func:`syllable_local_start`).
    """
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in param_shapes(config).items():
        if scheme == "uniform" or scale is not None:
            a = 0.1 if scale is None else scale
            out[name] = rng.uniform(-a, a, size=shape)
        elif scheme in ("glorot", "syllable"):
            if len(shape) == 1:
                out[name] = np.zeros(shape)
            else:
                a = np.sqrt(6.0 / (shape[0] + shape[1]))
                out[name] = rng.uniform(-a, a, size=shape)
        else:
            raise ModelError(f"unknown init scheme {scheme!r}")
    if scheme == "syllable" and scale is None and config.attention:
        syllable_local_start(out, config)
    return out


def syllable_local_start(params, config: ModelConfig, gain: float = 1.5,
                         key_gain: float = 6.0, update_bias: float = -3.0) -> None:
    """Bias the encoder so query ``k`` starts out attending to syllable ``k``.

    GRU unit ``j`` is driven by the syllable-index input ``j`` and the update
    gate starts mostly open to the current input, so the unit is high on the
    sub-phonemes of syllable ``j``.  Both key projections map unit ``j`` to
    key dimension ``j``.  With uniform attention every syllable pools the same
    word-level average, the ratio features are all 1 and the head gets no
    gradient signal; this start avoids that flat region.  Modifies ``params``
    in place.
    """
    n_ph, units = config.n_phonemes, min(config.gru_units, config.max_syllables)
    for j in range(units):
        params["gru_Wn"][n_ph:n_ph + config.max_syllables, j] = 0.0
        params["gru_Wn"][n_ph + j, j] = gain
        params["key_frame_W"][j, j] += key_gain
        params["key_phone_W"][j, j] += key_gain
    params["gru_bz"][:] = update_bias


# -- batch assembly -------------------------------------------------------------

@dataclass
class Batch:
    x: np.ndarray          # (B, P, D) one-hot sub-phoneme inputs
    pmask: np.ndarray      # (B, P) valid sub-phonemes
    up: np.ndarray         # (B, T, P) frame -> sub-phoneme replication matrix
    fmask: np.ndarray      # (B, T) valid frames
    fvals: np.ndarray      # (B, T, 2) scaled f0, intensity
    dvals: np.ndarray      # (B, P, 1) scaled sub-phoneme durations
    smask: np.ndarray      # (B, K) valid syllables
    nucleus: np.ndarray    # (B, K, 3) nucleus-mean features
    labels: np.ndarray     # (B, K) realized stress, -1 when unknown/padded
    canonical: np.ndarray  # (B, K)
    n_syllables: np.ndarray = field(default=None)

    @property
    def size(self) -> int:
        return self.x.shape[0]


def subphoneme_inputs(alignment: WordAlignment, config: ModelConfig) -> np.ndarray:
    """One-hot encode ``phoneme_id ⊕ syllable_index ⊕ is_vowel ⊕ half``."""
    subs = split_subphonemes(alignment)
    n_ph, k_max = config.n_phonemes, config.max_syllables
    x = np.zeros((len(subs), config.input_dim))
    for i, sp in enumerate(subs):
        if sp.syllable_index >= k_max:
            raise ModelError(
                f"{alignment.word!r}: syllable index {sp.syllable_index} >= "
                f"max_syllables {k_max}")
        ph = alignment.phonemes[sp.phoneme]
        x[i, PHONEME_INDEX[ph.symbol]] = 1.0
        x[i, n_ph + sp.syllable_index] = 1.0
        x[i, n_ph + k_max + int(ph.is_vowel)] = 1.0
        x[i, n_ph + k_max + 2 + (sp.half == "right")] = 1.0
    return x


def nucleus_mean_baseline(features: ProsodicFeatures, alignment: WordAlignment) -> np.ndarray:
    """``(K, 3)`` nucleus-mean F0 and intensity plus nucleus duration (scaled).

    A nucleus that covers no frame centre borrows the frame nearest to the
    nucleus midpoint.
    """
    frames = features.scaled_frames()
    durs = features.scaled_durations()
    fmap = features.frame_to_subphoneme
    out = np.zeros((alignment.n_syllables, 3))
    for syl in alignment.syllables:
        left, right = 2 * syl.nucleus, 2 * syl.nucleus + 1
        hit = (fmap == left) | (fmap == right)
        if hit.any():
            out[syl.index, :2] = frames[hit].mean(axis=0)
        else:
            ph = alignment.phonemes[syl.nucleus]
            mid = 0.5 * (ph.start + ph.end) - alignment.start
            centers = (np.arange(features.n_frames) + 0.5) * 0.010
            out[syl.index, :2] = frames[int(np.argmin(np.abs(centers - mid)))]
        out[syl.index, 2] = durs[left] + durs[right]
    return out


def collate(items: Sequence[tuple[WordAlignment, ProsodicFeatures]],
            config: ModelConfig) -> Batch:
    """Zero-pad a list of (alignment, features) pairs into one batch."""
    if not items:
        raise ModelError("cannot collate an empty batch")
    b = len(items)
    xs = [subphoneme_inputs(al, config) for al, _ in items]
    p_max = max(x.shape[0] for x in xs)
    t_max = max(f.n_frames for _, f in items)
    k_max = max(al.n_syllables for al, _ in items)
    if k_max > config.max_syllables:
        raise ModelError(f"word with {k_max} syllables exceeds max_syllables")
    d = config.input_dim
    x = np.zeros((b, p_max, d))
    x[:, :, PHONEME_INDEX["<pad>"]] = 1.0
    pmask = np.zeros((b, p_max), dtype=bool)
    up = np.zeros((b, t_max, p_max))
    fmask = np.zeros((b, t_max), dtype=bool)
    fvals = np.ones((b, t_max, 2))
    dvals = np.ones((b, p_max, 1))
    smask = np.zeros((b, k_max), dtype=bool)
    nucleus = np.ones((b, k_max, 3))
    labels = np.full((b, k_max), -1, dtype=int)
    canonical = np.full((b, k_max), -1, dtype=int)
    n_syl = np.zeros(b, dtype=int)
    for i, ((al, feat), xi) in enumerate(zip(items, xs)):
        p, t, k = xi.shape[0], feat.n_frames, al.n_syllables
        if feat.subphoneme_durations.size != p:
            raise ModelError(f"{al.word!r}: features describe "
                             f"{feat.subphoneme_durations.size} sub-phonemes, alignment {p}")
        x[i, :p] = xi
        pmask[i, :p] = True
        up[i, np.arange(t), feat.frame_to_subphoneme] = 1.0
        fmask[i, :t] = True
        fvals[i, :t] = feat.scaled_frames()
        dvals[i, :p, 0] = feat.scaled_durations()
        smask[i, :k] = True
        if config.attention is False:
            nucleus[i, :k] = nucleus_mean_baseline(feat, al)
        if al.realized is not None:
            labels[i, :k] = al.realized
        canonical[i, :k] = al.canonical
        n_syl[i] = k
    return Batch(x, pmask, up, fmask, fvals, dvals, smask, nucleus, labels, canonical, n_syl)


# -- layers -------------------------------------------------------------------

def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def masked_softmax(logits: np.ndarray, mask: np.ndarray | None = None, axis: int = -1):
    if mask is not None:
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    if rate <= 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dot_product_attention(q, k, v, mask=None):
    """``softmax(q kᵀ / sqrt(d_k)) v``; returns ``(output, weights)``.

    ``mask`` (broadcastable to ``(..., n_k)``) drops padded keys.
    """
    q, k, v = np.asarray(q, float), np.asarray(k, float), np.asarray(v, float)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ModelError(f"attention shape mismatch: Q {q.shape}, K {k.shape}, V {v.shape}")
    logits = q @ np.swapaxes(k, -1, -2) / np.sqrt(k.shape[-1])
    if mask is not None:
        mask = np.expand_dims(np.asarray(mask, bool), -2)
    weights = masked_softmax(logits, mask)
    return weights @ v, weights


def upsample_to_frames(rows: np.ndarray, frame_map) -> np.ndarray:
    """Replicate sub-phoneme rows onto the frames aligned with them."""
    return np.asarray(rows)[..., np.asarray(frame_map, dtype=int), :]


def gru_forward(x, params, config: ModelConfig):
    """Run the GRU over axis -2 of ``x``; returns (states, per-step cache)."""
    b, p, _ = x.shape
    h_dim = config.gru_units
    xz = x @ params["gru_Wz"] + params["gru_bz"]
    xr = x @ params["gru_Wr"] + params["gru_br"]
    xn = x @ params["gru_Wn"] + params["gru_bn"]
    uz, ur, un = params["gru_Uz"], params["gru_Ur"], params["gru_Un"]
    h = np.zeros((b, h_dim))
    hs = np.zeros((b, p, h_dim))
    zs, rs, ns = np.zeros_like(hs), np.zeros_like(hs), np.zeros_like(hs)
    for t in range(p):
        z = sigmoid(xz[:, t] + h @ uz)
        r = sigmoid(xr[:, t] + h @ ur)
        n = np.tanh(xn[:, t] + (r * h) @ un)
        h = (1.0 - z) * n + z * h
        hs[:, t], zs[:, t], rs[:, t], ns[:, t] = h, z, r, n
    return hs, {"z": zs, "r": rs, "n": ns}


def encode_subphonemes(x, params, config: ModelConfig, train_mode: bool = False,
                       rng: np.random.Generator | None = None, mask=None):
    """GRU-encode one-hot sub-phonemes; returns ``(encoded, frame_keys, phone_keys)``.

    ``x`` is ``(P, D)`` or ``(B, P, D)``.  Dropout hits the GRU output only
    in training mode.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[1] == 0:
        raise ModelError("empty sub-phoneme sequence")
    if x.shape[-1] != config.input_dim:
        raise ModelError(f"input width {x.shape[-1]} != {config.input_dim}")
    hs, _ = gru_forward(x, params, config)
    if train_mode:
        if mask is None:
            mask = dropout_mask(rng or np.random.default_rng(), hs.shape, config.dropout)
        hs = hs * mask
    kf = hs @ params["key_frame_W"] + params["key_frame_b"]
    kp = hs @ params["key_phone_W"] + params["key_phone_b"]
    if single:
        return hs[0], kf[0], kp[0]
    return hs, kf, kp


def syllable_queries(k: int, config: ModelConfig) -> np.ndarray:
    if k > config.max_syllables:
        raise ModelError(f"{k} syllables exceed max_syllables={config.max_syllables}")
    return np.eye(config.d_k)[:k]


def pool_syllable_features(frame_values, durations, frame_keys, phone_keys, queries,
                           frame_mask=None, phone_mask=None):
    """Attention-pool frame and sub-phoneme values into ``(K, 3)`` syllable features.

    ``frame_keys`` are already replicated to frames.  Returns the pooled
    matrix and both attention weight matrices.
    """
    pooled_f, a_f = dot_product_attention(queries, frame_keys, frame_values, frame_mask)
    pooled_p, a_p = dot_product_attention(queries, phone_keys, durations, phone_mask)
    return np.concatenate([pooled_f, pooled_p], axis=-1), a_f, a_p


def _neighbours(smask):
    """(left_valid, right_valid) per syllable slot."""
    smask = np.asarray(smask, bool)
    left = np.zeros_like(smask)
    right = np.zeros_like(smask)
    left[..., 1:] = smask[..., 1:] & smask[..., :-1]
    right[..., :-1] = smask[..., :-1] & smask[..., 1:]
    return left, right


def differential_bidirectional(s, smask=None) -> np.ndarray:
    """``[own, own/left, own/right]`` per syllable; missing neighbours give 1."""
    s = np.asarray(s, dtype=float)
    if smask is None:
        smask = np.ones(s.shape[:-1], dtype=bool)
    lv, rv = _neighbours(smask)
    prev = np.ones_like(s)
    nxt = np.ones_like(s)
    prev[..., 1:, :] = s[..., :-1, :]
    nxt[..., :-1, :] = s[..., 1:, :]
    left = np.where(lv[..., None], s / np.maximum(prev, RATIO_EPS), 1.0)
    right = np.where(rv[..., None], s / np.maximum(nxt, RATIO_EPS), 1.0)
    return np.concatenate([s, left, right], axis=-1)


def classify_head(r, params, config: ModelConfig, train_mode: bool = False,
                  rng: np.random.Generator | None = None, masks=None):
    """tanh MLP plus linear 2-way output, softmax over classes.

    Returns ``(probs, cache)``; ``masks`` fixes the dropout masks (one per
    layer, the last for the output layer).
    """
    h = np.asarray(r, dtype=float)
    cache = {"inputs": [], "acts": [], "masks": []}
    n_layers = config.head_layers
    for i in range(1, n_layers + 2):
        name = f"dense{i}" if i <= n_layers else "out"
        cache["inputs"].append(h)
        a = h @ params[f"{name}_W"] + params[f"{name}_b"]
        out = np.tanh(a) if i <= n_layers else a
        cache["acts"].append(out)
        if train_mode:
            m = masks[i - 1] if masks is not None else dropout_mask(
                rng or np.random.default_rng(), out.shape, config.dropout)
            out = out * m
        else:
            m = None
        cache["masks"].append(m)
        h = out
    probs = masked_softmax(h)
    return probs, cache


# -- full model -------------------------------------------------------------------

def sample_masks(batch: Batch, config: ModelConfig, rng: np.random.Generator) -> dict:
    b, p = batch.pmask.shape
    k = batch.smask.shape[1]
    masks = {"head": [dropout_mask(rng, (b, k, config.head_units), config.dropout)
                      for _ in range(config.head_layers)]}
    masks["head"].append(dropout_mask(rng, (b, k, 2), config.dropout))
    if config.attention:
        masks["gru"] = dropout_mask(rng, (b, p, config.gru_units), config.dropout)
    return masks


def forward_batch(params, batch: Batch, config: ModelConfig, train_mode: bool = False,
                  rng: np.random.Generator | None = None, masks: dict | None = None):
    """Posteriors ``(B, K, 2)`` and the cache used by backpropagation."""
    if train_mode and masks is None:
        masks = sample_masks(batch, config, rng or np.random.default_rng())
    cache = {"train_mode": train_mode, "masks": masks}
    k = batch.smask.shape[1]
    if config.attention:
        hs, gcache = gru_forward(batch.x, params, config)
        enc = hs * masks["gru"] if train_mode else hs
        kf = enc @ params["key_frame_W"] + params["key_frame_b"]
        kp = enc @ params["key_phone_W"] + params["key_phone_b"]
        kf_up = batch.up @ kf
        q = syllable_queries(k, config)
        s, a_f, a_p = pool_syllable_features(batch.fvals, batch.dvals, kf_up, kp, q,
                                             batch.fmask, batch.pmask)
        cache.update(hs=hs, gru=gcache, enc=enc, kf=kf, kp=kp, kf_up=kf_up, q=q,
                     a_f=a_f, a_p=a_p)
    else:
        s = batch.nucleus
    r = differential_bidirectional(s, batch.smask)
    probs, hcache = classify_head(r, params, config, train_mode,
                                  masks=masks["head"] if train_mode else None)
    cache.update(s=s, r=r, head=hcache, probs=probs)
    return probs, cache


def forward(alignment: WordAlignment, features: ProsodicFeatures, params, config: ModelConfig,
            train_mode: bool = False, rng: np.random.Generator | None = None):
    """Stress posterior ``(K, 2)`` for one word plus its attention matrices.

    Columns of the posterior are (unstressed, stressed).  The attention dict
    holds ``frame`` ``(K, T)`` and ``phone`` ``(K, 2 * n_phonemes)`` weights
    (empty for the nucleus-mean variant).
    """
    k = alignment.n_syllables
    if not 2 <= k <= config.max_syllables:
        raise ModelError(f"{alignment.word!r}: {k} syllables outside [2, {config.max_syllables}]")
    batch = collate([(alignment, features)], config)
    probs, cache = forward_batch(params, batch, config, train_mode, rng)
    att = {}
    if config.attention:
        att = {"frame": cache["a_f"][0], "phone": cache["a_p"][0]}
    return probs[0], att


def predict(params, items, config: ModelConfig, batch_size: int = 256) -> list[np.ndarray]:
    """Inference posteriors for many words, batched by syllable count."""
    out: list = [None] * len(items)
    order = sorted(range(len(items)),
                   key=lambda i: (items[i][0].n_syllables, items[i][1].n_frames))
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        # keep syllable counts uniform inside a batch
        groups: dict[int, list[int]] = {}
        for i in idx:
            groups.setdefault(items[i][0].n_syllables, []).append(i)
        for members in groups.values():
            batch = collate([items[i] for i in members], config)
            probs, _ = forward_batch(params, batch, config)
            for j, i in enumerate(members):
                out[i] = probs[j, :items[i][0].n_syllables]
    return out


# -- checkpoints --------------------------------------------------------------------

def _checksum(config: dict, weights: dict) -> str:
    payload = json.dumps({"config": config, "weights": weights}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def save_checkpoint(path, params, config: ModelConfig, extra: dict | None = None) -> None:
    cfg = asdict(config)
    weights = {name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
               for name, arr in sorted(params.items())}
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": cfg,
        "weights": weights,
        "checksum": _checksum(cfg, weights),
    }
    if extra:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_checkpoint(path) -> tuple[dict, ModelConfig, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ModelError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    if _checksum(doc["config"], doc["weights"]) != doc.get("checksum"):
        raise ModelError(f"{path}: checksum mismatch")
    config = ModelConfig(**doc["config"])
    expected = param_shapes(config)
    if set(expected) != set(doc["weights"]):
        raise ModelError(f"{path}: weight names do not match the config")
    params = {}
    for name, shape in expected.items():
        w = doc["weights"][name]
        if tuple(w["shape"]) != shape:
            raise ModelError(f"{path}: {name} has shape {w['shape']}, expected {list(shape)}")
        params[name] = np.array(w["data"], dtype=float).reshape(shape)
    return params, config, doc.get("extra", {})


def attention_csv(weights: np.ndarray) -> str:
    """Rows = syllables, columns = frames (or sub-phonemes)."""
    return "\n".join(",".join(f"{v:.6g}" for v in row) for row in np.atleast_2d(weights)) + "\n"
