"""Stress error detection, precision-recall analysis and the model ablation."""
from __future__ import annotations

import json
import time
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .model import ModelConfig, nucleus_mean_baseline, predict  # noqa: F401 (re-export)
from .training import TrainConfig, TrainingExample, TrainResult, train

# static comparison row; never recomputed
FERRER_REFERENCE = {"model": "Ferrer et al.", "precision": 0.95, "recall": 0.483}

VARIANTS = {
    "Att_TTS": (True, True),
    "Att_NoTTS": (True, False),
    "NoAtt_TTS": (False, True),
    "NoAtt_NoTTS": (False, False),
}


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class DetectionResult:
    word: str
    predicted: tuple[int, ...]
    probabilities: tuple[float, ...]  # probability of the predicted class
    mismatch: tuple[float, ...]       # probability of the non-canonical class
    word_error_score: float
    flagged: bool


def detect(canonical: Sequence[int], posterior, threshold: float = 0.5,
           word: str = "") -> DetectionResult:
    """Flag a word whose estimated stress contradicts the canonical pattern.

    A syllable counts when its argmax class differs from the canonical one
    and the probability of that class exceeds ``threshold``.
    """
    posterior = np.asarray(posterior, dtype=float)
    canonical = np.asarray(canonical, dtype=int)
    if posterior.shape != (canonical.size, 2):
        raise EvaluationError(
            f"posterior shape {posterior.shape} does not match {canonical.size} syllables")
    if not 0.0 <= threshold <= 1.0:
        raise EvaluationError("threshold must lie in [0, 1]")
    predicted = posterior.argmax(axis=1)
    mismatch = posterior[np.arange(canonical.size), 1 - canonical]
    flagged = bool(np.any((predicted != canonical) & (mismatch > threshold)))
    return DetectionResult(
        word, tuple(int(v) for v in predicted),
        tuple(float(v) for v in posterior[np.arange(canonical.size), predicted]),
        tuple(float(v) for v in mismatch), float(mismatch.max()), flagged)


@dataclass
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    auc: float

    def points(self):
        return list(zip(self.thresholds.tolist(), self.precision.tolist(),
                        self.recall.tolist()))

    def to_csv(self) -> str:
        rows = ["threshold,precision,recall"]
        rows += [f"{t!r},{p!r},{r!r}" for t, p, r in self.points()]
        return "\n".join(rows) + "\n"


def pr_curve(scores, labels) -> PRCurve:
    """Precision/recall at every distinct score (flag when ``score >= t``).

    Points are ordered by rising threshold.  Equal scores enter together.
    The area is the trapezoid rule over recall, anchored at recall 0 with
    the precision of the strictest threshold.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvaluationError("scores and labels must be matching 1-D arrays")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise EvaluationError("ground truth needs both positive and negative examples")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last index of every run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    thr = s[ends]
    prec = tp[ends] / (tp[ends] + fp[ends])
    rec = tp[ends] / n_pos
    r = np.r_[0.0, rec]
    p = np.r_[prec[0], prec]
    auc = float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))
    return PRCurve(thr[::-1].copy(), prec[::-1].copy(), rec[::-1].copy(), auc)


def precision_at_recall(curve: PRCurve, target: float = 0.5) -> tuple[float, float]:
    """``(precision, recall)`` at the smallest achieved recall ``>= target``."""
    if curve.recall.size == 0:
        raise EvaluationError("empty curve")
    ok = curve.recall >= target - 1e-12
    if not ok.any():
        raise EvaluationError(f"no operating point reaches recall {target}")
    r_min = curve.recall[ok].min()
    at = ok & (curve.recall == r_min)
    i = np.flatnonzero(at)[np.argmax(curve.precision[at])]
    return float(curve.precision[i]), float(curve.recall[i])


def binomial_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson exact interval."""
    if trials <= 0:
        raise EvaluationError("trials must be positive")
    if not 0 <= successes <= trials:
        raise EvaluationError("successes must lie in [0, trials]")
    alpha = 1.0 - level
    lo = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes,
                                                         trials - successes + 1))
    hi = 1.0 if successes == trials else float(stats.beta.ppf(1 - alpha / 2, successes + 1,
                                                              trials - successes))
    return lo, hi


@dataclass
class EvalReport:
    model: str
    precision: float
    recall: float
    precision_ci: tuple[float, float]
    recall_ci: tuple[float, float]
    auc: float
    threshold: float
    n_words: int
    n_errors: int
    true_positives: int
    flagged: int

    def row(self) -> str:
        return (f"{self.model:<12} {100 * self.precision:6.2f} "
                f"({100 * self.precision_ci[0]:.2f}-{100 * self.precision_ci[1]:.2f})  "
                f"{100 * self.recall:6.2f} ({100 * self.recall_ci[0]:.2f}-"
                f"{100 * self.recall_ci[1]:.2f})  {self.auc:.4f}")


def word_scores(params, config: ModelConfig, examples: Sequence[TrainingExample]):
    """Word-level error scores and ground-truth error flags."""
    posts = predict(params, [ex.pair() for ex in examples], config)
    scores = np.array([detect(ex.alignment.canonical, p).word_error_score
                       for ex, p in zip(examples, posts)])
    truth = np.array([ex.alignment.is_error for ex in examples])
    return scores, truth, posts


def evaluate_scores(name: str, scores, truth, target_recall: float = 0.5):
    curve = pr_curve(scores, truth)
    precision, recall = precision_at_recall(curve, target_recall)
    i = np.flatnonzero((curve.recall == recall) & (curve.precision == precision))[0]
    thr = float(curve.thresholds[i])
    flagged = int(np.sum(scores >= thr))
    tp = int(np.sum((scores >= thr) & truth))
    n_err = int(truth.sum())
    report = EvalReport(name, precision, recall, binomial_ci(tp, flagged),
                        binomial_ci(tp, n_err), curve.auc, thr, int(truth.size), n_err,
                        tp, flagged)
    return report, curve


def format_table(reports: Sequence[EvalReport]) -> str:
    lines = [f"{'Model':<12} {'Precision [%, 95% CI]':<24} {'Recall [%, 95% CI]':<22} AUC"]
    lines += [r.row() for r in reports]
    ref = FERRER_REFERENCE
    lines.append(f"{ref['model']:<12} {100 * ref['precision']:6.2f} (na-na)          "
                 f"{100 * ref['recall']:6.2f} (na-na)         na")
    return "\n".join(lines)


def reports_to_json(reports: Sequence[EvalReport]) -> str:
    return json.dumps({"models": [asdict(r) for r in reports],
                       "reference": FERRER_REFERENCE}, indent=2)


def curves_svg(curves: dict, width: int = 480, height: int = 360) -> str:
    """Precision-recall curves as a standalone SVG document."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    pad = 40
    w, h = width - 2 * pad, height - 2 * pad
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{pad}" y="{pad}" width="{w}" height="{h}" fill="none" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" '
             f'font-size="12">recall</text>',
             f'<text x="12" y="{height / 2}" font-size="12" '
             f'transform="rotate(-90 12 {height / 2})" text-anchor="middle">precision</text>']
    for tick in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{pad + tick * w}" y="{pad + h + 14}" font-size="10" '
                     f'text-anchor="middle">{tick:g}</text>')
        parts.append(f'<text x="{pad - 4}" y="{pad + (1 - tick) * h + 3}" font-size="10" '
                     f'text-anchor="end">{tick:g}</text>')
    for j, (name, curve) in enumerate(curves.items()):
        order = np.argsort(curve.recall, kind="mergesort")
        pts = " ".join(f"{pad + r * w:.1f},{pad + (1 - p) * h:.1f}"
                       for r, p in zip(curve.recall[order], curve.precision[order]))
        c = colors[j % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{pad + w - 4}" y="{pad + 14 + 14 * j}" font-size="11" '
                     f'text-anchor="end" fill="{c}">{name} (AUC {curve.auc:.3f})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@dataclass
class AblationResult:
    reports: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict)
    trained: dict = field(default_factory=dict)
    test_words: list = field(default_factory=list)
    seconds: dict = field(default_factory=dict)


def run_ablation(train_human: Sequence[TrainingExample], train_synthetic: Sequence[TrainingExample],
                 test: Sequence[TrainingExample], model_config: ModelConfig = ModelConfig(),
                 train_config: TrainConfig = TrainConfig(), variants=tuple(VARIANTS),
                 validation: Sequence[TrainingExample] | None = None) -> AblationResult:
    """Train attention on/off x augmentation on/off and score each on ``test``.

    Every variant sees the same human training words (plus the synthetic set
    when augmented), the same validation speakers and the same test list.
    """
    from .training import split_by_speaker
    if validation is None:
        train_human, validation = split_by_speaker(train_human, train_config.val_fraction,
                                                   train_config.seed)
    out = AblationResult(test_words=[(ex.speaker, ex.alignment.word) for ex in test])
    for name in variants:
        attention, augmented = VARIANTS[name]
        cfg = replace(model_config, attention=attention)
        data = list(train_human) + (list(train_synthetic) if augmented else [])
        t0 = time.perf_counter()
        result: TrainResult = train(data, cfg, train_config, validation=validation)
        scores, truth, _ = word_scores(result.params, cfg, test)
        report, curve = evaluate_scores(name, scores, truth)
        out.reports[name], out.curves[name], out.trained[name] = report, curve, result
        out.seconds[name] = time.perf_counter() - t0
    return out
