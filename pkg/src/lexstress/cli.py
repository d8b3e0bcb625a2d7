"""Command-line front end: ``lexstress <command> [options]``.

Commands
    synth-corpus  generate a labelled corpus (alignments, features, manifest)
    extract       WAV files + alignments -> feature file
    train         manifest -> checkpoint + loss log
    detect        checkpoint + words -> per-word detection report
    eval          checkpoints + test split -> PR curves (CSV, SVG) and report
    attention     attention heat map of one word as CSV
    gradcheck     analytic vs finite-difference gradients

Every command takes ``--config`` (a JSON object) and ``--seed``; flags win
over config values.  Unknown config keys are rejected.  Exit status is 0 on
success, 1 on any error, with the message naming the offending file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .augmentation import (
    CorpusSpec,
    GeneratorError,
    StressEffects,
    corpus_summary,
    generate_corpus,
    synthesize_word,
    write_corpus,
)
from .evaluation import (
    EvaluationError,
    curves_svg,
    detect,
    evaluate_scores,
    format_table,
    reports_to_json,
)
from .lexicon import AlignmentError, load_lexicon, read_alignment_file
from .model import (
    ModelConfig,
    ModelError,
    attention_csv,
    collate,
    forward,
    init_params,
    load_checkpoint,
    predict,
    sample_masks,
    save_checkpoint,
)
from .prosody import (
    FeatureError,
    extract_features,
    read_feature_file,
    read_wav,
    write_feature_file,
)
from .training import (
    TrainConfig,
    TrainingError,
    gradient_check,
    load_examples,
    read_manifest,
    train,
    write_loss_log,
)

ERRORS = (AlignmentError, FeatureError, ModelError, TrainingError, GeneratorError,
          EvaluationError, OSError, json.JSONDecodeError)

GRADCHECK_TOL = 1e-4


class CLIError(Exception):
    pass


def _field_names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


def read_config(path, allowed: set[str]) -> dict:
    """Load a JSON object and reject keys outside ``allowed``."""
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(doc, dict):
        raise CLIError(f"{path}: config must be a JSON object")
    unknown = set(doc) - allowed
    if unknown:
        raise CLIError(f"{path}: unknown config keys {sorted(unknown)}")
    return doc


def _split_config(doc: dict, *classes) -> list[dict]:
    parts = []
    for cls in classes:
        names = _field_names(cls)
        parts.append({k: v for k, v in doc.items() if k in names})
    return parts


def _load_pairs(manifest, split: str | None):
    """(alignment, features) pairs from a manifest; labels are optional."""
    pairs = []
    for e in read_manifest(manifest):
        if split is not None and e["split"] != split:
            continue
        als = read_alignment_file(e["alignments"])
        feats = read_feature_file(e["features"])
        if len(als) != len(feats):
            raise CLIError(f"{e['features']}: {len(feats)} feature records for "
                           f"{len(als)} alignments")
        pairs.extend(zip(als, feats))
    if not pairs:
        raise CLIError(f"{manifest}: no words in split {split!r}")
    return pairs


# -- commands ------------------------------------------------------------------------

def cmd_synth_corpus(args) -> int:
    allowed = _field_names(CorpusSpec) | _field_names(StressEffects) | {"lexicon", "split",
                                                                        "name"}
    doc = read_config(args.config, allowed)
    if args.seed is not None:
        doc["seed"] = args.seed
    effects_doc, = _split_config(doc, StressEffects)
    split = doc.pop("split", "train")
    name = doc.pop("name", "corpus")
    spec_doc = {k: v for k, v in doc.items() if k not in effects_doc}
    lexicon = load_lexicon(Path(args.config).parent / spec_doc.pop("lexicon")) \
        if spec_doc.get("lexicon") else load_lexicon()
    words = spec_doc.pop("words", None)
    if isinstance(words, list):
        missing = [w for w in words if w.lower() not in lexicon]
        if missing:
            raise CLIError(f"{args.config}: no transcription for {missing[:5]}")
        words = {w.lower(): lexicon[w.lower()] for w in words}
    for key in ("f0_range", "rate_range", "intensity_range", "jitter_range", "strength_range"):
        if key in spec_doc:
            spec_doc[key] = tuple(spec_doc[key])
    spec_doc.setdefault("n_words", 100)
    try:
        spec = CorpusSpec(words=words or lexicon, **spec_doc)
        effects = StressEffects(**effects_doc)
    except TypeError as exc:
        raise CLIError(f"{args.config}: {exc}") from None
    examples = generate_corpus(spec, effects)
    out = Path(args.out)
    entry = write_corpus(examples, out, name=name, split=split)
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"entries": [entry]}, indent=1) + "\n", encoding="utf-8")
    s = corpus_summary(examples)
    print(f"{'Source':<10} {'Speakers':>8} {'Words':>8} {'Unique':>8} {'Errors':>8}")
    print(f"{spec.source:<10} {s['speakers']:>8} {s['words']:>8} {s['unique_words']:>8} "
          f"{s['stress_errors']:>8}")
    return 0


def cmd_extract(args) -> int:
    read_config(args.config, set())
    alignments = read_alignment_file(args.alignments)
    wav_dir = Path(args.wav_dir)
    feats = []
    for i, al in enumerate(alignments):
        path = wav_dir / (al.audio or f"{al.speaker_id}_{al.word}.wav")
        try:
            audio = read_wav(path)
            feats.append(extract_features(audio, al))
        except FeatureError as exc:
            raise CLIError(f"{path} (record {i}): {exc}") from None
        if feats[-1].all_unvoiced:
            print(f"warning: {path}: no voiced frame, F0 filled with the default",
                  file=sys.stderr)
    write_feature_file(feats, args.out, alignments)
    print(f"{len(feats)} feature records -> {args.out}")
    return 0


def cmd_train(args) -> int:
    allowed = _field_names(TrainConfig) | _field_names(ModelConfig)
    doc = read_config(args.config, allowed)
    if args.seed is not None:
        doc["seed"] = args.seed
    tc_doc, mc_doc = _split_config(doc, TrainConfig, ModelConfig)
    train_config = TrainConfig(**tc_doc)
    model_config = ModelConfig(**mc_doc)
    entries = read_manifest(args.manifest)
    examples = load_examples(entries, "train")
    val = load_examples(entries, "val") or None
    result = train(examples, model_config, train_config, validation=val)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    best = result.log[result.best_epoch]
    save_checkpoint(out, result.params, result.config, {
        "train_config": {f.name: getattr(train_config, f.name) for f in fields(train_config)},
        "best_epoch": result.best_epoch,
        "val_loss": best[2],
        "val_speakers": sorted(result.val_speakers),
    })
    log_path = out.with_suffix(".loss.csv")
    write_loss_log(result.log, log_path)
    print(f"best epoch {result.best_epoch}: train {best[1]:.4f} val {best[2]:.4f}")
    print(f"checkpoint -> {out}; loss log -> {log_path}")
    return 0


def _threshold(args, doc) -> float:
    t = args.threshold if args.threshold is not None else doc.get("threshold", 0.5)
    if not 0.0 <= t <= 1.0:
        raise CLIError(f"threshold {t} outside [0, 1]")
    return float(t)


def cmd_detect(args) -> int:
    doc = read_config(args.config, {"threshold", "split"})
    threshold = _threshold(args, doc)
    params, config, _ = load_checkpoint(args.checkpoint)
    pairs = _load_pairs(args.manifest, args.split or doc.get("split"))
    posts = predict(params, pairs, config)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["word", "speaker_id", "canonical", "predicted", "mismatch_prob",
                "word_error_score", "flagged"])
    n_flagged = 0
    for (al, _), post in zip(pairs, posts):
        r = detect(al.canonical, post, threshold, al.word)
        n_flagged += r.flagged
        w.writerow([al.word, al.speaker_id, "".join(map(str, al.canonical)),
                    "".join(map(str, r.predicted)),
                    " ".join(f"{m:.6f}" for m in r.mismatch), f"{r.word_error_score:.6f}",
                    int(r.flagged)])
    _emit(buf.getvalue(), args.out)
    print(f"{n_flagged} of {len(pairs)} words flagged at threshold {threshold}",
          file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    doc = read_config(args.config, {"split", "target_recall"})
    split = args.split or doc.get("split", "test")
    pairs = _load_pairs(args.manifest, split)
    if any(al.realized is None for al, _ in pairs):
        raise CLIError(f"{args.manifest}: evaluation needs realized stress on every word")
    truth = np.array([al.is_error for al, _ in pairs])
    reports, curves = [], {}
    for path in args.checkpoint:
        params, config, _ = load_checkpoint(path)
        posts = predict(params, pairs, config)
        scores = np.array([detect(al.canonical, p).word_error_score
                           for (al, _), p in zip(pairs, posts)])
        name = Path(path).stem
        report, curve = evaluate_scores(name, scores, truth, doc.get("target_recall", 0.5))
        reports.append(report)
        curves[name] = curve
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, curve in curves.items():
        (out / f"pr_{name}.csv").write_text(curve.to_csv(), encoding="utf-8")
    (out / "pr_curves.svg").write_text(curves_svg(curves), encoding="utf-8")
    (out / "report.json").write_text(reports_to_json(reports) + "\n", encoding="utf-8")
    table = format_table(reports)
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_attention(args) -> int:
    read_config(args.config, set())
    params, config, _ = load_checkpoint(args.checkpoint)
    if not config.attention:
        raise CLIError(f"{args.checkpoint}: model has no attention layers")
    alignments = read_alignment_file(args.alignments)
    feats = read_feature_file(args.features)
    if len(alignments) != len(feats):
        raise CLIError(f"{args.features}: record count differs from {args.alignments}")
    if not 0 <= args.index < len(alignments):
        raise CLIError(f"{args.alignments}: no record {args.index}")
    _, att = forward(alignments[args.index], feats[args.index], params, config)
    _emit(attention_csv(att[args.kind]), args.out)
    return 0


def random_gradcheck_batch(config: ModelConfig, seed: int, n_words: int = 3):
    """A small generated batch with one syllable count, for gradient checks."""
    rng = np.random.default_rng(seed)
    lexicon = load_lexicon()
    by_k: dict[int, list[str]] = {}
    for word, entry in sorted(lexicon.items()):
        by_k.setdefault(entry.count("0") + entry.count("1") + entry.count("2"), []).append(word)
    k = int(rng.choice([k for k in sorted(by_k) if k <= config.max_syllables and
                        len(by_k[k]) >= n_words]))
    words = rng.choice(by_k[k], size=n_words, replace=False)
    items = []
    for i, word in enumerate(words):
        realized = tuple(int(v) for v in rng.integers(0, 2, size=k))
        al, feat = synthesize_word(lexicon[word], realized, seed=[seed, i], word=str(word))
        items.append((al, feat))
    return collate(items, config)


def cmd_gradcheck(args) -> int:
    allowed = _field_names(ModelConfig) | {"n_configs", "tolerance"}
    doc = read_config(args.config, allowed)
    seed = args.seed if args.seed is not None else 0
    n_configs = int(doc.pop("n_configs", 1))
    tol = float(doc.pop("tolerance", GRADCHECK_TOL))
    base = ModelConfig(**doc)
    worst: dict[str, float] = {}
    for c in range(n_configs):
        rng = np.random.default_rng([seed, c])
        # later configurations alternate the attention variant and dropout
        cfg = base if c == 0 else replace(base, attention=c % 2 == 0)
        params = init_params(cfg, seed=int(rng.integers(2 ** 31)), scale=0.5)
        batch = random_gradcheck_batch(cfg, int(rng.integers(2 ** 31)))
        use_dropout = cfg.dropout > 0 and c % 3 != 2
        masks = sample_masks(batch, cfg, rng) if use_dropout else None
        for name, err in gradient_check(params, batch, cfg, masks=masks).items():
            worst[name] = max(worst.get(name, 0.0), err)
    ok = all(v <= tol for v in worst.values())
    print(f"{'block':<14} {'max rel err':>12}  status")
    for name, err in worst.items():
        print(f"{name:<14} {err:12.3e}  {'pass' if err <= tol else 'FAIL'}")
    print("gradcheck", "passed" if ok else "FAILED")
    return 0 if ok else 1


def _emit(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lexstress",
                                description="Lexical stress error detection toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, out_required=True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="JSON config file; flags override its values")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", required=out_required)
        sp.set_defaults(func=func)
        return sp

    add("synth-corpus", cmd_synth_corpus, "generate a labelled corpus directory")
    sp = add("extract", cmd_extract, "extract prosodic features from WAV files")
    sp.add_argument("--wav-dir", required=True)
    sp.add_argument("--alignments", required=True)
    sp = add("train", cmd_train, "train a model from a manifest")
    sp.add_argument("--manifest", required=True)
    sp = add("detect", cmd_detect, "flag stress errors", out_required=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--split", default=None)
    sp.add_argument("--threshold", type=float, default=None)
    sp = add("eval", cmd_eval, "precision-recall evaluation of checkpoints")
    sp.add_argument("--checkpoint", required=True, nargs="+")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--split", default=None)
    sp = add("attention", cmd_attention, "attention weights of one word as CSV",
             out_required=False)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--alignments", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--kind", choices=("frame", "phone"), default="frame")
    add("gradcheck", cmd_gradcheck, "check analytic gradients", out_required=False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
    except ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (TypeError, ValueError) as exc:
        print(f"error: {getattr(args, 'config', None) or args.command}: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
