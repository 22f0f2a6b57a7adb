"""Command-line interface for the decipherment pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import channel as channel_mod
from . import features as features_mod
from . import lmgmm as lmgmm_mod
from . import metrics as metrics_mod
from .gmm import GmmModel, Transcription, gmm_assign, gmm_fit, model_selection
from .lm import lm_train, load_lm, save_lm
from .page import load_page, save_page
from .pipeline import PipelineError, run_pipeline
from .segment import SegmentationParams, save_manifest, segment_page
from .synth import encipher, make_glyph_set, make_key, render_page
from .util import worker_count


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def cmd_synth(args):
    plaintext = Path(args.plaintext).read_text().strip()
    alphabet = tuple(sorted(set(plaintext)))
    K = args.alphabet_size or len(alphabet)
    key = make_key(alphabet, K, mode=args.cipher, seed=args.seed)
    ids, _ = encipher(plaintext, key, seed=args.seed)
    glyphs = make_glyph_set(K, mode=args.width_mode, seed=args.seed)
    rendered = render_page(ids, glyphs, chars_per_line=args.chars_per_line,
                           spacing=args.spacing, jitter=args.jitter,
                           seed=args.seed, deform_scale=args.deform,
                           noise=args.noise)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_page(rendered.page, out / "page.png")
    save_manifest(rendered.manifest, out / "gold_manifest.json")
    Transcription(tuple(ids), K).to_json(out / "gold_transcription.json")
    key.to_json(out / "key.json")
    (out / "plaintext.txt").write_text(plaintext)
    print(f"wrote synthetic cipher ({len(ids)} glyphs, K={K}) to {out}")


def cmd_segment(args):
    page = load_page(args.page, threshold=args.threshold)
    params = SegmentationParams.from_json(args.seg_params)
    _, cells = segment_page(page, params, min_gap=args.min_gap, min_ink=args.min_ink)
    save_manifest(cells, args.out)
    print(f"{len(cells)} cells -> {args.out}")


def cmd_features(args):
    page = load_page(args.page, threshold=args.threshold)
    manifest = _read_json(args.manifest)
    glyphs = features_mod.glyphs_from_page(page, manifest)
    if args.extractor == "simmat":
        feats = features_mod.simmat_features(glyphs, workers=worker_count())
    elif args.extractor == "rawpixel":
        feats = features_mod.rawpixel_features(glyphs, block=args.block)
    else:
        feats = features_mod.import_features(args.external, manifest)
    features_mod.export_features(feats, args.out)
    print(f"{feats.n} x {feats.d} features ({feats.extractor}) -> {args.out}")


def cmd_cluster(args):
    manifest_like = _read_json(args.features)
    feats = features_mod.FeatureMatrix(np.asarray(manifest_like["vectors"], dtype=float),
                                       "external")
    if args.pca:
        feats = features_mod.pca_reduce(feats, args.pca)
    if args.model_selection:
        model = model_selection(feats, args.K, seed=args.seed, restarts=args.restarts)
    else:
        model = gmm_fit(feats, args.K, cov_mode=args.cov_mode, seed=args.seed,
                        restarts=args.restarts, fixed_var=args.fixed_var)
    transcription = gmm_assign(model, feats)
    transcription.to_json(args.out)
    if args.model_out:
        model.to_json(args.model_out)
    print(f"transcription of {len(transcription.ids)} glyphs -> {args.out}")


def cmd_lm_train(args):
    corpus = Path(args.corpus).read_text()
    lm = lm_train(corpus, order=args.order, delta=args.delta,
                  alphabet=tuple(args.alphabet))
    save_lm(lm, args.out)
    print(f"{args.order}-gram LM over {lm.A} letters -> {args.out}")


def cmd_decipher3(args):
    transcription = Transcription.from_json(args.transcription)
    lm = load_lm(args.lm)
    result = channel_mod.decipher3(transcription, lm, seed=args.seed,
                                   restarts=args.restarts, max_iters=args.max_iters,
                                   lm_exponent=args.lm_exponent)
    result.to_json(args.out)
    if args.channel_out:
        result.channel.to_json(args.channel_out)
    if args.gold_plaintext:
        gold = Path(args.gold_plaintext).read_text().strip()
        print(f"NED vs gold: {metrics_mod.ned(result.plaintext, gold):.4f}")
    print(result.plaintext)


def cmd_decipher2(args):
    feats_raw = _read_json(args.features)
    feats = features_mod.FeatureMatrix(np.asarray(feats_raw["vectors"], dtype=float),
                                       "external")
    if args.pca:
        feats = features_mod.pca_reduce(feats, args.pca)
    transcription = Transcription.from_json(args.transcription)
    lm = load_lm(args.lm)
    result3 = channel_mod.decipher3(transcription, lm, seed=args.seed,
                                    restarts=args.restarts3)
    gold = Path(args.gold_plaintext).read_text().strip() if args.gold_plaintext else None
    result, records = lmgmm_mod.decipher2(feats, lm, result3,
                                          lm_exponent=args.lm_exponent,
                                          restarts=args.restarts,
                                          noise_scale=args.noise_scale,
                                          seed=args.seed, K=transcription.K,
                                          gold=gold)
    result.to_json(args.out)
    if args.scatter:
        lmgmm_mod.scatter_dump(records, args.scatter)
    if gold:
        print(f"NED vs gold: {metrics_mod.ned(result.plaintext, gold):.4f}")
    print(result.plaintext)


def cmd_eval_ned(args):
    hyp = Path(args.hypothesis).read_text().strip()
    ref = Path(args.reference).read_text().strip()
    score = metrics_mod.ned(hyp, ref)
    report = {"score": score}
    if args.out:
        Path(args.out).write_text(json.dumps(report))
    print(f"NED = {score:.4f}")


def cmd_eval_nedoa(args):
    transcription = Transcription.from_json(args.transcription)
    gold = list(Path(args.gold).read_text().strip())
    score, mapping = metrics_mod.nedoa(list(transcription.ids), gold,
                                       method=args.method, restarts=args.restarts,
                                       seed=args.seed)
    report = {"score": score, "mapping": {str(k): v for k, v in mapping.map.items()}}
    if args.out:
        Path(args.out).write_text(json.dumps(report))
    print(f"NEDoA = {score:.4f}")


def cmd_scatter(args):
    # re-emit a scatter CSV from a decipher2 diagnostics JSON
    records = [lmgmm_mod.RestartRecord(**r) for r in _read_json(args.diagnostics)]
    lmgmm_mod.scatter_dump(records, args.out)
    print(f"{len(records)} rows -> {args.out}")


def cmd_run(args):
    config = _read_json(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    out = run_pipeline(config, out_dir=args.out)
    print(f"run complete -> {out / 'summary.json'}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cipherpipe",
                                     description="decipher substitution-cipher manuscript images")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a ground-truthed synthetic cipher page")
    p.add_argument("--plaintext", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cipher", choices=["simple", "homophonic"], default="simple")
    p.add_argument("--alphabet-size", type=int, default=None)
    p.add_argument("--width-mode", choices=["fixed", "variable"], default="fixed")
    p.add_argument("--chars-per-line", type=int, default=40)
    p.add_argument("--spacing", type=int, default=6)
    p.add_argument("--jitter", type=int, default=0)
    p.add_argument("--deform", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="segment a page into character cells")
    p.add_argument("--page", required=True)
    p.add_argument("--seg-params", required=True, help="JSON segmentation parameter file")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=int, default=128)
    p.add_argument("--min-gap", type=int, default=3)
    p.add_argument("--min-ink", type=int, default=1)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("features", help="extract feature vectors for segmented glyphs")
    p.add_argument("--page", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--extractor", choices=["simmat", "rawpixel", "external"], default="simmat")
    p.add_argument("--block", type=int, default=21)
    p.add_argument("--external", help="external feature file (extractor=external)")
    p.add_argument("--threshold", type=int, default=128)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("cluster", help="cluster features into a transcription")
    p.add_argument("--features", required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--cov-mode", choices=["diag", "spherical", "fixed"], default="diag")
    p.add_argument("--fixed-var", type=float, default=0.01)
    p.add_argument("--pca", type=int, default=0)
    p.add_argument("--model-selection", action="store_true")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("lm-train", help="train a character n-gram LM")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--alphabet", default="abcdefghijklmnopqrstuvwxyz")
    p.set_defaults(func=cmd_lm_train)

    p = sub.add_parser("decipher3", help="noisy-channel EM + Viterbi decode")
    p.add_argument("--transcription", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--channel-out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--lm-exponent", type=float, default=1.0)
    p.add_argument("--gold-plaintext")
    p.set_defaults(func=cmd_decipher3)

    p = sub.add_parser("decipher2", help="LM-GMM joint decipherment")
    p.add_argument("--features", required=True)
    p.add_argument("--transcription", required=True, help="for the 3-stage seeding run")
    p.add_argument("--lm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scatter")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=50)
    p.add_argument("--restarts3", type=int, default=30)
    p.add_argument("--lm-exponent", type=float, default=3.0)
    p.add_argument("--noise-scale", type=float, default=0.1)
    p.add_argument("--pca", type=int, default=0)
    p.add_argument("--gold-plaintext")
    p.set_defaults(func=cmd_decipher2)

    p = sub.add_parser("eval-ned", help="normalized edit distance of two text files")
    p.add_argument("--hypothesis", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_ned)

    p = sub.add_parser("eval-nedoa", help="transcription accuracy vs gold symbols")
    p.add_argument("--transcription", required=True)
    p.add_argument("--gold", required=True, help="text file of gold symbols")
    p.add_argument("--method", choices=["em", "exhaustive"], default="em")
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_nedoa)

    p = sub.add_parser("scatter", help="write a (seed, loglik, ned) CSV from diagnostics")
    p.add_argument("--diagnostics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scatter)

    p = sub.add_parser("run", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
