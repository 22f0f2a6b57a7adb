"""End-to-end pipeline orchestration with reproducible configuration.

A run consumes a JSON config and writes every intermediate artifact
(manifest, features, transcription, channel/model dumps, plaintext,
metrics) plus a machine-readable summary into its output directory.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from . import channel as channel_mod
from . import features as features_mod
from . import lmgmm as lmgmm_mod
from . import metrics as metrics_mod
from .gmm import Transcription, gmm_assign, gmm_fit, model_selection
from .lm import lm_train, load_lm, save_lm
from .page import load_page
from .segment import SegmentationParams, save_manifest, segment_page
from .util import worker_count

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _require(cond: bool, stage: str, message: str) -> None:
    if not cond:
        raise PipelineError(stage, message)


def validate_config(config: dict) -> dict:
    _require("seed" in config, "config", "explicit 'seed' is required (no wall-clock defaults)")
    _require("lm" in config, "config", "'lm' section is required")
    mode = config.get("decipher", {}).get("mode", "3stage")
    _require(mode in ("3stage", "2stage"), "config", f"unknown decipher mode {mode!r}")
    inp = config.get("input", {})
    for key in ("pages", "gold_transcription", "gold_plaintext", "external_features"):
        paths = inp.get(key)
        if paths is None:
            continue
        for p in paths if isinstance(paths, list) else [paths]:
            _require(Path(p).exists(), "config", f"input file not found: {p}")
    _require(inp.get("pages") or inp.get("gold_transcription"), "config",
             "need input pages or a gold transcription")
    return config


def _load_lm(cfg: dict, out: Path):
    lm_cfg = cfg["lm"]
    if "path" in lm_cfg:
        return load_lm(lm_cfg["path"])
    corpus = Path(lm_cfg["corpus"]).read_text()
    alphabet = tuple(lm_cfg.get("alphabet", "abcdefghijklmnopqrstuvwxyz"))
    lm = lm_train(corpus, order=lm_cfg.get("order", 2),
                  delta=lm_cfg.get("delta", 0.1), alphabet=alphabet)
    save_lm(lm, out / "lm.json")
    return lm


def _transcribe(cfg: dict, out: Path, seed: int):
    """Stages 1-2: segmentation + feature extraction + clustering.

    Returns (transcription, feature matrix or None).
    """
    inp = cfg.get("input", {})
    if inp.get("gold_transcription"):
        transcription = Transcription.from_json(inp["gold_transcription"])
        return transcription, None

    seg_cfg = cfg.get("segmentation", {})
    if "params_file" in seg_cfg:
        params = SegmentationParams.from_json(seg_cfg["params_file"])
    else:
        params = SegmentationParams(**seg_cfg["params"])
    manifest = []
    glyphs = []
    for page_path in inp["pages"]:
        page = load_page(page_path, threshold=inp.get("threshold", 128))
        _, cells = segment_page(page, params, min_gap=seg_cfg.get("min_gap", 3),
                                min_ink=seg_cfg.get("min_ink", 1))
        for cell in cells:
            cell["page"] = str(page_path)
        glyphs.extend(features_mod.glyphs_from_page(page, cells))
        manifest.extend(cells)
    _require(len(manifest) > 0, "segment", "no cells found on any page")
    save_manifest(manifest, out / "manifest.json")

    feat_cfg = cfg.get("features", {})
    extractor = feat_cfg.get("extractor", "simmat")
    if extractor == "simmat":
        feats = features_mod.simmat_features(glyphs, workers=worker_count())
    elif extractor == "rawpixel":
        feats = features_mod.rawpixel_features(glyphs, block=feat_cfg.get("block", 21))
    elif extractor == "external":
        feats = features_mod.import_features(inp["external_features"], manifest)
    else:
        raise PipelineError("features", f"unknown extractor {extractor!r}")
    features_mod.export_features(feats, out / "features.json")
    if feat_cfg.get("pca"):
        feats = features_mod.pca_reduce(feats, int(feat_cfg["pca"]))
    if feat_cfg.get("standardize"):
        rows = feats.rows / np.maximum(feats.rows.std(), 1e-12)
        feats = features_mod.FeatureMatrix(rows, feats.extractor)

    cl_cfg = cfg.get("cluster", {})
    K = cl_cfg["K"]
    if cl_cfg.get("model_selection"):
        model = model_selection(feats, K, seed=seed, restarts=cl_cfg.get("restarts", 10))
    else:
        model = gmm_fit(feats, K, cov_mode=cl_cfg.get("cov_mode", "diag"), seed=seed,
                        restarts=cl_cfg.get("restarts", 10),
                        fixed_var=cl_cfg.get("fixed_var", 0.01))
    model.to_json(out / "gmm_model.json")
    transcription = gmm_assign(model, feats)
    transcription.to_json(out / "transcription.json")
    return transcription, feats


def run_pipeline(config: dict, out_dir=None) -> Path:
    """Run the configured pipeline; returns the run directory."""
    config = validate_config(config)
    out = Path(out_dir or config.get("out_dir", "run"))
    out.mkdir(parents=True, exist_ok=True)
    seed = int(config["seed"])
    summary = {"config": config, "artifacts": {}}

    def record(name, path):
        summary["artifacts"][name] = str(path)

    try:
        lm = _load_lm(config, out)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError("lm", str(exc)) from exc

    try:
        transcription, feats = _transcribe(config, out, seed)
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError("transcribe", str(exc)) from exc
    for name in ("manifest", "features", "transcription", "gmm_model"):
        p = out / f"{name}.json"
        if p.exists():
            record(name, p)

    dec_cfg = config.get("decipher", {})
    mode = dec_cfg.get("mode", "3stage")
    try:
        result3 = channel_mod.decipher3(
            transcription, lm, seed=seed,
            restarts=dec_cfg.get("restarts", 100),
            max_iters=dec_cfg.get("max_iters", 100),
            tol=dec_cfg.get("tol", 1e-6),
            lm_exponent=dec_cfg.get("lm_exponent", 1.0))
    except Exception as exc:
        raise PipelineError("decipher3", str(exc)) from exc
    result3.channel.to_json(out / "channel.json")
    result3.to_json(out / "result3.json")
    (out / "plaintext_3stage.txt").write_text(result3.plaintext)
    record("channel", out / "channel.json")
    record("result3", out / "result3.json")
    final = result3

    if mode == "2stage":
        _require(feats is not None, "decipher2",
                 "2-stage mode needs feature vectors (not a gold transcription)")
        ts_cfg = dec_cfg.get("two_stage", {})
        gold_plain = None
        if config.get("input", {}).get("gold_plaintext"):
            gold_plain = Path(config["input"]["gold_plaintext"]).read_text().strip()
        try:
            result2, records = lmgmm_mod.decipher2(
                feats, lm, result3,
                lm_exponent=ts_cfg.get("lm_exponent", 3.0),
                restarts=ts_cfg.get("restarts", 50),
                noise_scale=ts_cfg.get("noise_scale", 0.1),
                seed=seed, max_iters=ts_cfg.get("max_iters", 100),
                cov_mode=ts_cfg.get("cov_mode", "spherical"),
                variant=ts_cfg.get("variant", "simplified"),
                K=transcription.K, gold=gold_plain)
        except Exception as exc:
            raise PipelineError("decipher2", str(exc)) from exc
        result2.to_json(out / "result2.json")
        (out / "plaintext_2stage.txt").write_text(result2.plaintext)
        lmgmm_mod.scatter_dump(records, out / "scatter.csv")
        record("result2", out / "result2.json")
        record("scatter", out / "scatter.csv")
        summary["two_stage_init"] = {"from": "result3.json",
                                     "init_plaintext_ned_source": "3stage"}
        final = result2

    metrics = {}
    inp = config.get("input", {})
    if inp.get("gold_plaintext"):
        gold = Path(inp["gold_plaintext"]).read_text().strip()
        metrics["ned_3stage"] = metrics_mod.ned(result3.plaintext, gold)
        if mode == "2stage":
            metrics["ned_2stage"] = metrics_mod.ned(final.plaintext, gold)
    if inp.get("gold_symbols"):
        gold_syms = json.loads(Path(inp["gold_symbols"]).read_text())
        score, mapping = metrics_mod.nedoa(list(transcription.ids), gold_syms,
                                           method="em", seed=seed)
        metrics["nedoa"] = score
        metrics["nedoa_mapping"] = {str(k): v for k, v in mapping.map.items()}
    if metrics:
        with open(out / "metrics.json", "w") as fh:
            json.dump(metrics, fh, indent=1)
        record("metrics", out / "metrics.json")

    summary["plaintext"] = final.plaintext
    summary["loglik"] = final.loglik
    summary["metrics"] = metrics
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    return out
