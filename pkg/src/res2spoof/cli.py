"""Command line: extract, train, score, evaluate, fuse, params, toy.

Exit codes: 0 ok, 1 usage/configuration, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, model_from_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .errors import ConfigurationError, DataError, NumericError
from .features import FeatureConfig, extract, read_feature, read_feature_header, read_wav, write_feature
from .manifest import check_disjoint, read_manifest
from .metrics import (
    ScoreRecord,
    TdcfCosts,
    attach_labels,
    eer_from_scores,
    fuse_scores,
    min_tdcf_from_scores,
    per_attack_eer,
    read_protocol,
    read_scores,
    split_scores,
    write_scores,
)
from .models import BONAFIDE, build_model, get_config, stage_param_counts
from .training import Dataset, predict_scores, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("res2spoof")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --------------------------------------------------------------------------
# helpers

def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "feature", None):
        cfg.feature = replace(cfg.feature, kind=args.feature)
    if getattr(args, "arch", None):
        get_config(args.arch)
        cfg.arch = args.arch
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cache_path(cache_dir, utt_id: str) -> Path:
    return Path(cache_dir) / f"{utt_id}.feat"


def _extract_one(job):
    utt_id, wav, out, cfg = job
    try:
        fm = extract(read_wav(wav, utt_id), cfg)
        write_feature(out, fm)
        return utt_id, None
    except (DataError, OSError) as exc:
        return utt_id, str(exc)


def load_features(entries, cache_dir, feature_hash: str | None = None):
    missing = [e.utt_id for e in entries if not cache_path(cache_dir, e.utt_id).exists()]
    if missing:
        raise DataError(f"{len(missing)} utterances have no cached features: {' '.join(missing[:20])}")
    mats = []
    for e in entries:
        fm = read_feature(cache_path(cache_dir, e.utt_id))
        if feature_hash is not None and fm.config_hash != feature_hash:
            raise DataError(
                f"feature cache for {e.utt_id} has config hash {fm.config_hash}, checkpoint expects {feature_hash}"
            )
        mats.append(fm.values)
    return np.stack(mats)[:, None, :, :]


def labels_of(entries) -> np.ndarray:
    unlabeled = [e.utt_id for e in entries if e.label is None]
    if unlabeled:
        raise DataError(f"training needs labels; unlabeled: {' '.join(unlabeled[:20])}")
    return np.array([BONAFIDE if e.label == "bonafide" else 0 for e in entries], dtype=np.int64)


# --------------------------------------------------------------------------
# commands

def cmd_extract(args) -> int:
    cfg = resolve_config(args)
    fcfg: FeatureConfig = cfg.feature
    out_dir = Path(args.out or cfg.cache_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = read_manifest(args.manifest, args.audio_root or cfg.audio_root or None)
    jobs, skipped = [], 0
    for e in entries:
        target = cache_path(out_dir, e.utt_id)
        if target.exists():
            try:
                _, _, _, h = read_feature_header(target)
                if h == fcfg.hash:
                    skipped += 1
                    continue
            except DataError:
                pass
        jobs.append((e.utt_id, e.path, target, fcfg))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_extract_one, jobs))
    else:
        results = [_extract_one(j) for j in jobs]
    failed = [(u, err) for u, err in results if err]
    for u, err in failed:
        print(f"error {u}: {err}", file=sys.stderr)
    nbytes = sum(cache_path(out_dir, e.utt_id).stat().st_size for e in entries
                 if cache_path(out_dir, e.utt_id).exists())
    print(f"extracted={len(jobs) - len(failed)} skipped={skipped} failed={len(failed)} "
          f"count={len(entries)} F={fcfg.bins} T={fcfg.n_frames} bytes={nbytes} config_hash={fcfg.hash}")
    return EXIT_DATA if failed else EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if not cfg.train_manifest or not cfg.dev_manifest:
        raise ConfigurationError("train needs train_manifest and dev_manifest in the config")
    root = cfg.audio_root or None
    tr = read_manifest(cfg.train_manifest, root, check_files=False)
    dv = read_manifest(cfg.dev_manifest, root, check_files=False)
    check_disjoint(tr, dv)
    data = Dataset(load_features(tr, cfg.cache_dir, cfg.feature.hash), labels_of(tr),
                   load_features(dv, cfg.cache_dir, cfg.feature.hash), labels_of(dv))
    mcfg = cfg.model_config()
    model = build_model(mcfg, seed=cfg.seed)
    ckpt_path = Path(args.out or cfg.checkpoint)
    ckpt_path.parent.mkdir(parents=True, exist_ok=True)
    log_lines = []

    def on_epoch(entry):
        log_lines.append(entry.line())
        print(entry.line(), flush=True)

    extra = {"feature_hash": cfg.feature.hash, "model_hash": mcfg.hash, "feature": cfg.feature.kind}
    result = train(model, data, cfg.train_config(), config_hash=cfg.hash, extra=extra, on_epoch=on_epoch)
    save_checkpoint(result.checkpoint, ckpt_path)
    Path(str(ckpt_path) + ".log").write_text("\n".join(log_lines) + "\n")
    Path(str(ckpt_path) + ".config").write_text(cfg.dumps())
    print(f"best_epoch={result.best_epoch} checkpoint={ckpt_path} config_hash={cfg.hash}")
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = resolve_config(args)
    ckpt = load_checkpoint(args.checkpoint or cfg.checkpoint)
    entries = read_manifest(args.manifest, args.audio_root or cfg.audio_root or None, check_files=False)
    x = load_features(entries, args.cache or cfg.cache_dir, ckpt.extra.get("feature_hash"))
    model = model_from_checkpoint(ckpt)
    scores = predict_scores(model, x.astype(next(iter(ckpt.params.values())).dtype))
    out = Path(args.out)
    write_scores(out, [ScoreRecord(e.utt_id, float(s)) for e, s in zip(entries, scores)])
    Path(str(out) + ".config").write_text(
        f"config_hash = {ckpt.config_hash}\nfeature_hash = {ckpt.extra.get('feature_hash', '')}\n"
        f"checkpoint = {Path(args.checkpoint or cfg.checkpoint).resolve()}\n"
    )
    print(f"scored={len(entries)} out={out} config_hash={ckpt.config_hash}")
    return EXIT_OK


def evaluation_report(records, costs: TdcfCosts) -> list[str]:
    bona, spoof = split_scores(records)
    eer = eer_from_scores(bona, spoof)[0]
    tdcf = min_tdcf_from_scores(bona, spoof, costs)
    lines = [f"EER {100 * eer:.4f}% t-DCF {tdcf:.4f}"]
    attacks = per_attack_eer(records)
    if any(a != "-" for a in attacks):
        lines += [f"attack={a} EER {100 * e:.4f}%" for a, e in attacks.items()]
    return lines


def cmd_evaluate(args) -> int:
    c1 = args.c1 if args.c1 is not None else 1.0
    c2 = args.c2 if args.c2 is not None else 10.0
    if args.config:
        cfg = load_config(args.config)
        c1 = args.c1 if args.c1 is not None else cfg.c1
        c2 = args.c2 if args.c2 is not None else cfg.c2
    records = attach_labels(read_scores(args.scores), read_protocol(args.protocol))
    for line in evaluation_report(records, TdcfCosts(c1, c2)):
        print(line)
    return EXIT_OK


def cmd_fuse(args) -> int:
    fused = fuse_scores([read_scores(p) for p in args.scores])
    write_scores(args.out, fused)
    print(f"fused={len(fused)} files={len(args.scores)} out={args.out}")
    return EXIT_OK


def cmd_params(args) -> int:
    cfg = get_config(args.arch)
    rows = stage_param_counts(cfg)
    total = sum(n for _, n in rows)
    print(f"{'stage':<8}{'params':>10}")
    for name, n in rows:
        print(f"{name:<8}{n:>10}")
    print(f"{'total':<8}{total:>10}  {total / 1e6:.2f}M")
    return EXIT_OK


def cmd_toy(args) -> int:
    from .toy import make_toy_corpus

    paths = make_toy_corpus(args.out, seed=args.seed or 0, duration=args.duration)
    for split, p in paths.items():
        print(f"{split}={p}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="res2spoof", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, manifest=False):
        sp.add_argument("--config", help="key=value run configuration")
        sp.add_argument("--seed", type=int)
        if manifest:
            sp.add_argument("--manifest", required=True)
            sp.add_argument("--audio-root")

    sp = sub.add_parser("extract", help="compute and cache features for a manifest")
    common(sp, manifest=True)
    sp.add_argument("--feature", choices=("spec", "lfcc", "cqt"))
    sp.add_argument("--out", help="cache directory (default: cache_dir from config)")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train", help="train and keep the best-dev-EER checkpoint")
    common(sp)
    sp.add_argument("--arch")
    sp.add_argument("--feature", choices=("spec", "lfcc", "cqt"))
    sp.add_argument("--out", help="checkpoint path (default: checkpoint from config)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("score", help="write bonafide log-probability scores")
    common(sp, manifest=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--cache", help="feature cache directory")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("evaluate", help="EER and min t-DCF of a score file")
    sp.add_argument("--config")
    sp.add_argument("--scores", required=True)
    sp.add_argument("--protocol", required=True)
    sp.add_argument("--c1", type=float)
    sp.add_argument("--c2", type=float)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("fuse", help="average several score files")
    sp.add_argument("scores", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_fuse)

    sp = sub.add_parser("params", help="per-stage parameter counts")
    sp.add_argument("--arch", required=True)
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("toy", help="write the synthetic toy corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--duration", type=float, default=1.0)
    sp.set_defaults(func=cmd_toy)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
