"""``deepmad`` command line.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from deepmad import __version__
from deepmad.errors import DeepMadError, DimensionMismatch, ModelFormatError, ParseError
from deepmad.metrics import LABELS, MORPH, ScoreEntry, ScoreSet, auc, eer, format_scores, read_scores
from deepmad.models import (
    DEFAULT_SHRINKAGE,
    FusionModel,
    LdaModel,
    dump_model,
    lda_scores,
    lda_train,
    load_model,
    logreg_train,
)
from deepmad.protocol import (
    DEFAULT_SEED,
    TRAIN_FRACTION,
    DatasetManifest,
    FeatureCache,
    FusionReport,
    FusionRow,
    System,
    align_pair,
    expand_systems,
    fuse_scoresets,
    parse_manifest,
    run_cross,
    run_grid,
    run_intra,
    split_identities,
)
from deepmad.synthfix import DEFAULT_RADIUS, DEFAULT_SIZE, FAMILIES, write_dataset


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --- feature files ---------------------------------------------------------
# "#features <system> <dim>" header, then "<id>\t<label>\t<v1> <v2> ..." per sample

def format_features(system: str, m: DatasetManifest, x: np.ndarray) -> str:
    dim = x.shape[1] if len(x) else 0
    lines = [f"#features {system} {dim}"]
    for s, row in zip(m.samples, x):
        lines.append(f"{s.path}\t{s.label}\t" + " ".join(format(float(v), ".17g") for v in row))
    return "\n".join(lines) + "\n"


def read_features(path):
    system, dim = None, None
    ids, labels, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                head = line[1:].split()
                if head and head[0] == "features":
                    if len(head) != 3:
                        raise ParseError(lineno, "expected '#features <system> <dim>'")
                    system, dim = head[1], int(head[2])
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[1] not in LABELS:
                raise ParseError(lineno, "expected '<id>\\t<bonafide|morph>\\t<values>'")
            try:
                row = [float(v) for v in parts[2].split()]
            except ValueError:
                raise ParseError(lineno, "non-numeric feature value") from None
            if dim is not None and len(row) != dim:
                raise ParseError(lineno, f"{len(row)} values, header says {dim}")
            ids.append(parts[0])
            labels.append(parts[1])
            rows.append(row)
    if system is None:
        raise ParseError(1, "missing '#features' header")
    return system, ids, labels, np.array(rows, dtype=np.float64).reshape(len(rows), dim or 0)


# --- shared inputs ---------------------------------------------------------

def _add_split_flags(p):
    p.add_argument("--split", choices=("all", "train", "dev"), default="all",
                   help="restrict to one side of the identity split (default: all)")
    p.add_argument("--train-fraction", type=float, default=TRAIN_FRACTION)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)


def _select(m: DatasetManifest, args) -> DatasetManifest:
    if args.split == "all":
        return m
    train, dev = split_identities(m, args.train_fraction, args.seed)
    return train if args.split == "train" else dev


def _manifest_features(args, system: System):
    m = _select(parse_manifest(args.manifest), args)
    x = FeatureCache(getattr(args, "workers", 1)).matrix(m, system)
    return m, x


# --- subcommands -----------------------------------------------------------

def cmd_synth(args) -> int:
    path = write_dataset(args.out, args.name, args.bonafide, args.morphs, args.seed, args.family,
                         args.size, args.radius)
    print(path)
    return 0


def cmd_extract(args) -> int:
    system = System.parse(args.system)
    if not system.trainable:
        raise UsageError("extract needs a feature system (fourier or lbp-...)")
    m, x = _manifest_features(args, system)
    _emit(format_features(system.name, m, x), args.out)
    return 0


def cmd_train(args) -> int:
    if args.features:
        if args.manifest:
            raise UsageError("give either --features or --manifest, not both")
        name, _, labels, x = read_features(args.features)
        if args.system and args.system != name:
            raise UsageError(f"--system {args.system} does not match feature file system {name}")
        y = np.array([lab == MORPH for lab in labels])
    else:
        if not (args.manifest and args.system):
            raise UsageError("train needs --features, or --manifest with --system")
        system = System.parse(args.system)
        if not system.trainable:
            raise UsageError("external systems are not trainable")
        m, x = _manifest_features(args, system)
        name = system.name
        y = np.array([s.label == MORPH for s in m.samples])
    model = lda_train(x[~y], x[y], args.shrinkage, config=name)
    _emit(dump_model(model), args.out)
    return 0


def cmd_score(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, LdaModel):
        raise ModelFormatError(f"{args.model} is not an LDA model")
    if args.features:
        if args.manifest:
            raise UsageError("give either --features or --manifest, not both")
        name, ids, labels, x = read_features(args.features)
        if name != model.config:
            raise DimensionMismatch(f"model trained on {model.config} but features are {name}")
    else:
        if not args.manifest:
            raise UsageError("score needs --features or --manifest")
        system = System.parse(model.config)
        m, x = _manifest_features(args, system)
        ids = [s.path for s in m.samples]
        labels = [s.label for s in m.samples]
    scores = lda_scores(model, x) if len(ids) else []
    s = ScoreSet(tuple(ScoreEntry(i, lab, v) for i, lab, v in zip(ids, labels, scores)))
    _emit(format_scores(s), args.out)
    return 0


def cmd_eval(args) -> int:
    s = read_scores(args.scores)
    print(f"auc={auc(s):.6f} eer={eer(s):.2f}")
    return 0


def cmd_fuse_train(args) -> int:
    s0, s1 = read_scores(args.scores0), read_scores(args.scores1)
    _, x, labels = align_pair(s0, s1)
    model = logreg_train(x, labels)
    model = FusionModel(model.w0, model.w1, model.bias, {**model.meta, "calibration": args.name or s0.name})
    _emit(dump_model(model), args.out)
    return 0


def cmd_fuse_apply(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, FusionModel):
        raise ModelFormatError(f"{args.model} is not a fusion model")
    s0, s1 = read_scores(args.scores0), read_scores(args.scores1)
    fused = fuse_scoresets(model, s0, s1)
    if args.out:
        Path(args.out).write_text(format_scores(fused), encoding="utf-8")
    if args.report or not args.out:
        has_both = len(fused.bonafide) and len(fused.morph)
        if not has_both:
            if not args.out:
                sys.stdout.write(format_scores(fused))
            return 0
        row = FusionRow(str(model.meta.get("calibration", "calib")), args.name or s0.name, args.specs,
                        eer(fused), eer(s0), eer(s1))
        sys.stdout.write(FusionReport([row]).render(args.format))
    return 0


def cmd_intra(args) -> int:
    m = parse_manifest(args.manifest)
    report = run_intra(m, expand_systems(args.systems), args.seed, args.train_fraction, args.shrinkage,
                       workers=args.workers)
    _emit(report.render(args.format), args.out)
    return 0


def cmd_cross(args) -> int:
    systems = expand_systems(args.systems)
    if args.grid:
        if args.train or args.test:
            raise UsageError("--grid cannot be combined with --train/--test")
        report = run_grid([parse_manifest(p) for p in args.grid], systems, args.shrinkage, args.workers)
    else:
        if not args.train or not args.test:
            raise UsageError("cross needs --grid, or at least one --train and one --test")
        tests = [parse_manifest(p) for p in args.test]
        cache = FeatureCache(args.workers)
        report = None
        for p in args.train:
            part = run_cross(parse_manifest(p), tests, systems, args.shrinkage, cache)
            if report is None:
                report = part
            else:
                report.extend(part)
    _emit(report.render(args.format), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepmad", description="Deep morph detection with LBP / Fourier features and LDA.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic fixture dataset (PGM images + manifest.tsv)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--name", default="synth")
    p.add_argument("--bonafide", type=int, default=200)
    p.add_argument("--morphs", type=int, default=200)
    p.add_argument("--family", choices=sorted(FAMILIES), default="a")
    p.add_argument("--size", type=int, default=DEFAULT_SIZE)
    p.add_argument("--radius", type=float, default=DEFAULT_RADIUS, help="blur radius of morph fixtures")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="compute a feature file for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--system", required=True)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    _add_split_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train an LDA model")
    p.add_argument("--manifest")
    p.add_argument("--features")
    p.add_argument("--system")
    p.add_argument("--shrinkage", type=float, default=DEFAULT_SHRINKAGE)
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    _add_split_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score samples with an LDA model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest")
    p.add_argument("--features")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    _add_split_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="AUC and EER of a score file")
    p.add_argument("--scores", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse-train", help="fit logistic fusion on two id-aligned calibration score files")
    p.add_argument("--scores0", required=True)
    p.add_argument("--scores1", required=True)
    p.add_argument("--name", help="calibration set name recorded in the model")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fuse_train)

    p = sub.add_parser("fuse-apply", help="fuse two id-aligned score files with a fusion model")
    p.add_argument("--model", required=True)
    p.add_argument("--scores0", required=True)
    p.add_argument("--scores1", required=True)
    p.add_argument("--out", help="fused score file")
    p.add_argument("--report", action="store_true", help="also print fused / single-system EERs")
    p.add_argument("--name", help="evaluation set name for the report")
    p.add_argument("--specs", default="sys0+sys1")
    p.add_argument("--format", choices=("table", "csv"), default="table")
    p.set_defaults(func=cmd_fuse_apply)

    for name, helptext in (("intra", "intra-dataset experiment on an identity split"),
                           ("cross", "cross-dataset experiment grid")):
        p = sub.add_parser(name, help=helptext)
        if name == "intra":
            p.add_argument("--manifest", required=True)
            p.add_argument("--seed", type=int, default=DEFAULT_SEED)
            p.add_argument("--train-fraction", type=float, default=TRAIN_FRACTION)
            p.set_defaults(func=cmd_intra)
        else:
            p.add_argument("--train", action="append", default=[])
            p.add_argument("--test", action="append", default=[])
            p.add_argument("--grid", nargs="+", help="train on each manifest, test on the others")
            p.set_defaults(func=cmd_cross)
        p.add_argument("--systems", default="all", help="comma list; all-lbp = 12 LBP configs, all = all-lbp + fourier")
        p.add_argument("--shrinkage", type=float, default=DEFAULT_SHRINKAGE)
        p.add_argument("--format", choices=("table", "csv"), default="table")
        p.add_argument("--out")
        p.add_argument("--workers", type=int, default=1)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DeepMadError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
