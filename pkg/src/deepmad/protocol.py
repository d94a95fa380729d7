"""Dataset manifests, identity-disjoint splits and the experiment grids.

Manifest format (tab-separated, one sample per line)::

    #dataset <name>
    <path>\t<bonafide|morph>\t<identity>[,<identity2>]

Other ``#`` lines are comments. Relative paths resolve against the manifest's
directory; the path exactly as written is the sample id used in score files.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from deepmad.errors import EmptySplit, GridOverlap, IdMismatch, InvariantViolation, ParseError
from deepmad.image import load_image, to_canonical
from deepmad.lbp import LbpConfig, enumerate_configs, lbp_histograms
from deepmad.metrics import BONAFIDE, LABELS, MORPH, ScoreEntry, ScoreSet, auc, eer, read_scores
from deepmad.models import DEFAULT_SHRINKAGE, FusionModel, LdaModel, fuse_score, lda_scores, lda_train, logreg_train
from deepmad.spectral import fourier_features

DEFAULT_SEED = 42
TRAIN_FRACTION = 0.75


@dataclass(frozen=True)
class Sample:
    path: str
    label: str
    identities: Tuple[str, ...]


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    samples: Tuple[Sample, ...] = ()
    root: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "root", Path(self.root))
        validate_samples(self.samples)

    def __len__(self):
        return len(self.samples)

    def resolve(self, sample: Sample) -> Path:
        p = Path(sample.path)
        return p if p.is_absolute() else self.root / p

    @property
    def identities(self) -> List[str]:
        return sorted({i for s in self.samples for i in s.identities})

    def count(self, label: str) -> int:
        return sum(1 for s in self.samples if s.label == label)

    def subset(self, samples: Iterable[Sample], name: Optional[str] = None) -> "DatasetManifest":
        return DatasetManifest(name or self.name, tuple(samples), self.root)


def _check_sample(sample: Sample) -> Optional[str]:
    if sample.label not in LABELS:
        return f"label must be 'bonafide' or 'morph', got {sample.label!r}"
    ids = sample.identities
    if any(not i for i in ids):
        return "empty identity id"
    if sample.label == BONAFIDE and len(ids) != 1:
        return f"bona fide sample must carry exactly 1 identity, got {len(ids)}"
    if sample.label == MORPH and (len(ids) != 2 or ids[0] == ids[1]):
        return f"morph must carry exactly 2 distinct identities, got {list(ids)}"
    return None


def validate_samples(samples: Sequence[Sample], linenos: Optional[Sequence[int]] = None) -> None:
    seen = set()
    for k, s in enumerate(samples):
        line = linenos[k] if linenos else k + 1
        reason = _check_sample(s)
        if reason is None and s.path in seen:
            reason = f"duplicate path {s.path!r}"
        if reason:
            raise InvariantViolation(line, reason)
        seen.add(s.path)


def parse_manifest_lines(lines: Iterable[str], default_name: str = "", root=".") -> DatasetManifest:
    name = default_name
    samples, linenos = [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        if line.startswith("#"):
            head = line[1:].split(None, 1)
            if head and head[0] == "dataset":
                if len(head) < 2 or not head[1].strip():
                    raise ParseError(lineno, "'#dataset' header without a name")
                name = head[1].strip()
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        path, label, ids = parts
        if not path:
            raise ParseError(lineno, "empty path")
        sample = Sample(path, label, tuple(i.strip() for i in ids.split(",")))
        reason = _check_sample(sample)
        if reason:
            raise InvariantViolation(lineno, reason)
        samples.append(sample)
        linenos.append(lineno)
    validate_samples(samples, linenos)
    return DatasetManifest(name, tuple(samples), Path(root))


def parse_manifest(path) -> DatasetManifest:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return parse_manifest_lines(fh, default_name=path.stem, root=path.parent)


def format_manifest(m: DatasetManifest) -> str:
    out = [f"#dataset {m.name}\n"]
    out += [f"{s.path}\t{s.label}\t{','.join(s.identities)}\n" for s in m.samples]
    return "".join(out)


def write_manifest(m: DatasetManifest, path) -> None:
    Path(path).write_text(format_manifest(m), encoding="utf-8")


# --- identity split --------------------------------------------------------

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator; 64-bit outputs, identical on every platform."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def shuffle(self, items: list) -> list:
        """Fisher-Yates from the back, ``j = next() % (i + 1)``."""
        items = list(items)
        for i in range(len(items) - 1, 0, -1):
            j = self.next() % (i + 1)
            items[i], items[j] = items[j], items[i]
        return items


def n_train_identities(n: int, train_fraction: float) -> int:
    # rounding guards against 0.7 * 10 = 7.000000000000001 style overshoot
    return min(n, math.ceil(round(train_fraction * n, 9)))


def split_identities(m: DatasetManifest, train_fraction: float = TRAIN_FRACTION,
                     seed: int = DEFAULT_SEED) -> Tuple[DatasetManifest, DatasetManifest]:
    """Identity-disjoint train/dev split.

    Sorted identities are shuffled with SplitMix64(seed); the first
    ``ceil(fraction * n)`` go to train. Bona fide samples follow their
    identity; a morph is kept only where both of its identities landed,
    and dropped when they straddle the split.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    ids = SplitMix64(seed).shuffle(m.identities)
    train_ids = set(ids[:n_train_identities(len(ids), train_fraction)])

    train, dev = [], []
    for s in m.samples:
        inside = [i in train_ids for i in s.identities]
        if all(inside):
            train.append(s)
        elif not any(inside):
            dev.append(s)
    return m.subset(train), m.subset(dev)


def split_identity_sets(m: DatasetManifest, train_fraction: float = TRAIN_FRACTION,
                        seed: int = DEFAULT_SEED) -> Tuple[List[str], List[str]]:
    ids = SplitMix64(seed).shuffle(m.identities)
    k = n_train_identities(len(ids), train_fraction)
    return sorted(ids[:k]), sorted(ids[k:])


# --- systems ---------------------------------------------------------------

@dataclass(frozen=True)
class System:
    """A detector spec: ``fourier``, ``lbp-<P>-<R>-<c|s>-<none|riu2>`` or ``external:<scorefile>``."""

    kind: str
    lbp: Optional[LbpConfig] = None
    scorefile: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "System":
        text = text.strip()
        if text == "fourier":
            return cls("fourier")
        if text.startswith("lbp-"):
            return cls("lbp", lbp=LbpConfig.parse(text))
        if text.startswith("external:") and len(text) > len("external:"):
            return cls("external", scorefile=text[len("external:"):])
        raise ValueError(f"unknown system {text!r}")

    @property
    def name(self) -> str:
        if self.kind == "lbp":
            return self.lbp.name
        if self.kind == "external":
            return f"external:{self.scorefile}"
        return "fourier"

    @property
    def extractor(self) -> str:
        return {"lbp": "LBP", "fourier": "Fourier", "external": "External"}[self.kind]

    @property
    def specs(self) -> str:
        if self.kind == "lbp":
            return self.lbp.label
        if self.kind == "external":
            return Path(self.scorefile).stem
        return ""

    @property
    def trainable(self) -> bool:
        return self.kind != "external"

    def __str__(self):
        return self.name


def expand_systems(spec: str) -> List[System]:
    """Comma list; ``all-lbp`` expands to the 12 LBP configs, ``all`` adds ``fourier``."""
    out: List[System] = []
    for tok in (t.strip() for t in spec.split(",")):
        if not tok:
            continue
        if tok in ("all-lbp", "all"):
            out += [System("lbp", lbp=c) for c in enumerate_configs()]
            if tok == "all":
                out.append(System("fourier"))
        else:
            out.append(System.parse(tok))
    seen, unique = set(), []
    for s in out:
        if s.name not in seen:
            seen.add(s.name)
            unique.append(s)
    if not unique:
        raise ValueError("no systems given")
    return unique


# --- feature extraction ----------------------------------------------------

def _image_features(args) -> Dict[str, np.ndarray]:
    path, names = args
    img = to_canonical(load_image(path))
    systems = [System.parse(n) for n in names]
    out = {}
    lbp_cfgs = [s.lbp for s in systems if s.kind == "lbp"]
    if lbp_cfgs:
        for cfg, hist in lbp_histograms(img, lbp_cfgs).items():
            out[cfg.name] = hist
    if any(s.kind == "fourier" for s in systems):
        out["fourier"] = fourier_features(img)
    return out


class FeatureCache:
    """Per-image features keyed by resolved path, computed at most once per run."""

    def __init__(self, workers: int = 1):
        self.workers = workers
        self._store: Dict[Tuple[str, str], np.ndarray] = {}

    def matrix(self, m: DatasetManifest, system: System) -> np.ndarray:
        self.prefetch(m, [system])
        return np.stack([self._store[(str(m.resolve(s)), system.name)] for s in m.samples]) \
            if m.samples else np.zeros((0, 0))

    def prefetch(self, m: DatasetManifest, systems: Sequence[System]) -> None:
        names = [s.name for s in systems if s.trainable]
        todo = []
        for sample in m.samples:
            path = str(m.resolve(sample))
            missing = tuple(n for n in names if (path, n) not in self._store)
            if missing:
                todo.append((path, missing))
        if not todo:
            return
        if self.workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(self.workers) as pool:
                results = list(pool.map(_image_features, todo, chunksize=8))
        else:
            results = [_image_features(t) for t in todo]
        for (path, _), feats in zip(todo, results):
            for n, v in feats.items():
                self._store[(path, n)] = v


def extract_features(m: DatasetManifest, system: System, cache: Optional[FeatureCache] = None) -> np.ndarray:
    return (cache or FeatureCache()).matrix(m, system)


def _labels(m: DatasetManifest) -> np.ndarray:
    return np.array([s.label == MORPH for s in m.samples])


def train_system(m: DatasetManifest, system: System, shrinkage: float = DEFAULT_SHRINKAGE,
                 cache: Optional[FeatureCache] = None) -> LdaModel:
    x = extract_features(m, system, cache)
    y = _labels(m)
    if y.sum() < 2 or (~y).sum() < 2:
        raise EmptySplit(f"{m.name}: need >= 2 samples per class to train, got "
                         f"{int((~y).sum())} bona fide / {int(y.sum())} morph")
    return lda_train(x[~y], x[y], shrinkage, config=system.name)


def scoreset_from_scores(m: DatasetManifest, scores, name: str = "") -> ScoreSet:
    return ScoreSet(tuple(ScoreEntry(s.path, s.label, float(v)) for s, v in zip(m.samples, scores)), name or m.name)


def score_manifest(model: LdaModel, m: DatasetManifest, system: System,
                   cache: Optional[FeatureCache] = None) -> ScoreSet:
    if not m.samples:
        return ScoreSet((), m.name)
    return scoreset_from_scores(m, lda_scores(model, extract_features(m, system, cache)))


def external_scores(m: DatasetManifest, system: System) -> ScoreSet:
    table = read_scores(system.scorefile).by_id()
    missing = [s.path for s in m.samples if s.path not in table]
    if missing:
        raise IdMismatch(f"{system.scorefile} has no score for {len(missing)} sample(s), e.g. {missing[0]!r}")
    return scoreset_from_scores(m, [table[s.path].score for s in m.samples])


# --- reports ---------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    train: str
    test: str
    system: str
    extractor: str
    specs: str
    auc: float
    eer: float

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0 or not 0.0 <= self.eer <= 100.0:
            raise ValueError(f"metric out of range: auc={self.auc}, eer={self.eer}")


def _table(header: Sequence[str], rows: Sequence[Sequence[str]], right: int) -> str:
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]

    def fmt(cells):
        return " | ".join(str(c).rjust(w) if k >= right else str(c).ljust(w)
                          for k, (c, w) in enumerate(zip(cells, widths))).rstrip()

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(header), sep] + [fmt(r) for r in rows]) + "\n"


@dataclass
class ExperimentReport:
    rows: List[ReportRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def extend(self, other: "ExperimentReport") -> None:
        self.rows.extend(other.rows)

    def blocks(self) -> List[Tuple[str, str]]:
        """Distinct (train, test) pairs in row order."""
        out = []
        for r in self.rows:
            if (r.train, r.test) not in out:
                out.append((r.train, r.test))
        return out

    def best(self, extractor: str) -> ReportRow:
        return max((r for r in self.rows if r.extractor == extractor), key=lambda r: r.auc)

    def to_csv(self) -> str:
        lines = ["train,test,system,auc,eer"]
        lines += [f"{r.train},{r.test},{r.system},{r.auc:.6f},{r.eer:.4f}" for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        header = ("Train on", "Test on", "Extractor", "Specs", "AUC", "EER (%)")
        rows = [(r.train, r.test, r.extractor, r.specs, f"{r.auc:.2f}", f"{r.eer:.2f}") for r in self.rows]
        return _table(header, rows, right=4)

    def render(self, fmt: str = "table") -> str:
        return self.to_csv() if fmt == "csv" else self.to_table()


def _row(train: str, test: str, system: System, scores: ScoreSet) -> ReportRow:
    return ReportRow(train, test, system.name, system.extractor, system.specs, auc(scores), eer(scores))


def _check_classes(m: DatasetManifest, what: str, minimum: int = 1) -> None:
    nb, nm = m.count(BONAFIDE), m.count(MORPH)
    if nb < minimum or nm < minimum:
        raise EmptySplit(f"{m.name} {what} split has {nb} bona fide / {nm} morph samples (need >= {minimum} each)")


def run_intra(m: DatasetManifest, systems: Sequence[System], seed: int = DEFAULT_SEED,
              train_fraction: float = TRAIN_FRACTION, shrinkage: float = DEFAULT_SHRINKAGE,
              cache: Optional[FeatureCache] = None, workers: int = 1) -> ExperimentReport:
    """Train each system on the identity-disjoint train split, evaluate on dev.

    Rows are sorted by AUC, best first; ties keep the order of ``systems``.
    """
    cache = cache or FeatureCache(workers)
    train, dev = split_identities(m, train_fraction, seed)
    _check_classes(train, "train", 2)
    _check_classes(dev, "dev")
    cache.prefetch(m, systems)

    rows = []
    for system in systems:
        if system.trainable:
            scores = score_manifest(train_system(train, system, shrinkage, cache), dev, system, cache)
        else:
            scores = external_scores(dev, system)
        rows.append(_row(m.name, f"{m.name}/dev", system, scores))
    rows.sort(key=lambda r: -r.auc)
    return ExperimentReport(rows)


def run_cross(train_m: DatasetManifest, test_ms: Sequence[DatasetManifest], systems: Sequence[System],
              shrinkage: float = DEFAULT_SHRINKAGE, cache: Optional[FeatureCache] = None,
              workers: int = 1) -> ExperimentReport:
    """Train on the full ``train_m``, evaluate on each full test manifest.

    One row per (test manifest, system), in input order.
    """
    for t in test_ms:
        if t.name == train_m.name:
            raise GridOverlap(f"dataset {t.name!r} used for both training and testing")
    cache = cache or FeatureCache(workers)
    _check_classes(train_m, "training", 2)
    for t in test_ms:
        _check_classes(t, "test")
    for m in (train_m, *test_ms):
        cache.prefetch(m, systems)

    models = {s.name: train_system(train_m, s, shrinkage, cache) for s in systems if s.trainable}
    rows = []
    for test in test_ms:
        for system in systems:
            if system.trainable:
                scores = score_manifest(models[system.name], test, system, cache)
            else:
                scores = external_scores(test, system)
            rows.append(_row(train_m.name, test.name, system, scores))
    return ExperimentReport(rows)


def run_grid(manifests: Sequence[DatasetManifest], systems: Sequence[System],
             shrinkage: float = DEFAULT_SHRINKAGE, workers: int = 1) -> ExperimentReport:
    """Train on each manifest in turn and test on all the others."""
    names = [m.name for m in manifests]
    if len(set(names)) != len(names):
        raise GridOverlap(f"duplicate dataset names in grid: {names}")
    cache = FeatureCache(workers)
    report = ExperimentReport()
    for k, train_m in enumerate(manifests):
        tests = [m for j, m in enumerate(manifests) if j != k]
        report.extend(run_cross(train_m, tests, systems, shrinkage, cache))
    return report


# --- fusion ----------------------------------------------------------------

@dataclass(frozen=True)
class FusionRow:
    calib: str
    test: str
    specs: str
    fused_eer: float
    sys0_eer: float
    sys1_eer: float


@dataclass
class FusionReport:
    rows: List[FusionRow] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["calib,test,specs,fused_eer,sys0_eer,sys1_eer"]
        lines += [f"{r.calib},{r.test},{r.specs},{r.fused_eer:.4f},{r.sys0_eer:.4f},{r.sys1_eer:.4f}"
                  for r in self.rows]
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        header = ("Calib. on", "Test on", "Specs", "Fused EER (%)", "Sys. 0 EER (%)", "Sys. 1 EER (%)")
        rows = [(r.calib, r.test, r.specs, f"{r.fused_eer:.2f}", f"{r.sys0_eer:.2f}", f"{r.sys1_eer:.2f}")
                for r in self.rows]
        return _table(header, rows, right=3)

    def render(self, fmt: str = "table") -> str:
        return self.to_csv() if fmt == "csv" else self.to_table()


def align_pair(s0: ScoreSet, s1: ScoreSet) -> Tuple[List[str], np.ndarray, List[str]]:
    """Id-aligned (ids, (n, 2) score matrix, labels) in ``s0``'s order."""
    a, b = s0.by_id(), s1.by_id()
    if set(a) != set(b):
        only0 = sorted(set(a) - set(b))
        only1 = sorted(set(b) - set(a))
        raise IdMismatch(f"score files cover different samples ({len(only0)} only in system 0, "
                         f"{len(only1)} only in system 1)")
    ids = [e.sample_id for e in s0.entries]
    for i in ids:
        if a[i].label != b[i].label:
            raise IdMismatch(f"sample {i!r} labelled {a[i].label} by system 0 but {b[i].label} by system 1")
    x = np.array([[a[i].score, b[i].score] for i in ids], dtype=np.float64).reshape(-1, 2)
    return ids, x, [a[i].label for i in ids]


def fuse_scoresets(model: FusionModel, s0: ScoreSet, s1: ScoreSet, name: str = "fused") -> ScoreSet:
    ids, x, labels = align_pair(s0, s1)
    return ScoreSet(tuple(ScoreEntry(i, lab, fuse_score(model, a, b)) for i, lab, (a, b) in zip(ids, labels, x)),
                    name)


def run_fusion(calib: Tuple[ScoreSet, ScoreSet], evaluation: Tuple[ScoreSet, ScoreSet],
               calib_name: str = "calib", test_name: str = "eval",
               specs: str = "sys0+sys1") -> Tuple[FusionModel, FusionReport]:
    """Fit logistic fusion on the calibration pair; report fused and single EERs on the evaluation pair."""
    _, x, labels = align_pair(*calib)
    model = logreg_train(x, labels)
    fused = fuse_scoresets(model, *evaluation)
    row = FusionRow(calib_name, test_name, specs, eer(fused), eer(evaluation[0]), eer(evaluation[1]))
    return model, FusionReport([row])
