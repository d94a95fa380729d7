"""Two-class shrinkage LDA and two-input logistic fusion, plus their text file format."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from deepmad.errors import DegenerateClasses, DimensionMismatch, ModelFormatError, NonConvergence

FORMAT_VERSION = 1
MAGIC = "deepmad-model"

DEFAULT_SHRINKAGE = 1e-3
LOGREG_L2 = 1e-6
LOGREG_GTOL = 1e-8
LOGREG_MAX_ITER = 1000


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LdaModel:
    weights: np.ndarray
    bias: float
    config: str = ""
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def dimension(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class FusionModel:
    w0: float
    w1: float
    bias: float
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("w0", "w1", "bias"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"fusion coefficient {name} is not finite")
            object.__setattr__(self, name, v)

    @property
    def converged(self) -> bool:
        return bool(self.meta.get("converged", True))


def _as_matrix(vectors, name: str) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch(f"{name}: expected a list of 1-D feature vectors")
    return x


def _canonical_order(x: np.ndarray) -> np.ndarray:
    # rows sorted lexicographically so sums do not depend on input order
    if len(x) == 0:
        return x
    return x[np.lexsort(x.T[::-1])]


def lda_train(bonafide, morph, shrinkage: float = DEFAULT_SHRINKAGE, config: str = "") -> LdaModel:
    """Fisher discriminant with covariance shrinkage towards a scaled identity.

    ``w = ((1-a) S_w + a tr(S_w)/d I)^-1 (mu_morph - mu_bona)`` with ``S_w``
    the pooled (n-2 denominator) within-class covariance. The bias places
    zero halfway between the projected class means, and the sign is chosen
    so morphs score higher on the training data.
    """
    xb = _canonical_order(_as_matrix(bonafide, "bonafide"))
    xm = _canonical_order(_as_matrix(morph, "morph"))
    if xb.shape[1] != xm.shape[1]:
        raise DimensionMismatch(f"bona fide dimension {xb.shape[1]} != morph dimension {xm.shape[1]}")
    if len(xb) < 2 or len(xm) < 2:
        raise DegenerateClasses(f"need >= 2 samples per class, got {len(xb)} bona fide / {len(xm)} morph")
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1], got {shrinkage}")

    d = xb.shape[1]
    mu_b, mu_m = xb.mean(axis=0), xm.mean(axis=0)
    cb, cm = xb - mu_b, xm - mu_m
    s_w = (cb.T @ cb + cm.T @ cm) / (len(xb) + len(xm) - 2)
    delta = mu_m - mu_b

    meta = {"n_bonafide": len(xb), "n_morph": len(xm), "shrinkage": float(shrinkage), "degenerate": False}
    if not np.any(delta):
        if shrinkage == 0.0:
            raise DegenerateClasses("identical class means and no shrinkage")
        meta["degenerate"] = True
        return LdaModel(np.zeros(d), 0.0, config, meta)

    trace = np.trace(s_w)
    scale = trace / d if trace > 0 else 1.0
    reg = (1.0 - shrinkage) * s_w + shrinkage * scale * np.eye(d)
    try:
        w = np.linalg.solve(reg, delta)
    except np.linalg.LinAlgError as exc:
        raise DegenerateClasses(f"within-class scatter is singular: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise DegenerateClasses("within-class scatter is numerically singular")

    if w @ delta < 0:
        w = -w
    bias = -float(w @ (mu_m + mu_b)) / 2.0
    return LdaModel(w, bias, config, meta)


def lda_score(model: LdaModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise DimensionMismatch(f"feature of shape {x.shape} for a model of dimension {model.dimension}")
    return float(model.weights @ x + model.bias)


def lda_scores(model: LdaModel, xs) -> np.ndarray:
    x = _as_matrix(xs, "features")
    if x.shape[1] != model.dimension:
        raise DimensionMismatch(f"features of dimension {x.shape[1]} for a model of dimension {model.dimension}")
    return x @ model.weights + model.bias


# --- logistic fusion -------------------------------------------------------

def _log1pexp(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logreg_objective(theta, x: np.ndarray, y: np.ndarray, l2: float = LOGREG_L2) -> float:
    """Negative penalised log-likelihood; ``theta = (w0, w1, bias)``, bias unpenalised."""
    theta = np.asarray(theta, dtype=np.float64)
    z = x @ theta[:2] + theta[2]
    # -[y log s(z) + (1-y) log(1-s(z))] = log(1+e^z) - y z
    return float(np.sum(_log1pexp(z) - y * z) + 0.5 * l2 * theta[:2] @ theta[:2])


def logreg_gradient(theta, x: np.ndarray, y: np.ndarray, l2: float = LOGREG_L2) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    r = _sigmoid(x @ theta[:2] + theta[2]) - y
    g = np.empty(3)
    g[:2] = x.T @ r + l2 * theta[:2]
    g[2] = r.sum()
    return g


def _hessian(theta, x, y, l2):
    p = _sigmoid(x @ theta[:2] + theta[2])
    wt = p * (1 - p)
    xa = np.column_stack([x, np.ones(len(x))])
    h = (xa * wt[:, None]).T @ xa
    h[0, 0] += l2
    h[1, 1] += l2
    return h


def _labels_to_binary(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if lab in ("morph", 1, True):
            out.append(1.0)
        elif lab in ("bonafide", 0, False):
            out.append(0.0)
        else:
            raise ValueError(f"unknown label {lab!r}")
    return np.array(out)


def logreg_train(scores: Sequence[Tuple[float, float]], labels, l2: float = LOGREG_L2,
                 gtol: float = LOGREG_GTOL, max_iter: int = LOGREG_MAX_ITER) -> FusionModel:
    """Fit ``P(morph) = sigmoid(w0 s0 + w1 s1 + bias)`` by damped Newton steps.

    Stops when the gradient's max-norm drops below ``gtol``; after ``max_iter``
    iterations the best iterate is returned with ``converged=False`` and a
    NonConvergence warning.
    """
    x = np.asarray(scores, dtype=np.float64).reshape(-1, 2)
    y = _labels_to_binary(labels)
    if len(x) != len(y):
        raise ValueError(f"{len(x)} score pairs but {len(y)} labels")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise ValueError("both bona fide and morph labels are required")

    theta = np.zeros(3)
    f = logreg_objective(theta, x, y, l2)
    best = (np.max(np.abs(logreg_gradient(theta, x, y, l2))), theta.copy())
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = logreg_gradient(theta, x, y, l2)
        gnorm = np.max(np.abs(g))
        if gnorm < best[0]:
            best = (gnorm, theta.copy())
        if gnorm < gtol:
            converged = True
            break
        h = _hessian(theta, x, y, l2)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, g, rcond=None)[0]
        if not np.all(np.isfinite(step)) or step @ g <= 0:
            step = g
        t = 1.0
        while True:
            cand = theta - t * step
            fc = logreg_objective(cand, x, y, l2)
            if fc <= f - 1e-4 * t * (step @ g) or t < 1e-12:
                break
            t *= 0.5
        if fc > f:
            # line search failed to descend: rounding floor reached
            break
        theta, f = cand, fc
    else:
        it = max_iter

    gnorm = np.max(np.abs(logreg_gradient(theta, x, y, l2)))
    if gnorm < best[0]:
        best = (gnorm, theta.copy())
    if best[0] < gtol:
        converged = True
    theta = best[1]
    if not converged:
        warnings.warn(f"logistic fusion stopped after {it} iterations with gradient max-norm {best[0]:.3g}",
                      NonConvergence, stacklevel=2)
    meta = {"converged": converged, "iterations": it, "grad_norm": float(best[0]), "n": len(y)}
    return FusionModel(theta[0], theta[1], theta[2], meta)


def fuse_score(model: FusionModel, s0: float, s1: float) -> float:
    """Linear fused score (the logit); monotone in the fused probability."""
    return model.w0 * s0 + model.w1 * s1 + model.bias


# --- model files -----------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _fmt_meta(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt(v)
    return str(v)


def _parse_meta(v: str):
    if v in ("true", "false"):
        return v == "true"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def dump_model(model: Union[LdaModel, FusionModel]) -> str:
    if isinstance(model, LdaModel):
        kind, config, weights, bias = "lda", model.config, list(model.weights), model.bias
    else:
        kind, config, weights, bias = "fusion", "fusion", [model.w0, model.w1], model.bias
    lines = [
        MAGIC,
        f"format-version: {FORMAT_VERSION}",
        f"kind: {kind}",
        f"config: {config}",
        f"dimension: {len(weights)}",
        "weights: " + " ".join(_fmt(w) for w in weights),
        f"bias: {_fmt(bias)}",
    ]
    for k in sorted(model.meta):
        lines.append(f"meta.{k}: {_fmt_meta(model.meta[k])}")
    return "\n".join(lines) + "\n"


def save_model(model: Union[LdaModel, FusionModel], path) -> None:
    Path(path).write_text(dump_model(model), encoding="utf-8")


def parse_model(text: str) -> Union[LdaModel, FusionModel]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != MAGIC:
        raise ModelFormatError(f"missing '{MAGIC}' header")
    fields = {}
    for ln in lines[1:]:
        key, sep, value = ln.partition(":")
        if not sep:
            raise ModelFormatError(f"malformed line {ln!r}")
        fields[key.strip()] = value.strip()
    for key in ("format-version", "kind", "dimension", "weights", "bias"):
        if key not in fields:
            raise ModelFormatError(f"missing field {key!r}")
    if fields["format-version"] != str(FORMAT_VERSION):
        raise ModelFormatError(f"unsupported format version {fields['format-version']}")
    try:
        dim = int(fields["dimension"])
        weights = [float(w) for w in fields["weights"].split()]
        bias = float(fields["bias"])
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc
    if len(weights) != dim:
        raise ModelFormatError(f"dimension {dim} but {len(weights)} weights")
    meta = {k[5:]: _parse_meta(v) for k, v in fields.items() if k.startswith("meta.")}
    kind = fields["kind"]
    if kind == "lda":
        return LdaModel(np.array(weights), bias, fields.get("config", ""), meta)
    if kind == "fusion":
        if dim != 2:
            raise ModelFormatError("fusion model must have exactly 2 weights")
        return FusionModel(weights[0], weights[1], bias, meta)
    raise ModelFormatError(f"unknown model kind {kind!r}")


def load_model(path) -> Union[LdaModel, FusionModel]:
    return parse_model(Path(path).read_text(encoding="utf-8"))
