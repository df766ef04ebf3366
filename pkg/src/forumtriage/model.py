"""Class-weighted L1-regularized logistic regression.

The objective is

    F(w, b) = Σᵢ cᵢ · [−yᵢ log σ(zᵢ) − (1−yᵢ) log(1−σ(zᵢ))] + λ‖w‖₁

with zᵢ = w·xᵢ + b, instance weight cᵢ = W for positive instances and 1 for
negatives, and the bias unpenalized. Training is proximal gradient descent
(ISTA) with a backtracking line search: initial step 1.0, shrink factor 0.5,
sufficient-decrease constant 1e-4. Zero initialization, fully deterministic,
monotone non-increasing objective.

Design matrices may be scipy sparse or dense numpy arrays; labels are 0/1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from .features import ALL_FEATURES, FeatureVector, MinMaxScaler, Vocabulary

PROB_CLAMP = 1e-12
_LINE_SEARCH_SHRINK = 0.5
_SUFFICIENT_DECREASE = 1e-4
_MIN_STEP = 1e-20

FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Solver settings. ``lam=None`` resolves to 1/n_train at fit time.

    ``seed`` exists for config provenance; the solver itself is deterministic
    and never draws random numbers.
    """

    lam: float | None = None
    class_weight: float = 1.0
    max_iters: int = 200
    tolerance: float = 1e-6
    seed: int = 0

    def validate(self) -> None:
        if self.lam is not None and not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.class_weight > 0:
            raise ValueError(f"class weight must be positive, got {self.class_weight}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")


@dataclass(frozen=True, eq=False)
class ModelParams:
    weights: np.ndarray
    bias: float

    @property
    def n_dims(self) -> int:
        return int(self.weights.size)

    def nonzeros(self) -> dict[int, float]:
        (idx,) = np.nonzero(self.weights)
        return {int(i): float(self.weights[i]) for i in idx}

    def to_dict(self) -> dict:
        return {
            "n_dims": self.n_dims,
            "weights": {str(i): v for i, v in self.nonzeros().items()},
            "bias": float(self.bias),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        weights = np.zeros(d["n_dims"])
        for key, value in d["weights"].items():
            weights[int(key)] = value
        return cls(weights=weights, bias=float(d["bias"]))


@dataclass(frozen=True)
class Prediction:
    probability: float
    label: bool


def soft_threshold(v: float, t: float) -> float:
    """Proximal operator of t·|·|: sign(v)·max(|v|−t, 0)."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    return math.copysign(max(abs(v) - t, 0.0), v)


def _soft_threshold_vec(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _as_2d(X):
    if sparse.issparse(X):
        return X.tocsr()
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def _check_finite(X) -> None:
    data = X.data if sparse.issparse(X) else X
    if not np.isfinite(data).all():
        raise ValueError("design matrix contains non-finite values")


def _instance_weights(y: np.ndarray, class_weight: float) -> np.ndarray:
    return np.where(y == 1, class_weight, 1.0)


def _smooth_loss(z: np.ndarray, y: np.ndarray, c: np.ndarray) -> float:
    p = np.clip(expit(z), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-(c * (y * np.log(p) + (1.0 - y) * np.log1p(-p))).sum())


def objective(params: ModelParams, X, y: np.ndarray, cfg: TrainConfig) -> float:
    """Weighted negative log-likelihood plus λ‖w‖₁ (λ resolved like train)."""
    X = _as_2d(X)
    y = np.asarray(y, dtype=np.float64)
    lam = cfg.lam if cfg.lam is not None else 1.0 / X.shape[0]
    c = _instance_weights(y, cfg.class_weight)
    z = X @ params.weights + params.bias
    return _smooth_loss(z, y, c) + lam * float(np.abs(params.weights).sum())


def smooth_gradient(params: ModelParams, X, y: np.ndarray,
                    cfg: TrainConfig) -> tuple[np.ndarray, float]:
    """Gradient of the weighted log-loss only (the L1 term is handled by prox)."""
    X = _as_2d(X)
    y = np.asarray(y, dtype=np.float64)
    c = _instance_weights(y, cfg.class_weight)
    r = c * (expit(X @ params.weights + params.bias) - y)
    return np.asarray(X.T @ r).ravel(), float(r.sum())


def train(X, y: Sequence[int] | np.ndarray, cfg: TrainConfig | None = None,
          trace: list[float] | None = None) -> ModelParams:
    """Fit by proximal gradient descent from zero initialization.

    Stops when the relative objective decrease falls below ``cfg.tolerance``
    or after ``cfg.max_iters`` accepted steps. Pass ``trace`` to capture the
    objective value after every accepted step (useful for monotonicity
    checks). Raises on single-class labels or non-finite features.
    """
    if cfg is None:
        cfg = TrainConfig()
    cfg.validate()
    X = _as_2d(X)
    _check_finite(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"{X.shape[0]} rows but {y.shape[0]} labels")
    if y.min() == y.max():
        raise ValueError("training data contains a single class")
    n, d = X.shape
    lam = cfg.lam if cfg.lam is not None else 1.0 / n
    c = _instance_weights(y, cfg.class_weight)

    w = np.zeros(d)
    b = 0.0
    z = np.zeros(n)
    F = _smooth_loss(z, y, c)  # ‖w‖₁ = 0 at start
    if trace is not None:
        trace.append(F)
    step = 1.0
    for _ in range(cfg.max_iters):
        p = expit(z)
        r = c * (p - y)
        g_w = np.asarray(X.T @ r).ravel()
        g_b = float(r.sum())
        while True:
            w_new = _soft_threshold_vec(w - step * g_w, step * lam)
            b_new = b - step * g_b
            z_new = X @ w_new + b_new
            F_new = _smooth_loss(z_new, y, c) + lam * float(np.abs(w_new).sum())
            delta_sq = float(((w_new - w) ** 2).sum()) + (b_new - b) ** 2
            if F_new <= F - (_SUFFICIENT_DECREASE / step) * delta_sq:
                break
            step *= _LINE_SEARCH_SHRINK
            if step < _MIN_STEP:
                # No acceptable step exists numerically; keep the iterate.
                w_new, b_new, z_new, F_new = w, b, z, F
                break
        decrease = F - F_new
        w, b, z, F = w_new, b_new, z_new, F_new
        if trace is not None:
            trace.append(F)
        if decrease <= cfg.tolerance * max(1.0, abs(F)):
            break
        step = min(1.0, step * 2.0)
    return ModelParams(weights=w, bias=b)


def predict_proba(params: ModelParams, X) -> np.ndarray:
    X = _as_2d(X)
    if X.shape[1] != params.n_dims:
        raise ValueError(
            f"feature dimension {X.shape[1]} != model dimension {params.n_dims}")
    return expit(X @ params.weights + params.bias)


def predict_labels(params: ModelParams, X) -> np.ndarray:
    return predict_proba(params, X) >= 0.5


def predict(params: ModelParams, fv: FeatureVector) -> Prediction:
    """Score a single assembled feature vector."""
    if fv.n_dims != params.n_dims:
        raise ValueError(
            f"feature dimension {fv.n_dims} != model dimension {params.n_dims}")
    z = params.bias + sum(fv.terms[i] * params.weights[i] for i in sorted(fv.terms))
    offset = fv.n_term_dims
    for j, bit in enumerate(fv.forum_bits):
        z += bit * params.weights[offset + j]
    offset += len(fv.forum_bits)
    for j, value in enumerate(fv.dense):
        z += value * params.weights[offset + j]
    probability = float(expit(z))
    return Prediction(probability=probability, label=probability >= 0.5)


# ---------------------------------------------------------------------------
# Model artifact

@dataclass(frozen=True, eq=False)
class ModelArtifact:
    """Everything needed to score new threads: vocabulary, scaler, weights."""

    vocabulary: Vocabulary
    scaler: MinMaxScaler
    flags: frozenset[str]
    lam: float
    class_weight: float
    params: ModelParams

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "vocabulary": self.vocabulary.to_dict(),
            "scaler": self.scaler.to_dict(),
            "features": sorted(self.flags),
            "lambda": self.lam,
            "class_weight": self.class_weight,
            "weights": self.params.to_dict()["weights"],
            "n_dims": self.params.n_dims,
            "bias": self.params.bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelArtifact":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(
                f"unsupported model artifact format version {version!r}; "
                f"this build reads version {FORMAT_VERSION}")
        flags = frozenset(d["features"])
        unknown = flags - ALL_FEATURES
        if unknown:
            raise ValueError(f"artifact names unknown feature groups {sorted(unknown)}")
        return cls(
            vocabulary=Vocabulary.from_dict(d["vocabulary"]),
            scaler=MinMaxScaler.from_dict(d["scaler"]),
            flags=flags,
            lam=d["lambda"],
            class_weight=d["class_weight"],
            params=ModelParams.from_dict({"n_dims": d["n_dims"],
                                          "weights": d["weights"],
                                          "bias": d["bias"]}),
        )

    def save(self, path: str | Path) -> None:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        Path(path).write_text(text, encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ModelArtifact":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Class-weight tuning

def default_weight_grid(w_min: float = 2.0 ** -4,
                        w_max: float = 2.0 ** 8) -> list[float]:
    """Log-spaced W grid: w_min, 2·w_min, … up to and including w_max."""
    if not 0 < w_min <= w_max:
        raise ValueError(f"need 0 < w_min <= w_max, got [{w_min}, {w_max}]")
    grid = []
    w = w_min
    while w < w_max * (1 + 1e-12):
        grid.append(w)
        w *= 2.0
    return grid


def tune_class_weight(X_train, y_train, X_valid, y_valid,
                      cfg: TrainConfig | None = None,
                      w_min: float = 2.0 ** -4, w_max: float = 2.0 ** 8,
                      ) -> tuple[float, float]:
    """Pick the class weight W maximizing validation F1.

    Sweeps the factor-2 grid, then refines once at factor √2 around the best
    point. Ties go to the W closest to 1 (smallest |ln W|, then the smaller
    W). Returns (W*, validation F1 at W*).
    """
    from .evaluate import compute_metrics  # local import avoids a cycle

    if cfg is None:
        cfg = TrainConfig()
    y_valid = np.asarray(y_valid, dtype=np.float64)
    if not (y_valid == 1).any():
        raise ValueError("validation set has no positive instances")

    scores: dict[float, float] = {}

    def f1_at(w: float) -> float:
        if w not in scores:
            params = train(X_train, y_train, replace(cfg, class_weight=w))
            predicted = predict_labels(params, X_valid)
            scores[w] = compute_metrics(predicted.tolist(),
                                        (y_valid == 1).tolist()).f1
        return scores[w]

    def best_of(candidates: list[float]) -> float:
        return max(candidates,
                   key=lambda w: (f1_at(w), -abs(math.log(w)), -w))

    grid = default_weight_grid(w_min, w_max)
    best = best_of(grid)
    refined = [best]
    for w in (best / math.sqrt(2.0), best * math.sqrt(2.0)):
        if w_min * (1 - 1e-12) <= w <= w_max * (1 + 1e-12):
            refined.append(w)
    best = best_of(sorted(set(scores) | set(refined)))
    return best, scores[best]
