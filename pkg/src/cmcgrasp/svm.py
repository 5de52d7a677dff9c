"""Binary SVM trained by sequential minimal optimization.

Linear and RBF kernels, per-feature standardization fitted on training data
only, and repeated stratified k-fold cross-validation. The optimizer is
Platt's SMO with the usual two working-set heuristics (best |E1 - E2| first,
then seeded random sweeps over non-bound and all examples); it is ample for
the feature dimensions (<= 40) and sample counts (a few hundred) this
pipeline produces.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MODEL_FORMAT = "cmcgrasp-svm"
MODEL_VERSION = 1

DEFAULT_C = 1.0
DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 20

_STEP_EPS = 1e-12
# Dual variables within this distance of a box bound count as bound when
# classifying points for the bias thresholds.
_BOUND_EPS = 1e-10


@dataclass(frozen=True)
class Sample:
    """One training instance: feature vector and a -1/+1 label."""

    features: np.ndarray
    label: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if not np.all(np.isfinite(features)):
            raise ValueError("features must be finite")
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label}")
        object.__setattr__(self, "features", features)


def as_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (X, y) arrays, checking dimension consistency."""
    if not samples:
        raise ValueError("empty sample list")
    dims = {s.features.size for s in samples}
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dimensions: {sorted(dims)}")
    X = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples], dtype=np.float64)
    return X, y


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind and its parameter. gamma=None means the data-driven
    default 1 / (d * mean per-feature variance) resolved at training time."""

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and self.gamma is not None and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def resolve_gamma(kernel: KernelSpec, X: np.ndarray) -> float | None:
    if kernel.kind != "rbf":
        return None
    if kernel.gamma is not None:
        return kernel.gamma
    mean_var = float(X.var(axis=0).mean())
    d = X.shape[1]
    return 1.0 / (d * mean_var) if mean_var > 0 else 1.0 / d


def kernel_matrix(kind: str, gamma: float | None, A: np.ndarray,
                  B: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return A @ B.T
    sq = (np.sum(A ** 2, axis=1)[:, None] + np.sum(B ** 2, axis=1)[None, :]
          - 2.0 * (A @ B.T))
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class Standardization:
    """Per-feature z-scoring statistics from a training set."""

    mean: np.ndarray
    std: np.ndarray


def standardize_fit(X: np.ndarray) -> Standardization:
    """Fit per-feature mean and population std; zero-variance features are
    flagged by std = 0 and map to 0 on application."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        raise ValueError("cannot standardize an empty training set")
    return Standardization(mean=X.mean(axis=0), std=X.std(axis=0, ddof=0))


def standardize_apply(stdz: Standardization, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    denom = np.where(stdz.std > 0, stdz.std, 1.0)
    out = (X - stdz.mean) / denom
    return np.where(stdz.std > 0, out, 0.0)


class SvmModel:
    """Trained binary SVM.

    ``alphas``/``labels``/``points`` keep the full training set so the KKT
    conditions can be audited; prediction only uses the support vectors.
    """

    def __init__(self, kernel_kind, gamma, c, bias, support_vectors, dual_coef,
                 standardization=None, alphas=None, labels=None, points=None):
        self.kernel_kind = kernel_kind
        self.gamma = gamma
        self.c = c
        self.bias = bias
        self.support_vectors = support_vectors
        self.dual_coef = dual_coef          # alpha_i * y_i per support vector
        self.standardization = standardization
        self.alphas = alphas
        self.labels = labels
        self.points = points

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support_vectors.shape[1]:
            raise ValueError(
                f"feature dimension {X.shape[1]} does not match model "
                f"dimension {self.support_vectors.shape[1]}")
        if self.standardization is not None:
            X = standardize_apply(self.standardization, X)
        K = kernel_matrix(self.kernel_kind, self.gamma, X, self.support_vectors)
        return K @ self.dual_coef + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Labels -1/+1; a decision value of exactly 0 maps to +1."""
        dec = self.decision_function(X)
        return np.where(dec >= 0, 1, -1)

    def save(self, path) -> None:
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kernel": {"kind": self.kernel_kind, "gamma": self.gamma},
            "c": self.c,
            "bias": self.bias,
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "standardization": None if self.standardization is None else {
                "mean": self.standardization.mean.tolist(),
                "std": self.standardization.std.tolist(),
            },
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SvmModel":
        raw = json.loads(Path(path).read_text())
        if raw.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
        if raw.get("version") != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported version {raw.get('version')}")
        stdz = raw["standardization"]
        return cls(
            kernel_kind=raw["kernel"]["kind"],
            gamma=raw["kernel"]["gamma"],
            c=raw["c"],
            bias=raw["bias"],
            support_vectors=np.asarray(raw["support_vectors"], dtype=np.float64),
            dual_coef=np.asarray(raw["dual_coef"], dtype=np.float64),
            standardization=None if stdz is None else Standardization(
                mean=np.asarray(stdz["mean"]), std=np.asarray(stdz["std"])),
        )


def dual_objective(alphas: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    """SVM dual objective: sum(alpha) - 1/2 (alpha*y)' K (alpha*y)."""
    ay = alphas * y
    return float(alphas.sum() - 0.5 * ay @ K @ ay)


class _Smo:
    """SMO state over a precomputed kernel matrix.

    Pairs are selected by maximal violation of the bias-free optimality
    thresholds (the |E1 - E2| heuristic restricted to the eligible sets);
    seeded random sweeps serve as the fallback when the extreme pair cannot
    make a numerical step. The bias never enters the iteration, so the
    residual cache holds g(x) - y with g the bias-free decision sum.
    """

    def __init__(self, K, y, c, tol, rng):
        self.K = K
        self.y = y
        self.c = c
        self.tol = tol
        self.rng = rng
        self.alphas = np.zeros(y.size)
        self.errors = -y.copy()           # g(x) - y with all alphas at 0

    def _take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1, a2 = self.alphas[i1], self.alphas[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if s < 0:
            lo, hi = max(0.0, a2 - a1), min(self.c, self.c + a2 - a1)
        else:
            lo, hi = max(0.0, a1 + a2 - self.c), min(self.c, a1 + a2)
        if lo >= hi:
            return False
        k11 = self.K[i1, i1]
        k12 = self.K[i1, i2]
        k22 = self.K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 0:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, lo), hi)
        else:
            # Flat or concave direction: evaluate the dual objective at both
            # clip endpoints (terms constant in a1, a2 dropped) and take the
            # better one.
            v1 = e1 + y1 - a1 * y1 * k11 - a2 * y2 * k12
            v2 = e2 + y2 - a1 * y1 * k12 - a2 * y2 * k22
            gamma_sum = a1 + s * a2

            def endpoint_obj(a2c):
                a1c = gamma_sum - s * a2c
                return (a1c + a2c - 0.5 * a1c * a1c * k11
                        - 0.5 * a2c * a2c * k22 - s * a1c * a2c * k12
                        - a1c * y1 * v1 - a2c * y2 * v2)

            obj_lo = endpoint_obj(lo)
            obj_hi = endpoint_obj(hi)
            if obj_lo > obj_hi + _STEP_EPS:
                a2_new = lo
            elif obj_hi > obj_lo + _STEP_EPS:
                a2_new = hi
            else:
                return False
        if abs(a2_new - a2) < _STEP_EPS * (a2_new + a2 + _STEP_EPS):
            return False
        a1_new = a1 + s * (a2 - a2_new)

        d1 = y1 * (a1_new - a1)
        d2 = y2 * (a2_new - a2)
        self.errors += d1 * self.K[i1] + d2 * self.K[i2]
        self.alphas[i1] = a1_new
        self.alphas[i2] = a2_new
        return True

    def _threshold_sets(self):
        """Masks of points bounding the bias from below and above."""
        eps = _BOUND_EPS * max(1.0, self.c)
        at_zero = self.alphas <= eps
        at_c = self.alphas >= self.c - eps
        interior = ~at_zero & ~at_c
        pos = self.y > 0
        lower = interior | (at_zero & pos) | (at_c & ~pos)
        upper = interior | (at_c & pos) | (at_zero & ~pos)
        return lower, upper

    def _sweep_partners(self, i2: int) -> bool:
        """Platt's fallback: random-start sweeps over non-bound then all."""
        non_bound = np.flatnonzero((self.alphas > 0) & (self.alphas < self.c))
        if non_bound.size:
            start = self.rng.integers(non_bound.size)
            for i1 in np.roll(non_bound, -start):
                if self._take_step(int(i1), i2):
                    return True
        start = self.rng.integers(self.y.size)
        for i1 in np.roll(np.arange(self.y.size), -start):
            if self._take_step(int(i1), i2):
                return True
        return False

    def bias_interval(self) -> tuple[float, float]:
        """(max lower, min upper) bounds the KKT conditions put on the bias."""
        lower, upper = self._threshold_sets()
        vals = -self.errors                       # y - g
        b_lo = float(np.max(vals[lower])) if lower.any() else -np.inf
        b_up = float(np.min(vals[upper])) if upper.any() else np.inf
        return b_lo, b_up

    def run(self, max_passes: int) -> None:
        # Each iteration updates one pair; the usual step count is a small
        # multiple of n, so the budget is generous.
        budget = max_passes * 25 * max(self.y.size, 40)
        for _ in range(budget):
            lower, upper = self._threshold_sets()
            if not lower.any() or not upper.any():
                break
            vals = -self.errors                        # y - g per point
            i = int(np.flatnonzero(lower)[np.argmax(vals[lower])])
            j = int(np.flatnonzero(upper)[np.argmin(vals[upper])])
            if vals[i] - vals[j] <= 2.0 * self.tol:
                break
            if self._take_step(i, j):
                continue
            if self._sweep_partners(i) or self._sweep_partners(j):
                continue
            break                    # numerically stuck; bias centering copes


def train_smo(X: np.ndarray, y: np.ndarray, kernel: KernelSpec,
              c: float = DEFAULT_C, tol: float = DEFAULT_TOL,
              max_passes: int = DEFAULT_MAX_PASSES, seed: int = 0,
              standardization: Standardization | None = None) -> SvmModel:
    """Train on (X, y) with labels in {-1, +1}; deterministic given seed.

    ``standardization`` is stored on the model and applied to prediction
    inputs; X is expected to be already transformed by it (or None).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    if not set(np.unique(y)) == {-1.0, 1.0}:
        raise ValueError("need at least one sample of each class")
    if not c > 0:
        raise ValueError(f"C must be positive, got {c}")
    gamma = resolve_gamma(kernel, X)
    K = kernel_matrix(kernel.kind, gamma, X, X)
    smo = _Smo(K, y, c, tol, np.random.default_rng(seed))
    smo.run(max_passes)
    bias = _refine_bias(K, y, smo.alphas, c, 0.0)
    sv = smo.alphas > 0
    return SvmModel(
        kernel_kind=kernel.kind, gamma=gamma, c=c, bias=bias,
        support_vectors=X[sv], dual_coef=(smo.alphas * y)[sv],
        standardization=standardization,
        alphas=smo.alphas, labels=y, points=X)


def _refine_bias(K, y, alphas, c, fallback):
    """Center the bias for the final dual variables.

    Platt's running bias estimate tracks the last pair update; when the
    solution has no free support vectors it can sit anywhere in (or even
    outside) the interval the KKT conditions allow, so the bias is recomputed
    as the midpoint of that interval (an exact value when free support
    vectors pin it).
    """
    g = K @ (alphas * y)
    eps = _BOUND_EPS * max(1.0, c)
    lower, upper = [], []
    for i in range(y.size):
        bound_val = y[i] - g[i]          # b making y_i * f(x_i) = 1
        at_zero = alphas[i] <= eps
        at_c = alphas[i] >= c - eps
        if not at_zero and not at_c:
            lower.append(bound_val)
            upper.append(bound_val)
        elif (at_zero and y[i] > 0) or (at_c and y[i] < 0):
            lower.append(bound_val)
        else:
            upper.append(bound_val)
    if not lower and not upper:
        return fallback
    if not lower:
        return float(min(upper))
    if not upper:
        return float(max(lower))
    return float((max(lower) + min(upper)) / 2.0)


@dataclass(frozen=True)
class CvReport:
    """All fold accuracies of one repeated stratified cross-validation."""

    fold_accuracies: np.ndarray
    balanced_accuracies: np.ndarray
    k: int
    reps: int
    seed: int

    @property
    def mean(self) -> float:
        return float(self.fold_accuracies.mean())

    @property
    def std(self) -> float:
        return float(self.fold_accuracies.std(ddof=0))

    @property
    def balanced_mean(self) -> float:
        return float(self.balanced_accuracies.mean())


def _stratified_folds(y: np.ndarray, k: int, rng) -> list[np.ndarray]:
    """Shuffled class-balanced fold index lists."""
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (-1.0, 1.0):
        idx = np.flatnonzero(y == cls)
        perm = rng.permutation(idx)
        for j in range(k):
            folds[j].extend(perm[j::k].tolist())
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def cross_validate(samples: Sequence[Sample], kernel: KernelSpec,
                   c: float = DEFAULT_C, k: int = 5, reps: int = 10,
                   seed: int = 0, tol: float = DEFAULT_TOL,
                   max_passes: int = DEFAULT_MAX_PASSES) -> CvReport:
    """Repeated stratified k-fold accuracy of an SMO-trained SVM.

    Standardization is fitted on each training fold only. Deterministic for
    a fixed sample order and seed.
    """
    X, y = as_arrays(samples)
    for cls in (-1.0, 1.0):
        count = int(np.sum(y == cls))
        if count < k:
            raise ValueError(
                f"class {int(cls):+d} has {count} samples, too few for "
                f"{k}-fold cross-validation")
    rng = np.random.default_rng(seed)
    accuracies = []
    balanced = []
    for _ in range(reps):
        folds = _stratified_folds(y, k, rng)
        for test_idx in folds:
            mask = np.zeros(y.size, dtype=bool)
            mask[test_idx] = True
            stdz = standardize_fit(X[~mask])
            model = train_smo(standardize_apply(stdz, X[~mask]), y[~mask],
                              kernel, c=c, tol=tol, max_passes=max_passes,
                              seed=int(rng.integers(2 ** 31)),
                              standardization=stdz)
            pred = model.predict(X[mask])
            truth = y[mask]
            accuracies.append(float(np.mean(pred == truth)))
            recalls = [float(np.mean(pred[truth == cls] == cls))
                       for cls in (-1.0, 1.0) if np.any(truth == cls)]
            balanced.append(float(np.mean(recalls)))
    return CvReport(fold_accuracies=np.array(accuracies),
                    balanced_accuracies=np.array(balanced),
                    k=k, reps=reps, seed=seed)
