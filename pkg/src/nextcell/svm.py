"""Kernel SVM trained by sequential minimal optimization.

The binary solver works on the usual soft-margin dual

    min_a  1/2 a^T Q a - e^T a    s.t.  y^T a = 0,  0 <= a_i <= C,

with ``Q_ij = y_i y_j K(x_i, x_j)``.  Each step picks the maximal violating
pair and solves the two-variable subproblem in closed form.  Multi-class
problems are split one-vs-one and decided by voting.
"""

from __future__ import annotations

import itertools
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 10_000_000
DEFAULT_CACHE_BYTES = 256 * 2**20
TAU = 1e-12

C_GRID = tuple(2.0 ** k for k in range(-5, 16, 2))
GAMMA_GRID = tuple(2.0 ** k for k in range(-15, 4, 2))


class SvmError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelParams:
    kind: str = "gaussian"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "linear"):
            raise SvmError(f"unknown kernel {self.kind!r}")
        if self.kind == "gaussian" and not (np.isfinite(self.gamma) and self.gamma > 0):
            raise SvmError(f"gamma must be finite and positive, got {self.gamma}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": float(self.gamma)}


def kernel(x, y, params: KernelParams) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise SvmError(f"length mismatch: {x.shape} vs {y.shape}")
    if params.kind == "linear":
        return float(x @ y)
    d = x - y
    return float(np.exp(-params.gamma * (d @ d)))


def squared_distances(X, Y) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    D = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    return np.maximum(D, 0.0)


def kernel_matrix(X, Y, params: KernelParams) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise SvmError(f"length mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if params.kind == "linear":
        return X @ Y.T
    return np.exp(-params.gamma * squared_distances(X, Y))


class KernelCache:
    """Rows of the training Gram matrix.

    Small problems keep the whole matrix; larger ones keep the most
    recently used rows within ``max_bytes``.
    """

    def __init__(self, X, params: KernelParams, max_bytes: int = DEFAULT_CACHE_BYTES,
                 gram: np.ndarray | None = None):
        self.X = np.asarray(X, dtype=float)
        self.params = params
        n = len(self.X)
        if gram is not None:
            self.full = gram
        elif n * n * 8 <= max_bytes:
            self.full = kernel_matrix(self.X, self.X, params)
        else:
            self.full = None
            self.capacity = max(2, max_bytes // (8 * n))
            self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        if self.full is not None:
            self.diag = np.diag(self.full).copy()
        elif params.kind == "gaussian":
            self.diag = np.ones(n)
        else:
            self.diag = (self.X * self.X).sum(1)

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        r = self._rows.get(i)
        if r is not None:
            self._rows.move_to_end(i)
            return r
        r = kernel_matrix(self.X[i:i + 1], self.X, self.params)[0]
        self._rows[i] = r
        if len(self._rows) > self.capacity:
            self._rows.popitem(last=False)
        return r


@dataclass
class DualSolution:
    alpha: np.ndarray
    rho: float
    objective: float
    gap: float
    n_iter: int


def _up_low(alpha, y, C):
    pos = y > 0
    up = np.where(pos, alpha < C, alpha > 0)
    low = np.where(pos, alpha > 0, alpha < C)
    return up, low


def solve_dual(cache: KernelCache, y: np.ndarray, C: float, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> DualSolution:
    """SMO with maximal-violating-pair working-set selection."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective, Q a - e
    diag = cache.diag
    up = y > 0          # alpha = 0: positives may increase, negatives may not
    low = ~up
    it = 0
    while True:
        v = -y * grad
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        gap = v[i] - v[j]
        if not (up[i] and low[j]) or gap <= tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"SMO did not converge in {max_iter} iterations (n={n}, C={C}, gap={gap:.3g})")
        Ki = cache.row(i)
        Kj = cache.row(j)
        quad = diag[i] + diag[j] - 2.0 * Ki[j]
        t = gap / max(quad, TAU)
        # step moves alpha_i by y_i t and alpha_j by -y_j t
        bound_i = C - alpha[i] if y[i] > 0 else alpha[i]
        bound_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = min(t, bound_i, bound_j)
        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        for k, b in ((i, bound_i), (j, bound_j)):
            if t == b:
                alpha[k] = C if alpha[k] > 0.5 * C else 0.0
        grad += t * y * (Ki - Kj)
        for k in (i, j):
            up[k] = alpha[k] < C if y[k] > 0 else alpha[k] > 0
            low[k] = alpha[k] > 0 if y[k] > 0 else alpha[k] < C
        it += 1
    return DualSolution(alpha, _rho(alpha, y, grad, C), 0.5 * float(alpha @ (grad - 1.0)),
                        float(max(gap, 0.0)), it)


def _rho(alpha, y, grad, C) -> float:
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yg[free].mean())
    at_upper = alpha >= C
    # bounded variables pin rho to an interval; take its midpoint
    ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
    lb_mask = (at_upper & (y > 0)) | (~at_upper & (y < 0))
    ub = yg[ub_mask].min() if ub_mask.any() else np.inf
    lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
    if not np.isfinite(ub):
        return float(lb)
    if not np.isfinite(lb):
        return float(ub)
    return float(0.5 * (ub + lb))


def kkt_violation(alpha, y, K, C) -> float:
    """Largest ``max_up(-y G) - min_low(-y G)``, zero when optimal."""
    alpha = np.asarray(alpha, dtype=float)
    y = np.asarray(y, dtype=float)
    grad = y * (K @ (alpha * y)) - 1.0
    v = -y * grad
    up, low = _up_low(alpha, y, C)
    if not up.any() or not low.any():
        return 0.0
    return float(max(v[up].max() - v[low].min(), 0.0))


def dual_objective(alpha, y, K) -> float:
    ay = np.asarray(alpha) * np.asarray(y)
    return float(0.5 * ay @ K @ ay - np.sum(alpha))


@dataclass
class BinarySvmModel:
    """Decision function ``sum_i coef_i K(sv_i, x) + bias``.

    ``classes`` is ``(positive, negative)``: a positive decision value
    stands for ``classes[0]``.
    """

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    params: KernelParams
    C: float
    classes: tuple[int, int] = (1, -1)
    info: dict = field(default_factory=dict)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.dual_coef) == 0:
            return np.full(len(X), self.bias)
        return kernel_matrix(X, self.support_vectors, self.params) @ self.dual_coef + self.bias

    def to_dict(self) -> dict:
        return {
            "classes": [int(c) for c in self.classes],
            "kernel": self.params.to_dict(),
            "C": float(self.C),
            "bias": float(self.bias),
            "dual_coef": [float(v) for v in self.dual_coef],
            "support_vectors": [[float(v) for v in row] for row in self.support_vectors],
        }

    @classmethod
    def from_dict(cls, d) -> BinarySvmModel:
        coef = np.asarray(d["dual_coef"], dtype=float)
        sv = np.asarray(d["support_vectors"], dtype=float).reshape(len(coef), -1)
        return cls(sv, coef, float(d["bias"]), KernelParams(**d["kernel"]), float(d["C"]),
                   tuple(int(c) for c in d["classes"]))


def _check_binary(y):
    y = np.asarray(y, dtype=float)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise SvmError("binary labels must be +1/-1")
    if not ((y > 0).any() and (y < 0).any()):
        raise SvmError("both classes must be present")
    return y


def train_binary(X, y, C: float = 1.0, params: KernelParams = KernelParams(),
                 tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                 cache_bytes: int = DEFAULT_CACHE_BYTES, gram: np.ndarray | None = None,
                 classes=(1, -1)) -> BinarySvmModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = _check_binary(y)
    if len(X) != len(y):
        raise SvmError("X and y differ in length")
    if not C > 0:
        raise SvmError("C must be positive")
    cache = KernelCache(X, params, cache_bytes, gram=gram)
    sol = solve_dual(cache, y, C, tol, max_iter)
    sv = sol.alpha > 0
    return BinarySvmModel(
        support_vectors=X[sv].copy(),
        dual_coef=(sol.alpha * y)[sv],
        bias=-sol.rho,
        params=params,
        C=float(C),
        classes=tuple(classes),
        info={"n_iter": sol.n_iter, "objective": sol.objective, "gap": sol.gap,
              "n_sv": int(sv.sum()), "alpha": sol.alpha},
    )


def predict_binary(model: BinarySvmModel, x) -> tuple[int, float]:
    value = float(model.decision_function(x)[0])
    return (1 if value >= 0 else -1), value


@dataclass
class MultiClassModel:
    classes: tuple[int, ...]
    models: dict[tuple[int, int], BinarySvmModel]
    scaler: object = None

    @property
    def constant(self) -> bool:
        return len(self.classes) == 1

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        classes = list(self.classes)
        if self.constant:
            return np.full(len(X), classes[0])
        votes = np.zeros((len(X), len(classes)), dtype=int)
        index = {c: k for k, c in enumerate(classes)}
        for (a, b), m in self.models.items():
            first = m.decision_function(X) >= 0
            votes[first, index[a]] += 1
            votes[~first, index[b]] += 1
        # argmax keeps the first maximum, i.e. the smallest tied class
        return np.asarray(classes)[votes.argmax(axis=1)]

    def to_dict(self) -> dict:
        return {
            "classes": [int(c) for c in self.classes],
            "models": [m.to_dict() for _, m in sorted(self.models.items())],
        }

    @classmethod
    def from_dict(cls, d) -> MultiClassModel:
        models = {}
        for md in d["models"]:
            m = BinarySvmModel.from_dict(md)
            models[m.classes] = m
        return cls(tuple(int(c) for c in d["classes"]), models)


def train_multiclass(X, labels, C: float = 1.0, params: KernelParams = KernelParams(),
                     tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                     gram: np.ndarray | None = None) -> MultiClassModel:
    """One binary model per unordered pair of classes present in ``labels``.

    ``gram`` optionally supplies the full training Gram matrix.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels)
    classes = tuple(int(c) for c in np.unique(labels))
    if len(classes) < 2:
        raise SvmError("need at least two classes with samples")
    models = {}
    for a, b in itertools.combinations(classes, 2):
        idx = np.flatnonzero((labels == a) | (labels == b))
        y = np.where(labels[idx] == a, 1.0, -1.0)
        sub = gram[np.ix_(idx, idx)] if gram is not None else None
        models[(a, b)] = train_binary(X[idx], y, C, params, tol, max_iter, gram=sub,
                                      classes=(a, b))
    return MultiClassModel(classes, models)


def constant_model(label: int) -> MultiClassModel:
    return MultiClassModel((int(label),), {})


def predict_multiclass(model: MultiClassModel, x) -> int:
    return int(model.predict(x)[0])


# -- model selection ---------------------------------------------------------

@dataclass
class GridSearchResult:
    C: float
    gamma: float
    scores: dict[tuple[float, float], float]
    folds: int
    reduced_folds: bool = False


def stratified_folds(labels, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold index per sample; each class is spread round-robin after shuffling."""
    labels = np.asarray(labels)
    fold_of = np.empty(len(labels), dtype=int)
    offset = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        fold_of[idx] = (offset + np.arange(len(idx))) % folds
        offset += len(idx)
    return fold_of


def grid_search(X, labels, C_grid=C_GRID, gamma_grid=GAMMA_GRID, folds: int = 5,
                rng: np.random.Generator | None = None, subset: float = 1.0,
                tol: float = DEFAULT_TOL, kind: str = "gaussian") -> GridSearchResult:
    """Cross-validated accuracy over a (C, gamma) grid.

    With ``subset < 1`` a stratified random fraction of the data is used.
    Ties go to the smaller C, then the smaller gamma.
    """
    if folds < 2:
        raise SvmError("need at least 2 folds")
    if not len(C_grid) or not len(gamma_grid):
        raise SvmError("empty parameter grid")
    rng = np.random.default_rng() if rng is None else rng
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels)
    if subset < 1.0:
        keep = []
        for c in np.unique(labels):
            idx = np.flatnonzero(labels == c)
            k = max(2, int(round(subset * len(idx))))
            keep.extend(rng.choice(idx, size=min(k, len(idx)), replace=False))
        keep = np.sort(np.asarray(keep))
        X, labels = X[keep], labels[keep]
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise SvmError("need at least two classes")
    used = min(folds, int(counts.min()))
    reduced = used < folds
    if reduced:
        log.warning("reducing CV folds from %d to %d (smallest class has %d samples)",
                    folds, used, counts.min())
    if used < 2:
        raise SvmError("a class has fewer than 2 samples; cannot cross-validate")
    fold_of = stratified_folds(labels, used, rng)
    gammas = sorted(gamma_grid) if kind == "gaussian" else [1.0]
    correct = {(C, g): 0 for C in C_grid for g in gammas}
    for f in range(used):
        tr, te = fold_of != f, fold_of == f
        Xtr, Xte, ytr = X[tr], X[te], labels[tr]
        if len(np.unique(ytr)) < 2:
            continue
        if kind == "gaussian":
            D_tr = squared_distances(Xtr, Xtr)
            D_te = squared_distances(Xte, Xtr)
        for g in gammas:
            params = KernelParams(kind, g)
            if kind == "gaussian":
                gram, cross = np.exp(-g * D_tr), np.exp(-g * D_te)
            else:
                gram, cross = Xtr @ Xtr.T, Xte @ Xtr.T
            for C in C_grid:
                model = train_multiclass(Xtr, ytr, C, params, tol, gram=gram)
                pred = _predict_with_cross(model, cross, ytr)
                correct[(C, g)] += int(np.sum(pred == labels[te]))
    best = min(correct, key=lambda k: (-correct[k], k[0], k[1]))
    n = len(labels)
    return GridSearchResult(best[0], best[1], {k: v / n for k, v in correct.items()}, used, reduced)


def _predict_with_cross(model: MultiClassModel, cross: np.ndarray, ytr) -> np.ndarray:
    """Voting prediction from a precomputed test-by-train kernel block."""
    classes = list(model.classes)
    index = {c: k for k, c in enumerate(classes)}
    votes = np.zeros((cross.shape[0], len(classes)), dtype=int)
    for (a, b), m in model.models.items():
        idx = np.flatnonzero((ytr == a) | (ytr == b))
        alpha_y = m.info["alpha"] * np.where(ytr[idx] == a, 1.0, -1.0)
        first = cross[:, idx] @ alpha_y + m.bias >= 0
        votes[first, index[a]] += 1
        votes[~first, index[b]] += 1
    return np.asarray(classes)[votes.argmax(axis=1)]
