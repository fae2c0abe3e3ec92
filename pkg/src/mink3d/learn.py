"""Linear, logistic and support-vector models trained from scratch.

Parameter vectors carry the intercept first: ``theta = (theta_0, theta_1..n)``.
The intercept is never regularized.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

METHODS = ("multireg_normal", "multireg_gd", "svr_linear")
METHOD_ALIASES = {"multireg": "multireg_normal", "svr": "svr_linear"}
LOG_CLAMP = 1e-12


class DivergenceError(RuntimeError):
    """Raised when iterative training stops decreasing its cost."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class TrainConfig:
    method: str = "multireg_normal"
    alpha: float = 0.1
    lam: float = 0.0
    C: float = 1.0
    epsilon: float = 0.1
    max_iters: int = 50_000
    tol: float = 1e-8
    seed: int = 0
    svr_iters: int = 10_000
    svr_step: float = 0.5
    svr_decay: float = 0.998

    def __post_init__(self):
        method = METHOD_ALIASES.get(self.method, self.method)
        if method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "method", method)
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not self.C > 0:
            raise ValueError("C must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")


def add_intercept(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _design(X, theta):
    A = add_intercept(X)
    if A.shape[1] != len(theta):
        raise ValueError(f"{A.shape[1] - 1} features but {len(theta) - 1} weights")
    return A


def predict_linear(theta, X):
    """theta_0 + theta_1 x_1 + ... for one row or a matrix of rows."""
    theta = np.asarray(theta, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim <= 1 and X.size == len(theta) - 1:
        return float(theta[0] + X.reshape(-1) @ theta[1:])
    return _design(X, theta) @ theta


def _penalty(theta, lam, m):
    return lam / (2.0 * m) * float(theta[1:] @ theta[1:])


def cost_linear(theta, X, y, lam=0.0) -> float:
    """(1/2m) sum (h - y)^2 + (lam/2m) sum_{j>=1} theta_j^2."""
    theta = np.asarray(theta, dtype=np.float64)
    A = _design(X, theta)
    r = A @ theta - np.asarray(y, dtype=np.float64)
    m = len(r)
    return float(r @ r) / (2.0 * m) + _penalty(theta, lam, m)


def grad_linear(theta, X, y, lam=0.0) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    A = _design(X, theta)
    m = A.shape[0]
    g = A.T @ (A @ theta - np.asarray(y, dtype=np.float64)) / m
    g[1:] += lam / m * theta[1:]
    return g


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def cost_logistic(theta, X, y, lam=0.0) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    A = _design(X, theta)
    y = np.asarray(y, dtype=np.float64)
    h = np.clip(sigmoid(A @ theta), LOG_CLAMP, 1.0 - LOG_CLAMP)
    m = len(y)
    return float(-(y @ np.log(h) + (1 - y) @ np.log(1 - h)) / m) + _penalty(theta, lam, m)


def grad_logistic(theta, X, y, lam=0.0) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    A = _design(X, theta)
    m = A.shape[0]
    g = A.T @ (sigmoid(A @ theta) - np.asarray(y, dtype=np.float64)) / m
    g[1:] += lam / m * theta[1:]
    return g


@dataclass
class GDResult:
    theta: np.ndarray
    costs: list = field(default_factory=list)

    @property
    def n_iter(self) -> int:
        return len(self.costs) - 1


def _descend(cost, grad, X, y, config: TrainConfig, theta0=None) -> GDResult:
    n = np.asarray(X).reshape(len(y), -1).shape[1]
    theta = np.zeros(n + 1) if theta0 is None else np.array(theta0, dtype=np.float64)
    costs = [cost(theta, X, y, config.lam)]
    rising = 0
    for _ in range(config.max_iters):
        theta = theta - config.alpha * grad(theta, X, y, config.lam)
        j = cost(theta, X, y, config.lam)
        prev = costs[-1]
        costs.append(j)
        if not np.isfinite(j):
            raise DivergenceError("cost became non-finite", costs)
        rising = rising + 1 if j > prev else 0
        if rising >= 10:
            raise DivergenceError("cost increased for 10 consecutive iterations", costs)
        if j == 0.0 or (prev > 0 and 0 <= (prev - j) / prev < config.tol):
            break
    return GDResult(theta, costs)


def gradient_descent_linear(X, y, config: TrainConfig = TrainConfig(), theta0=None) -> GDResult:
    """Batch gradient descent with simultaneous updates.

    Stops when the relative cost decrease falls below ``config.tol``, the
    cost reaches zero, or ``config.max_iters`` is hit.
    """
    return _descend(cost_linear, grad_linear, X, y, config, theta0)


def gradient_descent_logistic(X, y, config: TrainConfig = TrainConfig(), theta0=None) -> GDResult:
    y = np.asarray(y, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic targets must be 0 or 1")
    return _descend(cost_logistic, grad_logistic, X, y, config, theta0)


def normal_equation(X, y, lam=0.0) -> np.ndarray:
    """theta = pinv(A^T A + lam D) A^T y, D the identity with the intercept entry zeroed."""
    A = add_intercept(X)
    D = np.eye(A.shape[1])
    D[0, 0] = 0.0
    return np.linalg.pinv(A.T @ A + lam * D) @ (A.T @ np.asarray(y, dtype=np.float64))


def hinge_costs(z, k=1.0):
    """(cost_0, cost_1) = (max(0, k(1 + z)), max(0, k(1 - z)))."""
    if not k > 0:
        raise ValueError("k must be > 0")
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(0.0, k * (1.0 + z)), np.maximum(0.0, k * (1.0 - z))


def svr_objective(theta, X, y, C, epsilon) -> float:
    A = _design(X, theta)
    r = A @ theta - np.asarray(y, dtype=np.float64)
    return float(C * np.maximum(0.0, np.abs(r) - epsilon).sum() + 0.5 * theta[1:] @ theta[1:])


def train_svr_linear(X, y, config: TrainConfig = TrainConfig(), theta0=None) -> np.ndarray:
    """Linear epsilon-insensitive SVR by full-batch subgradient descent.

    Minimizes ``C sum max(0, |h - y| - eps) + 1/2 sum_{j>=1} theta_j^2``.
    Steps are normalized by the subgradient norm and decay geometrically
    (``svr_step * svr_decay**t``) over a fixed ``svr_iters`` schedule; the
    best iterate is returned. Features are expected to be standardized.
    """
    A = add_intercept(X)
    y = np.asarray(y, dtype=np.float64)
    if theta0 is None:
        theta = np.zeros(A.shape[1])
        theta[0] = float(np.mean(y))
    else:
        theta = np.array(theta0, dtype=np.float64)
    C, eps = config.C, config.epsilon
    best, best_f = theta.copy(), np.inf
    step = config.svr_step
    for _ in range(config.svr_iters):
        r = A @ theta - y
        f = C * np.maximum(0.0, np.abs(r) - eps).sum() + 0.5 * theta[1:] @ theta[1:]
        if not np.isfinite(f):
            raise DivergenceError("SVR objective became non-finite", [best_f])
        if f < best_f:
            best, best_f = theta.copy(), f
        s = np.where(np.abs(r) > eps, np.sign(r), 0.0)
        g = C * (A.T @ s)
        g[1:] += theta[1:]
        norm = np.sqrt(g @ g)
        if norm == 0.0:
            break
        theta = theta - (step / norm) * g
        step *= config.svr_decay
    return best


@dataclass
class Standardizer:
    """Z-scores with training statistics; constant columns are only centred."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std


@dataclass
class LinearModel:
    """A fitted regressor; predictions are in original target units."""

    method: str
    theta: np.ndarray
    config: TrainConfig
    x_scaler: Standardizer | None = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    feature_names: list = field(default_factory=list)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None] if len(self.theta) == 2 else X[None, :]
        if self.x_scaler is not None:
            X = self.x_scaler.transform(X)
        return self.y_mean + self.y_scale * predict_linear(self.theta, X)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "feature_names": list(self.feature_names),
            "config": asdict(self.config),
            "theta": [float(t) for t in self.theta],
            "x_mean": None if self.x_scaler is None else [float(v) for v in self.x_scaler.mean],
            "x_std": None if self.x_scaler is None else [float(v) for v in self.x_scaler.std],
            "y_mean": float(self.y_mean),
            "y_scale": float(self.y_scale),
        }

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        scaler = None
        if d["x_mean"] is not None:
            scaler = Standardizer(np.array(d["x_mean"]), np.array(d["x_std"]))
        return cls(d["method"], np.array(d["theta"]), TrainConfig(**d["config"]), scaler,
                   d["y_mean"], d["y_scale"], list(d["feature_names"]))

    def save(self, path) -> None:
        # json writes floats with repr, i.e. shortest round-tripping digits
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinearModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit(X, y, config: TrainConfig = TrainConfig(), feature_names=()) -> LinearModel:
    """Train the configured method on raw features and targets."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64)
    if len(X) != len(y) or len(y) < 1:
        raise ValueError("X and y must have the same nonzero number of rows")
    names = list(feature_names)
    if config.method == "multireg_normal":
        return LinearModel(config.method, normal_equation(X, y, config.lam), config,
                           feature_names=names)
    scaler = Standardizer.fit(X)
    Xs = scaler.transform(X)
    if config.method == "multireg_gd":
        theta = gradient_descent_linear(Xs, y, config).theta
        return LinearModel(config.method, theta, config, scaler, feature_names=names)
    y_mean = float(y.mean())
    y_scale = float(y.std()) or 1.0
    theta = train_svr_linear(Xs, (y - y_mean) / y_scale, config)
    return LinearModel(config.method, theta, config, scaler, y_mean, y_scale, names)
